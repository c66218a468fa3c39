import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvpost.channels import ChannelSpec, EprSource, apply_channel, epr_cm
from cvpost.gaussian import StandardFormCM, apply_filter
from cvpost.keyrate import (
    Direction,
    _key_rate_abc,
    holevo_AE,
    holevo_BE,
    key_rate,
    mutual_information,
)
from oracles import keyrate_reference

EPR3 = StandardFormCM(3, 3, math.sqrt(8))
LOSSY = StandardFormCM(3, 2, 2)

# frozen from oracles.keyrate_reference(3, 2, 2, 0.9), 40-digit mpmath
I_AB_LOSSY = 0.584962500721156
CHI_AE_LOSSY = 1.37744375108173
CHI_BE_LOSSY = 0.295739585136224
K_REV_LOSSY = 0.230726665512817


def g_entropy(mu):
    return (mu + 1) / 2 * math.log2((mu + 1) / 2) - (mu - 1) / 2 * math.log2((mu - 1) / 2)


class TestMutualInformation:
    def test_uncorrelated(self):
        assert mutual_information(StandardFormCM(3, 2, 0)) == 0.0

    def test_pure_epr(self):
        assert mutual_information(EPR3) == pytest.approx(1.0, abs=1e-14)

    def test_lossy(self):
        assert mutual_information(LOSSY) == pytest.approx(math.log2(1.5), abs=1e-14)
        assert mutual_information(LOSSY) == pytest.approx(I_AB_LOSSY, abs=1e-12)


class TestHolevo:
    def test_pure(self):
        assert holevo_AE(EPR3) == pytest.approx(0.0, abs=1e-9)
        assert holevo_BE(EPR3) == pytest.approx(0.0, abs=1e-9)

    def test_lossy(self):
        assert holevo_AE(LOSSY) == pytest.approx(CHI_AE_LOSSY, abs=1e-12)
        assert holevo_BE(LOSSY) == pytest.approx(CHI_BE_LOSSY, abs=1e-12)

    def test_product_state(self):
        cm = StandardFormCM(3, 2, 0)
        assert holevo_AE(cm) == pytest.approx(2.0, abs=1e-12)
        assert holevo_BE(cm) == pytest.approx(g_entropy(2.0), abs=1e-12)


class TestKeyRate:
    def test_pure_tie_goes_reverse(self):
        rep = key_rate(EPR3, 1.0)
        assert rep.K == pytest.approx(1.0, abs=1e-9)
        assert rep.K_direct == pytest.approx(rep.K_reverse, abs=1e-9)
        assert rep.direction is Direction.REVERSE

    def test_lossy(self):
        rep = key_rate(LOSSY, 0.9)
        assert rep.K_reverse == pytest.approx(K_REV_LOSSY, abs=1e-12)
        assert rep.K_direct < 0
        assert rep.K == rep.K_reverse
        assert rep.direction is Direction.REVERSE

    @given(st.floats(1.0, 20.0), st.floats(1.0, 20.0), st.floats(0.01, 1.0))
    def test_uncorrelated_never_secure(self, a, b, eta):
        assert key_rate(StandardFormCM(a, b, 0.0), eta).K <= 1e-12

    def test_invariants_and_throughput(self):
        rep = key_rate(LOSSY, 0.8, acceptance=0.25)
        assert rep.K_direct == pytest.approx(0.8 * rep.I_AB - rep.chi_AE)
        assert rep.K_reverse == pytest.approx(0.8 * rep.I_AB - rep.chi_BE)
        assert rep.K_throughput == pytest.approx(0.25 * rep.K)
        assert rep.to_dict()["direction"] == "reverse"

    @pytest.mark.parametrize("eta", [0.0, -0.1, 1.1])
    def test_bad_eta(self, eta):
        with pytest.raises(ValueError):
            key_rate(LOSSY, eta)

    @pytest.mark.parametrize("abc", [(3, 2, 2), (5, 4.1, 3.2), (1.5, 7.0, 0.9), (12.0, 3.0, 5.0)])
    @pytest.mark.parametrize("eta", [0.9, 1.0])
    def test_matches_reference(self, abc, eta):
        ref = keyrate_reference(*abc, eta)
        rep = key_rate(StandardFormCM(*abc), eta)
        for name in ("I_AB", "chi_AE", "chi_BE", "K_direct", "K_reverse"):
            assert getattr(rep, name) == pytest.approx(float(ref[name]), abs=1e-10)

    def test_vectorized_agrees(self):
        abc = np.array([(3, 2, 2), (5, 4.1, 3.2), (1.5, 7.0, 0.9)], dtype=float)
        vec = _key_rate_abc(abc[:, 0], abc[:, 1], abc[:, 2], 0.9)
        for row, k in zip(abc, vec):
            assert k == pytest.approx(key_rate(StandardFormCM(*row), 0.9).K, abs=1e-13)


class TestPhysicsProperties:
    def test_pure_loss_always_secure(self):
        for T in np.linspace(0.06, 1.0, 12):
            for lam in np.linspace(0.11, 0.79, 8):
                cm = apply_channel(epr_cm(EprSource.from_lambda(lam)), ChannelSpec.loss(T))
                assert key_rate(cm, 1.0).K_reverse > 0, (T, lam)

    @pytest.mark.parametrize("T", [1.0, 0.6, 0.2])
    def test_noise_lowers_rate(self, T):
        base = epr_cm(EprSource.from_variance(2.0))
        rates = [key_rate(apply_channel(base, ChannelSpec.loss(T, n)), 0.9).K for n in np.linspace(0, 0.5, 11)]
        assert all(y <= x for x, y in zip(rates, rates[1:]))

    def test_identity_filter_is_exact(self):
        cm = apply_channel(epr_cm(EprSource.from_variance(1.3)), ChannelSpec.amplify(2.0, 0.1))
        assert key_rate(apply_filter(cm, 1.0), 0.9) == key_rate(cm, 0.9)
