import math

import numpy as np
import pytest

from cvpost.channels import ChannelSpec, EprSource, apply_channel, epr_cm
from cvpost.errors import CutoffTooSmall, FockOverflow, InvalidParam, NotStandardForm
from cvpost.fock import (
    FockDensity,
    cm_from_fock,
    coherent_vector,
    filter_fock,
    fock_number,
    husimi_at,
    pure_loss_fock,
    thermal_fock,
    tmsv_fock,
)
from cvpost.gaussian import apply_filter

LAMS = (0.3, 0.5, 0.6)
GAINS = (0.7, 1.0, 1.15)
TS = (1.0, 0.8, 0.5)


def gaussian_pipeline(lam, T, g):
    cm = apply_channel(epr_cm(EprSource.from_lambda(lam)), ChannelSpec.loss(T))
    return apply_filter(cm, g)


def fock_pipeline(lam, T, g, n_cut=60):
    rho = filter_fock(pure_loss_fock(tmsv_fock(lam, n_cut), T, "B"), g, "B")
    return cm_from_fock(rho.normalized())


class TestStates:
    def test_vacuum_tmsv(self):
        rho = tmsv_fock(0.0)
        assert rho.trace == 1.0
        m = rho.matrix()
        assert m[0, 0] == 1.0 and np.count_nonzero(m) == 1

    def test_amplitudes(self):
        rho = tmsv_fock(0.5)
        n = np.arange(61)
        np.testing.assert_allclose(np.diagonal(rho.factors[0]).real, math.sqrt(0.75) * 0.5**n, rtol=1e-14)

    @pytest.mark.parametrize("lam", [0.1, 0.5, 0.6])
    def test_trace(self, lam):
        assert tmsv_fock(lam).trace == pytest.approx(1.0, abs=1e-12)

    def test_cutoff_too_small(self):
        with pytest.raises(CutoffTooSmall):
            tmsv_fock(0.9, n_cut=60)
        with pytest.raises(InvalidParam):
            tmsv_fock(1.0)

    def test_density_invariants(self):
        rho = pure_loss_fock(tmsv_fock(0.5, 30), 0.7)
        m = rho.matrix()
        assert np.max(np.abs(m - m.conj().T)) < 1e-12
        assert np.linalg.eigvalsh(m).min() > -1e-10

    def test_reduced_of_tmsv_is_thermal(self):
        lam = 0.5
        marg = tmsv_fock(lam).reduced("A")
        nbar = lam**2 / (1 - lam**2)
        np.testing.assert_allclose(marg.photon_distribution(), thermal_fock(nbar).photon_distribution(), atol=1e-15)


class TestFilter:
    def test_identity(self):
        rho = tmsv_fock(0.4)
        assert np.array_equal(filter_fock(rho, 1.0).factors, rho.factors)

    def test_tmsv_law(self):
        out = filter_fock(tmsv_fock(0.5), 1.2).normalized()
        ref = tmsv_fock(0.6)
        np.testing.assert_allclose(out.factors, ref.factors, atol=1e-14)

    @pytest.mark.parametrize("nbar, g", [(0.5, 1.2), (2.0, 0.6)])
    def test_thermal_ratio(self, nbar, g):
        out = filter_fock(thermal_fock(nbar, 120), g).photon_distribution()
        ratio = nbar / (nbar + 1)
        np.testing.assert_allclose(out[1:] / out[:-1], g * g * ratio, rtol=1e-12)

    def test_norm_grows_without_bound(self):
        # g * lambda > 1: the filtered weight keeps growing with the cutoff
        lam, g = 0.6, 2.0
        traces = [filter_fock(tmsv_fock(lam, n, leak_tol=1.0), g).trace for n in (10, 20, 40)]
        assert traces[0] < traces[1] < traces[2]
        assert traces[2] > 1e3

    def test_overflow_guard(self):
        with pytest.raises(FockOverflow):
            filter_fock(tmsv_fock(0.1, 60), 400.0)

    def test_bad_gain(self):
        with pytest.raises(InvalidParam):
            filter_fock(tmsv_fock(0.1), 0.0)


class TestLoss:
    def test_identity(self):
        rho = tmsv_fock(0.5)
        out = pure_loss_fock(rho, 1.0)
        np.testing.assert_allclose(out.matrix(), rho.matrix(), atol=1e-15)

    def test_single_photon(self):
        T = 0.3
        out = pure_loss_fock(fock_number(1, 5), T, "A").matrix()
        ref = np.zeros((6, 6))
        ref[0, 0], ref[1, 1] = 1 - T, T
        np.testing.assert_allclose(out, ref, atol=1e-15)

    def test_vacuum_stays_vacuum(self):
        out = pure_loss_fock(tmsv_fock(0.0, 10), 0.4)
        assert out.matrix()[0, 0] == pytest.approx(1.0)
        assert cm_from_fock(out).cm.as_tuple() == pytest.approx((1, 1, 0), abs=1e-14)

    @pytest.mark.parametrize("T", [0.9, 0.5, 0.1])
    def test_trace_preserved(self, T):
        assert pure_loss_fock(tmsv_fock(0.6), T).trace == pytest.approx(1.0, abs=1e-10)


class TestCovariance:
    def test_vacuum(self):
        assert cm_from_fock(tmsv_fock(0.0)).cm.as_tuple() == pytest.approx((1, 1, 0), abs=1e-14)

    def test_tmsv(self):
        got = cm_from_fock(tmsv_fock(math.sqrt(0.5), 80)).cm
        assert got.as_tuple() == pytest.approx((3, 3, 2.828427), abs=1e-6)
        assert got.as_tuple() == pytest.approx((3, 3, math.sqrt(8)), abs=1e-8)

    def test_after_loss(self):
        got = cm_from_fock(pure_loss_fock(tmsv_fock(math.sqrt(0.5), 80), 0.5)).cm
        assert got.as_tuple() == pytest.approx((3, 2, 2), abs=1e-6)

    def test_not_standard_form(self):
        # |0> + |1> on mode A has a nonzero mean
        psi = np.zeros((1, 4, 4), dtype=complex)
        psi[0, 0, 0] = psi[0, 1, 0] = 1 / math.sqrt(2)
        with pytest.raises(NotStandardForm):
            cm_from_fock(FockDensity(psi, 3))

    @pytest.mark.parametrize("lam", LAMS)
    @pytest.mark.parametrize("g", GAINS)
    @pytest.mark.parametrize("T", TS)
    def test_gaussian_agreement_grid(self, lam, g, T):
        if g * lam > 0.7:
            pytest.skip("outside the converged region")
        got = fock_pipeline(lam, T, g).cm
        ref = gaussian_pipeline(lam, T, g)
        assert got.as_tuple() == pytest.approx(ref.as_tuple(), abs=1e-6)


class TestHusimi:
    def test_vacuum(self):
        vac = tmsv_fock(0.0).reduced("B")
        assert husimi_at(vac, 0.0) == pytest.approx(1 / math.pi)
        beta = np.array([0.3, 1 + 1j, -2j])
        np.testing.assert_allclose(husimi_at(vac, beta), np.exp(-np.abs(beta) ** 2) / math.pi, rtol=1e-12)

    def test_coherent_normalized(self):
        v = coherent_vector(1.5 - 0.5j, 80)
        assert np.vdot(v, v).real == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("g", [0.7, 1.15, 1.4])
    def test_filter_identity(self, g):
        rho = pure_loss_fock(tmsv_fock(0.5), 0.8).reduced("B")
        rng = np.random.default_rng(0)
        r = 2 * np.sqrt(rng.uniform(size=200))
        beta = r * np.exp(2j * math.pi * rng.uniform(size=200))
        lhs = husimi_at(filter_fock(rho, g), beta)
        rhs = np.exp((g * g - 1) * np.abs(beta) ** 2) * husimi_at(rho, g * beta)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-8)

    def test_integrates_to_one(self):
        rho = tmsv_fock(math.sqrt(2 / 3)).reduced("B")  # b = 5
        x = np.linspace(-6, 6, 241)
        X, P = np.meshgrid(x, x)
        q = husimi_at(rho, X + 1j * P)
        total = np.trapezoid(np.trapezoid(q, x, axis=1), x)
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_needs_single_mode(self):
        with pytest.raises(InvalidParam):
            husimi_at(tmsv_fock(0.2), 0.0)
