import csv
import io
import math

import numpy as np
import pytest

from cvpost.boundary import (
    CSV_HEADER,
    Mode,
    SearchConfig,
    boundary_csv,
    key_rate_grid,
    max_tolerable_noise,
    optimize_key_rate,
    scan_boundary,
)
from cvpost.channels import ChannelKind, ChannelSpec
from cvpost.errors import InvalidParam, NoPositiveRate

# coarse grids keep the unit tests fast; the acceptance suite uses the defaults
FAST = SearchConfig(V_points=12, gain_points=8, tol=1e-3, polish_evals=30)

# K at V=0.5 through T=0.5 loss, eta=0.9 (see test_keyrate)
K_LOSSY_EXAMPLE = 0.230726665512817


class TestConfig:
    def test_gain_grids_include_identity(self):
        cfg = SearchConfig()
        assert cfg.gain_grid(Mode.ATTENUATE)[-1] == 1.0
        assert cfg.gain_grid(Mode.AMPLIFY)[0] == 1.0
        assert list(cfg.gain_grid(Mode.STANDARD)) == [1.0]
        assert len(cfg.V_grid()) == 40

    @pytest.mark.parametrize(
        "kwargs", [{"eta": 0.0}, {"V_min": 0.0}, {"gain_points": 0}, {"nu_min": 1.5}, {"g_max": 0.5}, {"tol": 0.0}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParam):
            SearchConfig(**kwargs)


class TestOptimize:
    def test_pure_loss_positive(self):
        opt = optimize_key_rate(ChannelSpec.loss(0.5), SearchConfig(), Mode.STANDARD)
        assert opt.K >= K_LOSSY_EXAMPLE
        assert opt.evaluations > 40

    def test_degenerate_gain_grid_is_standard(self):
        one = SearchConfig(gain_points=1, refine=False)
        ch = ChannelSpec.loss(0.3, 0.01)
        assert optimize_key_rate(ch, one, Mode.AMPLIFY).K == optimize_key_rate(ch, one, Mode.STANDARD).K

    def test_tiny_eta(self):
        cfg = SearchConfig(eta=1e-6)
        for ch in (ChannelSpec.loss(0.1), ChannelSpec.loss(0.5, 0.01), ChannelSpec.amplify(3.0)):
            assert optimize_key_rate(ch, cfg, Mode.AMPLIFY).K <= 0

    def test_tiny_eta_identity_channel(self):
        # nothing leaks to Eve over a noiseless T=1 line, so any eta > 0 keeps K > 0
        assert optimize_key_rate(ChannelSpec.loss(1.0), SearchConfig(eta=1e-6)).K > 0

    @pytest.mark.parametrize("mode", [Mode.ATTENUATE, Mode.AMPLIFY])
    @pytest.mark.parametrize("ch", [ChannelSpec.loss(0.2, 0.005), ChannelSpec.amplify(4.0, 0.01)])
    def test_dominance(self, mode, ch):
        assert optimize_key_rate(ch, FAST, mode).K >= optimize_key_rate(ch, FAST, Mode.STANDARD).K

    def test_divergent_candidates_are_minus_inf(self):
        grid = key_rate_grid(ChannelSpec.loss(1.0), [50.0], [1.0, 3.0], 0.9)
        assert np.isfinite(grid[0, 0]) and grid[0, 1] == -np.inf

    def test_deterministic(self):
        ch = ChannelSpec.amplify(2.0, 0.02)
        assert optimize_key_rate(ch, FAST, Mode.ATTENUATE) == optimize_key_rate(ch, FAST, Mode.ATTENUATE)


class TestNoise:
    def test_perfect_channel_tolerates_noise(self):
        pt = max_tolerable_noise("loss", 1.0, FAST)
        assert pt.n_th_max > 0
        assert pt.status == "ok"

    @pytest.mark.parametrize("kind, param, mode", [("loss", 0.5, Mode.AMPLIFY), ("amplify", 4.0, Mode.ATTENUATE)])
    def test_bracketing_invariant(self, kind, param, mode):
        pt = max_tolerable_noise(kind, param, FAST, mode)
        assert pt.n_th_upper - pt.n_th_max <= FAST.tol
        ch = ChannelSpec.loss if kind == "loss" else ChannelSpec.amplify
        assert optimize_key_rate(ch(param, pt.n_th_max), FAST, mode).K > 0
        assert optimize_key_rate(ch(param, pt.n_th_upper), FAST, mode).K <= 0
        assert optimize_key_rate(ch(param, pt.n_th_max + FAST.tol), FAST, mode).K <= 0

    def test_no_positive_rate(self):
        with pytest.raises(NoPositiveRate):
            max_tolerable_noise("amplify", 3.0, SearchConfig(eta=0.1, V_points=5, refine=False))

    def test_monotone_in_loss(self):
        pts = scan_boundary("loss", [1.0, 0.6, 0.3], FAST)
        n = [p.n_th_max for p in pts]
        assert all(b <= a + FAST.tol for a, b in zip(n, n[1:]))


class TestScan:
    def test_single_point_matches_direct(self):
        (pt,) = scan_boundary("amplify", [2.0], FAST)
        assert pt == max_tolerable_noise("amplify", 2.0, FAST)

    def test_dominance_and_order(self):
        pts = scan_boundary("amplify", [1.5, 3.0], FAST, modes=[Mode.STANDARD, Mode.ATTENUATE])
        assert [(p.channel_param, p.mode) for p in pts] == [
            (1.5, Mode.STANDARD),
            (1.5, Mode.ATTENUATE),
            (3.0, Mode.STANDARD),
            (3.0, Mode.ATTENUATE),
        ]
        assert pts[1].n_th_max >= pts[0].n_th_max
        assert pts[3].n_th_max >= pts[2].n_th_max

    def test_failure_recorded_in_row(self):
        cfg = SearchConfig(eta=0.1, V_points=5, refine=False)
        (pt,) = scan_boundary("amplify", [3.0], cfg)
        assert pt.status == "no_positive_rate" and pt.n_th_max == 0.0

    def test_csv(self):
        pts = scan_boundary("loss", [1.0, 0.5], FAST, modes=["standard", "amplify"])
        text = boundary_csv(pts)
        assert "\r" not in text
        rows = list(csv.reader(io.StringIO(text)))
        assert tuple(rows[0]) == CSV_HEADER
        assert len(rows) == 5
        assert float(rows[1][2]) == pts[0].n_th_max
        assert pts[1].loss_db == pytest.approx(0.0) and pts[3].loss_db == pytest.approx(10 * math.log10(2))

    def test_workers_do_not_change_output(self):
        grid = [1.0, 0.7, 0.4]
        one = boundary_csv(scan_boundary("loss", grid, FAST, modes=["standard", "amplify"]))
        many = boundary_csv(scan_boundary("loss", grid, FAST, modes=["standard", "amplify"], workers=3))
        assert one == many

    def test_channel_kind_enum(self):
        (pt,) = scan_boundary(ChannelKind.AMPLIFY, [1.0], FAST)
        assert pt.status == "ok" and pt.n_th_max > 0
