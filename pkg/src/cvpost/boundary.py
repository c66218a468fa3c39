"""Maximum tolerable excess noise, optimized over modulation and virtual gain."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np

from .channels import ChannelKind, ChannelSpec, T_to_loss_db, _channel_abc
from .errors import (
    BracketCapExceeded,
    CVPostError,
    EmptyFeasibleSet,
    InvalidParam,
    NoPositiveRate,
)
from .gaussian import _filter_abc
from .keyrate import _check_eta, _key_rate_abc

CSV_HEADER = ("param", "mode", "n_th_max", "V_opt", "gain_opt", "eta", "status")


class Mode(str, Enum):
    STANDARD = "standard"
    ATTENUATE = "attenuate"
    AMPLIFY = "amplify"


@dataclass(frozen=True)
class SearchConfig:
    """Search grids and solver settings.

    The gain grid always ends at 1 (no filter) so an augmented search contains
    the standard protocol: attenuation uses ``linspace(nu_min, 1)`` and
    amplification ``linspace(1, g_max)``.
    """

    V_min: float = 1e-2
    V_max: float = 1e2
    V_points: int = 40
    nu_min: float = 0.05
    g_max: float = 3.0
    gain_points: int = 40
    eta: float = 0.9
    tol: float = 1e-4
    refine: bool = True
    polish_evals: int = 100
    n_start: float = 0.01
    n_cap: float = 50.0

    def __post_init__(self):
        _check_eta(self.eta)
        if not (0 < self.V_min <= self.V_max):
            raise InvalidParam("need 0 < V_min <= V_max")
        if self.V_points < 1 or self.gain_points < 1:
            raise InvalidParam("grids must be non-empty")
        if not 0 < self.nu_min <= 1:
            raise InvalidParam("nu_min must lie in (0, 1]")
        if self.g_max < 1:
            raise InvalidParam("g_max must be >= 1")
        if not (self.tol > 0 and self.n_start > 0 and self.n_cap > self.n_start):
            raise InvalidParam("need tol > 0 and 0 < n_start < n_cap")

    def V_grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.V_min), math.log10(self.V_max), self.V_points)

    def gain_grid(self, mode: Mode) -> np.ndarray:
        mode = Mode(mode)
        if mode is Mode.STANDARD:
            return np.array([1.0])
        if mode is Mode.ATTENUATE:
            grid = np.linspace(self.nu_min, 1.0, self.gain_points)
        else:
            grid = np.linspace(1.0, self.g_max, self.gain_points)
        if grid.size == 1:
            grid = np.array([1.0])
        return grid

    def gain_bounds(self, mode: Mode) -> tuple[float, float]:
        mode = Mode(mode)
        if mode is Mode.ATTENUATE:
            return self.nu_min, 1.0
        if mode is Mode.AMPLIFY:
            return 1.0, self.g_max
        return 1.0, 1.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Optimum:
    K: float
    V: float
    gain: float
    evaluations: int


def _epr_abc(V):
    V = np.asarray(V, dtype=float)
    return 1.0 + 4.0 * V, 1.0 + 4.0 * V, 2.0 * np.sqrt(2.0 * V * (2.0 * V + 1.0))


def key_rate_grid(channel: ChannelSpec, Vs, gains, eta: float) -> np.ndarray:
    """K for every (V, gain) pair, shape ``(len(Vs), len(gains))``; -inf where the filter diverges."""
    a, b, c = _epr_abc(np.asarray(Vs, dtype=float)[:, None])
    a, b, c = _channel_abc(a, b, c, channel.kind, channel.param, channel.n_th)
    g = np.asarray(gains, dtype=float)[None, :]
    a2, b2, c2, ok = _filter_abc(a, b, c, g)
    k = _key_rate_abc(a2, b2, c2, eta)
    return np.where(ok & np.isfinite(k), k, -np.inf)


def _polish(channel, cfg, mode, V0, g0, K0):
    """Compass search in (log10 V, gain), deterministic, bounded evaluation budget."""
    lo_v, hi_v = math.log10(cfg.V_min), math.log10(cfg.V_max)
    lo_g, hi_g = cfg.gain_bounds(mode)
    x = [math.log10(V0), g0]
    step = [
        (hi_v - lo_v) / max(cfg.V_points - 1, 1),
        (hi_g - lo_g) / max(cfg.gain_points - 1, 1),
    ]
    dims = [0] if mode is Mode.STANDARD or hi_g == lo_g else [0, 1]
    bounds = [(lo_v, hi_v), (lo_g, hi_g)]
    best = K0
    evals = 0
    while evals < cfg.polish_evals and max(step[d] for d in dims) > 1e-9:
        moved = False
        for d in dims:
            for sign in (1.0, -1.0):
                trial = list(x)
                trial[d] = min(max(x[d] + sign * step[d], bounds[d][0]), bounds[d][1])
                if trial[d] == x[d]:
                    continue
                k = float(key_rate_grid(channel, [10.0 ** trial[0]], [trial[1]], cfg.eta)[0, 0])
                evals += 1
                if k > best:
                    best, x, moved = k, trial, True
                    break
                if evals >= cfg.polish_evals:
                    break
            if moved or evals >= cfg.polish_evals:
                break
        if not moved:
            for d in dims:
                step[d] /= 2.0
    return best, 10.0 ** x[0], x[1], evals


def _optimize_single(channel: ChannelSpec, cfg: SearchConfig, mode: Mode) -> Optimum:
    Vs = cfg.V_grid()
    gains = cfg.gain_grid(mode)
    grid = key_rate_grid(channel, Vs, gains, cfg.eta)
    evals = grid.size
    if not np.any(np.isfinite(grid)):
        raise EmptyFeasibleSet(f"no feasible (V, gain) for {channel}")
    i, j = np.unravel_index(int(np.argmax(grid)), grid.shape)
    K, V, g = float(grid[i, j]), float(Vs[i]), float(gains[j])
    if cfg.refine:
        K, V, g, extra = _polish(channel, cfg, mode, V, g, K)
        evals += extra
    return Optimum(K, V, g, evals)


def optimize_key_rate(channel: ChannelSpec, cfg: SearchConfig, mode: Mode | str = Mode.STANDARD) -> Optimum:
    """Best key rate over Alice's modulation and Bob's virtual filter gain.

    Augmented modes also run the standard search and keep whichever is better,
    so their optimum never falls below the standard one.
    """
    mode = Mode(mode)
    std = _optimize_single(channel, cfg, Mode.STANDARD)
    if mode is Mode.STANDARD:
        return std
    aug = _optimize_single(channel, cfg, mode)
    total = std.evaluations + aug.evaluations
    best = aug if aug.K > std.K else std
    return replace(best, evaluations=total)


@dataclass(frozen=True)
class BoundaryPoint:
    channel_kind: ChannelKind
    channel_param: float
    mode: Mode
    n_th_max: float
    n_th_upper: float = math.nan
    V_opt: float = math.nan
    gain_opt: float = math.nan
    K_at_max: float = math.nan
    eta: float = math.nan
    evaluations: int = 0
    status: str = "ok"

    @property
    def loss_db(self) -> float | None:
        if self.channel_kind is ChannelKind.LOSS:
            return T_to_loss_db(self.channel_param)
        return None

    def csv_row(self) -> tuple[str, ...]:
        return (
            _fmt(self.channel_param),
            self.mode.value,
            _fmt(self.n_th_max),
            _fmt(self.V_opt),
            _fmt(self.gain_opt),
            _fmt(self.eta),
            self.status,
        )


def _fmt(x: float) -> str:
    return repr(float(x))


def _channel(kind: ChannelKind, param: float, n_th: float) -> ChannelSpec:
    # G = 1 with excess noise is the identity channel plus noise
    if kind is ChannelKind.AMPLIFY and param == 1.0:
        return ChannelSpec.loss(1.0, n_th)
    return ChannelSpec(kind, param, n_th)


def max_tolerable_noise(
    channel_kind: ChannelKind | str,
    channel_param: float,
    cfg: SearchConfig,
    mode: Mode | str = Mode.STANDARD,
    known_positive: float = 0.0,
) -> BoundaryPoint:
    """Largest ``n_th`` with a positive optimized key rate, by bracketing and bisection.

    ``known_positive`` seeds the lower bracket with a noise level already known
    to give a positive rate in this mode (e.g. the standard boundary when the
    mode is augmented).  The optimizer is re-run at every probe.
    """
    kind = ChannelKind(channel_kind)
    mode = Mode(mode)
    evals = 0

    def probe(n):
        nonlocal evals
        opt = optimize_key_rate(_channel(kind, channel_param, n), cfg, mode)
        evals += opt.evaluations
        return opt

    lo = float(known_positive)
    best = probe(lo)
    if best.K <= 0:
        if lo > 0:
            raise InvalidParam(f"known_positive={lo} does not give a positive rate")
        raise NoPositiveRate(f"no positive key rate at n_th=0 for {kind.value} {channel_param}")
    hi = 2.0 * lo if lo > 0 else cfg.n_start
    while True:
        opt = probe(hi)
        if opt.K <= 0:
            break
        lo, best = hi, opt
        if hi >= cfg.n_cap:
            raise BracketCapExceeded(f"key rate still positive at n_th={hi}")
        hi = min(2.0 * hi, cfg.n_cap)
    while hi - lo > cfg.tol:
        mid = 0.5 * (lo + hi)
        opt = probe(mid)
        if opt.K > 0:
            lo, best = mid, opt
        else:
            hi = mid
    return BoundaryPoint(
        channel_kind=kind,
        channel_param=float(channel_param),
        mode=mode,
        n_th_max=lo,
        n_th_upper=hi,
        V_opt=best.V,
        gain_opt=best.gain,
        K_at_max=best.K,
        eta=cfg.eta,
        evaluations=evals,
    )


def _scan_param(kind, param, cfg, modes):
    rows = {}
    std_point = None
    order = sorted(modes, key=lambda m: m is not Mode.STANDARD)
    for mode in order:
        seed_lo = 0.0
        if mode is not Mode.STANDARD and std_point is not None and std_point.status == "ok":
            seed_lo = std_point.n_th_max
        try:
            point = max_tolerable_noise(kind, param, cfg, mode, known_positive=seed_lo)
        except NoPositiveRate as exc:
            point = BoundaryPoint(kind, float(param), mode, 0.0, eta=cfg.eta, status=exc.code)
        except CVPostError as exc:
            point = BoundaryPoint(kind, float(param), mode, math.nan, eta=cfg.eta, status=exc.code)
        if mode is Mode.STANDARD:
            std_point = point
        rows[mode] = point
    return [rows[m] for m in modes]


def scan_boundary(
    channel_kind: ChannelKind | str,
    param_grid,
    cfg: SearchConfig,
    modes=(Mode.STANDARD,),
    workers: int = 1,
) -> list[BoundaryPoint]:
    """One :class:`BoundaryPoint` per (param, mode), in grid order then mode order.

    Per-point failures are recorded in the row's ``status``; the scan goes on.
    ``workers`` only changes wall time, never the output.
    """
    kind = ChannelKind(channel_kind)
    modes = [Mode(m) for m in modes]
    if not modes:
        raise InvalidParam("at least one mode is required")
    params = [float(p) for p in param_grid]
    if not params:
        raise InvalidParam("empty parameter grid")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda p: _scan_param(kind, p, cfg, modes), params))
    else:
        chunks = [_scan_param(kind, p, cfg, modes) for p in params]
    return [row for chunk in chunks for row in chunk]


def boundary_csv(points) -> str:
    """CSV text with the fixed header, LF line endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in points:
        writer.writerow(p.csv_row())
    return buf.getvalue()
