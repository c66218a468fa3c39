"""Monte Carlo emulation of virtual noiseless amplification and attenuation.

Heterodyne outcomes are complex amplitudes with the vacuum giving variance
1/2 per component.  For a two-mode state ``(a, b, c)`` the outcome pair
``(alpha, gamma)`` is zero-mean Gaussian with per-component covariance
``(gamma_AB + I) / 4``: Bob's variance is ``V_B = (b + 1)/4`` and the
cross-covariance is ``+c/4`` on x and ``-c/4`` on p.

Emulating ``g^n`` means accepting an outcome with probability proportional to
``exp((1 - g**-2) |gamma|**2)`` and rescaling it to ``beta = gamma / g``.  The
three rules differ only in how that weight is normalized to at most one.

Acceptance ratios reported here are retained fractions under the chosen
normalization (e.g. ``P_acc(0) = 1`` for attenuation), not filter success
probabilities; see :func:`filter_success_weight` for the latter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import streams
from .errors import InsufficientSamples, InvalidParam, NoClosedForm, NonconvergentRule
from .gaussian import StandardFormCM, require_physical

DEFAULT_CHUNK = 1 << 18


# --------------------------------------------------------------------------
# rules


@dataclass(frozen=True)
class AmplifyAdaptive:
    """Weight normalized at the largest outcome of the batch."""

    g: float
    kind = "amplify_adaptive"

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g > 1):
            raise InvalidParam(f"amplification gain must exceed 1, got {self.g!r}")

    @property
    def gain(self) -> float:
        return self.g

    def to_dict(self) -> dict:
        return {"kind": self.kind, "g": self.g}


@dataclass(frozen=True)
class AmplifyCutoff:
    """Weight normalized at a fixed radius ``gamma_M``; outcomes beyond it are always kept."""

    g: float
    gamma_M: float
    kind = "amplify_cutoff"

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g > 1):
            raise InvalidParam(f"amplification gain must exceed 1, got {self.g!r}")
        if not (math.isfinite(self.gamma_M) and self.gamma_M > 0):
            raise InvalidParam(f"gamma_M must be positive, got {self.gamma_M!r}")

    @property
    def gain(self) -> float:
        return self.g

    def to_dict(self) -> dict:
        return {"kind": self.kind, "g": self.g, "gamma_M": self.gamma_M}


@dataclass(frozen=True)
class Attenuate:
    """Accept with ``exp(-(nu**-2 - 1) |gamma|**2)``.  ``nu = 1`` is the identity."""

    nu: float
    kind = "attenuate"

    def __post_init__(self):
        if not (math.isfinite(self.nu) and 0 < self.nu <= 1):
            raise InvalidParam(f"attenuation nu must lie in (0, 1], got {self.nu!r}")

    @property
    def gain(self) -> float:
        return self.nu

    def to_dict(self) -> dict:
        return {"kind": self.kind, "nu": self.nu}


PostSelectionRule = AmplifyAdaptive | AmplifyCutoff | Attenuate


def bob_variance(cm: StandardFormCM) -> float:
    """Per-component variance of Bob's heterodyne outcome."""
    return (cm.b + 1.0) / 4.0


def check_convergence(rule: PostSelectionRule, V_B: float) -> None:
    if isinstance(rule, Attenuate):
        return
    k = 1.0 - rule.g**-2
    if 2.0 * V_B * k >= 1.0:
        raise NonconvergentRule(
            f"2 V_B (1 - g^-2) = {2.0 * V_B * k:.6g} >= 1 (V_B={V_B:.6g}, g^2={rule.g**2:.6g})"
        )


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SampleBatch:
    """Columns of ``pairs``: alpha_x, alpha_p, gamma_x, gamma_p."""

    cm: StandardFormCM
    N: int
    seed: int
    pairs: np.ndarray = field(repr=False)


def _mixing(cm: StandardFormCM):
    sa = (cm.a + 1.0) / 4.0
    sb = (cm.b + 1.0) / 4.0
    sc = cm.c / 4.0
    l11 = math.sqrt(sa)
    l21 = sc / l11
    l22 = math.sqrt(max(sb - l21 * l21, 0.0))
    return l11, l21, l22


def _sample_chunk(cm: StandardFormCM, seed: int, start: int, n: int) -> np.ndarray:
    l11, l21, l22 = _mixing(cm)
    z = streams.normals(seed, streams.STREAM_SAMPLE, start, n)
    out = np.empty_like(z)
    out[:, 0] = l11 * z[:, 0]
    out[:, 1] = l11 * z[:, 1]
    out[:, 2] = l21 * z[:, 0] + l22 * z[:, 2]
    out[:, 3] = -l21 * z[:, 1] + l22 * z[:, 3]
    return out


def _chunks(N: int, chunk_size: int):
    if chunk_size < 1:
        raise InvalidParam("chunk_size must be positive")
    for start in range(0, N, chunk_size):
        yield start, min(chunk_size, N - start)


def _check_count(N) -> int:
    if int(N) != N or N < 1:
        raise InvalidParam(f"sample count must be a positive integer, got {N!r}")
    return int(N)


def sample_pairs(cm: StandardFormCM, N: int, seed: int, chunk_size: int = DEFAULT_CHUNK) -> SampleBatch:
    """Draw ``N`` joint heterodyne outcomes; identical for identical ``(cm, N, seed)``."""
    require_physical(cm)
    N = _check_count(N)
    seed = streams.check_seed(seed)
    pairs = np.empty((N, 4))
    for start, n in _chunks(N, chunk_size):
        pairs[start : start + n] = _sample_chunk(cm, seed, start, n)
    return SampleBatch(cm, N, seed, pairs)


# --------------------------------------------------------------------------
# acceptance


def _log_acceptance(r2: np.ndarray, rule: PostSelectionRule, r2_max: float | None) -> np.ndarray:
    if isinstance(rule, Attenuate):
        return -(rule.nu**-2 - 1.0) * r2
    k = 1.0 - rule.g**-2
    if isinstance(rule, AmplifyAdaptive):
        return k * (r2 - r2_max)
    r2_cut = rule.gamma_M**2
    return np.where(r2 > r2_cut, 0.0, k * (r2 - r2_cut))


def acceptance_probabilities(batch: SampleBatch, rule: PostSelectionRule) -> np.ndarray:
    """Per-sample acceptance probabilities, all in [0, 1]."""
    r2 = batch.pairs[:, 2] ** 2 + batch.pairs[:, 3] ** 2
    r2_max = float(r2.max()) if isinstance(rule, AmplifyAdaptive) else None
    return np.exp(_log_acceptance(r2, rule, r2_max))


@dataclass(frozen=True)
class AcceptedSet:
    """Post-selected outcomes; columns alpha_x, alpha_p, beta_x, beta_p with beta = gamma / gain."""

    N: int
    N_acc: int
    pairs: np.ndarray = field(repr=False)
    acceptance_ratio: float
    rule: PostSelectionRule
    seed: int
    gamma_M2: float | None = None


def _accept_chunk(chunk, start, rule, r2_max, seed):
    r2 = chunk[:, 2] ** 2 + chunk[:, 3] ** 2
    p = np.exp(_log_acceptance(r2, rule, r2_max))
    u = streams.uniforms(seed, streams.STREAM_ACCEPT, start, len(chunk))
    kept = chunk[u < p].copy()
    kept[:, 2:] /= rule.gain
    return kept


def _finish(N, kept, rule, seed, r2_max):
    pairs = np.concatenate(kept) if kept else np.empty((0, 4))
    gm2 = r2_max if isinstance(rule, AmplifyAdaptive) else (
        rule.gamma_M**2 if isinstance(rule, AmplifyCutoff) else None
    )
    return AcceptedSet(N, len(pairs), pairs, len(pairs) / N, rule, seed, gm2)


def apply_rule(
    batch: SampleBatch,
    rule: PostSelectionRule,
    seed: int | None = None,
    chunk_size: int = DEFAULT_CHUNK,
) -> AcceptedSet:
    """Post-select and rescale a batch.

    Acceptance draws come from their own stream keyed by ``seed`` (default:
    the batch seed), one uniform per sample index.
    """
    check_convergence(rule, bob_variance(batch.cm))
    seed = batch.seed if seed is None else streams.check_seed(seed)
    r2_max = None
    if isinstance(rule, AmplifyAdaptive):
        r2_max = float(np.max(batch.pairs[:, 2] ** 2 + batch.pairs[:, 3] ** 2))
    kept = [
        _accept_chunk(batch.pairs[start : start + n], start, rule, r2_max, seed)
        for start, n in _chunks(batch.N, chunk_size)
    ]
    return _finish(batch.N, kept, rule, seed, r2_max)


def simulate(
    cm: StandardFormCM,
    rule: PostSelectionRule,
    N: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK,
) -> AcceptedSet:
    """Streaming ``apply_rule(sample_pairs(cm, N, seed), rule)``; never holds the full batch.

    The adaptive rule regenerates the batch in a second pass once the maximum
    is known.  Results are bit-identical to the in-memory route.
    """
    require_physical(cm)
    check_convergence(rule, bob_variance(cm))
    N = _check_count(N)
    seed = streams.check_seed(seed)
    r2_max = None
    if isinstance(rule, AmplifyAdaptive):
        r2_max = 0.0
        for start, n in _chunks(N, chunk_size):
            chunk = _sample_chunk(cm, seed, start, n)
            r2_max = max(r2_max, float(np.max(chunk[:, 2] ** 2 + chunk[:, 3] ** 2)))
    kept = [
        _accept_chunk(_sample_chunk(cm, seed, start, n), start, rule, r2_max, seed)
        for start, n in _chunks(N, chunk_size)
    ]
    return _finish(N, kept, rule, seed, r2_max)


# --------------------------------------------------------------------------
# theory


def acceptance_ratio_theory(rule: PostSelectionRule, V_B: float, exact: bool = False) -> float:
    """Expected N_acc / N for Gaussian outcomes of per-component variance ``V_B``.

    For the cutoff rule the default is the integral over the disc
    ``|gamma| <= gamma_M`` only (a lower bound); ``exact=True`` adds the
    always-accepted tail ``exp(-gamma_M**2 / (2 V_B))``.
    """
    if not V_B > 0:
        raise InvalidParam(f"V_B must be positive, got {V_B!r}")
    if isinstance(rule, Attenuate):
        nu2 = rule.nu**2
        return nu2 / (nu2 + 2.0 * V_B * (1.0 - nu2))
    if isinstance(rule, AmplifyAdaptive):
        raise NoClosedForm("the adaptive rule has no closed-form acceptance ratio")
    check_convergence(rule, V_B)
    g2 = rule.g**2
    r2 = rule.gamma_M**2
    tail = math.exp(-r2 / (2.0 * V_B))
    disc = g2 / (g2 + 2.0 * V_B * (1.0 - g2)) * (math.exp(-(1.0 - 1.0 / g2) * r2) - tail)
    return disc + tail if exact else disc


def filter_success_weight(g: float, V_B: float) -> float:
    """Trace of ``g^n rho g^n`` for a thermal-like mode with outcome variance ``V_B``.

    Equals the unnormalized acceptance integral divided by ``g**2``.
    """
    den = g * g - 2.0 * V_B * (g * g - 1.0)
    if den <= 0:
        raise NonconvergentRule(f"filter g={g} not trace-class for V_B={V_B}")
    return 1.0 / den


# --------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class EmpiricalCM:
    cm: StandardFormCM
    se_a: float
    se_b: float
    se_c: float
    n: int
    n_boot: int

    def to_dict(self) -> dict:
        return {
            "a": self.cm.a,
            "b": self.cm.b,
            "c": self.cm.c,
            "se_a": self.se_a,
            "se_b": self.se_b,
            "se_c": self.se_c,
            "n": self.n,
            "n_boot": self.n_boot,
        }


def _moments(pairs: np.ndarray) -> np.ndarray:
    centered = pairs - pairs.mean(axis=0)
    var = np.mean(centered**2, axis=0)
    cov_x = np.mean(centered[:, 0] * centered[:, 2])
    cov_p = np.mean(centered[:, 1] * centered[:, 3])
    a = 2.0 * (var[0] + var[1]) - 1.0
    b = 2.0 * (var[2] + var[3]) - 1.0
    c = 2.0 * (cov_x - cov_p)
    return np.array([a, b, c])


def empirical_cm(accepted: AcceptedSet, n_boot: int = 100, seed: int = 0) -> EmpiricalCM:
    """Moment estimate of ``(a, b, c)`` with bootstrap standard errors."""
    pairs = accepted.pairs
    n = len(pairs)
    if n < 100:
        raise InsufficientSamples(f"need at least 100 accepted samples, got {n}")
    if n_boot < 2:
        raise InvalidParam("n_boot must be at least 2")
    est = _moments(pairs)
    rng = np.random.Generator(np.random.Philox(key=[streams.check_seed(seed), streams.STREAM_BOOTSTRAP]))
    boot = np.empty((n_boot, 3))
    for i in range(n_boot):
        boot[i] = _moments(pairs[rng.integers(0, n, n)])
    se = boot.std(axis=0, ddof=1)
    return EmpiricalCM(StandardFormCM(*est), float(se[0]), float(se[1]), float(se[2]), n, n_boot)


def summary_record(
    accepted: AcceptedSet,
    V_B: float,
    emp: EmpiricalCM | None = None,
    chunk_size: int = DEFAULT_CHUNK,
) -> dict:
    """JSON-ready summary of one post-selection run."""
    try:
        theory = acceptance_ratio_theory(accepted.rule, V_B)
    except NoClosedForm:
        theory = None
    return {
        "rule": accepted.rule.to_dict(),
        "N": accepted.N,
        "N_acc": accepted.N_acc,
        "ratio": accepted.acceptance_ratio,
        "theory_ratio": theory,
        "empirical_cm": None if emp is None else emp.to_dict(),
        "seed": accepted.seed,
        "chunk_size": chunk_size,
        "sampler_version": streams.ALGORITHM_VERSION,
    }


# --------------------------------------------------------------------------
# scaling experiment


@dataclass(frozen=True)
class ScalingResult:
    kappa: float
    stderr: float
    ci95: tuple[float, float]
    p_sublinear: float
    N_grid: tuple[int, ...]
    mean_N_acc: tuple[float, ...]
    std_N_acc: tuple[float, ...]
    mean_gamma_M2: tuple[float, ...]
    runs: int

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "p_sublinear": self.p_sublinear,
            "N_grid": list(self.N_grid),
            "mean_N_acc": list(self.mean_N_acc),
            "std_N_acc": list(self.std_N_acc),
            "mean_gamma_M2": list(self.mean_gamma_M2),
            "runs": self.runs,
        }


def fit_scaling_exponent(
    V_B: float,
    g: float,
    N_grid,
    runs: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK,
) -> ScalingResult:
    """Fit ``N_acc ~ N**kappa`` for the adaptive rule.

    Every ``(N, run)`` pair gets an independent batch.  The slope of
    ``log(mean N_acc)`` against ``log N`` is fitted by least squares;
    ``p_sublinear`` is the one-sided t-test p-value for ``kappa >= 1``.
    """
    N_grid = tuple(_check_count(n) for n in N_grid)
    if len(N_grid) < 3 or any(b <= a for a, b in zip(N_grid, N_grid[1:])):
        raise InvalidParam("N_grid must hold at least three increasing counts")
    if runs < 1:
        raise InvalidParam("runs must be positive")
    b = 4.0 * V_B - 1.0
    if b < 1.0:
        raise InvalidParam(f"V_B must be at least 1/2 (vacuum), got {V_B!r}")
    cm = StandardFormCM(1.0, b, 0.0)
    rule = AmplifyAdaptive(g)
    means, stds, gm2 = [], [], []
    for N in N_grid:
        counts, maxima = [], []
        for run in range(runs):
            acc = simulate(cm, rule, N, streams.derive_seed(seed, N, run), chunk_size)
            counts.append(acc.N_acc)
            maxima.append(acc.gamma_M2)
        means.append(float(np.mean(counts)))
        stds.append(float(np.std(counts, ddof=1)) if runs > 1 else 0.0)
        gm2.append(float(np.mean(maxima)))
    fit = stats.linregress(np.log(N_grid), np.log(means))
    df = len(N_grid) - 2
    half = stats.t.ppf(0.975, df) * fit.stderr
    if fit.stderr > 0:
        p = float(stats.t.sf((1.0 - fit.slope) / fit.stderr, df))
    else:
        p = 0.0 if fit.slope < 1 else 1.0
    return ScalingResult(
        kappa=float(fit.slope),
        stderr=float(fit.stderr),
        ci95=(float(fit.slope - half), float(fit.slope + half)),
        p_sublinear=p,
        N_grid=N_grid,
        mean_N_acc=tuple(means),
        std_N_acc=tuple(stds),
        mean_gamma_M2=tuple(gm2),
        runs=runs,
    )
