"""Covariance-matrix calculus for two-mode Gaussian states in standard form.

Conventions
-----------
Quadrature operators are ``x = (a + a^dag)/sqrt(2)`` and ``p = (a - a^dag)/(i sqrt(2))``
so the vacuum has quadrature variance 1/2.  Covariance matrices hold
``<{dR_j, dR_k}>`` (no factor 1/2), which makes the vacuum matrix the identity.

A two-mode state in standard form is described by three numbers::

        | a I        c sigma_z |
    g = |                      |      sigma_z = diag(1, -1)
        | c sigma_z  b I       |

Mode A belongs to Alice, mode B to Bob.  All functions here are pure.
The ``_abc`` helpers accept numpy arrays and broadcast, so the optimizer can
evaluate whole parameter grids through the same formulas as the scalar API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateQForm,
    FilterDiverges,
    InvalidParam,
    NumericalDomain,
    UnphysicalCovariance,
)

TOL_PHYS = 1e-9


@dataclass(frozen=True)
class StandardFormCM:
    """Two-mode covariance matrix ``(a, b, c)``; physicality is not enforced here."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidParam(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))

    def matrix(self) -> np.ndarray:
        """Full 4x4 matrix in the ordering (x_A, p_A, x_B, p_B)."""
        a, b, c = self.a, self.b, self.c
        return np.array(
            [
                [a, 0.0, c, 0.0],
                [0.0, a, 0.0, -c],
                [c, 0.0, b, 0.0],
                [0.0, -c, 0.0, b],
            ]
        )

    def swapped(self) -> "StandardFormCM":
        """Same state with the roles of Alice and Bob exchanged."""
        return StandardFormCM(self.b, self.a, self.c)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)


@dataclass(frozen=True)
class QForm:
    """Entries ``(A, B, C)`` of ``Gamma = (gamma + I)^-1``, same block layout."""

    A: float
    B: float
    C: float

    @property
    def det(self) -> float:
        return self.A * self.B - self.C**2


@dataclass(frozen=True)
class FilterSpec:
    """Noiseless filter ``g^n`` on one mode; g > 1 amplifies, g < 1 attenuates."""

    g: float

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g > 0):
            raise InvalidParam(f"filter gain must be finite and positive, got {self.g!r}")


@dataclass(frozen=True)
class SymplecticSpectrum:
    mu1: float
    mu2: float


@dataclass(frozen=True)
class PhysicalityReport:
    ok: bool
    a: float
    b: float
    mu_min: float
    reason: str = ""

    def __bool__(self):
        return self.ok


# --------------------------------------------------------------------------
# array-level kernels


def _spectrum_abc(a, b, c):
    """Symplectic eigenvalues (mu_plus, mu_minus) and the discriminant."""
    delta = a * a + b * b - 2.0 * c * c
    det = (a * b - c * c) ** 2
    # delta^2 - 4 det, factored; the expanded form loses ~8 digits near pure states
    disc = (a - b) ** 2 * ((a + b) ** 2 - 4.0 * c * c)
    root = np.sqrt(np.maximum(disc, 0.0))
    mu_plus_sq = (delta + root) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_minus_sq = np.where(mu_plus_sq > 0, det / mu_plus_sq, (delta - root) / 2.0)
    # nan marks an inconsistent (non positive-definite) input
    with np.errstate(invalid="ignore"):
        mu_plus = np.sqrt(np.where(mu_plus_sq >= 0, mu_plus_sq, np.nan))
        mu_minus = np.sqrt(np.where(mu_minus_sq >= 0, mu_minus_sq, np.nan))
    return mu_plus, mu_minus, disc


def _entropy(mu):
    """Von Neumann entropy in bits of a mode with symplectic eigenvalue ``mu``."""
    mu = np.maximum(np.asarray(mu, dtype=float), 1.0)
    hi = (mu + 1.0) / 2.0
    lo = (mu - 1.0) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        lo_term = np.where(lo > 0, lo * np.log2(np.where(lo > 0, lo, 1.0)), 0.0)
    return hi * np.log2(hi) - lo_term


def _physical_abc(a, b, c, tol=TOL_PHYS):
    """Boolean mask of physical standard-form matrices."""
    mu_plus, mu_minus, disc = _spectrum_abc(a, b, c)
    with np.errstate(invalid="ignore"):
        return (
            (a >= 1.0 - tol)
            & (b >= 1.0 - tol)
            & (a * b - c * c > 0)
            & (disc >= -tol)
            & (mu_minus >= 1.0 - tol)
        )


def _filter_abc(a, b, c, g):
    """Filter ``g^n`` on mode B through the Gamma-matrix map.

    Returns ``(a', b', c', ok)``; entries where ``ok`` is False carry garbage.
    """
    d = (a + 1.0) * (b + 1.0) - c * c
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        A = (b + 1.0) / d
        B = (a + 1.0) / d
        C = -c / d
        B2 = g * g * (B - 0.5) + 0.5
        C2 = g * C
        d2 = A * B2 - C2 * C2
        a2 = B2 / d2 - 1.0
        b2 = A / d2 - 1.0
        c2 = -C2 / d2
        ok = (d > 0) & (A > 0) & (B2 > 0) & (d2 > 0) & np.isfinite(a2) & np.isfinite(b2)
        ok = ok & _physical_abc(a2, b2, c2)
    return a2, b2, c2, ok


# --------------------------------------------------------------------------
# scalar API


def check_physical(cm: StandardFormCM, tol: float = TOL_PHYS) -> PhysicalityReport:
    """Physicality test with the offending quantity in the report."""
    a, b, c = cm.as_tuple()
    mu_plus, mu_minus, disc = _spectrum_abc(a, b, c)
    mu_min = float(mu_minus)
    if a < 1.0 - tol:
        return PhysicalityReport(False, a, b, mu_min, f"a={a} < 1")
    if b < 1.0 - tol:
        return PhysicalityReport(False, a, b, mu_min, f"b={b} < 1")
    if a * b - c * c <= 0:
        return PhysicalityReport(False, a, b, mu_min, f"ab - c^2 = {a * b - c * c} <= 0")
    if disc < -tol or not math.isfinite(mu_min):
        return PhysicalityReport(False, a, b, mu_min, "symplectic spectrum undefined")
    if mu_min < 1.0 - tol:
        return PhysicalityReport(False, a, b, mu_min, f"mu_min={mu_min} < 1")
    return PhysicalityReport(True, a, b, mu_min)


def require_physical(cm: StandardFormCM) -> None:
    report = check_physical(cm)
    if not report:
        raise UnphysicalCovariance(f"unphysical covariance {cm.as_tuple()}: {report.reason}")


def to_qform(cm: StandardFormCM) -> QForm:
    """Gamma = (gamma + I)^-1 in block form."""
    require_physical(cm)
    a, b, c = cm.as_tuple()
    d = (a + 1.0) * (b + 1.0) - c * c
    if d <= 0:
        raise UnphysicalCovariance(f"(a+1)(b+1) - c^2 = {d} <= 0")
    return QForm((b + 1.0) / d, (a + 1.0) / d, -c / d)


def from_qform(q: QForm) -> StandardFormCM:
    """Inverse of :func:`to_qform`; the result is not checked for physicality."""
    d = q.det
    if not (q.A > 0 and q.B > 0 and d > 0):
        raise DegenerateQForm(f"Gamma not positive definite: A={q.A}, B={q.B}, AB-C^2={d}")
    return StandardFormCM(q.B / d - 1.0, q.A / d - 1.0, -q.C / d)


def apply_filter(cm: StandardFormCM, f: FilterSpec | float) -> StandardFormCM:
    """Apply the noiseless filter ``g^n`` to Bob's mode and renormalize.

    In Gamma form the filter leaves A alone, scales C by g and sends
    B -> g^2 (B - 1/2) + 1/2.  Raises :class:`FilterDiverges` when the result
    is not a normalizable physical state (e.g. a TMSV with g * lambda >= 1).
    """
    g = f.g if isinstance(f, FilterSpec) else FilterSpec(float(f)).g
    require_physical(cm)
    if g == 1.0:
        return cm
    q = to_qform(cm)
    B2 = g * g * (q.B - 0.5) + 0.5
    filtered = QForm(q.A, B2, g * q.C)
    try:
        out = from_qform(filtered)
    except DegenerateQForm as exc:
        raise FilterDiverges(f"filter g={g} diverges on {cm.as_tuple()}") from exc
    if not check_physical(out):
        raise FilterDiverges(f"filter g={g} gives unphysical output {out.as_tuple()}")
    return out


def apply_filter_alice(cm: StandardFormCM, f: FilterSpec | float) -> StandardFormCM:
    """Filter on Alice's mode, via the A/B role swap."""
    return apply_filter(cm.swapped(), f).swapped()


def symplectic_spectrum(cm: StandardFormCM) -> SymplecticSpectrum:
    a, b, c = cm.as_tuple()
    mu_plus, mu_minus, disc = _spectrum_abc(a, b, c)
    if disc < -TOL_PHYS:
        raise NumericalDomain(f"negative discriminant {disc} for {cm.as_tuple()}")
    if not (math.isfinite(mu_plus) and math.isfinite(mu_minus)):
        raise NumericalDomain(f"no real symplectic spectrum for {cm.as_tuple()}")
    return SymplecticSpectrum(float(mu_plus), float(mu_minus))


def entropy_of_mu(mu: float) -> float:
    """Entropy in bits; ``mu`` below 1 (numerical noise) is clamped to 1."""
    return float(_entropy(mu))


def conditional_mu_after_heterodyne(cm: StandardFormCM, kept_mode: str = "B") -> float:
    """Symplectic eigenvalue of one mode after heterodyning the other."""
    a, b, c = cm.as_tuple()
    if kept_mode == "B":
        mu = b - c * c / (a + 1.0)
    elif kept_mode == "A":
        mu = a - c * c / (b + 1.0)
    else:
        raise InvalidParam(f"kept_mode must be 'A' or 'B', got {kept_mode!r}")
    if mu < 1.0 - TOL_PHYS:
        raise UnphysicalCovariance(f"conditional eigenvalue {mu} < 1")
    return max(mu, 1.0)
