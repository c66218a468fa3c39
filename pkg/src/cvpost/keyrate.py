"""Asymptotic key rates against collective attacks for heterodyne CV-QKD.

Both parties heterodyne.  Eve holds a purification of the shared state, so
her Holevo information is the joint entropy minus the entropy of the
conditional state left after the reference party's measurement.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParam, UnphysicalCovariance
from .gaussian import (
    StandardFormCM,
    _entropy,
    _spectrum_abc,
    conditional_mu_after_heterodyne,
    entropy_of_mu,
    require_physical,
    symplectic_spectrum,
)


class Direction(str, Enum):
    DIRECT = "direct"
    REVERSE = "reverse"


@dataclass(frozen=True)
class KeyRateReport:
    I_AB: float
    chi_AE: float
    chi_BE: float
    K_direct: float
    K_reverse: float
    K: float
    direction: Direction
    eta: float
    acceptance: float | None = None

    @property
    def K_throughput(self) -> float | None:
        """Key per emitted symbol when the rate was computed on post-selected data."""
        if self.acceptance is None:
            return None
        return self.K * self.acceptance

    def to_dict(self) -> dict:
        out = asdict(self)
        out["direction"] = self.direction.value
        out["K_throughput"] = self.K_throughput
        return out


def _joint_entropy(cm: StandardFormCM) -> float:
    spec = symplectic_spectrum(cm)
    return entropy_of_mu(spec.mu1) + entropy_of_mu(spec.mu2)


def mutual_information(cm: StandardFormCM) -> float:
    """Shannon information (bits) between the two heterodyne records."""
    require_physical(cm)
    a, b, c = cm.as_tuple()
    num = (a + 1.0) * (b + 1.0)
    den = num - c * c
    if den <= 0:
        raise UnphysicalCovariance(f"(a+1)(b+1) - c^2 = {den} <= 0")
    return math.log2(num / den)


def holevo_AE(cm: StandardFormCM) -> float:
    """Eve's information on Alice's data (direct reconciliation)."""
    require_physical(cm)
    return _joint_entropy(cm) - entropy_of_mu(conditional_mu_after_heterodyne(cm, "B"))


def holevo_BE(cm: StandardFormCM) -> float:
    """Eve's information on Bob's data (reverse reconciliation)."""
    require_physical(cm)
    return _joint_entropy(cm) - entropy_of_mu(conditional_mu_after_heterodyne(cm, "A"))


def _check_eta(eta):
    if not (0 < eta <= 1):
        raise InvalidParam(f"reconciliation efficiency must lie in (0, 1], got {eta!r}")


def key_rate(cm: StandardFormCM, eta: float, acceptance: float | None = None) -> KeyRateReport:
    """Direct and reverse key rates; the better one is reported as ``K``.

    Negative rates are returned as computed.  Ties go to reverse reconciliation.
    """
    _check_eta(eta)
    i_ab = mutual_information(cm)
    chi_ae = holevo_AE(cm)
    chi_be = holevo_BE(cm)
    k_dir = eta * i_ab - chi_ae
    k_rev = eta * i_ab - chi_be
    direction = Direction.DIRECT if k_dir > k_rev else Direction.REVERSE
    return KeyRateReport(
        I_AB=i_ab,
        chi_AE=chi_ae,
        chi_BE=chi_be,
        K_direct=k_dir,
        K_reverse=k_rev,
        K=max(k_dir, k_rev),
        direction=direction,
        eta=float(eta),
        acceptance=acceptance,
    )


def _key_rate_abc(a, b, c, eta):
    """Vectorized ``max(K_direct, K_reverse)``; used by the optimizer."""
    with np.errstate(divide="ignore", invalid="ignore"):
        num = (a + 1.0) * (b + 1.0)
        i_ab = np.log2(num / (num - c * c))
        mu_plus, mu_minus, _ = _spectrum_abc(a, b, c)
        s_ab = _entropy(mu_plus) + _entropy(mu_minus)
        s_b = _entropy(b - c * c / (a + 1.0))
        s_a = _entropy(a - c * c / (b + 1.0))
    return np.maximum(eta * i_ab - (s_ab - s_b), eta * i_ab - (s_ab - s_a))
