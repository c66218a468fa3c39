"""EPR source and single-mode Gaussian channels acting on Bob's mode."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParam
from .gaussian import StandardFormCM, require_physical

MAX_A = 1e6


@dataclass(frozen=True)
class EprSource:
    """Two-mode squeezed vacuum, parametrized by modulation variance or lambda.

    ``lambda**2 == 2V / (2V + 1)``; build with :meth:`from_variance` or
    :meth:`from_lambda` so both fields stay consistent.
    """

    V: float
    lam: float

    @classmethod
    def from_variance(cls, V: float) -> "EprSource":
        if not (math.isfinite(V) and V >= 0):
            raise InvalidParam(f"modulation variance must be >= 0, got {V!r}")
        return cls._checked(V, math.sqrt(2.0 * V / (2.0 * V + 1.0)))

    @classmethod
    def from_lambda(cls, lam: float) -> "EprSource":
        if not (math.isfinite(lam) and 0 <= lam < 1):
            raise InvalidParam(f"lambda must lie in [0, 1), got {lam!r}")
        lam2 = lam * lam
        return cls._checked(lam2 / (2.0 * (1.0 - lam2)), lam)

    @classmethod
    def _checked(cls, V, lam):
        if lam >= 1:
            raise InvalidParam("lambda >= 1: state not normalizable")
        lam2 = lam * lam
        if (1 + lam2) / (1 - lam2) > MAX_A:
            raise InvalidParam(f"modulation too strong: a > {MAX_A:g}")
        return cls(float(V), float(lam))

    @property
    def r(self) -> float:
        """Squeezing parameter, artanh(lambda)."""
        return math.atanh(self.lam)


def epr_cm(src: EprSource) -> StandardFormCM:
    lam2 = src.lam**2
    if src.lam >= 1:
        raise InvalidParam("lambda >= 1")
    a = (1.0 + lam2) / (1.0 - lam2)
    if a > MAX_A:
        raise InvalidParam(f"a = {a} exceeds {MAX_A:g}")
    # 2 lambda / (1 - lambda^2) == sqrt(a^2 - 1) without cancellation near a = 1
    return StandardFormCM(a, a, 2.0 * src.lam / (1.0 - lam2))


class ChannelKind(str, Enum):
    LOSS = "loss"
    AMPLIFY = "amplify"


@dataclass(frozen=True)
class ChannelSpec:
    """Phase-insensitive channel on Bob's mode with ``n_th`` excess thermal photons.

    For a loss channel ``param`` is the transmittance T in (0, 1]; for an
    amplifying channel it is the gain G >= 1.  G = 1 requires n_th = 0 because
    the ancilla occupation n_th / (G - 1) is singular there.
    """

    kind: ChannelKind
    param: float
    n_th: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        p, n = self.param, self.n_th
        if not (math.isfinite(n) and n >= 0):
            raise InvalidParam(f"n_th must be >= 0, got {n!r}")
        if self.kind is ChannelKind.LOSS:
            if not (math.isfinite(p) and 0 < p <= 1):
                raise InvalidParam(f"transmittance T must lie in (0, 1], got {p!r}")
        else:
            if not (math.isfinite(p) and p >= 1):
                raise InvalidParam(f"gain G must be >= 1, got {p!r}")
            if p == 1 and n > 0:
                raise InvalidParam("G = 1 with n_th > 0 is singular; use a loss channel with T = 1")

    @classmethod
    def loss(cls, T: float, n_th: float = 0.0) -> "ChannelSpec":
        return cls(ChannelKind.LOSS, T, n_th)

    @classmethod
    def amplify(cls, G: float, n_th: float = 0.0) -> "ChannelSpec":
        return cls(ChannelKind.AMPLIFY, G, n_th)

    @property
    def T(self) -> float | None:
        return self.param if self.kind is ChannelKind.LOSS else None

    @property
    def G(self) -> float | None:
        return self.param if self.kind is ChannelKind.AMPLIFY else None

    def with_noise(self, n_th: float) -> "ChannelSpec":
        return ChannelSpec(self.kind, self.param, n_th)


def _channel_abc(a, b, c, kind, param, n_th):
    if kind is ChannelKind.LOSS:
        return a, param * b + (1.0 - param) + 2.0 * n_th, np.sqrt(param) * c
    return a, param * b + (param - 1.0) + 2.0 * n_th, np.sqrt(param) * c


def apply_channel(cm: StandardFormCM, ch: ChannelSpec) -> StandardFormCM:
    """Send Bob's mode through ``ch``; Alice's entry is untouched."""
    require_physical(cm)
    a, b, c = _channel_abc(cm.a, cm.b, cm.c, ch.kind, ch.param, ch.n_th)
    return StandardFormCM(a, float(b), float(c))


def loss_db_to_T(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def T_to_loss_db(T: float) -> float:
    return -10.0 * math.log10(T)
