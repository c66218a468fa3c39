"""Truncated Fock-space oracle for the Gaussian formulas.

States are stored in factored form ``rho = sum_r |psi_r><psi_r|``.  For two
modes ``factors`` has shape ``(rank, d, d)`` indexed ``[r, n_A, n_B]``; for a
single mode it has shape ``(rank, d)``.  Hermiticity and positivity are then
structural, and the loss channel only multiplies the rank by ``d``, which keeps
a 61-level two-mode state cheap where a dense 3721 x 3721 matrix would not be.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import CutoffTooSmall, FockOverflow, InvalidParam, NotStandardForm
from .gaussian import StandardFormCM

LEAK_TOL = 1e-10
DEFAULT_NCUT = 60


@dataclass(frozen=True)
class FockDensity:
    factors: np.ndarray = field(repr=False)
    n_cut: int

    @property
    def modes(self) -> int:
        return self.factors.ndim - 1

    @property
    def dim(self) -> int:
        return self.n_cut + 1

    @property
    def trace(self) -> float:
        return float(np.sum(np.abs(self.factors) ** 2))

    def normalized(self) -> "FockDensity":
        return FockDensity(self.factors / math.sqrt(self.trace), self.n_cut)

    def reduced(self, mode: str) -> "FockDensity":
        """Single-mode marginal of a two-mode state."""
        if self.modes != 2:
            raise InvalidParam("reduced() needs a two-mode state")
        f = self.factors if mode == "B" else np.swapaxes(self.factors, 1, 2)
        if mode not in ("A", "B"):
            raise InvalidParam(f"mode must be 'A' or 'B', got {mode!r}")
        return FockDensity(f.reshape(-1, self.dim), self.n_cut)

    def matrix(self) -> np.ndarray:
        """Dense density matrix; for two modes the index is ``n_A * d + n_B``."""
        flat = self.factors.reshape(self.factors.shape[0], -1)
        return flat.T @ flat.conj()

    def photon_distribution(self) -> np.ndarray:
        """Diagonal of a single-mode state."""
        if self.modes != 1:
            raise InvalidParam("photon_distribution() needs a single-mode state")
        return np.sum(np.abs(self.factors) ** 2, axis=0)


def _axis(rho: FockDensity, mode: str) -> int:
    if rho.modes == 1:
        return 1
    if mode == "A":
        return 1
    if mode == "B":
        return 2
    raise InvalidParam(f"mode must be 'A' or 'B', got {mode!r}")


def tmsv_fock(lam: float, n_cut: int = DEFAULT_NCUT, leak_tol: float = LEAK_TOL) -> FockDensity:
    """Two-mode squeezed vacuum ``sqrt(1 - lam^2) sum_n lam^n |n, n>``."""
    if not 0 <= lam < 1:
        raise InvalidParam(f"lambda must lie in [0, 1), got {lam!r}")
    if lam ** (2 * (n_cut + 1)) >= leak_tol:
        raise CutoffTooSmall(f"lambda={lam}: n_cut={n_cut} leaks more than {leak_tol:g}")
    d = n_cut + 1
    amp = math.sqrt(1.0 - lam * lam) * lam ** np.arange(d, dtype=float)
    psi = np.zeros((1, d, d), dtype=complex)
    psi[0, np.arange(d), np.arange(d)] = amp
    return FockDensity(psi, n_cut)


def thermal_fock(n_mean: float, n_cut: int = DEFAULT_NCUT) -> FockDensity:
    """Single-mode thermal state, truncated (not renormalized)."""
    ratio = n_mean / (n_mean + 1.0)
    p = (1.0 - ratio) * ratio ** np.arange(n_cut + 1, dtype=float)
    return FockDensity(np.diag(np.sqrt(p)).astype(complex), n_cut)


def fock_number(n: int, n_cut: int = DEFAULT_NCUT) -> FockDensity:
    psi = np.zeros((1, n_cut + 1), dtype=complex)
    psi[0, n] = 1.0
    return FockDensity(psi, n_cut)


def filter_fock(rho: FockDensity, g: float, mode: str = "B") -> FockDensity:
    """Apply ``g^n`` to one mode without renormalizing.

    The output trace divided by the input trace is the filter success weight.
    """
    if not g > 0:
        raise InvalidParam(f"filter gain must be positive, got {g!r}")
    if 2 * rho.n_cut * math.log(g) > 700:
        raise FockOverflow(f"g^(2 n_cut) overflows for g={g}, n_cut={rho.n_cut}")
    axis = _axis(rho, mode)
    shape = [1] * rho.factors.ndim
    shape[axis] = rho.dim
    scale = (g ** np.arange(rho.dim, dtype=float)).reshape(shape)
    return FockDensity(rho.factors * scale, rho.n_cut)


def loss_kraus(T: float, n_cut: int) -> np.ndarray:
    """Kraus operators ``K_k|n> = sqrt(C(n,k)) T^((n-k)/2) (1-T)^(k/2) |n-k>``, shape (d, d, d)."""
    d = n_cut + 1
    kraus = np.zeros((d, d, d))
    for k in range(d):
        for n in range(k, d):
            kraus[k, n - k, n] = math.sqrt(math.comb(n, k) * T ** (n - k) * (1.0 - T) ** k)
    return kraus


def pure_loss_fock(rho: FockDensity, T: float, mode: str = "B") -> FockDensity:
    """Beam splitter of transmittance ``T`` with a vacuum ancilla."""
    if not 0 < T <= 1:
        raise InvalidParam(f"transmittance must lie in (0, 1], got {T!r}")
    if T == 1:
        return rho
    kraus = loss_kraus(T, rho.n_cut)
    f = rho.factors
    if rho.modes == 1:
        out = np.einsum("kmn,rn->krm", kraus, f)
    elif _axis(rho, mode) == 2:
        out = np.einsum("kmn,rjn->krjm", kraus, f)
    else:
        out = np.einsum("kmn,rnj->krmj", kraus, f)
    out = out.reshape((-1,) + f.shape[1:])
    # drop Kraus branches that carry no weight
    weight = np.sum(np.abs(out.reshape(out.shape[0], -1)) ** 2, axis=1)
    return FockDensity(out[weight > 0], rho.n_cut)


# --------------------------------------------------------------------------
# moments


def _lowering(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)


@dataclass(frozen=True)
class FockCM:
    cm: StandardFormCM
    matrix: np.ndarray = field(repr=False)
    residual: float
    max_mean: float
    trace: float


def covariance_matrix(rho: FockDensity) -> tuple[np.ndarray, np.ndarray]:
    """Full 4x4 covariance matrix and mean vector of a (normalized copy of a) two-mode state.

    Ordering (x_A, p_A, x_B, p_B); vacuum gives the identity.
    """
    if rho.modes != 2:
        raise InvalidParam("covariance_matrix() needs a two-mode state")
    psi = rho.factors / math.sqrt(rho.trace)
    low = _lowering(rho.dim)

    def on_a(op, f):
        return np.einsum("mn,rnj->rmj", op, f)

    def on_b(op, f):
        return np.einsum("mn,rjn->rjm", op, f)

    def expect(f_op):
        return np.sum(psi.conj() * f_op)

    a_A = on_a(low, psi)
    a_B = on_b(low, psi)
    mean = {"A": expect(a_A), "B": expect(a_B)}
    m = {
        ("A", "A"): expect(on_a(low, a_A)),  # <a_A a_A>
        ("B", "B"): expect(on_b(low, a_B)),
        ("A", "B"): expect(on_a(low, a_B)),  # <a_A a_B>
    }
    n = {"A": np.sum(np.abs(a_A) ** 2), "B": np.sum(np.abs(a_B) ** 2)}
    # <a_A^dag a_B> = <a_A psi | a_B psi>
    cross_dag = np.sum(a_A.conj() * a_B)

    s = 1.0 / math.sqrt(2.0)
    # R = u a + conj(u) a^dag
    coeffs = [("A", s), ("A", -1j * s), ("B", s), ("B", -1j * s)]

    cm = np.zeros((4, 4))
    for j, (mj, uj) in enumerate(coeffs):
        for k, (mk, uk) in enumerate(coeffs):
            if mj == mk:
                aa, nn = m[(mj, mj)], n[mj]
                sym = (
                    2 * uj * uk * aa
                    + 2 * np.conj(uj * uk * aa)
                    + (uj * np.conj(uk) + np.conj(uj) * uk) * (2 * nn + 1)
                )
            else:
                # <a_j a_k>, <a_j a_k^dag>, <a_j^dag a_k>, <a_j^dag a_k^dag>
                ab = m[("A", "B")]
                adag_b = cross_dag if mj == "A" else np.conj(cross_dag)
                a_bdag = np.conj(adag_b)
                sym = 2 * (
                    uj * uk * ab
                    + uj * np.conj(uk) * a_bdag
                    + np.conj(uj) * uk * adag_b
                    + np.conj(uj * uk * ab)
                )
            mean_j = 2 * (uj * mean[mj]).real
            mean_k = 2 * (uk * mean[mk]).real
            cm[j, k] = float(np.real(sym)) - 2.0 * mean_j * mean_k
    means = np.array([2 * (u * mean[mm]).real for mm, u in coeffs])
    return cm, means


def cm_from_fock(rho: FockDensity, residual_tol: float = 1e-8, mean_tol: float = 1e-8) -> FockCM:
    """Standard-form entries of a zero-mean two-mode state.

    Raises :class:`NotStandardForm` when the off-pattern entries or the means
    exceed their tolerances.
    """
    full, means = covariance_matrix(rho)
    a = (full[0, 0] + full[1, 1]) / 2.0
    b = (full[2, 2] + full[3, 3]) / 2.0
    c = (full[0, 2] - full[1, 3]) / 2.0
    ideal = StandardFormCM(a, b, c).matrix()
    residual = float(np.max(np.abs(full - ideal)))
    max_mean = float(np.max(np.abs(means)))
    if residual > residual_tol or max_mean > mean_tol:
        raise NotStandardForm(f"residual {residual:.3g}, max mean {max_mean:.3g}")
    return FockCM(StandardFormCM(a, b, c), full, residual, max_mean, rho.trace)


def coherent_vector(beta, n_cut: int) -> np.ndarray:
    """Truncated coherent-state amplitudes ``<n|beta>``; shape ``beta.shape + (d,)``."""
    beta = np.asarray(beta, dtype=complex)
    n = np.arange(n_cut + 1)
    r = np.abs(beta)[..., None]
    phase = np.exp(1j * np.angle(beta))[..., None] ** n
    with np.errstate(divide="ignore"):
        log_mag = np.where(n == 0, 0.0, n * np.log(np.where(r > 0, r, 1.0))) - 0.5 * gammaln(n + 1)
    mag = np.where((r == 0) & (n > 0), 0.0, np.exp(log_mag - 0.5 * r**2))
    return mag * phase


def husimi_at(rho: FockDensity, beta) -> np.ndarray | float:
    """``<beta|rho|beta> / pi`` for a single-mode state; accepts arrays of ``beta``."""
    if rho.modes != 1:
        raise InvalidParam("husimi_at() needs a single-mode state")
    beta_arr = np.asarray(beta, dtype=complex)
    if np.max(np.abs(beta_arr)) ** 2 > 700:
        raise FockOverflow("|beta| too large for the coherent expansion")
    vec = coherent_vector(beta_arr, rho.n_cut)
    overlaps = vec.conj() @ rho.factors.T  # (..., rank)
    q = np.sum(np.abs(overlaps) ** 2, axis=-1) / math.pi
    return float(q) if q.ndim == 0 else q
