"""Gap machinery for the Bernoulli displacement model.

With h the periodic operator on [1, 2L] for a configuration omega (cells of
two sites, lam placed on the first site when omega_k = 0 and on the second
when omega_k = 1), the shifted square

    H = (h - lam/2)^2 - (2 + lam^2/4)

is five-diagonal with zero main diagonal, entries s(n) = lam - V(n) - V(n+1)
next to it and 1 two steps away.  Grouping sites in pairs (2k, 2k+1) and
rotating each pair by 45 degrees turns H into a direct sum of two periodic
Jacobi matrices -h_0 +- q_omega on L sites, q_omega(k) = lam (omega_{k+1} - omega_k).
Their spectra are those of J+- = h_0 +- q_omega up to a global sign, which
drops out when L is even.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RangeError
from .floquet import band_edges_closed_form
from .lattice import BoundaryCondition, Box, LatticeOperator, build_operator

GAP_DELTA = 1e-9
# |sum of increments| * log z_+ must stay below this
EXPONENT_CAP = 600.0


def _omega(omega) -> np.ndarray:
    w = np.asarray(omega)
    if w.ndim != 1 or not np.all((w == 0) | (w == 1)):
        raise DomainError("omega must be a 0/1 vector")
    return w.astype(np.int64)


def bdm_potential(omega, lam: float) -> np.ndarray:
    """Potential on [1, 2L] (last axis) for one or many 0/1 configurations."""
    w = np.asarray(omega, dtype=float)
    out = np.empty(w.shape[:-1] + (2 * w.shape[-1],))
    out[..., 0::2] = lam * (1.0 - w)
    out[..., 1::2] = lam * w
    return out


def periodic_operator(omega, lam: float) -> LatticeOperator:
    w = _omega(omega)
    return build_operator(Box.from_sizes([2 * w.size]), BoundaryCondition.PERIODIC, bdm_potential(w, lam))


def flip(omega) -> np.ndarray:
    """The 0-1 flip omega_k -> 1 - omega_k."""
    return 1 - _omega(omega)


def q_omega(omega, lam: float) -> np.ndarray:
    """q(k) = lam (omega_{k+1} - omega_k) with periodic wrap."""
    w = _omega(omega)
    return lam * (np.roll(w, -1) - w).astype(float)


@dataclass(frozen=True)
class SquaredOperator:
    lam: float
    omega: np.ndarray
    matrix: np.ndarray
    side: np.ndarray

    @property
    def L(self) -> int:
        return self.omega.size

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def build_squared_operator(omega, lam: float) -> SquaredOperator:
    w = _omega(omega)
    if w.size < 2:
        raise DomainError("need L >= 2")
    h = periodic_operator(w, lam).to_dense()
    a = h - 0.5 * lam * np.eye(h.shape[0])
    H = a @ a - (2.0 + lam * lam / 4.0) * np.eye(h.shape[0])
    V = bdm_potential(w, lam)
    side = lam - V - np.roll(V, -1)
    return SquaredOperator(float(lam), w, H, side)


@dataclass(frozen=True)
class DecoupledPair:
    lam: float
    omega: np.ndarray
    j_minus: LatticeOperator
    j_plus: LatticeOperator

    def spectra(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigvalsh(self.j_minus.to_dense()), np.linalg.eigvalsh(self.j_plus.to_dense())

    def joint_spectrum(self) -> np.ndarray:
        """Spectrum of J- (+) J+, sorted."""
        return np.sort(np.concatenate(self.spectra()))

    def squared_spectrum(self) -> np.ndarray:
        """Spectrum of the squared operator recovered from the pair (any L)."""
        return np.sort(-np.concatenate(self.spectra()))


def decouple(omega, lam: float) -> DecoupledPair:
    w = _omega(omega)
    if w.size < 2:
        raise DomainError("need L >= 2")
    q = q_omega(w, lam)
    box = Box.from_sizes([w.size])
    return DecoupledPair(
        float(lam),
        w,
        build_operator(box, BoundaryCondition.PERIODIC, -q),
        build_operator(box, BoundaryCondition.PERIODIC, q),
    )


def pair_transform(L: int) -> np.ndarray:
    """Orthogonal W with W^T H W = (-h_0 + q) (+) (-h_0 - q) on the pair basis.

    Column k of the first block is (e_{2k} + e_{2k+1}) / sqrt 2 (1-based sites,
    2L + 1 wraps to 1); the second block uses the difference.
    """
    n = 2 * L
    W = np.zeros((n, n))
    s = 1.0 / np.sqrt(2.0)
    for k in range(L):
        i, j = (2 * k + 1) % n, (2 * k + 2) % n
        W[i, k] = W[j, k] = s
        W[i, L + k], W[j, L + k] = s, -s
    return W


@dataclass(frozen=True)
class GapCertificate:
    lam: float
    z_plus: float
    z_minus: float
    omega: np.ndarray
    values: np.ndarray
    residual: float


def z_values(lam: float) -> tuple[float, float]:
    root = np.sqrt(4.0 + lam * lam)
    return float((root + lam) / 2.0), float((root - lam) / 2.0)


def psi_omega(omega, lam: float) -> GapCertificate:
    """Positive solution of -psi(k-1) + q(k) psi(k) - psi(k+1) = -sqrt(4 + lam^2) psi(k).

    psi(k) = z_+ ** sum_{j<=k} (2 omega_j - 1) for k = 0..n; the equation is
    checked at k = 1..n-1, where q(k) = lam (omega_{k+1} - omega_k) is defined
    by the window itself.  The residual is relative to the local scale.
    """
    if lam == 0:
        raise DomainError("lambda must be nonzero")
    w = _omega(omega)
    zp, zm = z_values(lam)
    expo = np.concatenate([[0], np.cumsum(2 * w - 1)])
    if np.max(np.abs(expo)) * abs(np.log(zp)) > EXPONENT_CAP:
        raise RangeError("window too long for this lambda: psi would overflow")
    psi = zp ** expo.astype(float)
    if np.any(psi <= 0):
        raise RangeError("psi underflowed to zero")
    residual = 0.0
    if w.size >= 2:
        q = lam * (w[1:] - w[:-1]).astype(float)
        k = np.arange(1, w.size)
        lhs = -psi[k - 1] + q * psi[k] - psi[k + 1]
        rhs = -np.sqrt(4.0 + lam * lam) * psi[k]
        scale = np.maximum.reduce([psi[k - 1], psi[k], psi[k + 1]])
        residual = float(np.max(np.abs(lhs - rhs) / scale))
    return GapCertificate(float(lam), zp, zm, w, psi, residual)


@dataclass
class GapReport:
    gap_clean: bool
    min_sq_eig: float
    in_gap: int
    bound: float


def verify_gap(omega, lam: float, delta: float = GAP_DELTA) -> GapReport:
    """No periodic eigenvalue inside (G_- + delta, G_+ - delta) and H >= -sqrt(4 + lam^2)."""
    if lam == 0:
        raise DomainError("lambda must be nonzero")
    w = _omega(omega)
    _, gm, gp, _ = band_edges_closed_form(lam)
    ev = np.linalg.eigvalsh(periodic_operator(w, lam).to_dense())
    in_gap = int(np.sum((ev > gm + delta) & (ev < gp - delta)))
    sq_min = float(build_squared_operator(w, lam).eigenvalues()[0])
    bound = -np.sqrt(4.0 + lam * lam)
    return GapReport(in_gap == 0 and sq_min >= bound - delta, sq_min, in_gap, float(bound))
