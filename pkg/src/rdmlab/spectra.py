"""Eigenvalue machinery for lattice operators.

* Sturm counting for 1D operators.  Tridiagonal matrices use the classical
  pivot recursion; 1D periodic (cyclic tridiagonal) matrices use an LDL^T
  elimination that carries the fill-in of the wrap entry along the last
  column.  In both cases the number of negative pivots of A - E equals the
  number of eigenvalues below E (Sylvester inertia).
* Bisection on the counting function for the full 1D spectrum.
* Cyclic Jacobi rotations for small dense symmetric matrices.
* Shifted inverse iteration for positive ground states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConsistencyError, DomainError, NumericError, ResourceError
from .lattice import DEFAULT_VOLUME_CAP, LatticeOperator, SiteFunction

DEFAULT_TOL = 1e-12
PIVOT_FLOOR = 1e-300
# the bordered elimination squares the fill-in, so it needs more headroom
CYCLIC_PIVOT_FLOOR = 1e-150
# dense problems above this size go to LAPACK instead of Jacobi sweeps
JACOBI_MAX_DIM = 96


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    tolerance: float

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.size > 1 and np.any(np.diff(ev) < 0):
            raise ConsistencyError("eigenvalues not sorted")
        object.__setattr__(self, "eigenvalues", ev)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max(self) -> float:
        return float(self.eigenvalues[-1])


@dataclass(frozen=True)
class GroundState:
    energy: float
    vector: SiteFunction
    residual: float


# ---------------------------------------------------------------- counting


def _fix(d, floor=PIVOT_FLOOR):
    return np.where(np.abs(d) < floor, -floor, d)


def tridiag_counts(diag, off, energies) -> np.ndarray:
    """Vectorised Sturm counts #{eigenvalues <= E}.

    ``diag`` has shape (..., n); ``off`` has shape (..., n-1) or (n-1,);
    ``energies`` has shape (m,).  Returns integer counts of shape (..., m).
    """
    diag = np.asarray(diag, dtype=float)
    energies = np.asarray(energies, dtype=float)
    off2 = np.asarray(off, dtype=float) ** 2
    n = diag.shape[-1]
    lead = diag.shape[:-1]
    batch_off = off2.ndim > 1
    d = _fix(diag[..., 0, None] - energies)
    count = (d < 0).astype(np.int64)
    for i in range(1, n):
        b2 = off2[..., i - 1, None] if batch_off else off2[i - 1]
        d = _fix(diag[..., i, None] - energies - b2 / d)
        count += d < 0
    return count.reshape(lead + energies.shape)


def cyclic_counts(diag, off, corner, energies) -> np.ndarray:
    """Sturm counts for a cyclic tridiagonal matrix (corner entry joins sites 0 and n-1).

    Same shapes as :func:`tridiag_counts`; ``corner`` is a scalar or has the
    leading batch shape.  Requires n >= 3.

    The elimination does not pivot, so counts can be off by one when E sits
    within roughly 1e-8 of a multiple eigenvalue.  Fine for Monte Carlo
    counting on a grid; full spectra of cyclic operators use a dense solver.
    """
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    energies = np.asarray(energies, dtype=float)
    n = diag.shape[-1]
    if n < 3:
        raise DomainError("cyclic counting needs at least three sites")
    batch_off = off.ndim > 1

    def b(i):
        return off[..., i, None] if batch_off else off[i]

    c = np.asarray(corner, dtype=float)
    c = c[..., None] if c.ndim else c
    fl = CYCLIC_PIVOT_FLOOR
    with np.errstate(over="ignore", invalid="ignore"):
        last = diag[..., n - 1, None] - energies
        d = _fix(diag[..., 0, None] - energies, fl)
        w = c + np.zeros_like(d)
        count = (d < 0).astype(np.int64)
        for i in range(1, n - 1):
            last = last - w * w / d
            w_init = b(n - 2) if i == n - 2 else 0.0
            w_new = w_init - b(i - 1) * w / d
            d = _fix(diag[..., i, None] - energies - b(i - 1) ** 2 / d, fl)
            w = w_new
            count += d < 0
        last = _fix(last - w * w / d, fl)
    count += last < 0
    return count


def _require_1d(op: LatticeOperator):
    if op.box.d != 1:
        raise DomainError("Sturm counting needs a one-dimensional operator")


def counts(op: LatticeOperator, energies) -> np.ndarray:
    """Number of eigenvalues <= E for each energy (1D operators only)."""
    _require_1d(op)
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if op.is_tridiagonal:
        return tridiag_counts(op.diag, op.offdiag, energies)
    return cyclic_counts(op.diag, op.offdiag, op.corner, energies)


def sturm_count(op: LatticeOperator, E: float) -> int:
    """#{eigenvalues of op that are <= E}."""
    return int(counts(op, [E])[0])


# ---------------------------------------------------------------- bisection


def _bisect_indices(count_fn, lo: float, hi: float, ks: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Locate the k-th eigenvalues (0-based) by simultaneous bisection."""
    a = np.full(ks.size, lo)
    b = np.full(ks.size, hi)
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            return 0.5 * (a + b)
        mid = 0.5 * (a + b)
        c = count_fn(mid)
        above = c >= ks + 1
        b = np.where(above, mid, b)
        a = np.where(above, a, mid)
    if np.all(b - a <= tol):
        return 0.5 * (a + b)
    raise NumericError(f"bisection did not reach tolerance {tol} in {max_iter} steps")


def bisect_tridiagonal(
    diag, off, tol: float = DEFAULT_TOL, max_iter: int = 200, indices=None
) -> np.ndarray:
    """Eigenvalues of the symmetric tridiagonal matrix (diag, off) by bisection."""
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    if off.size != diag.size - 1:
        raise DomainError("off-diagonal must have one entry less than the diagonal")
    radius = np.zeros_like(diag)
    radius[:-1] += np.abs(off)
    radius[1:] += np.abs(off)
    lo, hi = float(np.min(diag - radius)) - tol, float(np.max(diag + radius)) + tol
    ks = np.arange(diag.size) if indices is None else np.asarray(indices, dtype=int)
    return np.sort(_bisect_indices(lambda e: tridiag_counts(diag, off, e), lo, hi, ks, tol, max_iter))


def eigenvalues_tridiag(
    op: LatticeOperator, tol: float = DEFAULT_TOL, max_iter: int = 200, indices=None
) -> Spectrum:
    """Eigenvalues of a 1D operator by bisection on the Sturm count.

    ``indices`` selects a subset (0-based, ascending order); default is all.
    Cyclic (periodic, n >= 3) operators are handed to :func:`eigen_dense`,
    since their counts are not reliable at multiple eigenvalues.
    """
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    _require_1d(op)
    if not op.is_tridiagonal:
        ev = eigen_dense(op).eigenvalues
        if indices is not None:
            ev = ev[np.asarray(indices, dtype=int)]
        return Spectrum(np.sort(ev), tol)
    return Spectrum(bisect_tridiagonal(op.diag, op.offdiag, tol, max_iter, indices), tol)


# ---------------------------------------------------------------- Jacobi


def jacobi_eigenvalues(a: np.ndarray, rel_tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Cyclic Jacobi rotations on a symmetric matrix; returns sorted eigenvalues."""
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DomainError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-14 * max(1.0, np.abs(a).max(initial=0))):
        raise DomainError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    target = rel_tol * np.linalg.norm(a)

    mask = ~np.eye(n, dtype=bool)

    def off_norm():
        return np.linalg.norm(a[mask])

    for _ in range(max_sweeps):
        if off_norm() <= target:
            return np.sort(np.diag(a))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                app, aqq = a[p, p], a[q, q]
                # negligible against both diagonal entries: rotating would not change them
                if abs(apq) <= 1e-18 * (abs(app) + abs(aqq)) or apq == 0.0:
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q]
                newp = c * colp - s * colq
                newq = s * colp + c * colq
                # symmetric update: rows mirror the rotated columns
                a[:, p] = a[p, :] = newp
                a[:, q] = a[q, :] = newq
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = a[q, p] = 0.0
    if off_norm() <= target:
        return np.sort(np.diag(a))
    raise NumericError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def eigen_dense(
    op: LatticeOperator | np.ndarray,
    method: str = "auto",
    volume_cap: int = DEFAULT_VOLUME_CAP,
    max_sweeps: int = 100,
) -> Spectrum:
    """Full spectrum of a symmetric matrix.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_DIM`` rows, LAPACK beyond).
    """
    mat = op.to_dense() if isinstance(op, LatticeOperator) else np.asarray(op, dtype=float)
    n = mat.shape[0]
    if n > volume_cap:
        raise ResourceError(f"dimension {n} exceeds cap {volume_cap}")
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        return Spectrum(jacobi_eigenvalues(mat, max_sweeps=max_sweeps), 1e-12)
    if method == "lapack":
        return Spectrum(np.linalg.eigvalsh(0.5 * (mat + mat.T)), 1e-12)
    raise DomainError(f"unknown method {method!r}")


def eigenvalues(op: LatticeOperator, tol: float = DEFAULT_TOL) -> Spectrum:
    """Full spectrum: bisection in d=1, dense solver otherwise."""
    if op.box.d == 1:
        return eigenvalues_tridiag(op, tol)
    return eigen_dense(op)


def lowest_eigenvalue(op: LatticeOperator, tol: float = DEFAULT_TOL) -> float:
    if op.box.d == 1:
        return float(eigenvalues_tridiag(op, tol, indices=[0]).eigenvalues[0])
    return eigen_dense(op).min


def highest_eigenvalue(op: LatticeOperator, tol: float = DEFAULT_TOL) -> float:
    if op.box.d == 1:
        return float(eigenvalues_tridiag(op, tol, indices=[op.n - 1]).eigenvalues[0])
    return eigen_dense(op).max


# ---------------------------------------------------------------- ground states


def ground_state(
    op: LatticeOperator, tol: float = DEFAULT_TOL, shift: float = 1e-8, max_iter: int = 500, rtol: float = 1e-13
) -> GroundState:
    """Lowest eigenvalue and its strictly positive normalised eigenvector.

    Inverse iteration from the all-ones vector with shift (E_min - ``shift``).
    """
    energy = lowest_eigenvalue(op, tol)
    n = op.n
    mat = (op.to_sparse() - (energy - shift) * sp.identity(n, format="csr")).tocsc()
    if n <= 400:
        lu = sla.lu_factor(mat.toarray())
        solve = lambda y: sla.lu_solve(lu, y)  # noqa: E731
    else:
        solve = spla.splu(mat).solve
    x = np.ones(n) / np.sqrt(n)
    for _ in range(max_iter):
        y = solve(x)
        y /= np.linalg.norm(y)
        if y.sum() < 0:
            y = -y
        change = np.linalg.norm(y - x)
        x = y
        if change <= rtol:
            break
    if np.any(x <= 0):
        raise ConsistencyError("ground state is not strictly positive; degenerate ground state?")
    residual = float(np.linalg.norm(op.matvec(x) - energy * x))
    return GroundState(energy, SiteFunction(op.box, x), residual)


def rayleigh_quotient(op: LatticeOperator, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ op.matvec(x) / (x @ x))
