"""Boxes in Z^d and finite-volume lattice operators.

The kinetic term is the negative adjacency matrix of the nearest-neighbour
graph: zero diagonal, -1 between sites at 1-norm distance one, so that the
free spectrum on Z^d is [-2d, 2d].  Boundary conditions are realised as
diagonal corrections by the edge counting function (Neumann subtracts it,
Dirichlet adds it) or by wrapping each axis into a cycle (Periodic).

Sites are ordered lexicographically with the last coordinate running fastest.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResourceError

DEFAULT_VOLUME_CAP = 20000


class BoundaryCondition(enum.Enum):
    TRUNCATION = "truncation"
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, value: "BoundaryCondition | str") -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown boundary condition {value!r}") from None


@dataclass(frozen=True)
class Box:
    """Axis-aligned integer box prod_i [lower_i, upper_i]."""

    lower: tuple[int, ...]
    upper: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(int(x) for x in self.lower)
        hi = tuple(int(x) for x in self.upper)
        if len(lo) != len(hi) or not lo:
            raise DomainError("lower and upper must be non-empty and of equal length")
        if any(a > b for a, b in zip(lo, hi)):
            raise DomainError(f"empty box: lower={lo} upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], lower: Sequence[int] | None = None) -> "Box":
        """Box prod_i [lower_i, lower_i + sizes_i - 1]; lower defaults to all ones."""
        sizes = tuple(int(s) for s in sizes)
        if lower is None:
            lower = (1,) * len(sizes)
        return cls(tuple(lower), tuple(a + s - 1 for a, s in zip(lower, sizes)))

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lower, self.upper))

    @property
    def volume(self) -> int:
        return int(np.prod(self.shape))

    def contains(self, site: Sequence[int]) -> bool:
        return len(site) == self.d and all(a <= x <= b for x, a, b in zip(site, self.lower, self.upper))

    def index(self, site: Sequence[int]) -> int:
        if not self.contains(site):
            raise DomainError(f"site {tuple(site)} not in box {self.lower}..{self.upper}")
        offset = [x - a for x, a in zip(site, self.lower)]
        return int(np.ravel_multi_index(offset, self.shape))

    def site(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.volume:
            raise DomainError(f"index {index} out of range for volume {self.volume}")
        offset = np.unravel_index(index, self.shape)
        return tuple(int(o) + a for o, a in zip(offset, self.lower))

    def sites(self) -> Iterator[tuple[int, ...]]:
        for i in range(self.volume):
            yield self.site(i)

    def coordinates(self) -> np.ndarray:
        """All sites as an integer array of shape (volume, d), in index order."""
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids + np.asarray(self.lower)


@dataclass(frozen=True)
class SiteFunction:
    box: Box
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != self.box.volume:
            raise DomainError(f"{vals.size} values for a box of volume {self.box.volume}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, box: Box) -> "SiteFunction":
        return cls(box, np.zeros(box.volume))

    def grid(self) -> np.ndarray:
        """Values reshaped to the box shape."""
        return self.values.reshape(self.box.shape)

    def __getitem__(self, site: Sequence[int]) -> float:
        return float(self.values[self.box.index(site)])


def edge_count(box: Box, site: Sequence[int]) -> int:
    """Number of nearest neighbours of ``site`` lying outside ``box``."""
    if not box.contains(site):
        raise DomainError(f"site {tuple(site)} not in box")
    return sum(int(x == a) + int(x == b) for x, a, b in zip(site, box.lower, box.upper))


def edge_count_array(box: Box) -> np.ndarray:
    coords = box.coordinates()
    return ((coords == np.asarray(box.lower)).astype(int) + (coords == np.asarray(box.upper)).astype(int)).sum(axis=1)


@dataclass(frozen=True, eq=False)
class LatticeOperator:
    """Real symmetric operator h_0^bc + V on a box.

    ``diag`` holds all on-site terms (potential, boundary correction and, for
    periodic axes of extent one, the self-loop).  ``adjacency`` holds the
    off-diagonal part as a symmetric CSR matrix.
    """

    box: Box
    bc: BoundaryCondition
    diag: np.ndarray
    adjacency: sp.csr_matrix = field(repr=False)

    @property
    def n(self) -> int:
        return self.box.volume

    @cached_property
    def is_tridiagonal(self) -> bool:
        if self.box.d != 1:
            return False
        return self.bc is not BoundaryCondition.PERIODIC or self.n <= 2

    @cached_property
    def offdiag(self) -> np.ndarray:
        """Sub-diagonal (i+1, i) entries; only meaningful in d=1."""
        if self.box.d != 1:
            raise DomainError("offdiag is only defined for d=1 operators")
        if self.n < 2:
            return np.zeros(0)
        return np.asarray(self.adjacency.diagonal(-1)).copy()

    @cached_property
    def corner(self) -> float:
        """Wrap entry (n-1, 0) of a 1D periodic operator with n >= 3, else 0."""
        if self.box.d != 1 or self.is_tridiagonal:
            return 0.0
        return float(self.adjacency[self.n - 1, 0])

    def to_sparse(self) -> sp.csr_matrix:
        return (self.adjacency + sp.diags(self.diag)).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.adjacency @ x + self.diag * x

    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        rowsum = np.asarray(abs(self.adjacency).sum(axis=1)).ravel()
        return float(np.max(np.abs(self.diag) + rowsum))

    def gershgorin(self) -> tuple[float, float]:
        rowsum = np.asarray(abs(self.adjacency).sum(axis=1)).ravel()
        return float(np.min(self.diag - rowsum)), float(np.max(self.diag + rowsum))

    def dump_coo(self, stream=None) -> str:
        """Coordinate-list text: ``i j value`` sorted by (i, j), 17 significant digits.

        Diagonal entries are always written, off-diagonal entries only when nonzero.
        """
        coo = self.adjacency.tocoo()
        rows = np.concatenate([np.arange(self.n), coo.row])
        cols = np.concatenate([np.arange(self.n), coo.col])
        vals = np.concatenate([self.diag, coo.data])
        keep = (rows == cols) | (vals != 0)
        order = np.lexsort((cols[keep], rows[keep]))
        buf = io.StringIO() if stream is None else stream
        for i, j, v in zip(rows[keep][order], cols[keep][order], vals[keep][order]):
            buf.write(f"{int(i)} {int(j)} {float(v):.17g}\n")
        return buf.getvalue() if stream is None else ""


def _kinetic(box: Box, periodic: bool) -> tuple[np.ndarray, sp.csr_matrix]:
    """Negative adjacency of the box graph; returns (self-loop diagonal, off-diagonal part)."""
    n = box.volume
    shape = box.shape
    idx = np.arange(n).reshape(shape)
    rows, cols = [], []
    for axis, extent in enumerate(shape):
        if periodic:
            partner = np.roll(idx, -1, axis=axis)
            src, dst = idx.ravel(), partner.ravel()
        else:
            sl_src = [slice(None)] * len(shape)
            sl_dst = [slice(None)] * len(shape)
            sl_src[axis] = slice(0, extent - 1)
            sl_dst[axis] = slice(1, extent)
            src, dst = idx[tuple(sl_src)].ravel(), idx[tuple(sl_dst)].ravel()
        rows += [src, dst]
        cols += [dst, src]
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=int)
    mat = sp.coo_matrix((-np.ones(r.size), (r, c)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    loops = np.asarray(mat.diagonal()).copy()
    mat.setdiag(0)
    mat.eliminate_zeros()
    return loops, mat


def build_operator(
    box: Box,
    bc: BoundaryCondition | str,
    potential: SiteFunction | np.ndarray | None = None,
    volume_cap: int = DEFAULT_VOLUME_CAP,
) -> LatticeOperator:
    """Assemble h_{0,box}^bc + potential."""
    bc = BoundaryCondition.parse(bc)
    if box.volume > volume_cap:
        raise ResourceError(f"box volume {box.volume} exceeds cap {volume_cap}")
    if potential is None:
        pot = np.zeros(box.volume)
    elif isinstance(potential, SiteFunction):
        if potential.box != box:
            raise DomainError("potential is defined on a different box")
        pot = potential.values
    else:
        pot = SiteFunction(box, potential).values
    loops, adj = _kinetic(box, periodic=bc is BoundaryCondition.PERIODIC)
    diag = pot + loops
    if bc is BoundaryCondition.NEUMANN:
        diag = diag - edge_count_array(box)
    elif bc is BoundaryCondition.DIRICHLET:
        diag = diag + edge_count_array(box)
    diag = np.asarray(diag, dtype=float)
    diag.setflags(write=False)
    return LatticeOperator(box, bc, diag, adj)


def apply(op: LatticeOperator, u: SiteFunction) -> SiteFunction:
    if u.box != op.box:
        raise DomainError("function and operator live on different boxes")
    return SiteFunction(op.box, op.matvec(u.values))


def reflect_extension(u: SiteFunction, axis: int) -> SiteFunction:
    """Even reflection of ``u`` about the upper face in ``axis`` (1-based).

    The result lives on the box doubled in that axis and restricts to ``u``
    on the original box.
    """
    box = u.box
    if not 1 <= axis <= box.d:
        raise DomainError(f"axis {axis} outside 1..{box.d}")
    k = axis - 1
    g = u.grid()
    doubled = np.concatenate([g, np.flip(g, axis=k)], axis=k)
    upper = list(box.upper)
    upper[k] += box.shape[k]
    return SiteFunction(Box(box.lower, tuple(upper)), doubled.reshape(-1))


def restrict(u: SiteFunction, box: Box) -> SiteFunction:
    """Restriction of ``u`` to a sub-box."""
    if not (box.d == u.box.d and u.box.contains(box.lower) and u.box.contains(box.upper)):
        raise DomainError("restriction target is not a sub-box")
    sl = tuple(slice(a - la, b - la + 1) for a, b, la in zip(box.lower, box.upper, u.box.lower))
    return SiteFunction(box, u.grid()[sl].reshape(-1))


def check_operator(op: LatticeOperator, atol: float = 0.0) -> list[str]:
    """Return a list of violated structural invariants (empty when all hold)."""
    problems = []
    adj = op.adjacency
    if adj.nnz and abs(adj - adj.T).max() > atol:
        problems.append("adjacency not symmetric")
    coo = adj.tocoo()
    coords = op.box.coordinates()
    shape = np.asarray(op.box.shape)
    for i, j, v in zip(coo.row, coo.col, coo.data):
        delta = np.abs(coords[i] - coords[j])
        if op.bc is BoundaryCondition.PERIODIC:
            delta = np.minimum(delta, shape - delta)
        if delta.sum() != 1:
            problems.append(f"entry ({i},{j}) joins non-neighbours")
        # extent-2 periodic axes double the bond
        expected = -1.0
        if op.bc is BoundaryCondition.PERIODIC:
            axis = int(np.argmax(delta))
            if shape[axis] == 2:
                expected = -2.0
        if v != expected:
            problems.append(f"entry ({i},{j}) = {v}, expected {expected}")
    return problems
