"""Random displacement model: geometry, single-site potentials, configurations.

The lattice is tiled by cells Lambda_k = Lambda + (k - 1) * M, k in Z^d, with
Lambda = prod_i [1, M_i].  A configuration assigns each cell a displacement
omega_k in Delta = prod_i [0, M_i - b_i]; the single-site potential q (given
on B = prod_i [1, b_i]) is then placed at offset omega_k inside the cell.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError, PreconditionError, ResourceError
from .floquet import BandStructure, bands_from_discriminant, merge_intervals
from .lattice import (
    DEFAULT_VOLUME_CAP,
    BoundaryCondition,
    Box,
    SiteFunction,
    build_operator,
    edge_count_array,
    reflect_extension,
)
from .spectra import ground_state, highest_eigenvalue, lowest_eigenvalue

TIE_TOL = 1e-9
ENUMERATION_CAP = 10**6


# ---------------------------------------------------------------- geometry


@dataclass(frozen=True)
class Geometry:
    M: tuple[int, ...]
    b: tuple[int, ...]

    def __post_init__(self):
        M = tuple(int(x) for x in np.atleast_1d(self.M))
        b = tuple(int(x) for x in np.atleast_1d(self.b))
        if len(M) != len(b) or not M:
            raise DomainError("M and b must have the same positive length")
        if any(x < 1 for x in b) or any(bi > mi for bi, mi in zip(b, M)):
            raise DomainError(f"need 1 <= b_i <= M_i, got M={M} b={b}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)

    @classmethod
    def bdm(cls) -> "Geometry":
        return cls((2,), (1,))

    @property
    def d(self) -> int:
        return len(self.M)

    @property
    def a_min(self) -> tuple[int, ...]:
        return tuple(m - b for m, b in zip(self.M, self.b))

    @property
    def r(self) -> tuple[int, ...]:
        """Centre indices: least integers >= (M_i - b_i) / 2."""
        return tuple(-(-(m - b) // 2) for m, b in zip(self.M, self.b))

    @property
    def delta_shape(self) -> tuple[int, ...]:
        return tuple(a + 1 for a in self.a_min)

    def displacements(self) -> Iterator[tuple[int, ...]]:
        """All points of Delta in lexicographic order."""
        return itertools.product(*(range(n) for n in self.delta_shape))

    def corners(self) -> list[tuple[int, ...]]:
        return sorted(set(itertools.product(*((0, a) for a in self.a_min))))

    def is_corner(self, a: Sequence[int]) -> bool:
        return all(x in (0, m) for x, m in zip(a, self.a_min))

    def in_delta(self, a: Sequence[int]) -> bool:
        return len(a) == self.d and all(0 <= x <= m for x, m in zip(a, self.a_min))

    def cell_box(self) -> Box:
        return Box.from_sizes(self.M)


@dataclass(frozen=True)
class SingleSite:
    geometry: Geometry
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != math.prod(self.geometry.b):
            raise DomainError(f"single-site values must have shape {self.geometry.b}")
        vals = vals.reshape(self.geometry.b)
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def bdm(cls, lam: float) -> "SingleSite":
        return cls(Geometry.bdm(), np.array([lam]))

    def scaled(self, c: float) -> "SingleSite":
        return SingleSite(self.geometry, c * self.values)

    def is_sign_definite(self) -> bool:
        v = self.values
        return bool(np.any(v != 0) and (np.all(v >= 0) or np.all(v <= 0)))

    def placed(self, a: Sequence[int], scale: float = 1.0) -> SiteFunction:
        """q_a on the cell Lambda: q shifted by the displacement a."""
        g = self.geometry
        if not g.in_delta(a):
            raise DomainError(f"displacement {tuple(a)} outside Delta")
        out = np.zeros(g.M)
        sl = tuple(slice(x, x + bi) for x, bi in zip(a, g.b))
        out[sl] = scale * self.values
        return SiteFunction(g.cell_box(), out.reshape(-1))


def check_h1(q: SingleSite) -> bool:
    """Exact reflection symmetry of q in every axis of B."""
    v = q.values
    return all(np.array_equal(v, np.flip(v, axis=k)) for k in range(v.ndim))


def _require_h1(q: SingleSite):
    if not check_h1(q):
        raise PreconditionError("single-site potential is not reflection symmetric in every axis")


# ---------------------------------------------------------------- configurations


@dataclass(frozen=True)
class Configuration:
    """Displacements omega_k for cells k.

    ``kind="periodic"``: ``table`` has shape (*K, d) and omega_k = table[k mod K].
    ``kind="window"``: ``table`` has shape (*N, d) and covers the cell indices
    ``origin`` .. ``origin + N - 1``.
    """

    geometry: Geometry
    kind: str
    table: np.ndarray
    origin: tuple[int, ...] = field(default=())

    def __post_init__(self):
        g = self.geometry
        t = np.asarray(self.table, dtype=np.int64)
        if g.d == 1 and t.ndim == 1:
            t = t[:, None]
        if t.ndim != g.d + 1 or t.shape[-1] != g.d:
            raise DomainError(f"configuration table must have shape (*K, {g.d})")
        if np.any(t < 0) or np.any(t > np.asarray(g.a_min)):
            raise DomainError("configuration entries must lie in Delta")
        if self.kind not in ("periodic", "window"):
            raise DomainError(f"unknown configuration kind {self.kind!r}")
        origin = tuple(self.origin) if self.origin else (1,) * g.d
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def periodic(cls, geometry: Geometry, table) -> "Configuration":
        return cls(geometry, "periodic", table)

    @classmethod
    def window(cls, geometry: Geometry, table, origin: Sequence[int] | None = None) -> "Configuration":
        return cls(geometry, "window", table, tuple(origin) if origin is not None else ())

    @property
    def period(self) -> tuple[int, ...]:
        return self.table.shape[:-1]

    def value(self, k: Sequence[int]) -> tuple[int, ...]:
        k = tuple(int(x) for x in np.atleast_1d(k))
        if self.kind == "periodic":
            idx = tuple(x % K for x, K in zip(k, self.period))
        else:
            idx = tuple(x - o for x, o in zip(k, self.origin))
            if any(i < 0 or i >= n for i, n in zip(idx, self.period)):
                raise DomainError(f"cell {k} outside the configuration window")
        return tuple(int(x) for x in self.table[idx])

    def entries_1d(self) -> np.ndarray:
        """Displacements of a one-dimensional configuration as a flat array."""
        if self.geometry.d != 1:
            raise DomainError("only defined in one dimension")
        return self.table[:, 0].copy()

    def counts_1d(self) -> tuple[int, int]:
        """(n0, n1): numbers of period entries at the two corners of Delta."""
        e = self.entries_1d()
        return int(np.sum(e == 0)), int(np.sum(e == self.geometry.a_min[0]))

    def flipped(self) -> "Configuration":
        """Corner flip omega_k -> (M - b) - omega_k."""
        return Configuration(self.geometry, self.kind, np.asarray(self.geometry.a_min) - self.table, self.origin)


def build_omega_star(geometry: Geometry) -> Configuration:
    """Period-2 configuration: 0 in even cells, M - b in odd cells, per axis."""
    d = geometry.d
    table = np.zeros((2,) * d + (d,), dtype=np.int64)
    for k in itertools.product((0, 1), repeat=d):
        table[k] = [geometry.a_min[i] if k[i] else 0 for i in range(d)]
    return Configuration.periodic(geometry, table)


def build_omega_constant(geometry: Geometry, a: Sequence[int]) -> Configuration:
    table = np.asarray(a, dtype=np.int64).reshape((1,) * geometry.d + (geometry.d,))
    return Configuration.periodic(geometry, table)


def assemble_potential(config: Configuration, window: Box, q: SingleSite, scale: float = 1.0) -> SiteFunction:
    """V_omega restricted to ``window``, which must be a union of whole cells."""
    g = config.geometry
    if window.d != g.d:
        raise DomainError("window dimension does not match the geometry")
    first, ncells = [], []
    for lo, n, m in zip(window.lower, window.shape, g.M):
        if (lo - 1) % m or n % m:
            raise DomainError("window is not aligned with the cells")
        first.append((lo - 1) // m + 1)
        ncells.append(n // m)
    out = np.zeros(window.shape)
    for rel in itertools.product(*(range(n) for n in ncells)):
        k = tuple(f + r for f, r in zip(first, rel))
        a = config.value(k)
        sl = tuple(slice(r * m + x, r * m + x + bi) for r, m, x, bi in zip(rel, g.M, a, g.b))
        out[sl] += scale * q.values
    return SiteFunction(window, out.reshape(-1))


def period_cell(config: Configuration) -> Box:
    if config.kind != "periodic":
        raise DomainError("configuration is not periodic")
    return Box.from_sizes([K * m for K, m in zip(config.period, config.geometry.M)])


def spectral_bottom_periodic(
    config: Configuration, q: SingleSite, sign: int = 1, scale: float = 1.0, volume_cap: int = DEFAULT_VOLUME_CAP
) -> float:
    """inf of the spectrum of h_0 + sign * V_omega for periodic omega.

    Equal to the lowest eigenvalue of the periodic operator on one period cell.
    """
    box = period_cell(config)
    if box.volume > volume_cap:
        raise ResourceError(f"period cell volume {box.volume} exceeds cap {volume_cap}")
    pot = assemble_potential(config, box, q, sign * scale)
    return lowest_eigenvalue(build_operator(box, BoundaryCondition.PERIODIC, pot, volume_cap))


def spectral_top_periodic(
    config: Configuration, q: SingleSite, sign: int = 1, scale: float = 1.0, volume_cap: int = DEFAULT_VOLUME_CAP
) -> float:
    box = period_cell(config)
    pot = assemble_potential(config, box, q, sign * scale)
    return highest_eigenvalue(build_operator(box, BoundaryCondition.PERIODIC, pot, volume_cap))


# ---------------------------------------------------------------- distributions


@dataclass(frozen=True)
class Distribution:
    geometry: Geometry
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(self.geometry.delta_shape)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be nonnegative and sum to 1")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def bdm(cls, p: float) -> "Distribution":
        if not 0 <= p <= 1:
            raise DomainError(f"p must lie in [0, 1], got {p}")
        return cls(Geometry.bdm(), np.array([p, 1.0 - p]))

    def support(self) -> list[tuple[int, ...]]:
        return [a for a in self.geometry.displacements() if self.weights[a] > 0]

    def check_h2(self) -> bool:
        """Strictly positive weight on every corner of Delta."""
        return all(self.weights[c] > 0 for c in self.geometry.corners())


# ---------------------------------------------------------------- energy maps


@dataclass(frozen=True)
class EnergyMap:
    geometry: Geometry
    sign: int
    table: np.ndarray
    flipped: np.ndarray | None = None

    @property
    def e_min(self) -> float:
        """Lower edge of the almost sure spectrum: E_0 at the corner a_min."""
        return float(self.table[self.geometry.a_min])

    @property
    def e_max(self) -> float | None:
        """Upper edge, obtained from the flipped-sign map by the spectral flip."""
        if self.flipped is None:
            return None
        return float(-self.flipped[self.geometry.a_min])

    def reflection_defect(self) -> float:
        """Largest deviation from reflection symmetry in any axis."""
        t = self.table
        return max(float(np.max(np.abs(t - np.flip(t, axis=k)))) for k in range(t.ndim))

    def to_csv(self) -> str:
        buf = io.StringIO()
        d = self.geometry.d
        buf.write(",".join([f"a_{i + 1}" for i in range(d)] + ["E0"]) + "\n")
        for a in self.geometry.displacements():
            buf.write(",".join([str(x) for x in a] + [f"{self.table[a]:.17g}"]) + "\n")
        return buf.getvalue()


def ground_energy(q: SingleSite, a: Sequence[int], sign: int = 1) -> float:
    """E_0(a): lowest eigenvalue of the Neumann operator on the cell with sign * q_a."""
    g = q.geometry
    op = build_operator(g.cell_box(), BoundaryCondition.NEUMANN, q.placed(a, sign))
    return lowest_eigenvalue(op)


def ground_energy_map(q: SingleSite, sign: int = 1, with_flipped: bool = True) -> EnergyMap:
    _require_h1(q)
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    g = q.geometry
    table = np.empty(g.delta_shape)
    flipped = np.empty(g.delta_shape) if with_flipped else None
    for a in g.displacements():
        table[a] = ground_energy(q, a, sign)
        if with_flipped:
            flipped[a] = ground_energy(q, a, -sign)
    return EnergyMap(g, sign, table, flipped)


@dataclass
class BubbleReport:
    monotone: bool
    margin: float
    violations: list = field(default_factory=list)
    energy_map: EnergyMap | None = None


def _check_monotonicity_hypotheses(q: SingleSite, emap: EnergyMap):
    g = q.geometry
    if q.is_sign_definite():
        return
    if g.d == 1:
        if np.all(np.abs(emap.table + 2.0) <= 1e-12):
            raise PreconditionError(
                "in one dimension a single-site potential that is not sign definite needs E0(a) != -2 for some a"
            )
        return
    raise PreconditionError("in dimension d >= 2 the single-site potential must be nonzero and sign definite")


def verify_bubbles(q: SingleSite, sign: int = 1) -> BubbleReport:
    """Check that E_0 strictly decreases from the centre index r_i to M_i - b_i in every axis."""
    emap = ground_energy_map(q, sign, with_flipped=False)
    _check_monotonicity_hypotheses(q.scaled(sign), emap)
    g = q.geometry
    t = emap.table
    margin = math.inf
    violations = []
    for axis in range(g.d):
        lo, hi = g.r[axis], g.a_min[axis]
        for a in g.displacements():
            if not lo <= a[axis] < hi:
                continue
            nxt = list(a)
            nxt[axis] += 1
            step = float(t[a] - t[tuple(nxt)])
            margin = min(margin, step)
            if step <= 0:
                violations.append({"axis": axis + 1, "from": a, "to": tuple(nxt), "margin": step})
    return BubbleReport(not violations, margin, violations, emap)


# ---------------------------------------------------------------- minimizers


@dataclass
class MinimizerReport:
    L: int
    e_min: float
    minimum: float
    minimizing: list
    predicted: list
    predicate_holds: bool
    all_corners: bool


def classify_minimizers_1d(
    geometry: Geometry, q: SingleSite, L: int, scale: float = 1.0, cap: int = ENUMERATION_CAP
) -> MinimizerReport:
    """Enumerate all L-periodic configurations and find those reaching E_min.

    The predicted minimizers are the configurations that use only the two
    corners of Delta, each exactly L/2 times (so L must be even).
    """
    if geometry.d != 1:
        raise DomainError("minimizer classification is one-dimensional")
    if geometry.a_min[0] == 0:
        raise DomainError("Delta is a single point; need M > b")
    if L < 1:
        raise DomainError("L must be positive")
    qs = q.scaled(scale)
    emap = ground_energy_map(qs, 1, with_flipped=False)
    if np.all(np.abs(emap.table + 2.0) <= 1e-12):
        raise PreconditionError("E0(a) = -2 for every displacement; need E0(a) != -2 for some a")
    n = geometry.delta_shape[0]
    if n**L > cap:
        raise ResourceError(f"{n}^{L} configurations exceed the enumeration cap {cap}")
    e_min = emap.e_min
    top = geometry.a_min[0]
    bottoms = {}
    for omega in itertools.product(range(n), repeat=L):
        cfg = Configuration.periodic(geometry, list(omega))
        bottoms[omega] = spectral_bottom_periodic(cfg, qs)
    minimum = min(bottoms.values())
    found = sorted(w for w, e in bottoms.items() if e <= e_min + TIE_TOL)
    predicted = sorted(
        w
        for w in bottoms
        if L % 2 == 0 and all(x in (0, top) for x in w) and w.count(0) == L // 2 and w.count(top) == L // 2
    )
    all_corners = all(all(x in (0, top) for x in w) for w in found)
    return MinimizerReport(L, e_min, minimum, found, predicted, found == predicted, all_corners)


# ---------------------------------------------------------------- almost sure spectrum


def _necklaces(symbols: Sequence[int], T: int) -> Iterator[tuple[int, ...]]:
    """Words of length T up to rotation (lexicographically least representative)."""
    for w in itertools.product(symbols, repeat=T):
        if all(w <= w[i:] + w[:i] for i in range(1, T)):
            yield w


def potential_1d(config_entries: Sequence[int], q: SingleSite, scale: float = 1.0) -> np.ndarray:
    """One period of V_omega for a 1D periodic configuration."""
    g = q.geometry
    cfg = Configuration.periodic(g, list(config_entries))
    return assemble_potential(cfg, period_cell(cfg), q, scale).values.copy()


def approx_almost_sure_spectrum(
    mu: Distribution,
    q: SingleSite,
    scale: float = 1.0,
    max_period: int = 4,
    energy_grid=None,
    cap: int = ENUMERATION_CAP,
) -> BandStructure:
    """Union of the Floquet spectra of all periodic configurations of period <= max_period.

    Only displacements in the support of mu are used.  With ``energy_grid``
    the union is sampled on the grid and returned as runs of grid points.
    """
    if not mu.check_h2():
        raise PreconditionError("the displacement distribution must give positive weight to every corner of Delta")
    g = mu.geometry
    if g.d != 1:
        raise DomainError("the periodic union is computed with one-dimensional Floquet theory only")
    symbols = [a[0] for a in mu.support()]
    total = sum(len(symbols) ** T for T in range(1, max_period + 1))
    if total > cap:
        raise ResourceError(f"{total} configurations exceed the enumeration cap {cap}")
    pieces = []
    for T in range(1, max_period + 1):
        for w in _necklaces(symbols, T):
            V = potential_1d(w, q, scale)
            src = "omega=" + "".join(map(str, w))
            for band in bands_from_discriminant(V).bands:
                pieces.append((band.lower, band.upper, src, ""))
    exact = merge_intervals(pieces)
    if energy_grid is None:
        return exact
    grid = np.sort(np.asarray(energy_grid, dtype=float))
    step = float(np.max(np.diff(grid))) if grid.size > 1 else 0.0
    inside = exact.contains(grid, tol=step / 2)
    runs = []
    start = None
    for i, flag in enumerate(inside):
        if flag and start is None:
            start = i
        if (not flag or i == grid.size - 1) and start is not None:
            end = i if flag else i - 1
            runs.append((grid[start], grid[end], "grid", ""))
            start = None
    return merge_intervals(runs, tol=step * 1.5)


# ---------------------------------------------------------------- ground-state witness


def omega_star_witness(q: SingleSite, scale: float = 1.0, periods: int = 3) -> float:
    """Interior residual of the reflected corner ground state on a window of omega*.

    The Neumann ground state of the cell with q at the corner a_min is
    reflected across the upper face in every axis and tiled periodically; on
    a window of ``periods`` period cells per axis it must solve
    (h_0 + V_omega*) psi = E_0(a_min) psi at every site away from the window
    boundary.
    """
    g = q.geometry
    qs = q.scaled(scale)
    _require_h1(qs)
    gs = ground_state(build_operator(g.cell_box(), BoundaryCondition.NEUMANN, qs.placed(g.a_min)))
    u = gs.vector
    for axis in range(1, g.d + 1):
        u = reflect_extension(u, axis)
    tiled = np.tile(u.grid(), (periods,) * g.d)
    window = Box.from_sizes(tiled.shape)
    # omega* has value M - b in odd cells, which is where the corner state sits
    pot = assemble_potential(build_omega_star(g), window, qs)
    op = build_operator(window, BoundaryCondition.TRUNCATION, pot)
    psi = tiled.reshape(-1)
    res = op.matvec(psi) - gs.energy * psi
    interior = edge_count_array(window) == 0
    return float(np.max(np.abs(res[interior])) / np.max(np.abs(psi)))
