"""Transfer matrices, the Floquet discriminant and band extraction in d = 1.

For a T-periodic potential V the one-step transfer matrix at site n is
``[[V(n) - E, -1], [1, 0]]``; the discriminant D(E) is the trace of their
product (n = T down to 1) and the spectrum of the periodic operator is
{E : |D(E)| <= 2}.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError

SCAN_STEP = 1e-3
REFINE_STEP = 1e-5
# critical values of D this close to +-2 trigger the fine scan
NEAR_TANGENT = 1e-2
MERGE_TOL = 1e-9


def transfer_matrix(v: float, E: float) -> np.ndarray:
    return np.array([[v - E, -1.0], [1.0, 0.0]])


def monodromy(V, E: float) -> np.ndarray:
    """Ordered product A(T) ... A(1) of the one-step transfer matrices."""
    V = np.atleast_1d(np.asarray(V, dtype=float))
    m = np.eye(2)
    for v in V:
        m = transfer_matrix(v, E) @ m
    return m


def _trace_products(V, energies):
    """D(E) and D'(E) for an array of energies via the product recursion."""
    V = np.atleast_1d(np.asarray(V, dtype=float))
    if V.size < 1:
        raise DomainError("period must be at least 1")
    E = np.asarray(energies, dtype=float)
    # entries of the running 2x2 product and of its E-derivative
    a, b, c, d = np.ones_like(E), np.zeros_like(E), np.zeros_like(E), np.ones_like(E)
    da, db, dc, dd = (np.zeros_like(E) for _ in range(4))
    for v in V:
        x = v - E
        # new = [[x, -1], [1, 0]] @ old ; derivative adds [[-1, 0], [0, 0]] @ old
        na, nb = x * a - c, x * b - d
        nda, ndb = x * da - dc - a, x * db - dd - b
        a, b, c, d = na, nb, a, b
        da, db, dc, dd = nda, ndb, da, db
    return a + d, da + dd


def discriminant(V, E):
    """Trace of the monodromy matrix; accepts scalar or array ``E``."""
    D, _ = _trace_products(V, E)
    return D if np.ndim(D) else float(D)


def discriminant_derivative(V, E):
    _, dD = _trace_products(V, E)
    return dD if np.ndim(dD) else float(dD)


def bdm_discriminant_poly(lam: float, E):
    """Closed-form discriminant of the 4-periodic potential (0, lam, lam, 0)."""
    E = np.asarray(E, dtype=float)
    out = E**4 - 2 * lam * E**3 + (lam**2 - 4) * E**2 + 4 * lam * E + 2 - lam**2
    return out if out.ndim else float(out)


def band_edges_closed_form(lam: float) -> tuple[float, float, float, float]:
    """Outer band edges and central-gap edges (E_-, G_-, G_+, E_+)."""
    root = np.sqrt(4.0 + lam * lam)
    outer = np.sqrt(2.0 + lam * lam / 4.0 + root)
    inner = np.sqrt(max(2.0 + lam * lam / 4.0 - root, 0.0))
    h = lam / 2.0
    return (float(h - outer), float(h - inner), float(h + inner), float(h + outer))


@dataclass(frozen=True)
class Band:
    lower: float
    upper: float
    source: str = ""
    flag: str = ""

    def __post_init__(self):
        if self.lower > self.upper:
            raise DomainError(f"band with lower {self.lower} > upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class BandStructure:
    bands: tuple[Band, ...]
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        bands = tuple(sorted(self.bands, key=lambda b: b.lower))
        for left, right in zip(bands, bands[1:]):
            if right.lower - left.upper <= MERGE_TOL:
                raise DomainError("bands must be disjoint and separated by more than the merge tolerance")
        object.__setattr__(self, "bands", bands)

    def __len__(self):
        return len(self.bands)

    def intervals(self) -> np.ndarray:
        return np.array([[b.lower, b.upper] for b in self.bands]).reshape(-1, 2)

    def gaps(self) -> list[tuple[float, float]]:
        return [(l.upper, r.lower) for l, r in zip(self.bands, self.bands[1:])]

    def contains(self, E, tol: float = 0.0):
        """Whether each energy lies in some band widened by ``tol``."""
        E = np.asarray(E, dtype=float)
        iv = self.intervals()
        inside = ((E[..., None] >= iv[:, 0] - tol) & (E[..., None] <= iv[:, 1] + tol)).any(axis=-1)
        return inside if inside.ndim else bool(inside)

    def covers(self, lo: float, hi: float, tol: float = 0.0) -> bool:
        """Whether [lo, hi] is inside the union of bands (up to ``tol``)."""
        return any(b.lower - tol <= lo and hi <= b.upper + tol for b in self.bands)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("band_index,lower,upper,source,flag\n")
        for i, b in enumerate(self.bands):
            buf.write(f"{i},{b.lower:.17g},{b.upper:.17g},{b.source},{b.flag}\n")
        return buf.getvalue()


def merge_intervals(intervals, tol: float = MERGE_TOL, source: str = "") -> BandStructure:
    """Union of closed intervals; pieces closer than ``tol`` are joined and flagged."""
    items = sorted((float(lo), float(hi), src, flag) for lo, hi, src, flag in intervals)
    merged: list[list] = []
    for lo, hi, src, flag in items:
        if merged and lo <= merged[-1][1] + tol:
            cur = merged[-1]
            if lo > cur[1]:
                cur[3] = "touching"
            cur[1] = max(cur[1], hi)
            if src and src not in cur[2].split("+"):
                cur[2] = f"{cur[2]}+{src}" if cur[2] else src
            if flag and flag not in cur[3]:
                cur[3] = f"{cur[3]};{flag}" if cur[3] else flag
        else:
            merged.append([lo, hi, src or source, flag])
    return BandStructure(tuple(Band(*m) for m in merged))


def _bisect_root(f, lo: float, hi: float, flo: float, tol: float) -> float:
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _sign_change_roots(f, grid: np.ndarray, tol: float) -> list[float]:
    vals = f(grid)
    roots = [float(x) for x, v in zip(grid, vals) if v == 0.0]
    idx = np.nonzero(vals[:-1] * vals[1:] < 0)[0]
    for i in idx:
        roots.append(_bisect_root(f, grid[i], grid[i + 1], vals[i], tol))
    return roots


def bands_from_discriminant(
    V,
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-13,
    step: float = SCAN_STEP,
    source: str = "",
) -> BandStructure:
    """Bands {E : |D(E)| <= 2} of the periodic potential ``V``.

    Roots of D = +-2 are located by sign-change scanning plus bisection.  The
    critical points of D (roots of D') are added to the scan grid and
    surrounded by a fine grid when |D| is close to 2 there, so narrow gaps and
    exact tangencies are not stepped over.
    """
    V = np.atleast_1d(np.asarray(V, dtype=float))
    T = V.size
    if bracket is None:
        bracket = (V.min() - 3.0, V.max() + 3.0)
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise DomainError("empty energy bracket")
    n_steps = max(int(np.ceil((hi - lo) / step)), 2)
    grid = np.linspace(lo, hi, n_steps + 1)
    notes = []

    dD = lambda e: discriminant_derivative(V, e)  # noqa: E731
    crit = np.array(sorted(_sign_change_roots(dD, grid, tol)))
    if crit.size != T - 1:
        notes.append(f"found {crit.size} critical points of D, expected {T - 1}; a root may be missed")
    fine = [grid, crit]
    tangent = []
    if crit.size:
        dcrit = np.abs(discriminant(V, crit)) - 2.0
        for x, g in zip(crit, dcrit):
            if abs(g) < NEAR_TANGENT:
                fine.append(np.arange(x - 100 * REFINE_STEP, x + 100 * REFINE_STEP, REFINE_STEP))
            if abs(g) <= MERGE_TOL:
                tangent.append(float(x))
    grid = np.unique(np.clip(np.concatenate(fine), lo, hi))

    roots = []
    for target in (2.0, -2.0):
        g = lambda e, t=target: np.asarray(discriminant(V, e)) - t  # noqa: E731
        roots += _sign_change_roots(g, grid, tol)
    # tangential touches are double roots with no sign change
    pts = np.unique(np.concatenate([[lo, hi], roots, tangent]))

    pieces = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 0:
            continue
        if abs(discriminant(V, 0.5 * (a + b))) <= 2.0:
            pieces.append((a, b, source, ""))
    if not pieces:
        raise DomainError("no band found inside the bracket")
    if abs(discriminant(V, lo)) <= 2.0 or abs(discriminant(V, hi)) <= 2.0:
        notes.append("bracket edge lies inside a band; widen the bracket")
    out = merge_intervals(pieces, source=source)
    bands = list(out.bands)
    for x in tangent:
        for i, b in enumerate(bands):
            if b.lower < x < b.upper and "touching" not in b.flag:
                bands[i] = Band(b.lower, b.upper, b.source, "touching")
    if len(bands) > T:
        notes.append(f"{len(bands)} bands exceed the period {T}")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return BandStructure(tuple(bands), tuple(notes))


def omega_star_potential(lam: float) -> np.ndarray:
    return np.array([0.0, lam, lam, 0.0])


def omega_one_potential(lam: float) -> np.ndarray:
    return np.array([0.0, lam])


def sigma_lambda(lam: float, mode: str = "proved") -> BandStructure:
    """Almost sure spectrum of the Bernoulli displacement model.

    ``proved``: [E_-, E_+] minus the open central gap, valid for |lam| <= 2.
    ``conjecture``: union of the Floquet bands of the two extremal
    configurations; flagged ``conjectural`` when |lam| > 2.
    """
    if mode == "proved":
        if abs(lam) > 2:
            raise PreconditionError(f"closed-form coverage of the side gaps needs |lambda| <= 2, got {lam}")
        em, gm, gp, ep = band_edges_closed_form(lam)
        return merge_intervals([(em, gm, "closed_form", ""), (gp, ep, "closed_form", "")])
    if mode == "conjecture":
        star = bands_from_discriminant(omega_star_potential(lam), source="omega_star")
        one = bands_from_discriminant(omega_one_potential(lam), source="omega_one")
        flag = "conjectural" if abs(lam) > 2 else ""
        pieces = [(b.lower, b.upper, b.source, flag) for b in star.bands + one.bands]
        return merge_intervals(pieces)
    raise DomainError(f"unknown mode {mode!r}")
