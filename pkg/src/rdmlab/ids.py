"""Monte Carlo integrated density of states for the Bernoulli displacement model.

Sample i uses its own generator ``np.random.default_rng([seed, i])`` so the
result does not depend on how samples are split into chunks or workers.
Counts are accumulated as integers, which keeps reductions exact.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
from scipy import stats

from .bdm import bdm_potential
from .errors import DomainError, PreconditionError, RangeError
from .floquet import band_edges_closed_form
from .lattice import BoundaryCondition
from .spectra import cyclic_counts, tridiag_counts

CHUNK = 256
GRID_TOL = 1e-12


def sample_omegas(p: float, L: int, start: int, stop: int, seed: int) -> np.ndarray:
    """0/1 configurations for samples start..stop-1; P(omega_k = 0) = p."""
    out = np.empty((stop - start, L), dtype=np.int64)
    for row, i in enumerate(range(start, stop)):
        u = np.random.default_rng([seed, i]).random(L)
        out[row] = u >= p
    return out


def _diag_with_bc(V: np.ndarray, bc: BoundaryCondition) -> np.ndarray:
    diag = V.copy()
    if bc is BoundaryCondition.DIRICHLET:
        diag[..., 0] += 1.0
        diag[..., -1] += 1.0
    elif bc is BoundaryCondition.NEUMANN:
        diag[..., 0] -= 1.0
        diag[..., -1] -= 1.0
    return diag


def count_batch(omegas: np.ndarray, lam: float, energies: np.ndarray, bc: BoundaryCondition) -> np.ndarray:
    """#{eigenvalues <= E} of h^bc on [1, 2L] for each configuration and energy."""
    V = bdm_potential(omegas, lam)
    n = V.shape[-1]
    off = -np.ones(n - 1)
    if bc is BoundaryCondition.PERIODIC:
        if n < 3:
            raise DomainError("periodic counting needs at least three sites")
        return cyclic_counts(V, off, -1.0, energies)
    if bc is BoundaryCondition.TRUNCATION or bc in (BoundaryCondition.DIRICHLET, BoundaryCondition.NEUMANN):
        return tridiag_counts(_diag_with_bc(V, bc), off, energies)
    raise DomainError(f"unsupported boundary condition {bc}")


@dataclass(frozen=True)
class IdsCurve:
    lam: float
    p: float
    L: int
    samples: int
    bc: str
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray

    def at(self, E: float) -> tuple[float, float]:
        i = _grid_index(self.grid, E)
        return float(self.values[i]), float(self.stderr[i])

    def monotone_defect(self) -> float:
        """Largest decrease along the grid measured in units of 2 * stderr."""
        drop = self.values[:-1] - self.values[1:]
        scale = 2.0 * np.maximum(self.stderr[:-1], self.stderr[1:])
        bad = drop > scale + 1e-15
        return float(np.max(np.where(bad, drop - scale, 0.0), initial=0.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("energy,ids,stderr\n")
        for e, v, s in zip(self.grid, self.values, self.stderr):
            buf.write(f"{e:.17g},{v:.17g},{s:.17g}\n")
        return buf.getvalue()


def _grid_index(grid: np.ndarray, E: float, tol: float = GRID_TOL) -> int:
    i = int(np.argmin(np.abs(grid - E)))
    if abs(grid[i] - E) > tol:
        raise DomainError(f"energy {E} is not on the grid")
    return i


def _chunks(samples: int, chunk: int):
    return [(s, min(s + chunk, samples)) for s in range(0, samples, chunk)]


def estimate_ids(
    lam: float,
    p: float,
    L: int,
    samples: int,
    grid,
    seed: int = 0,
    bc: BoundaryCondition | str = BoundaryCondition.DIRICHLET,
    workers: int = 1,
    chunk: int = CHUNK,
) -> IdsCurve:
    """Mean of #{eigenvalues <= E} / (2L) over sampled configurations."""
    bc = BoundaryCondition.parse(bc)
    grid = np.asarray(grid, dtype=float)
    if L < 2 or samples < 1:
        raise DomainError("need L >= 2 and samples >= 1")
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise DomainError("grid must be a sorted 1D array")
    if not 0 <= p <= 1:
        raise DomainError("p must lie in [0, 1]")

    def work(span):
        om = sample_omegas(p, L, span[0], span[1], seed)
        c = count_batch(om, lam, grid, bc)
        return c.sum(axis=0), (c * c).sum(axis=0)

    spans = _chunks(samples, chunk)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, spans))
    else:
        parts = [work(s) for s in spans]
    s1 = sum(p_[0] for p_ in parts)
    s2 = sum(p_[1] for p_ in parts)
    n = 2 * L
    mean = s1 / (samples * n)
    if samples > 1:
        var = (s2 - s1 * s1 / samples) / (samples - 1) / (n * n)
        err = np.sqrt(np.maximum(var, 0.0) / samples)
    else:
        err = np.zeros_like(mean)
    return IdsCurve(float(lam), float(p), int(L), int(samples), bc.value, grid, mean, err)


def symmetric_grid(lam: float, half_width: float, n: int) -> np.ndarray:
    """Grid of 2n+1 points symmetric about lam/2 (exact mirror pairs)."""
    c = lam / 2.0
    t = np.linspace(0.0, half_width, n + 1)[1:]
    return np.concatenate([c - t[::-1], [c], c + t])


def check_symmetry(curve: IdsCurve) -> float:
    """max over grid pairs of |N(E) - (1 - N(lam - E))|.

    Pairs are (E_- + t, E_+ - t); since E_- + E_+ = lam they are mirror
    images about lam/2.
    """
    if curve.p != 0.5:
        raise PreconditionError("the IDS symmetry needs p = 1/2 (the flip map must preserve the measure)")
    g = curve.grid
    mirror = curve.lam - g
    j = np.searchsorted(g, mirror)
    j = np.clip(j, 0, g.size - 1)
    k = np.where(np.abs(g[np.maximum(j - 1, 0)] - mirror) < np.abs(g[j] - mirror), np.maximum(j - 1, 0), j)
    if np.max(np.abs(g[k] - mirror)) > 1e-9:
        raise PreconditionError("grid is not symmetric about lambda/2")
    return float(np.max(np.abs(curve.values - (1.0 - curve.values[k]))))


# ---------------------------------------------------------------- DOS


@dataclass(frozen=True)
class DosHistogram:
    edges: np.ndarray
    density: np.ndarray

    def area(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))

    def support_intervals(self, threshold: float = 0.0) -> list[tuple[float, float]]:
        """Maximal runs of bins with density above ``threshold``."""
        on = self.density > threshold
        runs = []
        i = 0
        while i < on.size:
            if on[i]:
                j = i
                while j + 1 < on.size and on[j + 1]:
                    j += 1
                runs.append((float(self.edges[i]), float(self.edges[j + 1])))
                i = j + 1
            else:
                i += 1
        return runs

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bin_lo,bin_hi,density\n")
        for lo, hi, v in zip(self.edges[:-1], self.edges[1:], self.density):
            buf.write(f"{lo:.17g},{hi:.17g},{v:.17g}\n")
        return buf.getvalue()


def sample_eigenvalues(omegas: np.ndarray, lam: float, bc: BoundaryCondition) -> np.ndarray:
    V = bdm_potential(omegas, lam)
    out = []
    for v in V:
        if bc is BoundaryCondition.PERIODIC:
            n = v.size
            a = np.diag(v) - np.eye(n, k=1) - np.eye(n, k=-1)
            a[0, -1] -= 1.0
            a[-1, 0] -= 1.0
            out.append(np.linalg.eigvalsh(a))
        else:
            out.append(sla.eigvalsh_tridiagonal(_diag_with_bc(v, bc), -np.ones(v.size - 1)))
    return np.concatenate(out)


def dos_histogram(
    lam: float,
    p: float,
    L: int,
    samples: int,
    bins: int = 200,
    seed: int = 0,
    bc: BoundaryCondition | str = BoundaryCondition.DIRICHLET,
    energy_range: tuple[float, float] | None = None,
) -> DosHistogram:
    """Histogram (area 1) of pooled eigenvalues of sampled restrictions to [1, 2L]."""
    if bins < 10:
        raise DomainError("need at least 10 bins")
    bc = BoundaryCondition.parse(bc)
    ev = np.concatenate(
        [sample_eigenvalues(sample_omegas(p, L, a, b, seed), lam, bc) for a, b in _chunks(samples, CHUNK)]
    )
    if energy_range is None:
        em, _, _, ep = band_edges_closed_form(lam)
        energy_range = (min(em, ev.min()) - 0.05, max(ep, ev.max()) + 0.05)
    density, edges = np.histogram(ev, bins=bins, range=energy_range, density=True)
    return DosHistogram(edges, density)


# ---------------------------------------------------------------- edge fit


@dataclass(frozen=True)
class FitResult:
    edge: float
    side: str
    C: float
    eps_lo: float
    eps_hi: float
    product_min: float
    product_max: float
    median: float
    points: int
    passed: bool

    def to_json(self) -> str:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return json.dumps(d, sort_keys=True)


def edge_grid(E0: float, side: str, eps_lo: float = 1e-3, eps_hi: float = 1e-1, n: int = 12) -> np.ndarray:
    """E0 together with E0 +- eps on a logarithmic eps grid."""
    eps = np.geomspace(eps_lo, eps_hi, n)
    sgn = 1.0 if side == "above" else -1.0
    return np.sort(np.concatenate([[E0], E0 + sgn * eps]))


def edge_products(grid, values, E0: float, side: str, eps_window=(1e-3, 1e-1)):
    """(eps, |N(E0 +- eps) - N(E0)| log^2 eps) on the grid points inside the window."""
    if side not in ("above", "below"):
        raise DomainError("side must be 'above' or 'below'")
    lo, hi = eps_window
    if not 0 < lo < hi <= 0.1:
        raise DomainError("eps window must lie in (0, 0.1]")
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    i0 = _grid_index(grid, E0, 1e-9)
    n0 = values[i0]
    eps = grid - E0 if side == "above" else E0 - grid
    use = (eps >= lo * (1 - 1e-9)) & (eps <= hi * (1 + 1e-9))
    if np.count_nonzero(use) < 5:
        raise DomainError("fewer than 5 grid points inside the eps window")
    e = eps[use]
    prod = np.abs(values[use] - n0) * np.log(e) ** 2
    return e, prod


def fit_products(E0: float, side: str, eps: np.ndarray, prod: np.ndarray) -> FitResult:
    """Constant fit of the products and the factor-3 boundedness diagnostic."""
    C = float(np.mean(prod))
    med = float(np.median(prod))
    ok = bool(med > 0 and np.all(prod >= med / 3.0) and np.all(prod <= 3.0 * med))
    return FitResult(
        float(E0), side, C, float(eps.min()), float(eps.max()), float(prod.min()), float(prod.max()), med, int(eps.size), ok
    )


def edge_singularity_fit(curve: IdsCurve, E0: float, side: str, eps_window=(1e-3, 1e-1)) -> FitResult:
    eps, prod = edge_products(curve.grid, curve.values, E0, side, eps_window)
    return fit_products(E0, side, eps, prod)


# ---------------------------------------------------------------- test function


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # keep pytest from collecting it

    lam: float
    omega: np.ndarray
    r: float
    alpha: np.ndarray
    partial_sums: np.ndarray
    values: np.ndarray
    walk: np.ndarray

    @property
    def L(self) -> int:
        return self.omega.size

    @property
    def peak(self) -> int:
        """Maximum of the walk whose growth controls the peak of Psi."""
        return int(self.walk.max())


def cell_ratio(lam: float) -> float:
    """phi_1(2) for the Neumann two-site cell with lam on site 2, phi_1(1) = 1."""
    return float(np.sqrt(1.0 + lam * lam / 4.0) - lam / 2.0)


def build_test_function(omega, lam: float) -> TestFunction:
    """Concatenated cell ground states: Psi(2k-1) = r^S_{k-1}, Psi(2k) = r^S_k.

    alpha_k = +1 when omega_k = 1 and -1 when omega_k = 0; S_k are its partial
    sums.  For r < 1 the walk controlling the peak is read from right to left
    with increments -alpha, so the peak of Psi corresponds to its maximum.
    """
    if lam == 0:
        raise DomainError("lambda must be nonzero")
    w = np.asarray(omega)
    if w.ndim != 1 or not np.all((w == 0) | (w == 1)):
        raise DomainError("omega must be a 0/1 vector")
    w = w.astype(np.int64)
    r = cell_ratio(lam)
    alpha = 2 * w - 1
    S = np.concatenate([[0], np.cumsum(alpha)])
    if np.max(np.abs(S)) * abs(np.log(r)) > 600.0:
        raise RangeError("window too long for this lambda: Psi would overflow")
    vals = np.empty(2 * w.size)
    vals[0::2] = r ** S[:-1].astype(float)
    vals[1::2] = r ** S[1:].astype(float)
    if r < 1:
        walk = np.concatenate([[0], np.cumsum(-alpha[::-1])])
    else:
        walk = S.copy()
    return TestFunction(float(lam), w, r, alpha, S, vals, walk)


# ---------------------------------------------------------------- random walk


@dataclass
class WalkReport:
    L: int
    threshold: int
    trials: int
    p_joint: float
    p_cond: float
    p_tail: float
    se_joint: float
    se_cond: float
    se_tail: float
    gaussian_ref: float
    exhaustive: bool


def _walk_events(steps: np.ndarray, a: int):
    S = np.cumsum(steps, axis=1)
    Y = np.maximum(S.max(axis=1), 0)
    final = S[:, -1]
    return (Y >= a) & (final <= 0), final <= 0, final >= 2 * a


def walk_statistics(L: int, trials: int = 100_000, seed: int = 0, exhaustive: bool = False) -> WalkReport:
    """Reflection-principle statistics for a simple symmetric walk of L steps.

    With a = ceil(sqrt L) and Y the running maximum, reports
    P(Y >= a, S_L <= 0), P(Y >= a | S_L <= 0) and P(S_L >= 2a).
    """
    if L < 4:
        raise DomainError("need L >= 4")
    a = math.isqrt(L - 1) + 1 if L > 0 else 0
    gauss = float(stats.norm.sf(2.0))
    if exhaustive:
        if L > 24:
            raise DomainError("exhaustive enumeration is limited to L <= 24")
        codes = np.arange(2**L, dtype=np.int64)
        steps = 2 * ((codes[:, None] >> np.arange(L)) & 1) - 1
        joint, low, tail = _walk_events(steps, a)
        n = steps.shape[0]
        pj, pl, pt = joint.sum() / n, low.sum() / n, tail.sum() / n
        return WalkReport(L, a, n, float(pj), float(pj / pl), float(pt), 0.0, 0.0, 0.0, gauss, True)
    if trials < 1000:
        raise DomainError("need at least 1000 trials")
    rng = np.random.default_rng(seed)
    joint_n = low_n = tail_n = 0
    done = 0
    while done < trials:
        m = min(20_000, trials - done)
        steps = 2 * rng.integers(0, 2, size=(m, L), dtype=np.int8).astype(np.int32) - 1
        j, lo, t = _walk_events(steps, a)
        joint_n += int(j.sum())
        low_n += int(lo.sum())
        tail_n += int(t.sum())
        done += m
    pj, pl, pt = joint_n / trials, low_n / trials, tail_n / trials
    pc = joint_n / low_n if low_n else float("nan")
    se = lambda x, n: math.sqrt(x * (1 - x) / n)  # noqa: E731
    return WalkReport(L, a, trials, pj, pc, pt, se(pj, trials), se(pc, max(low_n, 1)), se(pt, trials), gauss, False)


def exact_tail(L: int) -> float:
    """P(S_L >= 2 ceil(sqrt L)) from the binomial law of the number of up-steps."""
    a = math.isqrt(L - 1) + 1
    need = math.ceil((L + 2 * a) / 2)
    return float(stats.binom.sf(need - 1, L, 0.5))


# ---------------------------------------------------------------- a priori bound


@dataclass
class AprioriReport:
    fraction: float
    ids: float
    ids_stderr: float
    bound_respected: bool


def apriori_bound_probe(lam: float, E: float, L: int, trials: int, seed: int = 0) -> AprioriReport:
    """Compare N(E) with P(E_1(h^D) < E) / (2L), both estimated by sampling."""
    em = band_edges_closed_form(lam)[0]
    if E < em:
        raise DomainError("E must not lie below E_-(lambda)")
    hits = 0
    for a, b in _chunks(trials, CHUNK):
        om = sample_omegas(0.5, L, a, b, seed)
        V = _diag_with_bc(bdm_potential(om, lam), BoundaryCondition.DIRICHLET)
        # E_1 < E  iff  at least one eigenvalue below E; count at E minus a hair
        c = tridiag_counts(V, -np.ones(V.shape[-1] - 1), np.array([np.nextafter(E, -np.inf)]))
        hits += int(np.count_nonzero(c[:, 0] > 0))
    frac = hits / trials
    curve = estimate_ids(lam, 0.5, L, trials, [E], seed=seed + 1)
    n, s = float(curve.values[0]), float(curve.stderr[0])
    return AprioriReport(frac, n, s, bool(n >= frac / (2 * L) - 3 * s))
