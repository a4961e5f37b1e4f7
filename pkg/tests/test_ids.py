import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdmlab.bdm import bdm_potential, build_squared_operator, decouple, flip, periodic_operator
from rdmlab.errors import DomainError, PreconditionError, RangeError
from rdmlab.floquet import band_edges_closed_form
from rdmlab.ids import (
    apriori_bound_probe,
    build_test_function,
    cell_ratio,
    check_symmetry,
    count_batch,
    dos_histogram,
    edge_grid,
    edge_products,
    edge_singularity_fit,
    estimate_ids,
    exact_tail,
    fit_products,
    sample_omegas,
    symmetric_grid,
    walk_statistics,
)
from rdmlab.lattice import BoundaryCondition, Box, build_operator
from rdmlab.spectra import rayleigh_quotient

GOLDEN = (1 + np.sqrt(5)) / 2


class TestSampling:
    def test_deterministic_per_index(self):
        a = sample_omegas(0.5, 10, 0, 6, seed=3)
        b = sample_omegas(0.5, 10, 4, 6, seed=3)
        np.testing.assert_array_equal(a[4:], b)

    def test_extreme_p(self):
        assert not np.any(sample_omegas(1.0, 20, 0, 3, 0))
        assert np.all(sample_omegas(0.0, 20, 0, 3, 0))


class TestIds:
    def test_outside_spectrum(self):
        em, _, _, ep = band_edges_closed_form(1.0)
        c = estimate_ids(1.0, 0.5, 20, 50, [em - 0.1, ep + 0.1])
        np.testing.assert_array_equal(c.values, [0.0, 1.0])

    def test_half_at_gap_center_periodic(self):
        # every periodic restriction has exactly L eigenvalues below the gap
        c = estimate_ids(1.0, 0.5, 20, 64, [0.5], bc="periodic")
        assert c.values[0] == 0.5 and c.stderr[0] == 0.0

    def test_half_at_gap_center_dirichlet(self):
        c = estimate_ids(1.0, 0.5, 100, 400, [0.5])
        assert abs(c.values[0] - 0.5) <= 1.0 / 100

    def test_workers_and_chunks_do_not_matter(self):
        grid = np.linspace(-2, 3, 41)
        a = estimate_ids(1.0, 0.5, 30, 300, grid, seed=7)
        b = estimate_ids(1.0, 0.5, 30, 300, grid, seed=7, workers=3, chunk=17)
        assert a.to_csv() == b.to_csv()

    def test_seed_matters(self):
        grid = np.linspace(-1, 0, 5)
        assert estimate_ids(1.0, 0.5, 30, 100, grid, seed=1).to_csv() != estimate_ids(1.0, 0.5, 30, 100, grid, seed=2).to_csv()

    def test_monotone(self):
        c = estimate_ids(1.3, 0.3, 40, 200, np.linspace(-3, 4, 200))
        assert np.all(np.diff(c.values) >= 0)
        assert c.monotone_defect() == 0.0

    def test_gap_flat_periodic(self):
        _, gm, gp, _ = band_edges_closed_form(1.0)
        c = estimate_ids(1.0, 0.5, 25, 100, np.linspace(gm + 1e-6, gp - 1e-6, 9), bc="periodic")
        assert np.ptp(c.values) == 0.0

    def test_csv_header(self):
        assert estimate_ids(1.0, 0.5, 5, 3, [0.0]).to_csv().startswith("energy,ids,stderr\n")

    def test_grid_lookup(self):
        c = estimate_ids(1.0, 0.5, 5, 3, [0.0, 1.0])
        with pytest.raises(DomainError):
            c.at(0.5)

    def test_bad_arguments(self):
        with pytest.raises(DomainError):
            estimate_ids(1.0, 1.5, 5, 3, [0.0])
        with pytest.raises(DomainError):
            estimate_ids(1.0, 0.5, 5, 3, [1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["dirichlet", "neumann", "periodic"]), st.integers(2, 40), st.integers(0, 2**31), st.floats(0.2, 3.0))
def test_counts_match_dense(bc, L, seed, lam):
    om = sample_omegas(0.5, L, 0, 4, seed)
    E = np.linspace(-3, 5, 31)
    got = count_batch(om, lam, E, BoundaryCondition.parse(bc))
    for row, w in zip(got, om):
        op = build_operator(Box.from_sizes([2 * L]), bc, bdm_potential(w, lam))
        ev = np.linalg.eigvalsh(op.to_dense())
        np.testing.assert_array_equal(row, (ev[None, :] <= E[:, None]).sum(axis=1))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31), st.floats(0.2, 3.0), st.floats(-3, 5))
def test_dirichlet_neumann_flip_identity(L, seed, lam, E):
    om = sample_omegas(0.5, L, 0, 3, seed)
    below = count_batch(om, lam, np.array([np.nextafter(E, -np.inf)]), BoundaryCondition.DIRICHLET)[:, 0]
    mirrored = count_batch(1 - om, lam, np.array([lam - E]), BoundaryCondition.NEUMANN)[:, 0]
    np.testing.assert_array_equal(below + mirrored, 2 * L)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 60), st.integers(0, 2**31), st.floats(0.2, 3.0), st.floats(-3, 5))
def test_boundary_conditions_differ_by_finite_rank(L, seed, lam, E):
    om = sample_omegas(0.5, L, 0, 3, seed)
    e = np.array([E])
    d = count_batch(om, lam, e, BoundaryCondition.DIRICHLET)
    for bc in (BoundaryCondition.PERIODIC, BoundaryCondition.NEUMANN):
        assert np.all(np.abs(count_batch(om, lam, e, bc) - d) <= 4)


@pytest.mark.parametrize("L", [50, 100, 200])
def test_boundary_conditions_converge(L):
    grid = np.linspace(-2, 3, 11)
    d = estimate_ids(1.0, 0.5, L, 40, grid, seed=5)
    p = estimate_ids(1.0, 0.5, L, 40, grid, seed=5, bc="periodic")
    assert np.max(np.abs(d.values - p.values)) <= 4.0 / (2 * L)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([0, 1]), min_size=2, max_size=20), st.floats(0.2, 3.0), st.floats(1e-4, 0.3))
def test_gap_neighbourhood_counts_match_squared_operator(omega, lam, eps):
    _, gm, gp, _ = band_edges_closed_form(lam)
    ev = np.linalg.eigvalsh(periodic_operator(omega, lam).to_dense())
    near = np.count_nonzero((ev >= gm - eps) & (ev <= gp + eps))
    half = gp - lam / 2
    eta = (half + eps) ** 2 - half**2
    bound = -np.sqrt(4 + lam * lam)
    sq = decouple(omega, lam).squared_spectrum()
    assert near == np.count_nonzero(sq <= bound + eta * (1 + 1e-12))
    np.testing.assert_allclose(sq, build_squared_operator(omega, lam).eigenvalues(), atol=1e-9)


class TestSymmetry:
    def test_symmetric_curve(self):
        grid = symmetric_grid(1.0, 2.5, 20)
        c = estimate_ids(1.0, 0.5, 40, 400, grid, seed=1)
        assert check_symmetry(c) <= 4 * c.stderr.max() + 2.0 / 80

    def test_needs_half(self):
        c = estimate_ids(1.0, 0.4, 10, 10, symmetric_grid(1.0, 2.0, 5))
        with pytest.raises(PreconditionError):
            check_symmetry(c)

    def test_needs_symmetric_grid(self):
        c = estimate_ids(1.0, 0.5, 10, 10, np.linspace(-2, 2.2, 7))
        with pytest.raises(PreconditionError):
            check_symmetry(c)


class TestDos:
    def test_area(self):
        h = dos_histogram(1.0, 0.5, 20, 50, bins=100)
        assert h.area() == pytest.approx(1.0, abs=1e-12)

    def test_free_support(self):
        h = dos_histogram(0.0, 0.5, 30, 20, bins=80, energy_range=(-2.5, 2.5))
        runs = h.support_intervals()
        lo, hi = runs[0][0], runs[-1][1]
        assert -2.1 <= lo <= -1.9 and 1.9 <= hi <= 2.1

    def test_gap_visible(self):
        h = dos_histogram(1.0, 0.5, 30, 100, bins=150, bc="periodic")
        runs = h.support_intervals()
        assert len(runs) >= 2

    def test_bins(self):
        with pytest.raises(DomainError):
            dos_histogram(1.0, 0.5, 10, 10, bins=5)

    def test_csv(self):
        assert dos_histogram(1.0, 0.5, 5, 5, bins=10).to_csv().splitlines()[0] == "bin_lo,bin_hi,density"


class TestEdgeFit:
    def test_synthetic_lifshitz_tail_passes(self):
        E0 = -1.0
        grid = edge_grid(E0, "above", n=12)
        eps = np.where(grid > E0, grid - E0, 0.5)
        values = np.where(grid > E0, 0.4 / np.log(eps) ** 2, 0.0)
        res = edge_singularity_fit(_Curve(grid, values), E0, "above")
        assert res.passed and res.C == pytest.approx(0.4)

    def test_power_law_control_fails(self):
        E0 = 2.0
        grid = edge_grid(E0, "below", n=12)
        values = np.where(grid < E0, (E0 - grid) ** 1.5, 0.0)
        eps, prod = edge_products(grid, values, E0, "below")
        assert not fit_products(E0, "below", eps, prod).passed

    def test_too_few_points(self):
        grid = edge_grid(0.0, "above", n=4)
        with pytest.raises(DomainError):
            edge_products(grid, np.zeros_like(grid), 0.0, "above")

    def test_window_limits(self):
        grid = edge_grid(0.0, "above")
        with pytest.raises(DomainError):
            edge_products(grid, np.zeros_like(grid), 0.0, "above", (1e-3, 0.5))

    def test_json_key(self):
        grid = edge_grid(0.0, "above")
        eps, prod = edge_products(grid, np.where(grid > 0, 1.0, 0.0), 0.0, "above")
        assert '"pass": ' in fit_products(0.0, "above", eps, prod).to_json()


class _Curve:
    def __init__(self, grid, values):
        self.grid = grid
        self.values = values


class TestTestFunction:
    def test_ratio(self):
        assert cell_ratio(1.0) == pytest.approx(GOLDEN - 1, abs=1e-15)
        assert cell_ratio(1.0) == pytest.approx(0.618, abs=1e-3)

    def test_values(self):
        tf = build_test_function([1, 0, 1], 1.0)
        r = tf.r
        np.testing.assert_allclose(tf.values, [1, r, r, 1, 1, r], rtol=1e-15)
        assert tf.values[0] == 1.0

    def test_continuity_across_cells(self):
        tf = build_test_function(np.random.default_rng(0).integers(0, 2, 30), 1.7)
        np.testing.assert_array_equal(tf.values[1:-1:2], tf.values[2::2])

    def test_cell_is_neumann_ground_state(self):
        lam = 1.0
        e_minus = band_edges_closed_form(lam)[0]
        for cell, omega in (([0.0, lam], 1), ([lam, 0.0], 0)):
            tf = build_test_function([omega], lam)
            op = build_operator(Box.from_sizes([2]), "neumann", cell)
            np.testing.assert_allclose(op.matvec(tf.values), e_minus * tf.values, atol=1e-14)

    def test_walk_direction(self):
        tf = build_test_function([1, 1, 0, 0, 0], 1.0)
        assert tf.r < 1
        np.testing.assert_array_equal(tf.walk, [0, 1, 2, 3, 2, 1])
        assert tf.values.max() == pytest.approx(tf.r ** tf.partial_sums.min())

    def test_overflow(self):
        with pytest.raises(RangeError):
            build_test_function(np.zeros(3000, dtype=int), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from([0, 1]), min_size=1, max_size=40), st.floats(0.1, 3.0))
def test_rayleigh_identity(omega, lam):
    tf = build_test_function(omega, lam)
    psi = tf.values
    op = build_operator(Box.from_sizes([psi.size]), "dirichlet", bdm_potential(omega, lam))
    e_minus = band_edges_closed_form(lam)[0]
    lhs = rayleigh_quotient(op, psi) - e_minus
    rhs = 2 * (psi[0] ** 2 + psi[-1] ** 2) / (psi @ psi)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


class TestWalk:
    def test_exhaustive_small(self):
        rep = walk_statistics(4, exhaustive=True)
        assert rep.threshold == 2 and rep.trials == 16
        assert rep.p_joint == pytest.approx(1 / 16)
        assert rep.p_tail == pytest.approx(1 / 16)
        assert rep.p_cond == pytest.approx(1 / 11)

    @pytest.mark.parametrize("L", [9, 16, 20])
    def test_reflection_principle_exact(self, L):
        rep = walk_statistics(L, exhaustive=True)
        assert rep.p_joint == pytest.approx(rep.p_tail, abs=1e-15)
        assert rep.p_tail == pytest.approx(exact_tail(L), abs=1e-15)

    def test_sampled_close_to_exact(self):
        rep = walk_statistics(100, trials=40_000, seed=1)
        assert abs(rep.p_joint - exact_tail(100)) <= 4 * rep.se_joint + 1e-3

    def test_gaussian_limit(self):
        assert exact_tail(10**6) == pytest.approx(0.02275, abs=1e-4)

    def test_limits(self):
        with pytest.raises(DomainError):
            walk_statistics(30, exhaustive=True)
        with pytest.raises(DomainError):
            walk_statistics(10, trials=10)


class TestApriori:
    def test_bound_respected(self):
        em, gm, _, _ = band_edges_closed_form(1.0)
        for E in (em + 0.05, gm):
            rep = apriori_bound_probe(1.0, E, 20, 400)
            assert rep.bound_respected
            assert 0 <= rep.fraction <= 1

    def test_below_spectrum(self):
        with pytest.raises(DomainError):
            apriori_bound_probe(1.0, -3.0, 10, 10)


def test_flip_reverses_spectrum_about_half_lambda():
    # the periodic operator of the flipped configuration is lam minus a unitary copy
    w = np.array([0, 1, 1, 0, 1, 0])
    a = np.linalg.eigvalsh(periodic_operator(w, 1.4).to_dense())
    b = np.linalg.eigvalsh(periodic_operator(flip(w), 1.4).to_dense())
    np.testing.assert_allclose(np.sort(1.4 - a), b, atol=1e-12)
