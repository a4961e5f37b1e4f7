import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdmlab.errors import ConsistencyError, DomainError, NumericError, ResourceError
from rdmlab.lattice import Box, build_operator
from rdmlab.spectra import (
    Spectrum,
    bisect_tridiagonal,
    counts,
    cyclic_counts,
    eigen_dense,
    eigenvalues,
    eigenvalues_tridiag,
    ground_state,
    jacobi_eigenvalues,
    rayleigh_quotient,
    sturm_count,
    tridiag_counts,
)

GOLDEN = (1 + np.sqrt(5)) / 2


def free(n, bc="neumann", pot=None):
    return build_operator(Box.from_sizes([n]), bc, pot)


class TestSturm:
    @pytest.mark.parametrize("E,expected", [(0.0, 2), (-3.0, 0), (2.0, 3)])
    def test_free_neumann_counts(self, E, expected):
        assert sturm_count(free(3), E) == expected

    def test_counts_include_eigenvalue(self):
        # -1 is an eigenvalue of the free Neumann operator on three sites
        assert sturm_count(free(3), -1.0) == 2
        assert sturm_count(free(3), -1.0 - 1e-9) == 1

    def test_batched_shapes(self):
        diag = np.zeros((5, 4))
        c = tridiag_counts(diag, -np.ones(3), np.array([-3.0, 0.5, 3.0]))
        assert c.shape == (5, 3)
        assert np.all(c[:, 0] == 0) and np.all(c[:, 2] == 4)

    def test_cyclic_needs_three_sites(self):
        with pytest.raises(DomainError):
            cyclic_counts(np.zeros(2), [-1.0], -1.0, [0.0])

    def test_cyclic_matches_dense_counts(self):
        rng = np.random.default_rng(3)
        for n in (3, 4, 7, 40, 200):
            v = rng.integers(0, 2, n).astype(float)
            ev = np.linalg.eigvalsh(build_operator(Box.from_sizes([n]), "periodic", v).to_dense())
            E = rng.uniform(-3, 4, 300)
            ref = (ev[None, :] <= E[:, None]).sum(axis=1)
            np.testing.assert_array_equal(cyclic_counts(v, -np.ones(n - 1), -1.0, E), ref)

    def test_counts_need_1d(self):
        with pytest.raises(DomainError):
            counts(build_operator(Box.from_sizes([2, 2]), "neumann"), [0.0])


class TestBisection:
    def test_free_neumann(self):
        np.testing.assert_allclose(eigenvalues_tridiag(free(3), 1e-12).eigenvalues, [-2, -1, 1], atol=1e-12)

    def test_periodic_double_eigenvalue(self):
        ev = eigenvalues_tridiag(free(4, "periodic")).eigenvalues
        assert ev.size == 4
        np.testing.assert_allclose(ev, [-2, 0, 0, 2], atol=1e-12)

    def test_bdm_cell(self):
        lam = 1.0
        ev = eigenvalues_tridiag(free(2, "neumann", [0.0, lam])).eigenvalues
        root = np.sqrt(1 + lam**2 / 4)
        np.testing.assert_allclose(ev, [-1 + lam / 2 - root, -1 + lam / 2 + root], atol=1e-12)
        np.testing.assert_allclose(ev, [-GOLDEN, GOLDEN - 1], atol=1e-12)

    def test_bad_tolerance(self):
        with pytest.raises(DomainError):
            eigenvalues_tridiag(free(3), 0.0)

    def test_iteration_cap(self):
        with pytest.raises(NumericError):
            eigenvalues_tridiag(free(30), 1e-12, max_iter=5)

    def test_subset(self):
        ev = eigenvalues_tridiag(free(10), indices=[0, 9]).eigenvalues
        full = eigenvalues_tridiag(free(10)).eigenvalues
        np.testing.assert_allclose(ev, full[[0, 9]], atol=1e-12)


class TestDense:
    def test_two_by_two(self):
        ev = eigen_dense(np.array([[-1.0, -1.0], [-1.0, 0.0]]), method="jacobi").eigenvalues
        np.testing.assert_allclose(ev, [(-1 - np.sqrt(5)) / 2, (-1 + np.sqrt(5)) / 2], atol=1e-14)

    def test_diagonal_input(self):
        np.testing.assert_array_equal(jacobi_eigenvalues(np.diag([3.0, -1.0, 2.0])), [-1, 2, 3])

    def test_rejects_asymmetric(self):
        with pytest.raises(DomainError):
            jacobi_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_sweep_cap(self):
        a = np.random.default_rng(0).normal(size=(12, 12))
        with pytest.raises(NumericError):
            jacobi_eigenvalues(a + a.T, max_sweeps=1)

    def test_volume_cap(self):
        with pytest.raises(ResourceError):
            eigen_dense(np.eye(5), volume_cap=4)

    def test_jacobi_matches_lapack_2d(self):
        op = build_operator(Box.from_sizes([4, 5]), "periodic", np.random.default_rng(2).normal(size=20))
        np.testing.assert_allclose(
            eigen_dense(op, method="jacobi").eigenvalues, eigen_dense(op, method="lapack").eigenvalues, atol=1e-12
        )

    def test_spectrum_must_be_sorted(self):
        with pytest.raises(ConsistencyError):
            Spectrum(np.array([1.0, 0.0]), 1e-12)


class TestGroundState:
    def test_free_neumann_2d(self):
        gs = ground_state(build_operator(Box.from_sizes([3, 4]), "neumann"))
        assert abs(gs.energy + 4) <= 1e-12
        np.testing.assert_allclose(gs.vector.values, 1 / np.sqrt(12), atol=1e-12)

    def test_bdm_cell_ratio(self):
        gs = ground_state(free(2, "neumann", [1.0, 0.0]))
        assert abs(gs.energy + GOLDEN) <= 1e-12
        v = gs.vector.values
        # the potential sits on site 1, so the vector is larger on site 2
        np.testing.assert_allclose(v / v[0], [1.0, GOLDEN], atol=1e-12)

    def test_reflection_symmetric_potential(self):
        q = np.array([0.0, 0.0, 1.0, 2.0, 1.0, 1.0, 2.0, 1.0, 0.0, 0.0])
        gs = ground_state(free(10, "neumann", q))
        np.testing.assert_allclose(gs.vector.values, gs.vector.values[::-1], atol=1e-10)

    def test_sparse_path(self):
        gs = ground_state(free(600, "neumann", np.random.default_rng(4).uniform(0, 1, 600)))
        assert gs.residual <= 1e-10
        assert np.all(gs.vector.values > 0)


@st.composite
def tridiagonal(draw):
    n = draw(st.integers(2, 40))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    return rng.normal(size=n), rng.normal(size=n - 1)


@settings(max_examples=60, deadline=None)
@given(tridiagonal())
def test_bisection_matches_jacobi(mat):
    diag, off = mat
    a = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    np.testing.assert_allclose(bisect_tridiagonal(diag, off), jacobi_eigenvalues(a), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(tridiagonal(), st.lists(st.floats(-8, 8), min_size=2, max_size=20))
def test_count_monotone_and_bounded(mat, energies):
    diag, off = mat
    E = np.sort(np.asarray(energies))
    c = tridiag_counts(diag, off, E)
    assert np.all(np.diff(c) >= 0)
    radius = np.abs(off).max() * 2
    outer = tridiag_counts(diag, off, np.array([diag.min() - radius - 1, diag.max() + radius + 1]))
    assert list(outer) == [0, diag.size]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.sampled_from(["neumann", "dirichlet", "periodic", "truncation"]), st.integers(0, 2**31))
def test_trace_and_rayleigh(n, bc, seed):
    op = free(n, bc, np.random.default_rng(seed).normal(size=n))
    ev = eigenvalues(op).eigenvalues
    assert abs(ev.sum() - op.diag.sum()) <= 1e-9 * n
    gs = ground_state(op)
    assert abs(rayleigh_quotient(op, gs.vector.values) - gs.energy) <= 1e-10
    assert gs.residual <= 1e-10 * max(1.0, op.norm_bound())
