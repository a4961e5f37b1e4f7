import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdmlab.errors import DomainError, PreconditionError
from rdmlab.floquet import (
    Band,
    BandStructure,
    band_edges_closed_form,
    bands_from_discriminant,
    bdm_discriminant_poly,
    discriminant,
    discriminant_derivative,
    merge_intervals,
    monodromy,
    omega_one_potential,
    omega_star_potential,
    sigma_lambda,
    transfer_matrix,
)
from rdmlab.lattice import Box, build_operator
from rdmlab.spectra import eigenvalues

GOLDEN = (1 + np.sqrt(5)) / 2


class TestDiscriminant:
    def test_free_period_four(self):
        assert discriminant([0, 0, 0, 0], 0.0) == 2.0

    def test_bdm_at_zero(self):
        assert discriminant([0, 1, 1, 0], 0.0) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("c,E", [(0.3, 1.7), (-2.0, 0.0), (5.0, -1.0)])
    def test_period_one(self, c, E):
        assert discriminant([c], E) == pytest.approx(c - E, abs=1e-14)

    def test_matches_explicit_product(self):
        V = [0.2, -1.0, 0.7]
        E = 0.4
        assert discriminant(V, E) == pytest.approx(np.trace(monodromy(V, E)), abs=1e-13)
        m = transfer_matrix(V[2], E) @ transfer_matrix(V[1], E) @ transfer_matrix(V[0], E)
        np.testing.assert_allclose(monodromy(V, E), m, atol=1e-14)

    def test_derivative_by_finite_difference(self):
        V = [0.0, 1.3, 1.3, 0.0, 0.5]
        E = np.linspace(-2, 3, 11)
        h = 1e-6
        fd = (discriminant(V, E + h) - discriminant(V, E - h)) / (2 * h)
        np.testing.assert_allclose(discriminant_derivative(V, E), fd, atol=1e-6)

    def test_empty_period(self):
        with pytest.raises(DomainError):
            discriminant([], 0.0)


class TestClosedForms:
    def test_poly_values(self):
        assert bdm_discriminant_poly(0.0, 2.0) == 2.0
        assert bdm_discriminant_poly(1.0, 0.0) == 1.0
        em = band_edges_closed_form(1.0)[0]
        assert abs(bdm_discriminant_poly(1.0, em)) == pytest.approx(2.0, abs=1e-12)

    def test_edges_lambda_one(self):
        edges = band_edges_closed_form(1.0)
        np.testing.assert_allclose(edges, [-GOLDEN, 2 - GOLDEN, GOLDEN - 1, GOLDEN + 1], atol=1e-14)

    def test_edges_free(self):
        np.testing.assert_allclose(band_edges_closed_form(0.0), [-2, 0, 0, 2], atol=1e-15)

    @pytest.mark.parametrize("lam", np.linspace(-4, 4, 17))
    def test_mirror_in_lambda(self, lam):
        a = band_edges_closed_form(lam)
        b = band_edges_closed_form(-lam)
        np.testing.assert_allclose(b, [-a[3], -a[2], -a[1], -a[0]], atol=1e-12)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 3.0])
    def test_edges_are_eigenvalues_on_eight_cells(self, lam):
        V = np.tile(omega_star_potential(lam), 8)
        ev = eigenvalues(build_operator(Box.from_sizes([32]), "periodic", V)).eigenvalues
        for e in band_edges_closed_form(lam):
            assert np.min(np.abs(ev - e)) <= 1e-9

    def test_polynomial_identity_grid(self):
        E = np.linspace(-4, 5, 100)
        for lam in np.linspace(-3, 3, 100):
            diff = discriminant(omega_star_potential(lam), E) - bdm_discriminant_poly(lam, E)
            assert np.max(np.abs(diff)) <= 1e-10


class TestBands:
    def test_free_single_band(self):
        bs = bands_from_discriminant([0.0])
        np.testing.assert_allclose(bs.intervals(), [[-2, 2]], atol=1e-12)

    def test_free_period_four_closes_central_gap(self):
        bs = bands_from_discriminant(omega_star_potential(0.0))
        assert len(bs) == 1
        assert bs.bands[0].flag == "touching"
        np.testing.assert_allclose(bs.intervals(), [[-2, 2]], atol=1e-9)

    def test_bdm_four_bands(self):
        bs = bands_from_discriminant(omega_star_potential(1.0))
        em, gm, gp, ep = band_edges_closed_form(1.0)
        iv = bs.intervals()
        assert len(bs) == 4
        assert abs(iv[0, 0] - em) <= 1e-9 and abs(iv[3, 1] - ep) <= 1e-9
        assert bs.gaps()[1] == pytest.approx((gm, gp), abs=1e-9)

    def test_omega_one_covers_side_gaps(self):
        star = bands_from_discriminant(omega_star_potential(1.0))
        one = bands_from_discriminant(omega_one_potential(1.0))
        assert len(one) == 2
        g = star.gaps()
        assert one.covers(*g[0]) and one.covers(*g[2])

    def test_narrow_gap_not_skipped(self):
        # a gap much thinner than the scan step still shows up
        V = [0.0, 1e-3]
        bs = bands_from_discriminant(V)
        assert len(bs) == 2
        assert 0 < bs.gaps()[0][1] - bs.gaps()[0][0] < 2e-3

    def test_bracket_warning(self):
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            bs = bands_from_discriminant([0.0], bracket=(-1.0, 1.0))
        assert any("bracket" in str(w.message) for w in rec)
        assert "bracket" in " ".join(bs.warnings)

    def test_csv(self):
        text = sigma_lambda(1.0).to_csv().splitlines()
        assert text[0] == "band_index,lower,upper,source,flag"
        assert len(text) == 3

    def test_structure_rejects_overlap(self):
        with pytest.raises(DomainError):
            BandStructure((Band(0, 1), Band(0.5, 2)))

    def test_merge_flags_touching(self):
        bs = merge_intervals([(0, 1, "a", ""), (1 + 1e-12, 2, "b", "")])
        assert len(bs) == 1 and bs.bands[0].flag == "touching"


class TestSigmaLambda:
    def test_proved_lambda_one(self):
        np.testing.assert_allclose(
            sigma_lambda(1.0).intervals(), [[-GOLDEN, 2 - GOLDEN], [GOLDEN - 1, GOLDEN + 1]], atol=1e-12
        )

    def test_proved_needs_small_lambda(self):
        with pytest.raises(PreconditionError):
            sigma_lambda(2.5, "proved")

    def test_free_limit(self):
        assert len(sigma_lambda(0.0)) == 1

    def test_six_bands_at_three(self):
        bs = sigma_lambda(3.0, "conjecture")
        assert len(bs) == 6
        assert all(b.flag == "conjectural" for b in bs.bands)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 1.5, 2.0])
    def test_modes_agree_for_small_lambda(self, lam):
        np.testing.assert_allclose(
            sigma_lambda(lam, "conjecture").intervals(), sigma_lambda(lam, "proved").intervals(), atol=1e-9
        )

    def test_unknown_mode(self):
        with pytest.raises(DomainError):
            sigma_lambda(1.0, "guess")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6), st.floats(-6, 6))
def test_monodromy_unimodular(V, E):
    assert np.linalg.det(monodromy(V, E)) == pytest.approx(1.0, abs=1e-12 * max(1.0, np.abs(monodromy(V, E)).max() ** 2))


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0, 4))
def test_discriminant_even_about_center(lam, x):
    a = bdm_discriminant_poly(lam, lam / 2 + x)
    b = bdm_discriminant_poly(lam, lam / 2 - x)
    assert a == pytest.approx(b, abs=1e-10 * max(1.0, abs(a)))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0), st.integers(1, 8))
def test_finite_cells_inside_bands(lam, m):
    bs = bands_from_discriminant(omega_star_potential(lam))
    V = np.tile(omega_star_potential(lam), m)
    ev = np.linalg.eigvalsh(build_operator(Box.from_sizes([4 * m]), "periodic", V).to_dense())
    assert np.all(bs.contains(ev, tol=1e-9))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0))
def test_central_gap_edges(lam):
    bs = bands_from_discriminant(omega_star_potential(lam))
    _, gm, gp, _ = band_edges_closed_form(lam)
    assert len(bs) == 4
    assert bs.gaps()[1] == pytest.approx((gm, gp), abs=1e-9)
