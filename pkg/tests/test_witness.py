import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from aniso_acf.errors import HypothesisViolation
from aniso_acf.grid import Grid, SampledField
from aniso_acf.witness import (
    Witness2D,
    cone_disjointness_check,
    normalized_fields,
    normalized_matrix,
    sphere_rayleigh_quotient,
    witness_2d,
    witness_3d,
    witness_csv_rows,
    witness_report,
)


def fd_operator(f, x, coef, eps):
    out = 0.0
    for k, c in enumerate(coef):
        d = np.zeros(len(x))
        d[k] = eps
        out += c * (f(x + d) - 2 * f(x) + f(x - d)) / eps**2
    return out


@pytest.fixture(scope="module")
def wit2():
    return witness_2d()


@pytest.fixture(scope="module")
def wit3():
    return witness_3d()


@pytest.fixture(scope="module")
def report2(wit2):
    return witness_report(wit2)


@pytest.fixture(scope="module")
def report3(wit3):
    return witness_report(wit3, h=1 / 64)


# -- planar pair ---------------------------------------------------------------


def test_planar_degrees(wit2):
    # pi / (2 * 0.45 pi) and pi / (2 * 0.95 pi)
    assert_allclose(wit2.degrees, (10 / 9, 10 / 19), rtol=1e-14)
    assert sum(wit2.degrees) <= 1.64


def test_planar_degree_sum_rejected():
    # phi1 = pi/4 gives alpha1 = 2 alone
    with pytest.raises(HypothesisViolation, match="degree sum"):
        Witness2D(math.pi / 4, 0.05 * math.pi, 1e-4)


@pytest.mark.parametrize("kw", [{"phi1": 0.0}, {"phi2": math.pi / 2}, {"b": 1.0}, {"b": -0.1}])
def test_planar_range_rejected(kw):
    with pytest.raises(HypothesisViolation):
        witness_2d(**kw)


def test_planar_overlap_names_interval():
    with pytest.raises(HypothesisViolation, match="overlap on angles"):
        witness_2d(b=0.02)


def test_planar_overlap_shrinks_with_b():
    margins = [cone_disjointness_check(Witness2D(0.45 * math.pi, 0.05 * math.pi, b)).margin
               for b in (0.5, 0.1, 0.02, 4e-4)]
    assert np.all(np.diff(margins) > 0)
    assert margins[-1] > 0 > margins[-2]


def test_planar_margin_matches_geometry(wit2):
    # gap between the squeezed half-opening and the edge of the v sector
    expected = wit2.phi2 - wit2.u_half_width()
    chk = cone_disjointness_check(wit2, resolution_deg=0.01)
    assert chk.disjoint
    assert abs(chk.margin - expected) <= 2 * chk.resolution


def test_planar_fields_solve_their_equations(wit2):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (4000, 2))
    for f, coef in ((wit2.u, (1 / wit2.b, 1.0)), (wit2.v, (1.0, 1.0))):
        ratios = []
        for p in pts:
            val = f(p)
            if val <= 0:
                continue
            if min(f(p + d) for d in 1e-3 * np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])) <= 0:
                continue
            ratios.append(abs(fd_operator(f, p, coef, 1e-4)) * (p @ p) / val)
        assert len(ratios) > 50
        assert max(ratios) < 0.05


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_planar_homogeneity(wit2, t):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.5, 0.5, (500, 2))
    for f, deg in ((wit2.u, wit2.alpha1), (wit2.v, wit2.alpha2)):
        assert_allclose(f(t * pts), t**deg * f(pts), rtol=1e-12, atol=1e-14)


def test_planar_report(report2, wit2):
    assert_allclose(report2.fitted_degrees, wit2.degrees, rtol=0.02)
    assert report2.max_product == 0.0
    assert report2.subharmonic_ok
    assert report2.disjointness.margin > 0
    assert report2.profile.slope_min >= -0.05 * report2.profile.j.max()


def test_normalized_matrix_sorted(wit2, wit3):
    A, perm = normalized_matrix(wit2)
    assert A.diag == (1.0, 2500.0)
    assert list(perm) == [1, 0]
    A3, perm3 = normalized_matrix(wit3)
    assert_allclose(A3.diag, (1.0, 1e2, 1e4), rtol=1e-12)
    assert list(perm3) == [2, 1, 0]


def test_normalized_fields_permute_axes(wit2):
    grid = Grid.centered(0.5, 1 / 16, 2)
    u, v = normalized_fields(wit2, grid)
    pts = grid.points()
    assert_allclose(u.values, wit2.u(pts[..., ::-1]))
    assert_allclose(v.values, wit2.v(pts[..., ::-1]))


def test_csv_rows(wit2):
    grid = Grid.centered(0.25, 1 / 8, 2)
    rows = witness_csv_rows(wit2, grid)
    assert len(rows) == 25
    assert [r[0] for r in rows] == list(range(25))
    u, v = normalized_fields(wit2, grid)
    assert_allclose([r[3] for r in rows], u.values.reshape(-1))
    assert_allclose([r[4] for r in rows], v.values.reshape(-1))
    assert all(r[3] * r[4] == 0 for r in rows)


def test_report_dict_keys(report2, report3):
    d2 = report2.as_dict()
    assert {"degrees", "degree_sum", "disjoint", "margin", "acf_J", "acf_drift"} <= set(d2)
    assert "sphere_eigenvalue" not in d2
    assert "band_eigenvalue" in report3.as_dict()


# -- band pair on the sphere ---------------------------------------------------


def test_band_degrees(wit3):
    assert wit3.lam < 2
    assert 2 * wit3.mu < 2
    # mu solves mu (mu + 1) = lambda
    assert_allclose(wit3.mu * (wit3.mu + 1), wit3.lam, rtol=1e-12)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_band_homogeneity(wit3, t):
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, (4000, 3))
    for f in (wit3.u, wit3.v):
        base = f(pts)
        keep = base > 1e-3
        assert keep.sum() > 20
        assert_allclose(f(t * pts[keep]), t**wit3.mu * base[keep], rtol=1e-6)


def test_band_fields_harmonic(wit3):
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (20000, 3))
    coefs = ((wit3.u, np.diag(wit3.matrix)), (wit3.v, (1.0, 1.0, 1.0)))
    for f, coef in coefs:
        ratios = []
        for p in pts:
            val = f(p)
            if val > 0.05 * (p @ p) ** (wit3.mu / 2):
                ratios.append(abs(fd_operator(f, p, coef, 1e-3)) * (p @ p) / val)
        assert len(ratios) > 100
        assert np.median(ratios) < 1e-3
        assert np.quantile(ratios, 0.95) < 0.02


def test_band_disjointness_feasible_range():
    for b in (0.5, 0.1):
        with pytest.raises(HypothesisViolation, match="overlap"):
            witness_3d(b=b)
    margins = [cone_disjointness_check(witness_3d(b=b), resolution_deg=1.0).margin for b in (0.02, 0.01)]
    assert margins[0] > 0
    assert margins[1] > margins[0]


@pytest.mark.parametrize("kw", [{"alpha": 0.4 * math.pi}, {"beta": math.pi / 2}, {"b": 0.0}])
def test_band_range_rejected(kw):
    with pytest.raises(HypothesisViolation):
        witness_3d(**kw)


def test_band_eigenvalue_too_large_rejected():
    # a thin band has a large transverse eigenvalue
    with pytest.raises(HypothesisViolation, match="not below 2"):
        witness_3d(beta=0.1 * math.pi)


def test_band_report(report3, wit3):
    assert_allclose(report3.fitted_degrees, wit3.degrees, rtol=0.02)
    assert report3.max_product == 0.0
    assert report3.subharmonic_ok
    assert report3.disjointness.margin > 0
    assert_allclose(report3.sphere_eigenvalue, wit3.lam, rtol=0.02)


def test_sphere_rayleigh_quotient_harmonic_polynomials():
    grid = Grid.centered(0.7, 1 / 64, 3)
    lin = SampledField.from_function(grid, lambda x: x[..., 0] + 0.5 * x[..., 2])
    quad = SampledField.from_function(grid, lambda x: x[..., 0] * x[..., 1])
    # spherical harmonics of degree k have eigenvalue k (k + 1)
    assert_allclose(sphere_rayleigh_quotient(lin, 0.5), 2.0, rtol=1e-3)
    assert_allclose(sphere_rayleigh_quotient(quad, 0.5), 6.0, rtol=1e-2)
