import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from aniso_acf.core import AnisotropyMatrix, gamma, mu_weight, tangential_form_density
from aniso_acf.spectral import (
    SphericalDomain,
    cap_rayleigh_anisotropic,
    lambda_arc,
    lambda_arc_isotropic,
    lambda_band,
    lambda_cap_isotropic,
    lambda_halfsphere_bound,
    nu_2d,
    nu_bar,
    nu_upper_nd,
    pair_exponent,
    rayleigh_band,
    rayleigh_band_terms,
    sl_band_eigen,
)

from oracles import arc_lowest_eigenvalues

ISO2 = AnisotropyMatrix.identity(2)
A14 = AnisotropyMatrix((1.0, 4.0))


# ---------------------------------------------------------------- domains


def test_domain_validation():
    with pytest.raises(ValueError):
        SphericalDomain.arc(0.0, 0.0)
    with pytest.raises(ValueError):
        SphericalDomain.band(0.4 * math.pi, 0.2)
    with pytest.raises(ValueError):
        SphericalDomain.band(0.7 * math.pi, math.pi / 2)
    with pytest.raises(ValueError):
        SphericalDomain.cap((1, 0, 0), math.pi)
    with pytest.raises(ValueError):
        SphericalDomain("disc", {})
    cap = SphericalDomain.cap((0, 0, 2), 1.0)
    assert cap.params["axis"] == (0.0, 0.0, 1.0)


# ---------------------------------------------------------------- arcs


@pytest.mark.parametrize("half_width, expected, tol", [(math.pi / 2, 1.0, 1e-4), (math.pi / 4, 4.0, 1e-3)])
def test_isotropic_arc(half_width, expected, tol):
    res = lambda_arc(ISO2, SphericalDomain.arc(0.3, half_width), 512)
    assert res.lam == pytest.approx(expected, abs=tol)
    assert res.residual < 1e-8
    assert res.eigenfunction[0] == res.eigenfunction[-1] == 0.0
    assert np.all(res.eigenfunction[1:-1] > 0)


def test_isotropic_arc_random_lengths(rng):
    for length in rng.uniform(0.1, 2 * math.pi - 0.1, 20):
        lam = lambda_arc(ISO2, SphericalDomain.arc(rng.uniform(0, 6), 0.5 * length), 1024).lam
        # second-order error pi^2 / (12 n^2) relative
        assert lam == pytest.approx(lambda_arc_isotropic(length), rel=1e-5)


def test_anisotropic_arc_against_refined_oracle():
    res = lambda_arc(A14, SphericalDomain.arc(0.0, math.pi / 2), 1024)
    ref = arc_lowest_eigenvalues([-math.pi / 2], [math.pi], 4.0, n=4096)[0]
    assert res.lam == pytest.approx(ref, abs=1e-3)
    assert res.residual < 1e-8


def test_arc_second_order_convergence():
    arc = SphericalDomain.arc(1.0, 1.2)
    lams = [lambda_arc(A14, arc, n).lam for n in (128, 256, 512)]
    ratio = (lams[0] - lams[1]) / (lams[1] - lams[2])
    assert ratio == pytest.approx(4.0, rel=0.05)


def test_arc_reduction_matches_tangential_form():
    # Rayleigh quotient of f(theta) through the 1D coefficients and through
    # the pointwise tangential form of its 0-homogeneous extension
    a2 = 3.0
    A = AnisotropyMatrix((1.0, a2))
    start, length = 0.4, 2.2
    t = np.linspace(start, start + length, 20001)
    f = np.sin(math.pi * (t - start) / length) * (1 + 0.3 * np.cos(t))
    df = np.gradient(f, t)
    x = np.stack([np.cos(t), np.sin(t)], axis=-1)
    tangent = np.stack([-np.sin(t), np.cos(t)], axis=-1)
    mu = np.cos(t) ** 2 + a2 * np.sin(t) ** 2
    one_d = np.trapezoid(a2 / mu * df**2, t)
    pointwise = np.trapezoid(tangential_form_density(A, df[:, None] * tangent, x), t)
    assert one_d == pytest.approx(pointwise, rel=1e-10)
    assert_allclose(mu, mu_weight(A, x), rtol=1e-14)


def test_arc_errors():
    with pytest.raises(ValueError):
        lambda_arc(A14, SphericalDomain.arc(0.0, 1.0), 32)
    with pytest.raises(ValueError):
        lambda_arc(AnisotropyMatrix.identity(3), SphericalDomain.arc(0.0, 1.0))
    assert lambda_arc_isotropic(0.0) == math.inf


def test_arc_domain_monotonicity():
    lams = [lambda_arc(A14, SphericalDomain.arc(0.7, hw), 512).lam for hw in (0.5, 0.8, 1.2, 1.9, 2.6)]
    assert np.all(np.diff(lams) < 0)


# ---------------------------------------------------------------- bands


def test_rayleigh_band_constants():
    first, second, value = rayleigh_band_terms(1.0, 0.5)
    assert first == pytest.approx(0.5 * (4 / 3 - 4 / math.pi**2), abs=1e-9)
    assert value == pytest.approx(1.47, abs=0.05)
    assert rayleigh_band(1.0, 0.5) == value
    with pytest.raises(ValueError):
        rayleigh_band(1.2, 0.5)


def test_band_eigen_below_two():
    res = sl_band_eigen(0.999, 0.51, 4096)
    assert res.lam < 2.0
    assert res.lam <= rayleigh_band(0.999, 0.51) + 1e-6
    assert res.residual < 1e-8
    # symmetric problem, even eigenfunction
    assert_allclose(res.eigenfunction, res.eigenfunction[::-1], atol=1e-10)


def test_band_potential_lower_bound():
    assert sl_band_eigen(0.5, 2.0, 2048).lam >= 4.0


def test_band_richardson_stable():
    lam = {n: sl_band_eigen(0.9, 1.0, n).lam for n in (512, 1024, 2048)}
    r1 = (4 * lam[1024] - lam[512]) / 3
    r2 = (4 * lam[2048] - lam[1024]) / 3
    assert abs(r1 - r2) < 1e-5


def test_band_rejects_bad_rho():
    with pytest.raises(ValueError):
        sl_band_eigen(1.0, 1.0)
    with pytest.raises(ValueError):
        sl_band_eigen(0.5, 1.0, 64)


def test_band_monotone_in_parameters():
    rhos = np.linspace(0.3, 0.95, 5)
    ms = np.linspace(0.4, 2.0, 5)
    table = np.array([[sl_band_eigen(r, m, 512).lam for m in ms] for r in rhos])
    assert np.all(np.diff(table, axis=1) > 0)
    assert np.all(np.diff(table, axis=0) < 0)


def test_wide_band_has_degree_below_one():
    res = lambda_band(SphericalDomain.band(0.999 * math.pi, 0.499 * math.pi), 4096)
    assert res.lam < 2.0
    assert gamma(res.lam, 3) < 1.0


def test_thin_band_blows_up():
    lams = [lambda_band(SphericalDomain.band(math.pi / 2 + 0.01, b), 1024).lam for b in (0.4, 0.2, 0.1, 0.05)]
    assert lams[-1] > 10
    assert np.all(np.diff(lams) > 0)


def test_band_domain_monotonicity():
    lams = [lambda_band(SphericalDomain.band(a, 0.8), 1024).lam for a in (1.7, 2.0, 2.4, 2.9)]
    assert np.all(np.diff(lams) < 0)


# ---------------------------------------------------------------- caps and half spheres


def test_hemisphere_cap():
    assert lambda_cap_isotropic(math.pi / 2).lam == pytest.approx(2.0, abs=1e-4)


def test_halfsphere_bound_isotropic():
    assert lambda_halfsphere_bound(AnisotropyMatrix.identity(3)) == pytest.approx(2.0, abs=1e-6)
    assert lambda_halfsphere_bound(ISO2) == pytest.approx(1.0, abs=1e-6)


def test_halfsphere_bound_decreasing():
    vals = [lambda_halfsphere_bound(AnisotropyMatrix((1.0, a))) for a in (1.0, 2.0, 4.0, 8.0)]
    assert vals[2] < 1.0 - 1e-3
    assert np.all(np.diff(vals) < 0)
    assert lambda_halfsphere_bound(AnisotropyMatrix((1.0, 1.0, 4.0))) < 2.0 - 1e-3


def test_cap_rayleigh_at_half_sphere():
    A = AnisotropyMatrix((1.0, 2.0, 5.0))
    assert cap_rayleigh_anisotropic(A, math.pi / 2) == pytest.approx(lambda_halfsphere_bound(A), rel=1e-8)


# ---------------------------------------------------------------- exponents


def test_nu_isotropic_plane():
    res = nu_2d(ISO2)
    assert res.nu == pytest.approx(2.0, abs=5e-3)
    assert res.domain_u.length == pytest.approx(math.pi, abs=0.05)


def test_nu_anisotropic_plane():
    res = nu_2d(A14)
    assert 0 < res.nu < 2.0 - 1e-3
    assert res.nu == pytest.approx(math.sqrt(res.lambda_u) + math.sqrt(res.lambda_v))
    assert res.domain_u.length + res.domain_v.length == pytest.approx(2 * math.pi)


def test_nu_pair_order_invariance(rng):
    for _ in range(3):
        m1 = rng.normal(size=(2, 2))
        m2 = rng.normal(size=(2, 2))
        A1 = m1 @ m1.T + 0.3 * np.eye(2)
        A2 = m2 @ m2.T + 0.3 * np.eye(2)
        assert pair_exponent(A1, A2, search=24, n=512) == pytest.approx(pair_exponent(A2, A1, search=24, n=512), abs=2e-3)


def test_nu_three_dims():
    iso = nu_upper_nd(AnisotropyMatrix.identity(3), cap_search=False)
    assert iso.nu == pytest.approx(2.0, abs=1e-9)
    assert iso.certified
    res = nu_upper_nd(AnisotropyMatrix((1.0, 1.0, 4.0)))
    assert res.extra["certified_nu"] < 2.0
    assert res.nu <= res.extra["certified_nu"] + 1e-9
    assert res.extra["cap_nu"] >= res.nu - 1e-12


def test_nu_bar_examples():
    assert nu_bar([np.eye(2), np.eye(2)], search=24, n=512) == pytest.approx(2.0, abs=5e-3)
    single = nu_2d(A14, search=24, n=512).nu
    assert nu_bar([np.eye(2), np.diag([1.0, 4.0])], search=24, n=512) == pytest.approx(single, abs=1e-12)
    family = [np.eye(2), np.diag([1.0, 4.0]), np.diag([1.0, 9.0])]
    best = nu_bar(family, search=24, n=512)
    pairwise = [pair_exponent(family[i], family[j], search=24, n=512) for i, j in ((0, 1), (0, 2), (1, 2))]
    assert best == pytest.approx(min(pairwise), abs=1e-12)
    with pytest.raises(ValueError):
        nu_bar([np.eye(2)])
