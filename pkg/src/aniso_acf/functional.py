"""Weighted Dirichlet integrals, the two-phase product and auxiliary inequality checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import AnisotropyMatrix, gamma, mu_weight, tangential_form_density
from .errors import HypothesisViolation
from .grid import SampledField
from .stencil import assemble_operator

# radii must stay inside the inner 90% of the box
RADIUS_MARGIN = 0.05


@dataclass(frozen=True)
class InteractionSpec:
    """Zero-order coupling ``u^(q+1) g(x, v)`` with ``g(x, t) = sum_j b_j(x) t^p_j``.

    ``coefficients`` entries are positive floats or callables mapping points
    (trailing axis = dim) to positive arrays.
    """

    exponent: float
    coefficients: tuple
    powers: tuple

    def __post_init__(self):
        if self.exponent < 1:
            raise ValueError("interaction exponent must be >= 1")
        if len(self.coefficients) != len(self.powers):
            raise ValueError("coefficients and powers must pair up")
        if any(not p > 0 for p in self.powers):
            raise ValueError("powers must be positive")
        for b in self.coefficients:
            if not callable(b) and not float(b) > 0:
                raise ValueError("constant coefficients must be positive")

    @classmethod
    def zero(cls, exponent: float = 1.0) -> "InteractionSpec":
        return cls(exponent, (), ())

    def coupling(self, x, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast_shapes(np.shape(x)[:-1], t.shape))
        for b, p in zip(self.coefficients, self.powers):
            bx = b(x) if callable(b) else float(b)
            if np.any(np.asarray(bx) <= 0):
                raise ValueError("coefficient samples must be positive")
            out = out + bx * np.maximum(t, 0.0) ** p
        return out


@dataclass
class RadialProfile:
    """Per-radius samples of both integrals and their scaled product."""

    center: np.ndarray
    radii: np.ndarray
    i_left: np.ndarray
    i_right: np.ndarray
    j: np.ndarray
    exponent: float
    slope_min: float

    @property
    def drift(self) -> float:
        """``(max J - min J) / mean J``."""
        m = float(np.mean(self.j))
        return float((np.max(self.j) - np.min(self.j)) / m) if m > 0 else 0.0

    def as_rows(self):
        return [
            {"r": float(r), "i_left": float(a), "i_right": float(b), "j": float(c)}
            for r, a, b, c in zip(self.radii, self.i_left, self.i_right, self.j)
        ]


@dataclass
class MonotonicityReport:
    passed: bool
    tol: float
    worst_index: int
    worst_violation: float
    scale: float

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def default_delta(h: float, r: float) -> float:
    return max(2.0 * h, r / 32.0)


def _check_ball(u: SampledField, x0, r, margin=0.0):
    if not u.grid.ball_inside(x0, r + u.h, margin):
        raise ValueError(f"ball of radius {r} about {list(np.asarray(x0))} leaves the admissible grid region")


def _delta_array(u, radii, delta):
    if delta is None:
        return np.array([default_delta(u.h, r) for r in radii])
    d = np.broadcast_to(np.asarray(delta, dtype=float), np.shape(radii)).copy()
    if u.dim >= 3 and np.any(d < 2 * u.h - 1e-15):
        raise ValueError("delta below 2h leaves the kernel under-resolved")
    return d


def _integrals(A, u, x0, radii, deltas, extra=None, weighted=True):
    return kernels.ball_integrals(u.values, u.grid.origin, u.h, x0, radii, deltas, A.a, extra=extra, weighted=weighted)


def weighted_dirichlet(A: AnisotropyMatrix, u: SampledField, x0, r: float, delta: float | None = None) -> float:
    """``int_{B_r(x0)} <A grad u, grad u> Gamma_A(x - x0) dx`` (kernel 1 in the plane).

    Gradients are cell-centroid gradients of the multilinear interpolant,
    integrated by the midpoint rule with a one-cell smoothed ball indicator.
    Inside ``|A^{-1/2} x| < delta`` the kernel is the C^1 regularization.

    Parameters
    ----------
    delta : float, optional
        Regularization radius, at least ``2 h``; default ``max(2h, r/32)``.
    """
    if A.dim != u.dim:
        raise ValueError("matrix and field dimension differ")
    x0 = np.asarray(x0, dtype=float)
    _check_ball(u, x0, r)
    d = _delta_array(u, [r], delta)
    return float(_integrals(A, u, x0, np.array([float(r)]), d)[0])


def _interaction_density(u: SampledField, v: SampledField, spec: InteractionSpec):
    # cell averages of the nodal fields, evaluated at cell centres
    def cell_mean(a):
        out = a
        for ax in range(a.ndim):
            sl0 = [slice(None)] * a.ndim
            sl1 = [slice(None)] * a.ndim
            sl0[ax] = slice(None, -1)
            sl1[ax] = slice(1, None)
            out = 0.5 * (out[tuple(sl0)] + out[tuple(sl1)])
        return out

    uc = np.maximum(cell_mean(u.values), 0.0)
    vc = np.maximum(cell_mean(v.values), 0.0)
    return uc ** (spec.exponent + 1) * spec.coupling(u.grid.cell_centers(), vc)


def perturbed_weighted_dirichlet(
    A: AnisotropyMatrix, u: SampledField, v: SampledField, spec: InteractionSpec, x0, r: float, delta=None
) -> float:
    """:func:`weighted_dirichlet` plus the coupling term ``u^(q+1) g(x, v)`` under the same kernel."""
    x0 = np.asarray(x0, dtype=float)
    _check_ball(u, x0, r)
    d = _delta_array(u, [r], delta)
    extra = _interaction_density(u, v, spec) if spec.coefficients else None
    return float(_integrals(A, u, x0, np.array([float(r)]), d, extra=extra)[0])


def acf_profile(
    A: AnisotropyMatrix,
    u: SampledField,
    v: SampledField,
    x0,
    exponent: float,
    radii,
    delta=None,
    specs=None,
) -> RadialProfile:
    """``J(r) = r^-exponent * I_A(u, r) * I_Id(v, r)`` on a list of radii.

    ``specs`` is an optional pair of :class:`InteractionSpec` switching both
    integrals to their perturbed form. ``slope_min`` is the smallest forward
    difference ``J[k+1] - J[k]``.
    """
    if not exponent > 0:
        raise ValueError("exponent must be positive")
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) < 1 or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ValueError("radii must be positive and strictly increasing")
    x0 = np.asarray(x0, dtype=float)
    for fld in (u, v):
        _check_ball(fld, x0, radii[-1], RADIUS_MARGIN)
    deltas = _delta_array(u, radii, delta)
    iso = AnisotropyMatrix.identity(u.dim)
    extra_u = extra_v = None
    if specs is not None:
        su, sv = specs
        extra_u = _interaction_density(u, v, su) if su.coefficients else None
        extra_v = _interaction_density(v, u, sv) if sv.coefficients else None
    left = _integrals(A, u, x0, radii, deltas, extra=extra_u)
    right = _integrals(iso, v, x0, radii, deltas, extra=extra_v)
    j = radii ** (-exponent) * left * right
    slope = float(np.min(np.diff(j))) if len(j) > 1 else 0.0
    return RadialProfile(x0, radii, left, right, j, float(exponent), slope)


def monotonicity_report(profile: RadialProfile, tol: float = 0.05) -> MonotonicityReport:
    """Pass iff every forward difference of ``J`` is at least ``-tol * max J``."""
    j = np.asarray(profile.j, dtype=float)
    if len(j) < 3:
        raise ValueError("need at least 3 radii")
    scale = float(np.max(np.abs(j)))
    diffs = np.diff(j)
    k = int(np.argmin(diffs))
    worst = float(-diffs[k] / scale) if scale > 0 else 0.0
    passed = bool(np.all(diffs >= -tol * scale))
    return MonotonicityReport(passed, float(tol), k, max(worst, 0.0), scale)


# ---------------------------------------------------------------------------
# sphere quadrature
# ---------------------------------------------------------------------------


def sphere_rule(dim: int, n_theta: int = 720, n_lat: int = 180, n_lon: int = 360):
    """Unit-sphere nodes and weights: trapezoid on the circle, midpoint lat-long on the 2-sphere."""
    if dim == 2:
        t = 2 * np.pi * np.arange(n_theta) / n_theta
        pts = np.stack([np.cos(t), np.sin(t)], axis=-1)
        return pts, np.full(n_theta, 2 * np.pi / n_theta)
    if dim == 3:
        th = (np.arange(n_lat) + 0.5) * np.pi / n_lat
        ph = (np.arange(n_lon) + 0.5) * 2 * np.pi / n_lon
        T, P = np.meshgrid(th, ph, indexing="ij")
        pts = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)
        # exact band areas in the polar angle keep constants exact
        band = np.cos(th - 0.5 * np.pi / n_lat) - np.cos(th + 0.5 * np.pi / n_lat)
        w = np.repeat(band, n_lon) * (2 * np.pi / n_lon)
        return pts, w
    raise ValueError("sphere rules exist for dim 2 and 3")


def sphere_integral(fld: SampledField, x0, r: float, integrand=None):
    """``int_{S_r(x0)} integrand(values, points, unit normals)`` with linear sampling."""
    pts, w = sphere_rule(fld.dim)
    x = np.asarray(x0, dtype=float) + r * pts
    vals = fld.sample(x)
    dens = vals if integrand is None else integrand(vals, x, pts)
    return float(np.sum(w * dens) * r ** (fld.dim - 1))


# ---------------------------------------------------------------------------
# auxiliary inequalities
# ---------------------------------------------------------------------------


@dataclass
class MeanValueRecord:
    radii: np.ndarray
    ratios: np.ndarray
    center_value: float

    @property
    def constant(self) -> float:
        return float(np.min(self.ratios))


def _subharmonic_violations(A, u: SampledField, region, tol):
    op = assemble_operator(A.matrix, u.grid)
    res = op.apply(u.values)
    interior = ~u.grid.boundary_mask() & region
    bad = interior & (res < -tol)
    return res, interior, bad


def mean_value_check(A: AnisotropyMatrix, u: SampledField, radii, center=None, tol: float | None = None) -> MeanValueRecord:
    """Ratios ``r^(1-N) int_{S_r} u^2 mu / u(center)^2``.

    The field must be non-negative and discretely A-subharmonic near the
    centre; ``u(center) = 0`` gives ratios of ``+inf``.
    """
    dim = u.dim
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if not u.contains(center):
        raise ValueError("centre lies outside the grid")
    radii = np.asarray(radii, dtype=float)
    if np.any(u.values < -1e-12):
        raise HypothesisViolation("field must be non-negative")
    pts = u.grid.points()
    region = np.linalg.norm(pts - center, axis=-1) <= radii.max() + u.h
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.max(np.abs(u.values)))) * A.a_max / u.h**2
    _, interior, bad = _subharmonic_violations(A, u, region, tol)
    if bad.any():
        raise HypothesisViolation("field is not discretely A-subharmonic", nodes=np.argwhere(bad)[:50].tolist())
    u0 = float(u.sample(center[None, :])[0])
    if u0 == 0.0:
        return MeanValueRecord(radii, np.full(len(radii), np.inf), 0.0)
    ratios = []
    for r in radii:
        s = sphere_integral(u, center, r, lambda v, x, nu: v * v * mu_weight(A, nu))
        ratios.append(r ** (1 - dim) * s / u0**2)
    return MeanValueRecord(radii, np.array(ratios), u0)


@dataclass
class DecayReport:
    passed: bool
    sup_inner: float
    sup_outer: float
    bound: float
    constant: float
    rate: float
    fitted_rate: float
    violations: int


def barrier_scale(A: AnisotropyMatrix) -> float:
    """Largest eigenvalue of A, floored at 1 so that ``a_i / scale^2 <= 1``."""
    return max(A.a_max, 1.0)


def barrier_value(A: AnisotropyMatrix, M: float, x, center=None):
    """``z(x) = sum_i cosh(sqrt(M) (x_i - c_i) / Lambda)``; satisfies ``div(A grad z) <= M z``."""
    x = np.asarray(x, dtype=float)
    c = np.zeros(x.shape[-1]) if center is None else np.asarray(center, dtype=float)
    k = math.sqrt(M) / barrier_scale(A)
    return np.sum(np.cosh(k * (x - c)), axis=-1)


def barrier_supersolution_margin(A: AnisotropyMatrix, M: float, u_grid):
    """Discrete ``-div(A grad z) + M z`` at interior nodes of ``u_grid`` (should be >= 0)."""
    z = barrier_value(A, M, u_grid.points())
    op = assemble_operator(A.matrix, u_grid)
    res = -op.apply(z) + M * z
    return res[~u_grid.boundary_mask()], z[~u_grid.boundary_mask()]


def subsolution_decay_check(
    A: AnisotropyMatrix, M: float, delta: float, w: SampledField, r: float, center=None, tol: float | None = None
) -> DecayReport:
    """Check ``sup_{B_r} w <= C ||w||_{B_2r} exp(-c r sqrt(M)) + delta / M``.

    Comparison with the cosh barrier gives ``C = 2`` and
    ``c = 1 / (Lambda sqrt(N))``. The hypothesis
    ``div(A grad w) - M w + delta >= 0`` is checked on ``B_2r``; more than
    0.1% of violating nodes raises :class:`HypothesisViolation`.
    """
    if not M > 0 or delta < 0:
        raise ValueError("need M > 0 and delta >= 0")
    dim = w.dim
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if np.any(w.values < -1e-12):
        raise HypothesisViolation("field must be non-negative")
    pts = w.grid.points()
    dist = np.linalg.norm(pts - center, axis=-1)
    outer = dist <= 2 * r
    op = assemble_operator(A.matrix, w.grid)
    res = op.apply(w.values) - M * w.values + delta
    interior = outer & ~w.grid.boundary_mask()
    if tol is None:
        tol = 1e-9 * max(float(np.max(np.abs(w.values))), 1e-300) * (M + 4 * A.a_max / w.h**2)
    bad = interior & (res < -tol)
    if bad.sum() > 1e-3 * max(interior.sum(), 1):
        raise HypothesisViolation("subsolution inequality fails", nodes=np.argwhere(bad)[:50].tolist())
    sup_outer = float(np.max(w.values[outer])) if outer.any() else 0.0
    inner = dist <= r
    sup_inner = float(np.max(w.values[inner])) if inner.any() else 0.0
    C = 2.0
    c = 1.0 / (barrier_scale(A) * math.sqrt(dim))
    bound = C * sup_outer * math.exp(-c * r * math.sqrt(M)) + delta / M
    excess = sup_inner - delta / M
    if sup_outer > 0 and excess > 0:
        fitted = -math.log(excess / (C * sup_outer)) / (r * math.sqrt(M))
    else:
        fitted = math.inf
    return DecayReport(bool(sup_inner <= bound * (1 + 1e-12)), sup_inner, sup_outer, bound, C, c, fitted, int(bad.sum()))


def almgren_frequency(v: SampledField, x0, radii):
    """``N(r) = r int_{B_r} |grad v|^2 / int_{S_r} v^2``; ``nan`` when the denominator vanishes."""
    x0 = np.asarray(x0, dtype=float)
    radii = np.asarray(radii, dtype=float)
    _check_ball(v, x0, radii[-1])
    iso = AnisotropyMatrix.identity(v.dim)
    energy = _integrals(iso, v, x0, radii, np.full(len(radii), 2 * v.h), weighted=False)
    out = []
    for r, e in zip(radii, energy):
        den = sphere_integral(v, x0, r, lambda val, x, nu: val * val)
        out.append(r * e / den if den > 0 else math.nan)
    return np.array(out)


@dataclass
class BoundaryEstimate:
    lhs: float
    rhs: float
    eigen_quotient: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def boundary_estimate(A: AnisotropyMatrix, u: SampledField, x0, r: float, delta=None) -> BoundaryEstimate:
    """Both sides of the energy bound by the sphere integral.

    ``I_A(u, r) <= a_N^(N/2) r / (2 gamma(lam)) int_{S_r} <A grad u, grad u> Gamma_A``
    in 3D and ``I_A <= r / (2 sqrt(lam)) int_{S_r} <A grad u, grad u>`` in the
    plane, with ``lam`` the tangential Rayleigh quotient of ``u`` on ``S_r``.
    """
    x0 = np.asarray(x0, dtype=float)
    dim = u.dim
    lhs = weighted_dirichlet(A, u, x0, r, delta)
    pts, w = sphere_rule(dim)
    x = x0 + r * pts
    vals = u.sample(x)
    grad = u.sample_gradient(x)
    dens = np.sum(A.a * grad * grad, axis=-1)
    if dim == 3:
        dens = dens * np.sum(pts * pts * r * r / A.a, axis=-1) ** (-0.5)
    sphere = float(np.sum(w * dens)) * r ** (dim - 1)
    tang = tangential_form_density(A, grad, pts)
    num = float(np.sum(w * tang))
    den = float(np.sum(w * vals * vals * mu_weight(A, pts)))
    lam = r * r * num / den if den > 0 else math.inf
    if dim == 2:
        rhs = r / (2 * math.sqrt(lam)) * sphere
    else:
        rhs = A.a_max ** (dim / 2) * r / (2 * gamma(lam, dim)) * sphere
    return BoundaryEstimate(lhs, rhs, lam)
