"""Explicit homogeneous segregated pairs whose degrees sum below 2.

In the plane: a narrow sector for an anisotropic operator next to the
complement of a thin sector for the Laplacian. On the 2-sphere: two
orthogonal "tennis-ball" bands, one squeezed by a diagonal matrix.

Fields are built in the frame of the construction, where the operator is
``A = B^-1`` with ``B`` diagonal and decreasing; :meth:`normalized_matrix`
and :meth:`normalized_fields` reorder the axes so that the diagonal of ``A``
increases from 1, the convention of :class:`AnisotropyMatrix`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .core import AnisotropyMatrix, gamma
from .errors import HypothesisViolation
from .functional import acf_profile, sphere_rule
from .grid import Grid, SampledField
from .spectral import sl_band_eigen
from .stencil import assemble_operator

TWO_PI = 2 * math.pi


def _wrap(t):
    """Angle in ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - t, TWO_PI)


@dataclass(frozen=True)
class DisjointnessResult:
    disjoint: bool
    margin: float
    overlap: tuple | None = None
    resolution: float = 0.0

    def __bool__(self):
        return self.disjoint


# ---------------------------------------------------------------------------
# planar sector pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Witness2D:
    """Sector pair for ``div(A grad u) = 0`` with ``A = diag(1/b, 1)`` and ``Delta v = 0``.

    ``u`` lives on the squeezed image of the sector ``|theta| < phi1`` and
    ``v`` on the sector ``|theta - pi| < pi - phi2``. Angular parts are
    L2-normalized cosines.
    """

    phi1: float
    phi2: float
    b: float

    def __post_init__(self):
        bad = []
        if not 0 < self.phi1 < math.pi / 2:
            bad.append("phi1 outside (0, pi/2)")
        if not 0 < self.phi2 < math.pi / 2:
            bad.append("phi2 outside (0, pi/2)")
        if not 0 < self.b < 1:
            bad.append("b outside (0, 1)")
        if bad:
            raise HypothesisViolation("; ".join(bad))
        if not self.alpha1 + self.alpha2 < 2:
            raise HypothesisViolation(f"degree sum {self.alpha1 + self.alpha2:.6g} is not below 2")

    @property
    def dim(self) -> int:
        return 2

    @property
    def alpha1(self) -> float:
        return math.pi / (2 * self.phi1)

    @property
    def alpha2(self) -> float:
        return math.pi / (2 * (math.pi - self.phi2))

    @property
    def degrees(self):
        return self.alpha1, self.alpha2

    @property
    def amplitudes(self):
        """Sup of the angular parts of ``u`` and ``v``."""
        return 1 / math.sqrt(self.phi1), 1 / math.sqrt(math.pi - self.phi2)

    @property
    def squeeze(self):
        """``B^(1/2)``."""
        return np.array([math.sqrt(self.b), 1.0])

    @property
    def matrix(self):
        return np.diag([1.0 / self.b, 1.0])

    def w(self, y):
        """Harmonic ``r^alpha1 phi(theta)`` on the unsqueezed sector, zero outside."""
        y = np.asarray(y, dtype=float)
        r = np.hypot(y[..., 0], y[..., 1])
        t = np.arctan2(y[..., 1], y[..., 0])
        inside = np.abs(t) < self.phi1
        ang = np.cos(self.alpha1 * t) / math.sqrt(self.phi1)
        return np.where(inside, r**self.alpha1 * ang, 0.0)

    def u(self, x):
        return self.w(np.asarray(x, dtype=float) * self.squeeze)

    def v(self, x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        t = _wrap(np.arctan2(x[..., 1], x[..., 0]) - math.pi)
        half = math.pi - self.phi2
        inside = np.abs(t) < half
        return np.where(inside, r**self.alpha2 * np.cos(self.alpha2 * t) / math.sqrt(half), 0.0)

    def u_half_width(self) -> float:
        """Half-opening of the squeezed sector: ``atan(sqrt(b) tan phi1)``."""
        return math.atan(math.sqrt(self.b) * math.tan(self.phi1))


def witness_2d(phi1: float = 0.45 * math.pi, phi2: float = 0.05 * math.pi, b: float = 4e-4) -> Witness2D:
    """Planar witness; rejects parameters whose supports overlap.

    Raises
    ------
    HypothesisViolation
        Range or degree-sum violation, or overlapping supports (the message
        names the overlapping angular interval).
    """
    wit = Witness2D(float(phi1), float(phi2), float(b))
    chk = cone_disjointness_check(wit)
    if not chk.disjoint:
        lo, hi = chk.overlap
        raise HypothesisViolation(f"supports overlap on angles [{lo:.6g}, {hi:.6g}] rad; decrease b")
    return wit


# ---------------------------------------------------------------------------
# band pair on the 2-sphere
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Band:
    """Band of half-width ``beta`` about the great circle orthogonal to ``axis``.

    Azimuth (about ``axis``) is measured from ``ref`` and the band spans
    ``|azimuth - center| < alpha``.
    """

    axis: np.ndarray
    ref: np.ndarray
    center: float
    alpha: float
    beta: float

    def coords(self, y):
        """``(s, dtheta, r)``: cosine of the polar angle, centred azimuth, radius."""
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        s = (y @ self.axis) / safe
        e2 = np.cross(self.axis, self.ref)
        t = np.arctan2(y @ e2, y @ self.ref)
        return s, _wrap(t - self.center), r

    def contains(self, y):
        s, dt, r = self.coords(y)
        return (np.abs(s) < math.sin(self.beta)) & (np.abs(dt) < self.alpha) & (r > 0)


@dataclass(frozen=True)
class Witness3D:
    """Band pair of common degree ``mu`` for ``A = diag(1/b^2, 1/b, 1)`` and the Laplacian.

    The first band surrounds the half great circle ``{x3 = 0, x2 > 0}``
    (azimuth about ``e3`` in ``[-delta, pi + delta]``, ``delta = alpha - pi/2``);
    the second surrounds ``{x1 = 0, x2 < 0}`` with polar axis ``e1``.
    """

    alpha: float
    beta: float
    b: float
    lam: float
    mu: float
    nodes: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    spline: CubicSpline = field(repr=False, compare=False)
    residual: float = 0.0

    @property
    def dim(self) -> int:
        return 3

    @property
    def m(self) -> float:
        return math.pi / (2 * self.alpha)

    @property
    def rho(self) -> float:
        return math.sin(self.beta)

    @property
    def degrees(self):
        return self.mu, self.mu

    @property
    def amplitudes(self):
        return 1.0, 1.0

    @property
    def squeeze(self):
        return np.array([self.b, math.sqrt(self.b), 1.0])

    @property
    def matrix(self):
        return np.diag([1.0 / self.b**2, 1.0 / self.b, 1.0])

    @property
    def band_u(self) -> _Band:
        return _Band(np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]), math.pi / 2, self.alpha, self.beta)

    @property
    def band_v(self) -> _Band:
        # azimuth about e1 measured from -e2 towards e3
        return _Band(np.array([1.0, 0.0, 0.0]), np.array([0.0, -1.0, 0.0]), 0.0, self.alpha, self.beta)

    def _band_field(self, band: _Band, y):
        s, dt, r = band.coords(y)
        inside = (np.abs(s) < self.rho) & (np.abs(dt) < self.alpha) & (r > 0)
        sc = np.clip(s, -self.rho, self.rho)
        val = r**self.mu * np.cos(self.m * dt) * self.spline(sc)
        return np.where(inside, np.maximum(val, 0.0), 0.0)

    def w(self, y):
        return self._band_field(self.band_u, y)

    def u(self, x):
        return self.w(np.asarray(x, dtype=float) * self.squeeze)

    def v(self, x):
        return self._band_field(self.band_v, x)

    def in_u_support(self, x):
        return self.band_u.contains(np.asarray(x, dtype=float) * self.squeeze)

    def in_v_support(self, x):
        return self.band_v.contains(x)


def witness_3d(alpha: float = 0.85 * math.pi, beta: float = 0.4 * math.pi, b: float = 0.01, n: int = 4096) -> Witness3D:
    """Band witness in three dimensions.

    Raises
    ------
    HypothesisViolation
        Band eigenvalue not below 2, or overlapping supports at 1 degree resolution.
    """
    if not math.pi / 2 < alpha < math.pi:
        raise HypothesisViolation("alpha must lie in (pi/2, pi)")
    if not 0 < beta < math.pi / 2:
        raise HypothesisViolation("beta must lie in (0, pi/2)")
    if not 0 < b < 1:
        raise HypothesisViolation("b must lie in (0, 1)")
    eig = sl_band_eigen(math.sin(beta), math.pi / (2 * alpha), n)
    if not eig.lam < 2:
        raise HypothesisViolation(f"band eigenvalue {eig.lam:.6g} is not below 2")
    prof = np.abs(eig.eigenfunction)
    prof = prof / prof.max()
    wit = Witness3D(
        float(alpha), float(beta), float(b), float(eig.lam), float(gamma(eig.lam, 3)),
        eig.nodes, prof, CubicSpline(eig.nodes, prof), float(eig.residual),
    )
    chk = cone_disjointness_check(wit, resolution_deg=1.0)
    if not chk.disjoint:
        raise HypothesisViolation(f"band supports overlap near {chk.overlap}; decrease b")
    return wit


# ---------------------------------------------------------------------------
# disjointness
# ---------------------------------------------------------------------------


def _mask_boundary_2d(mask):
    """Cells of a periodic-in-longitude lat-long mask that touch its complement."""
    edge = np.zeros_like(mask)
    for ax, roll in ((0, 1), (0, -1), (1, 1), (1, -1)):
        if ax == 0:
            nb = np.roll(mask, roll, axis=0)
            if roll == 1:
                nb[0] = mask[0]
            else:
                nb[-1] = mask[-1]
        else:
            nb = np.roll(mask, roll, axis=1)
        edge |= mask & ~nb
    return edge


def cone_disjointness_check(witness, resolution_deg: float = 0.1) -> DisjointnessResult:
    """Sample both angular supports and report the minimal gap or the overlap.

    The margin is the smallest angular distance (radians) between sampled
    support points; for an overlap, ``overlap`` gives the angular interval
    (2D) or the bounding box in (polar, azimuth) (3D) of the shared samples.
    """
    step = math.radians(resolution_deg)
    if witness.dim == 2:
        t = -math.pi + step * (np.arange(int(round(TWO_PI / step))) + 0.5)
        pts = np.stack([np.cos(t), np.sin(t)], axis=-1)
        su = witness.u(pts) > 0
        sv = witness.v(pts) > 0
        both = su & sv
        if both.any():
            return DisjointnessResult(False, -step * int(both.sum()), (float(t[both].min()), float(t[both].max())), step)
        tu, tv = t[su], t[sv]
        diff = np.abs(_wrap(tu[:, None] - tv[None, :]))
        return DisjointnessResult(True, float(diff.min()), None, step)
    n_lat = int(round(math.pi / step))
    n_lon = int(round(TWO_PI / step))
    pol = (np.arange(n_lat) + 0.5) * math.pi / n_lat
    azi = -math.pi + (np.arange(n_lon) + 0.5) * TWO_PI / n_lon
    P, T = np.meshgrid(pol, azi, indexing="ij")
    pts = np.stack([np.sin(P) * np.cos(T), np.sin(P) * np.sin(T), np.cos(P)], axis=-1)
    su = witness.in_u_support(pts)
    sv = witness.in_v_support(pts)
    both = su & sv
    if both.any():
        box = (float(P[both].min()), float(P[both].max()), float(T[both].min()), float(T[both].max()))
        return DisjointnessResult(False, -step, box, step)
    bu = pts[_mask_boundary_2d(su)]
    bv = pts[_mask_boundary_2d(sv)]
    if not len(bu) or not len(bv):
        return DisjointnessResult(True, math.pi, None, step)
    chord, _ = cKDTree(bv).query(bu)
    return DisjointnessResult(True, float(2 * np.arcsin(min(1.0, chord.min() / 2))), None, step)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def normalized_matrix(witness) -> tuple:
    """``(AnisotropyMatrix, perm)`` with axis ``k`` of the sorted frame = axis ``perm[k]``."""
    diag = np.diag(witness.matrix)
    perm = np.argsort(diag, kind="stable")
    sorted_diag = diag[perm] / diag[perm][0]
    return AnisotropyMatrix(tuple(float(d) for d in sorted_diag)), perm


def normalized_fields(witness, grid: Grid):
    """Rasterize ``u`` and ``v`` in the sorted frame."""
    _, perm = normalized_matrix(witness)
    inv = np.argsort(perm)

    def back(z):
        return np.asarray(z)[..., inv]

    u = SampledField.from_function(grid, lambda z: witness.u(back(z)))
    v = SampledField.from_function(grid, lambda z: witness.v(back(z)))
    return u, v


@dataclass
class WitnessReport:
    degrees: tuple
    degree_sum: float
    fitted_degrees: tuple
    subharmonic_min: tuple
    subharmonic_ok: bool
    max_product: float
    disjointness: DisjointnessResult
    profile: object = None
    drift: float | None = None
    sphere_eigenvalue: float | None = None
    band_eigenvalue: float | None = None

    def as_dict(self):
        out = {
            "degrees": list(self.degrees),
            "degree_sum": self.degree_sum,
            "fitted_degrees": list(self.fitted_degrees),
            "subharmonic_min": list(self.subharmonic_min),
            "subharmonic_ok": self.subharmonic_ok,
            "max_product": self.max_product,
            "disjoint": self.disjointness.disjoint,
            "margin": self.disjointness.margin,
            "margin_resolution": self.disjointness.resolution,
        }
        if self.profile is not None:
            out["acf_radii"] = [float(r) for r in self.profile.radii]
            out["acf_J"] = [float(j) for j in self.profile.j]
            out["acf_drift"] = self.drift
        if self.sphere_eigenvalue is not None:
            out["sphere_eigenvalue"] = self.sphere_eigenvalue
            out["band_eigenvalue"] = self.band_eigenvalue
        return out


def _fit_degree(fld: SampledField, radii):
    pts, _ = sphere_rule(fld.dim)
    m = [float(np.max(fld.sample(r * pts))) for r in radii]
    slope = np.polyfit(np.log(radii), np.log(m), 1)[0]
    return float(slope)


def _subharmonic_margin(fld: SampledField, A, degree: float, amplitude: float, squeeze, r_max: float, kappa: float = 2.0):
    """Worst ``L u / tol`` over nodes with ``4h <= |x| <= r_max``.

    ``tol = kappa * h^2 * C(degree) * amplitude * |S x|^(degree - 4)`` bounds
    the consistency error of the stencil on ``w(S x)`` with ``w`` homogeneous
    harmonic; ``S`` is the squeeze and ``amplitude`` the sup of the angular
    part. Values above -1 mean the one-sided check passes.
    """
    op = assemble_operator(A, fld.grid)
    lu = op.apply(fld.values)
    pts = fld.grid.points()
    r = np.linalg.norm(pts, axis=-1)
    ok = (r >= 4 * fld.h) & (r <= r_max) & ~fld.grid.boundary_mask()
    r_eff = np.linalg.norm(pts[ok] * squeeze, axis=-1)
    c = (degree + 4.0) ** 4 / 6.0
    tol = kappa * fld.h**2 * c * amplitude * r_eff ** (degree - 4.0)
    return float(np.min(lu[ok] / tol))


def witness_report(witness, grid: Grid | None = None, radii=None, h: float = 1 / 128, acf: bool = True) -> WitnessReport:
    """Rasterize the pair and check segregation, subharmonicity, degrees and the ACF profile.

    The grid is centred at the vertex, in the sorted frame of
    :func:`normalized_matrix`. Default radii are 9 points in ``[0.2, 0.6]``.
    """
    if grid is None:
        grid = Grid.centered(0.7, h, witness.dim)
    if radii is None:
        radii = np.linspace(0.2, 0.6, 9)
    radii = np.asarray(radii, dtype=float)
    A, perm = normalized_matrix(witness)
    u, v = normalized_fields(witness, grid)
    d1, d2 = witness.degrees
    r_max = 0.95 * float(np.min(np.asarray(grid.upper)))
    amp_u, amp_v = witness.amplitudes
    sq = witness.squeeze[perm]
    sub_u = _subharmonic_margin(u, A.matrix, d1, amp_u, sq, r_max)
    sub_v = _subharmonic_margin(v, np.eye(grid.dim), d2, amp_v, np.ones(grid.dim), r_max)
    fitted = (_fit_degree(u, radii), _fit_degree(v, radii))
    prod = float(np.max(u.values * v.values))
    chk = cone_disjointness_check(witness, resolution_deg=0.1 if witness.dim == 2 else 0.5)
    rep = WitnessReport(
        (d1, d2), d1 + d2, fitted, (sub_u, sub_v), bool(sub_u >= -1 and sub_v >= -1), prod, chk,
    )
    if acf:
        prof = acf_profile(A, u, v, np.zeros(grid.dim), 2 * (d1 + d2), radii)
        rep.profile = prof
        rep.drift = prof.drift
    if witness.dim == 3:
        rep.sphere_eigenvalue = sphere_rayleigh_quotient(v, float(radii[-1]))
        rep.band_eigenvalue = witness.lam
    return rep


def sphere_rayleigh_quotient(fld: SampledField, r: float) -> float:
    """``int |grad_T f|^2 / int f^2`` for the restriction ``f`` of ``fld`` to the sphere of radius ``r``.

    Tangential gradients come from nodal central differences; the result is
    the angular eigenvalue when ``fld`` is a homogeneous harmonic function.
    """
    pts, wts = sphere_rule(fld.dim)
    x = r * pts
    f = fld.sample(x)
    g = fld.sample_gradient(x)
    gt = g - np.sum(g * pts, axis=-1)[:, None] * pts
    num = float(np.sum(wts * np.sum(gt * gt, axis=-1))) * r * r
    den = float(np.sum(wts * f * f))
    return num / den


def witness_csv_rows(witness, grid: Grid):
    """Rows ``(index, coordinates..., u, v)`` in the field CSV layout, sorted frame."""
    u, v = normalized_fields(witness, grid)
    pts = grid.points().reshape(-1, grid.dim)
    return [
        (i, *map(float, p), float(a), float(c))
        for i, (p, a, c) in enumerate(zip(pts, u.values.reshape(-1), v.values.reshape(-1)))
    ]
