"""Eigenvalues of the anisotropic tangential form on arcs, bands and caps.

Also the two-phase partition exponents built from them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import integrate, optimize

from . import kernels
from .core import AnisotropyMatrix, as_spd, gamma, reduce_pair, tangential_form_density, mu_weight
from .errors import QuadratureError

QUAD_TOL = 1e-9


@dataclass(frozen=True)
class SphericalDomain:
    """Support of one phase on the unit circle or the unit 2-sphere.

    Use the ``arc``/``band``/``cap``/``half_sphere`` constructors.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.kind == "arc":
            hw = p["half_width"]
            if not 0.0 < hw < math.pi:
                raise ValueError(f"arc half-width must lie in (0, pi), got {hw}")
        elif self.kind == "band":
            if not math.pi / 2 < p["alpha"] < math.pi:
                raise ValueError("band alpha must lie in (pi/2, pi)")
            if not 0.0 < p["beta"] < math.pi / 2:
                raise ValueError("band beta must lie in (0, pi/2)")
        elif self.kind == "cap":
            if not 0.0 < p["opening"] < math.pi:
                raise ValueError("cap opening must lie in (0, pi)")
        elif self.kind != "half-sphere":
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def arc(cls, center: float, half_width: float):
        return cls("arc", {"center": float(center), "half_width": float(half_width)})

    @classmethod
    def arc_from_endpoints(cls, start: float, length: float):
        return cls.arc(start + 0.5 * length, 0.5 * length)

    @classmethod
    def band(cls, alpha: float, beta: float):
        return cls("band", {"alpha": float(alpha), "beta": float(beta)})

    @classmethod
    def cap(cls, axis, opening: float):
        ax = np.asarray(axis, dtype=float)
        return cls("cap", {"axis": tuple(ax / np.linalg.norm(ax)), "opening": float(opening)})

    @classmethod
    def half_sphere(cls, axis):
        ax = np.asarray(axis, dtype=float)
        return cls("half-sphere", {"axis": tuple(ax / np.linalg.norm(ax))})

    @property
    def length(self) -> float:
        return 2.0 * self.params["half_width"]

    def as_dict(self):
        return {"kind": self.kind, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}}


@dataclass
class EigenResult:
    """Lowest eigenpair of a one-dimensional Dirichlet problem."""

    lam: float
    eigenfunction: np.ndarray
    nodes: np.ndarray
    grid_size: int
    residual: float
    iterations: int = 0


@dataclass
class PartitionResult:
    nu: float
    domain_u: SphericalDomain
    domain_v: SphericalDomain
    lambda_u: float
    lambda_v: float
    certified: bool
    extra: dict = field(default_factory=dict)


def _generalized_lowest(d, e, w, n_nodes, backend=None):
    # K phi = lam W phi with W diagonal; solved via the symmetric form
    sw = np.sqrt(w)
    ds = d / w
    es = e / (sw[:-1] * sw[1:])
    lam, y, it = kernels.tridiag_lowest(ds, es, max_iter=10 * n_nodes, backend=backend)
    phi = y / sw
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    kphi = d * phi
    kphi[:-1] += e * phi[1:]
    kphi[1:] += e * phi[:-1]
    lam = float(phi @ kphi / (phi @ (w * phi)))
    res = np.linalg.norm(kphi - lam * w * phi) / np.linalg.norm(w * phi)
    return lam, phi, res, it


def _check_dim(A, dim):
    if A.dim != dim:
        raise ValueError(f"expected a dimension-{dim} matrix, got dimension {A.dim}")


def lambda_arc(A: AnisotropyMatrix, arc: SphericalDomain, n: int = 1024, backend=None) -> EigenResult:
    """Lowest eigenvalue of ``-(p f')' = lam mu f`` on an arc of the unit circle.

    Here ``mu(t) = cos^2 t + a2 sin^2 t`` and ``p = a2 / mu``: the one-dimensional
    form of the tangential Rayleigh quotient in the plane.

    Parameters
    ----------
    A : AnisotropyMatrix
        Two-dimensional, ``diag(1, a2)``.
    arc : SphericalDomain
        ``kind == "arc"``.
    n : int
        Number of grid intervals (at least 64).
    """
    _check_dim(A, 2)
    if arc.kind != "arc":
        raise ValueError("lambda_arc needs an arc domain")
    if n < 64:
        raise ValueError("n must be at least 64")
    a2 = A.diag[1]
    c, hw = arc.params["center"], arc.params["half_width"]
    start, length = c - hw, 2 * hw
    dt = length / n
    tm = start + (np.arange(n) + 0.5) * dt
    pm = a2 / (np.cos(tm) ** 2 + a2 * np.sin(tm) ** 2)
    nodes = start + np.arange(1, n) * dt
    w = np.cos(nodes) ** 2 + a2 * np.sin(nodes) ** 2
    d = (pm[:-1] + pm[1:]) / dt**2
    e = -pm[1:-1] / dt**2
    lam, phi, res, it = _generalized_lowest(d, e, w, n, backend)
    full = np.concatenate([[0.0], phi, [0.0]])
    grid = np.concatenate([[start], nodes, [start + length]])
    return EigenResult(lam, full, grid, n, res, it)


def lambda_arc_isotropic(length: float) -> float:
    """Closed form ``(pi / length)^2`` for the isotropic arc."""
    if length <= 0:
        return math.inf
    return (math.pi / length) ** 2


def sl_band_eigen(rho: float, m: float, n: int = 4096, backend=None) -> EigenResult:
    """First eigenvalue of ``-((1-s^2) w')' + m^2/(1-s^2) w = lam w`` on ``(-rho, rho)``."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if not m > 0:
        raise ValueError("m must be positive")
    if n < 128:
        raise ValueError("n must be at least 128")
    ds = 2 * rho / n
    sm = -rho + (np.arange(n) + 0.5) * ds
    pm = 1.0 - sm**2
    nodes = -rho + np.arange(1, n) * ds
    q = m * m / (1.0 - nodes**2)
    d = (pm[:-1] + pm[1:]) / ds**2 + q
    e = -pm[1:-1] / ds**2
    lam, phi, res, it = _generalized_lowest(d, e, np.ones(n - 1), n, backend)
    full = np.concatenate([[0.0], phi, [0.0]])
    grid = np.concatenate([[-rho], nodes, [rho]])
    return EigenResult(lam, full, grid, n, res, it)


def _quad(f, a, b, what):
    val, err = integrate.quad(f, a, b, epsabs=QUAD_TOL * 0.1, epsrel=1e-12, limit=200)
    if not err <= QUAD_TOL:
        raise QuadratureError(f"{what}: estimated error {err:.2e} above {QUAD_TOL:.0e}")
    return val


def rayleigh_band_terms(rho: float, m: float):
    """The two integrals of the cosine trial quotient and the quotient itself.

    Returns
    -------
    (first, second, value)
        ``first = int (1 - rho^2 t^2) sin^2(pi t / 2)``,
        ``second = int cos^2(pi t / 2) / (1 - rho^2 t^2)`` over ``(-1, 1)``, and
        ``value = pi^2 / (4 rho^2) * first + m^2 * second``.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")

    def f1(t):
        return (1.0 - rho * rho * t * t) * math.sin(0.5 * math.pi * t) ** 2

    def f2(t):
        den = 1.0 - rho * rho * t * t
        if den <= 0.0:  # rho == 1 at the open endpoint; integrand tends to 0
            return 0.0
        return math.cos(0.5 * math.pi * t) ** 2 / den

    first = _quad(f1, -1.0, 1.0, "band first integral")
    second = _quad(f2, -1.0, 1.0, "band second integral")
    return first, second, math.pi**2 / (4 * rho * rho) * first + m * m * second


def rayleigh_band(rho: float, m: float) -> float:
    """Upper bound on the band eigenvalue from the trial ``cos(pi s / (2 rho))``."""
    return rayleigh_band_terms(rho, m)[2]


def band_separation(band: SphericalDomain):
    """``(rho, m)`` of the separated band problem."""
    return math.sin(band.params["beta"]), math.pi / (2 * band.params["alpha"])


def lambda_band(band: SphericalDomain, n: int = 4096, backend=None) -> EigenResult:
    """First Dirichlet Laplace-Beltrami eigenvalue of a band on the 2-sphere."""
    if band.kind != "band":
        raise ValueError("lambda_band needs a band domain")
    rho, m = band_separation(band)
    return sl_band_eigen(rho, m, n, backend)


def lambda_cap_isotropic(opening: float, n: int = 2048, backend=None) -> EigenResult:
    """First Dirichlet Laplace-Beltrami eigenvalue of a spherical cap.

    Finite volumes in the polar angle with the pole as a node:
    ``-(sin t w')' = lam sin t w`` on ``[0, opening)``, ``w(opening) = 0``.
    """
    if not 0.0 < opening < math.pi:
        raise ValueError("cap opening must lie in (0, pi)")
    dt = opening / n
    t = np.arange(n) * dt
    flux = np.sin(t + 0.5 * dt) / dt  # sin at faces t_k + dt/2
    vol = np.empty(n)
    vol[0] = 1.0 - math.cos(0.5 * dt)
    vol[1:] = np.cos(t[1:] - 0.5 * dt) - np.cos(t[1:] + 0.5 * dt)
    d = flux.copy()
    d[1:] += flux[:-1]
    e = -flux[:-1]
    lam, phi, res, it = _generalized_lowest(d, e, vol, n, backend)
    return EigenResult(lam, np.concatenate([phi, [0.0]]), np.concatenate([t, [opening]]), n, res, it)


def _sphere_quad(f, what):
    # f(phi, theta) on the half sphere around e1, phi = polar angle from e1
    val, err = integrate.dblquad(
        lambda th, ph: f(ph, th) * math.sin(ph), 0.0, 0.5 * math.pi, 0.0, 2 * math.pi, epsabs=1e-10, epsrel=1e-10
    )
    if not err <= QUAD_TOL:
        raise QuadratureError(f"{what}: estimated error {err:.2e}")
    return val


def lambda_halfsphere_bound(A: AnisotropyMatrix) -> float:
    """Rayleigh quotient of ``x_1^+`` on the half sphere ``{x_1 > 0}``.

    This upper-bounds the first eigenvalue of the anisotropic form there and
    equals ``N - 1`` exactly for the identity.
    """
    a = A.a
    if A.dim == 2:
        a2 = a[1]

        def num(t):
            s2 = math.sin(t) ** 2
            return a2 * s2 / (1.0 - s2 + a2 * s2)

        def den(t):
            c2 = math.cos(t) ** 2
            return c2 * (c2 + a2 * (1.0 - c2))

        return _quad(num, -0.5 * math.pi, 0.5 * math.pi, "half-circle numerator") / _quad(
            den, -0.5 * math.pi, 0.5 * math.pi, "half-circle denominator"
        )
    if A.dim == 3:

        def parts(ph, th):
            c = math.cos(ph)
            s = math.sin(ph)
            x2 = s * math.cos(th)
            x3 = s * math.sin(th)
            rest = a[1] * x2 * x2 + a[2] * x3 * x3
            return rest, c * c + rest, c

        phi_int = _sphere_quad(lambda ph, th: parts(ph, th)[0] / parts(ph, th)[1], "half-sphere numerator")
        psi_int = _sphere_quad(lambda ph, th: parts(ph, th)[2] ** 2 * parts(ph, th)[1], "half-sphere denominator")
        return phi_int / psi_int
    raise ValueError("half-sphere bound is implemented for dim 2 and 3")


# ---------------------------------------------------------------------------
# two-phase exponents
# ---------------------------------------------------------------------------


def _arc_objective(a2, n, backend=None):
    def f(center, length):
        if not 0.0 < length < 2 * math.pi:
            return math.inf
        lam = kernels.arc_eigenvalues([center - 0.5 * length], [length], a2, n, backend=backend)[0]
        return math.sqrt(lam) + math.pi / (2 * math.pi - length)

    return f


def nu_2d(A: AnisotropyMatrix, search: int = 48, n: int = 1024, backend=None) -> PartitionResult:
    """Minimize ``sqrt(lam_A(arc)) + sqrt(lam_Id(complement))`` over arcs.

    A coarse ``search x search`` grid over (centre, length) is refined by
    alternating one-dimensional bounded Brent searches. The weight is
    pi-periodic so centres are restricted to ``[0, pi)``.

    Parameters
    ----------
    A : AnisotropyMatrix
    search : int
        Coarse grid resolution per parameter.
    n : int
        Grid intervals for the arc eigenproblem.
    """
    _check_dim(A, 2)
    a2 = A.diag[1]
    coarse_n = max(128, n // 4)
    centers = np.arange(search) * math.pi / search
    lengths = np.linspace(0.0, 2 * math.pi, search + 2)[1:-1]
    cc, ll = np.meshgrid(centers, lengths, indexing="ij")
    lam = kernels.arc_eigenvalues((cc - 0.5 * ll).ravel(), ll.ravel(), a2, coarse_n, backend=backend)
    vals = np.sqrt(lam).reshape(cc.shape) + math.pi / (2 * math.pi - ll)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    c, ell = float(centers[i]), float(lengths[j])
    f = _arc_objective(a2, n, backend)
    dc = math.pi / search
    dl = lengths[1] - lengths[0]
    best = f(c, ell)
    for _ in range(50):
        r = optimize.minimize_scalar(lambda x: f(x, ell), bounds=(c - dc, c + dc), method="bounded",
                                     options={"xatol": 1e-10})
        if r.fun < best:
            c, best = float(r.x), float(r.fun)
        lo, hi = max(ell - dl, 1e-6), min(ell + dl, 2 * math.pi - 1e-6)
        r = optimize.minimize_scalar(lambda x: f(c, x), bounds=(lo, hi), method="bounded",
                                     options={"xatol": 1e-10})
        prev = best
        if r.fun < best:
            ell, best = float(r.x), float(r.fun)
        if prev - best < 1e-13 and _ > 0:
            break
    c = c % math.pi
    arc_u = SphericalDomain.arc(c, 0.5 * ell)
    arc_v = SphericalDomain.arc(c + math.pi, math.pi - 0.5 * ell)
    lam_u = lambda_arc(A, arc_u, n, backend).lam
    lam_v = lambda_arc_isotropic(2 * math.pi - ell)
    return PartitionResult(math.sqrt(lam_u) + math.sqrt(lam_v), arc_u, arc_v, lam_u, lam_v, certified=True)


_GL_CACHE = {}


def _gauss(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def cap_rayleigh_anisotropic(A: AnisotropyMatrix, opening: float, nodes: int = 96) -> float:
    """Rayleigh quotient of ``cos(pi t / (2 opening))`` on the cap of polar angle ``t < opening`` about ``e_1``.

    Tensor Gauss-Legendre rule in (polar, azimuth); at ``opening = pi/2`` the
    trial is ``x_1`` and this reproduces :func:`lambda_halfsphere_bound`.
    """
    _check_dim(A, 3)
    x, wx = _gauss(nodes)
    t = 0.5 * opening * (x + 1.0)
    wt = 0.5 * opening * wx
    az = np.pi * (x + 1.0)
    waz = np.pi * wx
    T, Z = np.meshgrid(t, az, indexing="ij")
    W = np.outer(wt, waz) * np.sin(T)
    pts = np.stack([np.cos(T), np.sin(T) * np.cos(Z), np.sin(T) * np.sin(Z)], axis=-1)
    k = 0.5 * math.pi / opening
    psi = np.cos(k * T)
    dpsi = -k * np.sin(k * T)
    # gradient of the 0-homogeneous extension: dpsi * grad(t), grad t = -(e1 - x1 x)/sin t
    e1 = np.array([1.0, 0.0, 0.0])
    grad_t = -(e1 - pts[..., :1] * pts) / np.sin(T)[..., None]
    grad = dpsi[..., None] * grad_t
    num = np.sum(W * tangential_form_density(A, grad, pts))
    den = np.sum(W * psi**2 * mu_weight(A, pts))
    return float(num / den)


def nu_upper_nd(A: AnisotropyMatrix, cap_search: bool = True, n: int = 1024) -> PartitionResult:
    """Upper bounds on the three-dimensional partition exponent.

    The certified value uses the competitor pair ``(x_1^+, x_1^-)``. With
    ``cap_search`` the pair of complementary caps about ``+-e_1`` is also
    optimized over the cap angle; that value is reported in ``extra`` and
    adopted when smaller, in which case ``certified`` is False.
    """
    _check_dim(A, 3)
    scale = A.a_max ** (-1.5)
    bound = lambda_halfsphere_bound(A)
    certified = scale * gamma(bound, 3) + 1.0
    hs_u = SphericalDomain.half_sphere((1.0, 0.0, 0.0))
    hs_v = SphericalDomain.half_sphere((-1.0, 0.0, 0.0))
    result = PartitionResult(certified, hs_u, hs_v, bound, 2.0, certified=True, extra={"certified_nu": certified})
    if not cap_search:
        return result

    def objective(opening):
        lam_u = cap_rayleigh_anisotropic(A, opening)
        lam_v = lambda_cap_isotropic(math.pi - opening, n).lam
        return scale * gamma(lam_u, 3) + gamma(lam_v, 3), lam_u, lam_v

    grid = np.linspace(0.1, math.pi - 0.1, 31)
    vals = [objective(t)[0] for t in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    r = optimize.minimize_scalar(lambda t: objective(t)[0], bounds=(lo, hi), method="bounded",
                                 options={"xatol": 1e-8})
    val, lam_u, lam_v = objective(float(r.x))
    result.extra.update({"cap_nu": val, "cap_opening": float(r.x), "cap_lambda_u": lam_u, "cap_lambda_v": lam_v})
    if val < certified:
        return PartitionResult(
            val,
            SphericalDomain.cap((1.0, 0.0, 0.0), float(r.x)),
            SphericalDomain.cap((-1.0, 0.0, 0.0), math.pi - float(r.x)),
            lam_u,
            lam_v,
            certified=False,
            extra=result.extra,
        )
    return result


def pair_exponent(A1, A2, **kwargs) -> float:
    """Partition exponent of one ordered pair after normalization."""
    A, _ = reduce_pair(A1, A2)
    if A.dim == 2:
        return nu_2d(A, **kwargs).nu
    if A.dim == 3:
        return nu_upper_nd(A, **kwargs).nu
    raise ValueError("partition exponents are implemented for dim 2 and 3")


def nu_bar(matrices, **kwargs) -> float:
    """Minimum pairwise exponent over a family of operators.

    Each unordered pair is evaluated in both orders and the smaller value is
    kept, so the result does not depend on how the family is listed.
    """
    mats = [as_spd(m) for m in matrices]
    if len(mats) < 2:
        raise ValueError("need at least two matrices")
    dims = {m.dim for m in mats}
    if len(dims) != 1 or dims.pop() not in (2, 3):
        raise ValueError("matrices must share dimension 2 or 3")
    cache = {}
    best = math.inf
    for i, j in combinations(range(len(mats)), 2):
        vals = []
        for p, q in ((i, j), (j, i)):
            A, _ = reduce_pair(mats[p], mats[q])
            key = A.diag
            if key not in cache:
                cache[key] = nu_2d(A, **kwargs).nu if A.dim == 2 else nu_upper_nd(A, **kwargs).nu
            vals.append(cache[key])
        best = min(best, min(vals))
    return best
