"""Ellipticity matrices and closed-form kernels.

Everything here is a pure function of its inputs. Points are dense float64
vectors; functions that take points accept a trailing axis of length ``dim``
and broadcast over the leading ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive-definite matrix with constant entries."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix entries must be finite")
        scale = np.linalg.norm(m)
        if np.linalg.norm(m - m.T) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
            raise ValueError("matrix is not symmetric (relative Frobenius tolerance 1e-10)")
        m = 0.5 * (m + m.T)
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise ValueError("matrix is not positive definite") from None
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "SpdMatrix":
        return cls(np.eye(dim))


def as_spd(m) -> SpdMatrix:
    if isinstance(m, SpdMatrix):
        return m
    if isinstance(m, AnisotropyMatrix):
        return SpdMatrix(m.matrix)
    return SpdMatrix(np.asarray(m, dtype=float))


@dataclass(frozen=True)
class AffineMap:
    """Linear change of variables ``y = linear @ x`` produced by :func:`reduce_pair`.

    With ``S = linear`` and ``c = phase_scale`` the original pair is recovered as
    ``A1 = S A S^T`` and ``A2 = S S^T / c``; the second operator only changes by
    the positive factor ``c``, which does not affect sub-harmonicity.
    """

    linear: np.ndarray
    rotation_left: np.ndarray
    scaling: np.ndarray
    rotation_right: np.ndarray
    phase_scale: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.linear.T

    def recover(self, A: "AnisotropyMatrix"):
        S = self.linear
        A1 = S @ A.matrix @ S.T
        A2 = S @ S.T / self.phase_scale
        return A1, A2

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        eye = np.eye(dim)
        return cls(eye, eye, np.ones(dim), eye, 1.0)


@dataclass(frozen=True)
class AnisotropyMatrix:
    """Diagonal ellipticity data ``diag(1 = a_1 <= ... <= a_N)``."""

    diag: tuple
    reduction: AffineMap | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        d = tuple(float(a) for a in self.diag)
        if len(d) < 2:
            raise ValueError("dimension must be at least 2")
        if not all(np.isfinite(a) and a > 0 for a in d):
            raise ValueError("diagonal entries must be finite and positive")
        if d[0] != 1.0:
            raise ValueError(f"lowest eigenvalue must be exactly 1, got {d[0]!r}")
        if any(d[i] > d[i + 1] for i in range(len(d) - 1)):
            raise ValueError("diagonal must be sorted non-decreasing")
        object.__setattr__(self, "diag", d)

    @classmethod
    def identity(cls, dim: int) -> "AnisotropyMatrix":
        return cls((1.0,) * dim)

    @classmethod
    def from_unsorted(cls, diag) -> "AnisotropyMatrix":
        """Normalize arbitrary positive diagonal data by sorting and rescaling."""
        d = np.sort(np.asarray(diag, dtype=float))
        return cls(tuple(d / d[0]))

    @property
    def dim(self) -> int:
        return len(self.diag)

    @property
    def a(self) -> np.ndarray:
        return np.array(self.diag)

    @property
    def a_max(self) -> float:
        return self.diag[-1]

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.a)

    @property
    def is_identity(self) -> bool:
        return all(a == 1.0 for a in self.diag)


def _sorted_eigh(m: np.ndarray):
    """Eigen-decomposition with ties broken by original coordinate index."""
    w, v = np.linalg.eigh(m)
    # canonical sign: the largest component of each eigenvector is positive
    lead = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[lead, np.arange(v.shape[1])])
    v = v * signs
    scale = max(np.max(np.abs(w)), 1.0)
    groups = np.round(w / (scale * 1e-12))
    order = np.lexsort((lead, groups))
    return w[order], v[:, order]


def reduce_pair(A1, A2):
    """Reduce ``(div(A1 grad), div(A2 grad))`` to ``(div(A grad), Laplacian)``.

    Returns the normalized diagonal :class:`AnisotropyMatrix` (which carries the
    map in ``.reduction``) and the :class:`AffineMap` itself.
    """
    A1 = as_spd(A1)
    A2 = as_spd(A2)
    if A1.dim != A2.dim:
        raise ValueError("matrices must have the same dimension")
    d2, O = _sorted_eigh(A2.entries)
    T = O * np.sqrt(d2)  # O D^{1/2}
    Tinv = (O / np.sqrt(d2)).T  # D^{-1/2} O^T
    Abar = Tinv @ A1.entries @ Tinv.T
    Abar = 0.5 * (Abar + Abar.T)
    dhat, M = _sorted_eigh(Abar)
    ahat = dhat[0]
    diag = dhat / ahat
    diag[0] = 1.0
    diag = np.maximum.accumulate(diag)
    S = np.sqrt(ahat) * T @ M
    amap = AffineMap(S, O, np.sqrt(ahat * d2), M, float(ahat))
    A = AnisotropyMatrix(tuple(diag), reduction=amap)
    return A, amap


def gamma(t, dim: int):
    """Positive root of ``g**2 + (dim - 2) g = t``."""
    t_arr = np.asarray(t, dtype=float)
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise ValueError("gamma is defined for t >= 0 only")
    s = 0.5 * (dim - 2)
    # rationalized form avoids cancellation for small t
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(t_arr), np.inf, t_arr / (np.sqrt(s * s + t_arr) + s))
    if dim == 2:
        out = np.sqrt(t_arr)
    return float(out) if np.ndim(out) == 0 else out


def _points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}, got {x.shape}")
    return x


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def elliptic_norm_sq(A: AnisotropyMatrix, x):
    """``|A^{-1/2} x|^2 = sum x_i^2 / a_i``."""
    x = _points(x, A.dim)
    return np.sum(x * x / A.a, axis=-1)


def fundamental_solution(A: AnisotropyMatrix, x):
    x = _points(x, A.dim)
    if A.dim == 2:
        raise ValueError("in dimension 2 the kernel is the constant 1; no fundamental solution here")
    q = elliptic_norm_sq(A, x)
    if np.any(q == 0):
        raise ValueError("fundamental solution is singular at the origin")
    return _scalar(q ** ((2.0 - A.dim) / 2.0))


def mu_weight(A: AnisotropyMatrix, x):
    """``<A x/|x|, x/|x|>``, bounded in ``[1, a_N]``."""
    x = _points(x, A.dim)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0):
        raise ValueError("mu is undefined at the origin")
    return _scalar(np.sum(A.a * x * x, axis=-1) / r2)


def phi_delta(r, delta: float, dim: int):
    """Radial C^1 regularization of ``r**(2 - dim)`` inside ``r <= delta``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    r = np.asarray(r, dtype=float)
    inner = 0.5 * dim * delta ** (2 - dim) + 0.5 * (2 - dim) * delta ** (-dim) * r * r
    with np.errstate(divide="ignore"):
        outer = np.where(r > 0, np.abs(r) ** (2.0 - dim), np.inf)
    return _scalar(np.where(r <= delta, inner, outer))


def phi_delta_derivative(r, delta: float, dim: int, side: str = "left"):
    r = np.asarray(r, dtype=float)
    inner = (2 - dim) * delta ** (-dim) * r
    outer = (2 - dim) * r ** (1.0 - dim)
    if side == "left":
        out = np.where(r <= delta, inner, outer)
    else:
        out = np.where(r < delta, inner, outer)
    return _scalar(out)


@dataclass(frozen=True)
class RegularizedKernelParams:
    delta: float
    matrix: AnisotropyMatrix

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")


def regularized_kernel(params: RegularizedKernelParams, x):
    """``Phi_{A,delta}(x) = phi_delta(|A^{-1/2} x|)``; equals Gamma_A outside the ellipsoid."""
    A = params.matrix
    if A.dim < 3:
        raise ValueError("regularized kernel is defined for dim >= 3")
    x = _points(x, A.dim)
    return phi_delta(np.sqrt(elliptic_norm_sq(A, x)), params.delta, A.dim)


def tangential_form_density(A: AnisotropyMatrix, grad, x):
    """``<A grad_theta^A phi, grad_theta^A phi>`` via the pairwise cross-term formula."""
    x = _points(x, A.dim)
    g = _points(grad, A.dim)
    a = A.a
    denom = np.sum(a * x * x, axis=-1)
    if np.any(denom == 0):
        raise ValueError("tangential form is undefined at the origin")
    total = 0.0
    for i in range(A.dim):
        for j in range(i + 1, A.dim):
            c = g[..., i] * x[..., j] - g[..., j] * x[..., i]
            total = total + a[i] * a[j] * c * c
    return _scalar(total / denom)


def tangential_form_subtraction(A: AnisotropyMatrix, grad, x):
    """Same quantity as :func:`tangential_form_density`, written as full minus normal part."""
    x = _points(x, A.dim)
    g = _points(grad, A.dim)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(r == 0):
        raise ValueError("tangential form is undefined at the origin")
    nu = x / r
    Ag = A.a * g
    full = np.sum(Ag * g, axis=-1)
    normal = np.sum(Ag * nu, axis=-1)
    return _scalar(full - normal ** 2 / mu_weight(A, x))


def normal_form_density(A: AnisotropyMatrix, grad, x):
    """``<A grad, nu>^2 / mu``, the normal half of the splitting identity."""
    x = _points(x, A.dim)
    g = _points(grad, A.dim)
    nu = x / np.linalg.norm(x, axis=-1, keepdims=True)
    return _scalar(np.sum(A.a * g * nu, axis=-1) ** 2 / mu_weight(A, x))


def tangential_part_sq(grad, x):
    """Squared Euclidean tangential gradient ``|grad_theta phi|^2`` at ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    gn = np.sum(g * x, axis=-1)
    return _scalar(np.sum(g * g, axis=-1) - gn * gn / r2)


def in_ellipsoid(A: AnisotropyMatrix, x, r: float):
    """Membership in ``{|A^{-1/2} x| < r}``."""
    return np.sqrt(elliptic_norm_sq(A, x)) < r
