"""Nine-point (2D) and nineteen-point (3D) stencils for ``div(A grad u)``.

Mixed derivatives use the four diagonal neighbours of each coordinate
plane, which keeps the stencil symmetric and exact on quadratics.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from . import kernels
from .core import SpdMatrix, as_spd
from .grid import Grid


@dataclass(frozen=True)
class DiscreteOperator:
    """Constant-coefficient stencil bound to a grid.

    ``offsets``/``weights`` exclude the centre, whose weight is ``center``.
    ``interior`` holds the flat indices of non-boundary nodes grouped by
    parity color; ``color_ptr`` delimits the groups.
    """

    matrix: np.ndarray
    grid: Grid
    offsets: tuple
    weights: np.ndarray
    center: float
    flat_offsets: np.ndarray
    interior: np.ndarray
    color_ptr: np.ndarray

    def apply(self, u, backend=None):
        """``div(A grad u)`` at interior nodes, zero on the boundary layer."""
        u = np.asarray(u, dtype=float)
        flat = np.ascontiguousarray(u.reshape(-1))
        offs = np.concatenate([self.flat_offsets, [0]])
        wts = np.concatenate([self.weights, [self.center]])
        return kernels.stencil_apply(flat, self.interior, offs, wts, backend=backend).reshape(u.shape)

    def stencil_dict(self):
        out = {o: float(w) for o, w in zip(self.offsets, self.weights)}
        out[(0,) * self.grid.dim] = self.center
        return out

    def sor(self, u, f, shift, omega=1.0, sweeps=1, floor=-np.inf, backend=None):
        """In-place SOR sweeps for ``(-L + shift) u = f``; boundary nodes are held fixed."""
        if not (isinstance(u, np.ndarray) and u.flags.c_contiguous and u.dtype == np.float64):
            raise ValueError("u must be a C-contiguous float64 array")
        flat = u.reshape(-1)
        kernels.sor_sweeps(
            flat,
            np.ascontiguousarray(f, dtype=float).reshape(-1),
            np.ascontiguousarray(shift, dtype=float).reshape(-1),
            self.interior,
            self.color_ptr,
            self.flat_offsets,
            self.weights,
            self.center,
            omega,
            sweeps,
            floor=floor,
            backend=backend,
        )
        return u


def stencil_weights(A: np.ndarray, h: float):
    """Offset -> weight map of the symmetric second-order stencil."""
    A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    w = {}
    h2 = h * h
    for d in range(dim):
        e = [0] * dim
        e[d] = 1
        w[tuple(e)] = w.get(tuple(e), 0.0) + A[d, d] / h2
        e[d] = -1
        w[tuple(e)] = w.get(tuple(e), 0.0) + A[d, d] / h2
    for p, q in combinations(range(dim), 2):
        c = A[p, q] / (2.0 * h2)
        for sp, sq in product((1, -1), repeat=2):
            e = [0] * dim
            e[p], e[q] = sp, sq
            w[tuple(e)] = w.get(tuple(e), 0.0) + sp * sq * c
    center = -2.0 * float(np.trace(A)) / h2
    return w, center


def _color_partition(grid: Grid):
    shape = grid.shape
    idx = np.indices(shape)
    interior = np.ones(shape, dtype=bool)
    interior &= ~grid.boundary_mask()
    color = np.zeros(shape, dtype=np.int64)
    for d in range(grid.dim):
        color = 2 * color + (idx[d] % 2)
    flat_int = np.flatnonzero(interior)
    colors = color.reshape(-1)[flat_int]
    order = np.argsort(colors, kind="stable")
    flat_int = flat_int[order]
    counts = np.bincount(colors, minlength=2**grid.dim)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return flat_int.astype(np.int64), ptr


def assemble_operator(A, grid: Grid) -> DiscreteOperator:
    """Stencil of ``div(A grad .)`` on ``grid``.

    Parameters
    ----------
    A : SpdMatrix or array_like
        Constant symmetric positive-definite matrix.
    grid : Grid

    Returns
    -------
    DiscreteOperator
    """
    spd: SpdMatrix = as_spd(A)
    if spd.dim != grid.dim:
        raise ValueError("matrix and grid dimension differ")
    w, center = stencil_weights(spd.entries, grid.h)
    offsets = tuple(o for o in sorted(w) if w[o] != 0.0)
    strides = np.array([int(np.prod(grid.shape[d + 1:])) for d in range(grid.dim)], dtype=np.int64)
    flat = np.array([int(np.dot(o, strides)) for o in offsets], dtype=np.int64)
    weights = np.array([w[o] for o in offsets])
    interior, ptr = _color_partition(grid)
    return DiscreteOperator(np.array(spd.entries), grid, offsets, weights, center, flat, interior, ptr)


def residual_field(op: DiscreteOperator, u, rhs=None, backend=None):
    """``L u - rhs`` at interior nodes; ``nan`` on the boundary layer."""
    out = op.apply(u, backend=backend)
    if rhs is not None:
        out = out - rhs
    out[op.grid.boundary_mask()] = np.nan
    return out
