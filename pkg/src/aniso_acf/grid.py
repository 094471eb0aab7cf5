"""Uniform Cartesian grids and fields sampled on them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class Grid:
    """Node-centred uniform grid: node ``k`` on axis ``d`` sits at ``origin[d] + k h``."""

    origin: tuple
    h: float
    shape: tuple

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if len(self.origin) != len(self.shape):
            raise ValueError("origin and shape disagree on dimension")
        if len(self.shape) not in (2, 3):
            raise ValueError("only 2D and 3D grids are supported")
        if min(self.shape) < 3:
            raise ValueError("need at least 3 nodes per axis")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @classmethod
    def box(cls, lower, upper, h: float) -> "Grid":
        """Grid covering ``[lower, upper]`` per axis; ``upper`` is rounded to a whole number of cells."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        cells = np.rint((upper - lower) / h).astype(int)
        return cls(tuple(lower), float(h), tuple(cells + 1))

    @classmethod
    def centered(cls, half_width: float, h: float, dim: int) -> "Grid":
        """Cube ``[-half_width, half_width]^dim`` with a node at the origin."""
        cells = int(np.ceil(half_width / h))
        return cls((-cells * h,) * dim, float(h), (2 * cells + 1,) * dim)

    @classmethod
    def unit_square(cls, n: int) -> "Grid":
        return cls((0.0, 0.0), 1.0 / (n - 1), (n, n))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def upper(self):
        return tuple(o + (s - 1) * self.h for o, s in zip(self.origin, self.shape))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self):
        return [o + self.h * np.arange(s) for o, s in zip(self.origin, self.shape)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """Node coordinates, shape ``shape + (dim,)``."""
        return np.stack(self.mesh(), axis=-1)

    def index_coords(self, x):
        """Fractional node indices of physical points (trailing axis = dim)."""
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.origin)) / self.h

    def boundary_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        for d in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[d] = 0
            m[tuple(idx)] = True
            idx[d] = -1
            m[tuple(idx)] = True
        return m

    def ball_inside(self, x0, r: float, margin: float = 0.0) -> bool:
        """True when ``B_r(x0)`` lies in the box shrunk by ``margin`` times its extent per side."""
        x0 = np.asarray(x0, dtype=float)
        lo = np.asarray(self.origin)
        hi = np.asarray(self.upper)
        pad = margin * (hi - lo)
        return bool(np.all(x0 - r >= lo + pad - 1e-12) and np.all(x0 + r <= hi - pad + 1e-12))

    def cell_centers(self):
        axes = [o + self.h * (np.arange(s - 1) + 0.5) for o, s in zip(self.origin, self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass
class SampledField:
    """Scalar nodal values on a :class:`Grid`.

    ``mask`` marks the positivity set; it defaults to ``values > 0``.
    """

    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size == self.grid.size:
                v = v.reshape(self.grid.shape)
            else:
                raise ValueError(f"values have {v.size} entries, grid expects {self.grid.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v
        if self.mask is None:
            self.mask = v > 0
        else:
            self.mask = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "SampledField":
        """Sample ``fn(points)`` where ``points`` has trailing axis ``dim``.

        Large grids are filled slab by slab along the first axis.
        """
        out = np.empty(grid.shape)
        axes = grid.axes()
        per_slab = int(np.prod(grid.shape[1:]))
        step = max(1, 2_000_000 // per_slab)
        for s0 in range(0, grid.shape[0], step):
            sub = [axes[0][s0:s0 + step]] + axes[1:]
            pts = np.stack(np.meshgrid(*sub, indexing="ij"), axis=-1)
            out[s0:s0 + step] = fn(pts)
        return cls(grid, out)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def boundary_trace(self):
        return self.values[self.grid.boundary_mask()]

    def sample(self, x, order: int = 1):
        """Interpolate at physical points ``x`` (trailing axis = dim)."""
        x = np.asarray(x, dtype=float)
        idx = self.grid.index_coords(x)
        coords = np.moveaxis(idx, -1, 0).reshape(self.dim, -1)
        out = ndimage.map_coordinates(self.values, coords, order=order, mode="nearest")
        return out.reshape(x.shape[:-1])

    def gradient(self):
        """Nodal gradient by central differences (one-sided at the box boundary)."""
        return np.stack(np.gradient(self.values, self.h), axis=-1)

    def sample_gradient(self, x, order: int = 1):
        g = self.gradient()
        idx = self.grid.index_coords(np.asarray(x, dtype=float))
        coords = np.moveaxis(idx, -1, 0).reshape(self.dim, -1)
        comps = [ndimage.map_coordinates(g[..., d], coords, order=order, mode="nearest") for d in range(self.dim)]
        return np.stack(comps, axis=-1).reshape(np.shape(x))

    def contains(self, x) -> bool:
        idx = self.grid.index_coords(x)
        return bool(np.all(idx >= 0) and np.all(idx <= np.asarray(self.grid.shape) - 1))

    def with_values(self, values) -> "SampledField":
        return SampledField(self.grid, values)
