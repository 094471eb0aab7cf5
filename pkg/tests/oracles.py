"""Independent reference computations shared by several test files.

Nothing here imports the package's eigen or quadrature code.
"""
import math

import numpy as np


def arc_lowest_eigenvalues(starts, lengths, a2, n=160, iters=44, chunk=8192):
    """Lowest eigenvalue of ``-(p f')' = lam mu f`` on many arcs at once.

    ``mu = cos^2 + a2 sin^2``, ``p = a2 / mu``; second-order finite
    differences with ``p`` at midpoints, then vectorized Sturm bisection on
    the symmetrized tridiagonal matrix.
    """
    starts = np.asarray(starts, dtype=float).ravel()
    lengths = np.asarray(lengths, dtype=float).ravel()
    if len(starts) > chunk:
        return np.concatenate([
            arc_lowest_eigenvalues(starts[i:i + chunk], lengths[i:i + chunk], a2, n, iters, chunk)
            for i in range(0, len(starts), chunk)
        ])
    starts = starts[:, None]
    lengths = lengths[:, None]
    h = lengths / n
    k = np.arange(1, n)[None, :]
    th = starts + k * h
    mid = starts + (np.arange(n)[None, :] + 0.5) * h
    mu = np.cos(th) ** 2 + a2 * np.sin(th) ** 2
    p = a2 / (np.cos(mid) ** 2 + a2 * np.sin(mid) ** 2)
    d = (p[:, :-1] + p[:, 1:]) / h**2 / mu
    e2 = (p[:, 1:-1] / h**2) ** 2 / (mu[:, :-1] * mu[:, 1:])
    lo = np.zeros(len(starts))
    # the lowest eigenvalue is below the continuum value of the plain arc times a2
    hi = np.full(len(starts), 4.0 * a2 * (math.pi / lengths[:, 0]) ** 2 + 1.0)
    for _ in range(iters):
        x = 0.5 * (lo + hi)
        # number of eigenvalues below x via the LDL^T pivots
        q = d[:, 0] - x
        count = (q < 0).astype(int)
        with np.errstate(over="ignore", divide="ignore"):
            for i in range(1, d.shape[1]):
                q = np.where(q == 0, 1e-300, q)
                q = d[:, i] - x - e2[:, i - 1] / q
                count += q < 0
        below = count >= 1
        hi = np.where(below, x, hi)
        lo = np.where(below, lo, x)
    return 0.5 * (lo + hi)


def nu_2d_brute_force(a2, grid=720, n=160):
    """Exhaustive minimum over arcs with endpoints on a ``grid``-point circle.

    The weight is pi-periodic, so start points in ``[0, pi)`` already cover
    every endpoint pair.
    """
    step = 2 * math.pi / grid
    starts = np.arange(grid // 2) * step
    lengths = np.arange(1, grid) * step
    S, L = np.meshgrid(starts, lengths, indexing="ij")
    lam = arc_lowest_eigenvalues(S.ravel(), L.ravel(), a2, n=n)
    vals = np.sqrt(lam) + math.pi / (2 * math.pi - L.ravel())
    k = int(np.argmin(vals))
    return float(vals[k]), float(S.ravel()[k]), float(L.ravel()[k])


def half_disc_integral(r):
    """``int_{B_r, x_1 > 0} |grad x_1|^2 = pi r^2 / 2``."""
    return math.pi * r * r / 2


def half_ball_weighted_integral(r):
    """``int_{B_r, x_1 > 0} |x|^-1 dx = 4 pi r^2 / 4``: shells of area 2 pi s^2 times 1/s."""
    return 4 * math.pi * r * r / 4
