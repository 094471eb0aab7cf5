"""Hot loops, each with a numba implementation and a pure-numpy twin.

The public wrappers dispatch on :data:`aniso_acf._jit.USE_NUMBA` unless a
``backend`` argument ("numba" or "numpy") is passed explicitly, which is how
the parity tests and the benchmark exercise both paths in one process.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import _jit
from ._jit import njit
from .errors import ConvergenceError

EPS = np.finfo(float).eps


def _pick(backend):
    if backend is None:
        return "numba" if _jit.USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not _jit.HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    return backend


# ---------------------------------------------------------------------------
# symmetric tridiagonal: lowest eigenpair
# ---------------------------------------------------------------------------


@njit
def _sturm_count(d, e2, x):
    # number of eigenvalues strictly below x
    count = 0
    q = d[0] - x
    if q < 0.0:
        count += 1
    tiny = 1e-300
    for k in range(1, d.shape[0]):
        if q == 0.0:
            q = tiny
        q = d[k] - x - e2[k - 1] / q
        if q < 0.0:
            count += 1
    return count


@njit
def _lowest_eigenvalue_nb(d, e):
    n = d.shape[0]
    e2 = e * e
    lo = d[0] - abs(e[0]) if n > 1 else d[0]
    hi = d[0] + abs(e[0]) if n > 1 else d[0]
    for k in range(n):
        r = 0.0
        if k > 0:
            r += abs(e[k - 1])
        if k < n - 1:
            r += abs(e[k])
        lo = min(lo, d[k] - r)
        hi = max(hi, d[k] + r)
    scale = max(abs(lo), abs(hi))
    it = 0
    while hi - lo > 4.0 * 2.220446049250313e-16 * scale and it < 200:
        mid = 0.5 * (lo + hi)
        if _sturm_count(d, e2, mid) >= 1:
            hi = mid
        else:
            lo = mid
        it += 1
    return 0.5 * (lo + hi), scale, it


@njit
def _thomas_shifted(d, e, sigma, rhs):
    n = d.shape[0]
    c = np.empty(n)
    y = np.empty(n)
    b0 = d[0] - sigma
    c[0] = e[0] / b0 if n > 1 else 0.0
    y[0] = rhs[0] / b0
    for k in range(1, n):
        den = d[k] - sigma - e[k - 1] * c[k - 1]
        if k < n - 1:
            c[k] = e[k] / den
        y[k] = (rhs[k] - e[k - 1] * y[k - 1]) / den
    for k in range(n - 2, -1, -1):
        y[k] -= c[k] * y[k + 1]
    return y


@njit
def _tridiag_lowest_nb(d, e, max_iter):
    n = d.shape[0]
    lam, scale, nbis = _lowest_eigenvalue_nb(d, e)
    sigma = lam - 1e3 * 2.220446049250313e-16 * max(scale, 1.0)
    x = np.ones(n)
    x /= np.sqrt(n)
    rq = lam
    it = 0
    converged = False
    while it < max_iter:
        y = _thomas_shifted(d, e, sigma, x)
        nrm = np.sqrt(np.sum(y * y))
        y /= nrm
        # Rayleigh quotient of the normalized iterate
        by = d * y
        by[:-1] += e * y[1:]
        by[1:] += e * y[:-1]
        rq = np.sum(y * by)
        diff = 0.0
        for k in range(n):
            diff = max(diff, abs(abs(y[k]) - abs(x[k])))
        x = y
        it += 1
        if diff < 1e-13:
            converged = True
            break
    if x[n // 2] < 0.0:
        x = -x
    return rq, x, it, converged


def _tridiag_lowest_np(d, e, max_iter):
    w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, 0), lapack_driver="stebz")
    x = v[:, 0]
    if x[len(x) // 2] < 0:
        x = -x
    by = d * x
    by[:-1] += e * x[1:]
    by[1:] += e * x[:-1]
    return float(np.dot(x, by)), x, 1, True


def tridiag_lowest(d, e, max_iter=None, backend=None):
    """Lowest eigenpair of the symmetric tridiagonal matrix ``(d, e)``.

    Parameters
    ----------
    d, e : ndarray
        Diagonal (length n) and off-diagonal (length n-1).
    max_iter : int, optional
        Inverse-iteration cap, default ``10 * n``.

    Returns
    -------
    lam : float
        Rayleigh quotient of the returned vector.
    vec : ndarray
        Unit eigenvector, sign fixed so the middle entry is positive.
    iterations : int
    """
    d = np.ascontiguousarray(d, dtype=float)
    e = np.ascontiguousarray(e, dtype=float)
    n = d.shape[0]
    if e.shape[0] != n - 1:
        raise ValueError("off-diagonal must have length n - 1")
    if max_iter is None:
        max_iter = 10 * n
    if _pick(backend) == "numba":
        lam, vec, it, ok = _tridiag_lowest_nb(d, e, int(max_iter))
    else:
        lam, vec, it, ok = _tridiag_lowest_np(d, e, int(max_iter))
    if not ok:
        raise ConvergenceError(f"inverse iteration did not converge in {it} steps", iterations=it)
    return float(lam), vec, int(it)


def tridiag_lowest_eigenvalue(d, e, backend=None):
    """Lowest eigenvalue only, by Sturm bisection (numba) or LAPACK stebz (numpy)."""
    d = np.ascontiguousarray(d, dtype=float)
    e = np.ascontiguousarray(e, dtype=float)
    if _pick(backend) == "numba":
        return float(_lowest_eigenvalue_nb(d, e)[0])
    return float(eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 0))[0])


# ---------------------------------------------------------------------------
# weighted arc problem on the circle, batched over many arcs
# ---------------------------------------------------------------------------


@njit
def _arc_matrix_nb(start, length, a2, n):
    # symmetric form M^{-1/2} K M^{-1/2} of -(p f')' = lam w f, Dirichlet ends
    dt = length / n
    m = n - 1
    d = np.empty(m)
    e = np.empty(m - 1)
    pm = np.empty(n)
    for k in range(n):
        t = start + (k + 0.5) * dt
        c = np.cos(t)
        s = np.sin(t)
        pm[k] = a2 / (c * c + a2 * s * s)
    w = np.empty(m)
    for k in range(m):
        t = start + (k + 1) * dt
        c = np.cos(t)
        s = np.sin(t)
        w[k] = c * c + a2 * s * s
    inv = 1.0 / (dt * dt)
    for k in range(m):
        d[k] = (pm[k] + pm[k + 1]) * inv / w[k]
    for k in range(m - 1):
        e[k] = -pm[k + 1] * inv / np.sqrt(w[k] * w[k + 1])
    return d, e


@njit
def _arc_batch_nb(starts, lengths, a2, n):
    out = np.empty(starts.shape[0])
    for i in range(starts.shape[0]):
        d, e = _arc_matrix_nb(starts[i], lengths[i], a2, n)
        out[i] = _lowest_eigenvalue_nb(d, e)[0]
    return out


def _arc_matrix_np(start, length, a2, n):
    dt = length / n
    tm = start + (np.arange(n) + 0.5) * dt
    pm = a2 / (np.cos(tm) ** 2 + a2 * np.sin(tm) ** 2)
    tn = start + np.arange(1, n) * dt
    w = np.cos(tn) ** 2 + a2 * np.sin(tn) ** 2
    d = (pm[:-1] + pm[1:]) / dt**2 / w
    e = -pm[1:-1] / dt**2 / np.sqrt(w[:-1] * w[1:])
    return d, e


def _arc_batch_np(starts, lengths, a2, n):
    out = np.empty(len(starts))
    for i, (s, ell) in enumerate(zip(starts, lengths)):
        d, e = _arc_matrix_np(s, ell, a2, n)
        out[i] = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 0))[0]
    return out


def arc_eigenvalues(starts, lengths, a2: float, n: int, backend=None):
    """Lowest eigenvalue of the weighted arc problem for each ``(start, length)``.

    The arc is ``(start, start + length)`` and the operator uses ``diag(1, a2)``.
    """
    starts = np.ascontiguousarray(starts, dtype=float).ravel()
    lengths = np.ascontiguousarray(lengths, dtype=float).ravel()
    if starts.shape != lengths.shape:
        raise ValueError("starts and lengths must have the same length")
    if _pick(backend) == "numba":
        return _arc_batch_nb(starts, lengths, float(a2), int(n))
    return _arc_batch_np(starts, lengths, float(a2), int(n))


def arc_matrix(start, length, a2, n, backend=None):
    if _pick(backend) == "numba":
        return _arc_matrix_nb(float(start), float(length), float(a2), int(n))
    return _arc_matrix_np(float(start), float(length), float(a2), int(n))


# ---------------------------------------------------------------------------
# flat-index stencil machinery (2D and 3D)
# ---------------------------------------------------------------------------


@njit
def _apply_nb(u, idx, offs, wts, out):
    for t in range(idx.shape[0]):
        p = idx[t]
        acc = 0.0
        for k in range(offs.shape[0]):
            acc += wts[k] * u[p + offs[k]]
        out[p] = acc


def _apply_np(u, idx, offs, wts, out):
    acc = np.zeros(idx.shape[0])
    for k in range(offs.shape[0]):
        acc += wts[k] * u[idx + offs[k]]
    out[idx] = acc


def stencil_apply(u_flat, idx, offs, wts, backend=None):
    """``sum_k wts[k] * u[p + offs[k]]`` at every flat index ``p`` in ``idx``; zero elsewhere."""
    out = np.zeros_like(u_flat)
    if _pick(backend) == "numba":
        _apply_nb(u_flat, idx, offs, wts, out)
    else:
        _apply_np(u_flat, idx, offs, wts, out)
    return out


@njit
def _sor_nb(u, f, c, idx, color_ptr, offs, wts, center, omega, sweeps, floor):
    # solves (-L + c) u = f on idx; L has centre weight `center` and
    # neighbour weights wts at offsets offs (centre excluded)
    ncol = color_ptr.shape[0] - 1
    for _ in range(sweeps):
        for col in range(ncol):
            for t in range(color_ptr[col], color_ptr[col + 1]):
                p = idx[t]
                acc = f[p]
                for k in range(offs.shape[0]):
                    acc += wts[k] * u[p + offs[k]]
                unew = u[p] + omega * (acc / (c[p] - center) - u[p])
                u[p] = unew if unew > floor else floor


def _sor_np(u, f, c, idx, color_ptr, offs, wts, center, omega, sweeps, floor):
    for _ in range(sweeps):
        for col in range(len(color_ptr) - 1):
            sel = idx[color_ptr[col]:color_ptr[col + 1]]
            acc = f[sel].copy()
            for k in range(offs.shape[0]):
                acc += wts[k] * u[sel + offs[k]]
            unew = u[sel] + omega * (acc / (c[sel] - center) - u[sel])
            u[sel] = np.maximum(unew, floor)


def sor_sweeps(u_flat, f_flat, c_flat, idx, color_ptr, offs, wts, center, omega, sweeps, floor=-np.inf,
               backend=None):
    """In-place multicolor SOR sweeps for ``(-L + c) u = f``.

    Nodes of one color never neighbour each other, so the vectorized numpy
    sweep visits nodes in exactly the same dependency order as the loop.
    With a finite ``floor`` the sweep is projected onto ``u >= floor``.
    """
    if _pick(backend) == "numba":
        _sor_nb(u_flat, f_flat, c_flat, idx, color_ptr, offs, wts, float(center), float(omega), int(sweeps), float(floor))
    else:
        _sor_np(u_flat, f_flat, c_flat, idx, color_ptr, offs, wts, float(center), float(omega), int(sweeps), float(floor))
    return u_flat


# ---------------------------------------------------------------------------
# kernel-weighted Dirichlet integrals over a family of concentric balls
# ---------------------------------------------------------------------------


@njit
def _kernel_value(s, delta, dim):
    if dim == 2:
        return 1.0
    if s <= delta:
        return 0.5 * dim * delta ** (2 - dim) + 0.5 * (2 - dim) * delta ** (-dim) * s * s
    return s ** (2.0 - dim)


@njit
def _ball_weight(radius, r, h):
    # C^2 quintic step from 1 to 0 across |x| in [radius - h, radius + h]
    t = (radius - r) / (2.0 * h) + 0.5
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def _ball_weight_np(radius, r, h):
    t = np.clip((radius - r) / (2.0 * h) + 0.5, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


@njit
def _ball_2d_nb(u, extra, origin, h, x0, radii, deltas, a, lo, hi, weighted):
    nr = radii.shape[0]
    out = np.zeros(nr)
    has_extra = extra.size > 0
    inv = 0.5 / h
    for i in range(lo[0], hi[0]):
        xc = origin[0] + (i + 0.5) * h - x0[0]
        for j in range(lo[1], hi[1]):
            yc = origin[1] + (j + 0.5) * h - x0[1]
            r = np.sqrt(xc * xc + yc * yc)
            if r >= radii[nr - 1] + h:
                continue
            gx = (u[i + 1, j] - u[i, j] + u[i + 1, j + 1] - u[i, j + 1]) * inv
            gy = (u[i, j + 1] - u[i, j] + u[i + 1, j + 1] - u[i + 1, j]) * inv
            dens = a[0] * gx * gx + a[1] * gy * gy
            if has_extra:
                dens += extra[i, j]
            for k in range(nr):
                wgt = _ball_weight(radii[k], r, h)
                if wgt == 0.0:
                    continue
                out[k] += wgt * dens
    return out * h * h


@njit
def _ball_3d_nb(u, extra, origin, h, x0, radii, deltas, a, lo, hi, weighted):
    nr = radii.shape[0]
    out = np.zeros(nr)
    has_extra = extra.size > 0
    inv = 0.25 / h
    rmax = radii[nr - 1] + h
    for i in range(lo[0], hi[0]):
        xc = origin[0] + (i + 0.5) * h - x0[0]
        for j in range(lo[1], hi[1]):
            yc = origin[1] + (j + 0.5) * h - x0[1]
            for l in range(lo[2], hi[2]):
                zc = origin[2] + (l + 0.5) * h - x0[2]
                r = np.sqrt(xc * xc + yc * yc + zc * zc)
                if r >= rmax:
                    continue
                u000 = u[i, j, l]
                u100 = u[i + 1, j, l]
                u010 = u[i, j + 1, l]
                u001 = u[i, j, l + 1]
                u110 = u[i + 1, j + 1, l]
                u101 = u[i + 1, j, l + 1]
                u011 = u[i, j + 1, l + 1]
                u111 = u[i + 1, j + 1, l + 1]
                gx = (u100 - u000 + u110 - u010 + u101 - u001 + u111 - u011) * inv
                gy = (u010 - u000 + u110 - u100 + u011 - u001 + u111 - u101) * inv
                gz = (u001 - u000 + u101 - u100 + u011 - u010 + u111 - u110) * inv
                dens = a[0] * gx * gx + a[1] * gy * gy + a[2] * gz * gz
                if has_extra:
                    dens += extra[i, j, l]
                if dens == 0.0:
                    continue
                s = np.sqrt(xc * xc / a[0] + yc * yc / a[1] + zc * zc / a[2])
                for k in range(nr):
                    wgt = _ball_weight(radii[k], r, h)
                    if wgt == 0.0:
                        continue
                    if weighted:
                        out[k] += wgt * dens * _kernel_value(s, deltas[k], 3)
                    else:
                        out[k] += wgt * dens
    return out * h * h * h


def _cell_gradient_np(block, h):
    # centroid gradient of the multilinear interpolant on each cell of `block`
    dim = block.ndim
    grads = []
    for ax in range(dim):
        diff = np.diff(block, axis=ax)
        for other in range(dim):
            if other != ax:
                diff = 0.5 * (diff[(slice(None),) * other + (slice(None, -1),)] + diff[(slice(None),) * other + (slice(1, None),)])
        grads.append(diff / h)
    return grads


def _ball_np(u, extra, origin, h, x0, radii, deltas, a, lo, hi, weighted, slab=16):
    dim = u.ndim
    nr = len(radii)
    out = np.zeros(nr)
    for s0 in range(lo[0], hi[0], slab):
        s1 = min(s0 + slab, hi[0])
        sl = [slice(s0, s1 + 1)] + [slice(lo[d], hi[d] + 1) for d in range(1, dim)]
        grads = _cell_gradient_np(u[tuple(sl)], h)
        dens = sum(a[d] * grads[d] ** 2 for d in range(dim))
        if extra.size > 0:
            dens = dens + extra[tuple([slice(s0, s1)] + [slice(lo[d], hi[d]) for d in range(1, dim)])]
        axes = [origin[0] + (np.arange(s0, s1) + 0.5) * h - x0[0]]
        axes += [origin[d] + (np.arange(lo[d], hi[d]) + 0.5) * h - x0[d] for d in range(1, dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        r = np.sqrt(sum(m * m for m in mesh))
        if dim == 3:
            sq = np.sqrt(sum(mesh[d] ** 2 / a[d] for d in range(dim)))
        for k in range(nr):
            wgt = _ball_weight_np(radii[k], r, h)
            if dim == 3 and weighted:
                dl = deltas[k]
                ker = np.where(
                    sq <= dl,
                    1.5 / dl - 0.5 * dl**-3 * sq * sq,
                    1.0 / np.maximum(sq, 1e-300),
                )
                out[k] += np.sum(wgt * dens * ker)
            else:
                out[k] += np.sum(wgt * dens)
    return out * h**dim


def ball_integrals(values, origin, h, x0, radii, deltas, a, extra=None, weighted=True, backend=None):
    """Kernel-weighted energy integrals over concentric balls ``B_r(x0)``.

    Parameters
    ----------
    values : ndarray
        Nodal samples, 2D or 3D.
    origin, h
        Grid origin (node 0) and spacing.
    radii : array_like
        Increasing radii; cells are weighted by a C^2 step of width ``2 h``
        centred on each sphere, which keeps lattice (aliasing) errors small.
    deltas : array_like
        Kernel regularization radius per ball (ignored in 2D).
    a : array_like
        Diagonal of the ellipticity matrix; used both in the energy density
        and in the kernel.
    extra : ndarray, optional
        Cell-centred zero-order density added to the gradient density.
    weighted : bool
        In 3D, multiply by the regularized fundamental solution. Plain
        integrals (``False``) are used for the frequency function.

    Returns
    -------
    ndarray
        One integral per radius.
    """
    u = np.ascontiguousarray(values, dtype=float)
    dim = u.ndim
    origin = np.asarray(origin, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    radii = np.ascontiguousarray(radii, dtype=float)
    deltas = np.ascontiguousarray(deltas, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    if extra is None:
        extra = np.zeros((0,) * dim)
    extra = np.ascontiguousarray(extra, dtype=float)
    rmax = radii[-1] + h
    lo = np.maximum(np.floor((x0 - rmax - origin) / h).astype(np.int64) - 1, 0)
    hi = np.minimum(np.ceil((x0 + rmax - origin) / h).astype(np.int64) + 1, np.array(u.shape) - 1)
    if _pick(backend) == "numba":
        fn = _ball_2d_nb if dim == 2 else _ball_3d_nb
        return fn(u, extra, origin, float(h), x0, radii, deltas, a, lo, hi, bool(weighted))
    return _ball_np(u, extra, origin, float(h), x0, radii, deltas, a, lo, hi, bool(weighted))
