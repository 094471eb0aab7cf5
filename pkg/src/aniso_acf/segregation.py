"""Finite-difference solvers for the two competition systems and their diagnostics.

Lotka-Volterra kind:   ``div(A_i grad u_i) = beta u_i sum_j b_ij u_j`` with
segregated Dirichlet traces.
Variational kind:      ``-div(A_i grad u_i) = f_i(u_i) - beta u_i sum_j b_ij u_j^2``
with zero traces; this is the Euler-Lagrange system of

    E = sum_i int <A_i grad u_i, grad u_i>/2 - F_i(u_i) + beta/2 sum_{i<j} b_ij int u_i^2 u_j^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import as_spd
from .errors import ConvergenceError
from .grid import Grid, SampledField
from .stencil import assemble_operator

LV = "lotka-volterra"
VARIATIONAL = "variational"


@dataclass(frozen=True)
class Reaction:
    """Polynomial reaction ``f(x, u) = sum coef * x^xpow * u^upow``.

    ``terms`` is a tuple of ``(coef, upow, xpow)`` with ``xpow`` a tuple of
    per-axis exponents (empty for x-independent terms).
    """

    terms: tuple

    def __post_init__(self):
        clean = []
        for coef, upow, xpow in self.terms:
            if int(upow) < 0 or any(int(e) < 0 for e in xpow):
                raise ValueError("reaction exponents must be non-negative")
            clean.append((float(coef), int(upow), tuple(int(e) for e in xpow)))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def logistic(cls, rate: float) -> "Reaction":
        """``rate * u (1 - u)``."""
        return cls(((rate, 1, ()), (-rate, 2, ())))

    @classmethod
    def graded_logistic(cls, rate: float, left: float, right: float, axis: int = 0, dim: int = 2) -> "Reaction":
        """``rate * u (m(x) - u)`` with carrying capacity ``m`` linear from ``left`` to ``right`` on [0, 1]."""
        e = [0] * dim
        e[axis] = 1
        return cls(((rate * left, 1, ()), (rate * (right - left), 1, tuple(e)), (-rate, 2, ())))

    def bind(self, points) -> "BoundReaction":
        """Coefficient fields of each power of ``u`` at ``points`` (trailing axis = dim)."""
        points = np.asarray(points, dtype=float)
        coeffs = {}
        for coef, upow, xpow in self.terms:
            c = np.full(points.shape[:-1], coef)
            for d, e in enumerate(xpow):
                if e:
                    c = c * points[..., d] ** e
            coeffs[upow] = coeffs.get(upow, 0.0) + c
        top = max(coeffs) if coeffs else 0
        return BoundReaction([coeffs.get(p, np.zeros(points.shape[:-1])) for p in range(top + 1)])


class BoundReaction:
    """``f(u) = sum_p coeffs[p] u^p`` with coefficient arrays fixed on a point set."""

    def __init__(self, coeffs):
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]

    def __call__(self, u):
        out = np.zeros_like(u)
        for c in reversed(self.coeffs):
            out = out * u + c
        return out

    def primitive(self, u):
        out = np.zeros_like(u)
        for p in range(len(self.coeffs) - 1, -1, -1):
            out = out * u + self.coeffs[p] / (p + 1)
        return out * u

    def derivative(self, u):
        out = np.zeros_like(u)
        for p in range(len(self.coeffs) - 1, 0, -1):
            out = out * u + p * self.coeffs[p]
        return out

    def stabilizer(self, upper: float = 1.5):
        """Nodewise ``S >= -df/du`` on ``0 <= u <= upper`` (sampled, 5% margin)."""
        worst = np.zeros(np.shape(self.coeffs[0]))
        for t in np.linspace(0.0, upper, 61):
            worst = np.maximum(worst, -self.derivative(np.full(worst.shape, t)))
        return 1.05 * worst


@dataclass
class SystemSpec:
    """One competition system on a rectangle.

    ``traces`` holds one nodal array per component whose boundary values are
    the Dirichlet data (interior values serve as the initial guess).
    """

    kind: str
    matrices: list
    couplings: np.ndarray
    grid: Grid
    traces: list
    reactions: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in (LV, VARIATIONAL):
            raise ValueError(f"kind must be {LV!r} or {VARIATIONAL!r}")
        self.matrices = [as_spd(m) for m in self.matrices]
        k = len(self.matrices)
        if k < 2:
            raise ValueError("need at least two components")
        if any(m.dim != self.grid.dim for m in self.matrices):
            raise ValueError("matrix and grid dimension differ")
        b = np.asarray(self.couplings, dtype=float)
        if b.shape != (k, k):
            raise ValueError("couplings must be a k x k array")
        off = ~np.eye(k, dtype=bool)
        if np.any(b[off] <= 0):
            raise ValueError("couplings b_ij must be positive")
        self.couplings = b
        self.traces = [np.asarray(t, dtype=float).reshape(self.grid.shape) for t in self.traces]
        if len(self.traces) != k:
            raise ValueError("one trace per component")
        bnd = self.grid.boundary_mask()
        if self.kind == LV:
            for i in range(k):
                if np.any(self.traces[i][bnd] < 0):
                    raise ValueError("traces must be non-negative")
                for j in range(i + 1, k):
                    if np.any(self.traces[i][bnd] * self.traces[j][bnd] != 0):
                        raise ValueError("boundary traces are not segregated")
        else:
            if not np.allclose(b[off], b.T[off]):
                raise ValueError("variational couplings must be symmetric")
            if len(self.reactions) != k:
                raise ValueError("one reaction per component")
            for t in self.traces:
                if np.any(t[bnd] != 0):
                    raise ValueError("variational kind uses zero boundary traces")

    @property
    def k(self) -> int:
        return len(self.matrices)


@dataclass
class SimResult:
    fields: list
    beta: float
    iterations: int
    residual: float
    energy: float | None = None
    energy_history: list = field(default_factory=list)
    spec: SystemSpec | None = field(default=None, repr=False)


def cubic_ramp(t, eps: float = 0.05):
    """C^1 ramp: 0 for t <= 0, ``t^2/eps - t^3/(3 eps^2)`` on (0, eps), ``t - eps/3`` beyond."""
    t = np.asarray(t, dtype=float)
    mid = t * t / eps - t**3 / (3 * eps * eps)
    return np.where(t <= 0, 0.0, np.where(t < eps, mid, t - eps / 3))


def default_lv_spec(n: int = 129, a2: float = 4.0, eps: float = 0.05) -> SystemSpec:
    """Two components on the unit square, ``A_1 = diag(1, a2)``, ``A_2 = Id``, ``b = 1``."""
    grid = Grid.unit_square(n)
    x = grid.mesh()[0]
    t1 = cubic_ramp(x - 0.5, eps)
    t2 = cubic_ramp(0.5 - x, eps)
    return SystemSpec(LV, [np.diag([1.0, a2]), np.eye(2)], np.array([[0.0, 1.0], [1.0, 0.0]]), grid, [t1, t2])


def default_variational_spec(n: int = 129, a2: float = 4.0, rate: float = 150.0) -> SystemSpec:
    """Two logistic species with zero traces, one favoured on each half of the unit square.

    Carrying capacities run linearly in ``x_1`` from 1.5 to -0.5 (species 0)
    and mirrored (species 1), which pins a segregated interface near
    ``x_1 = 1/2``. Initial guesses are left/right bumps.
    """
    grid = Grid.unit_square(n)
    x, y = grid.mesh()
    bump = np.sin(np.pi * y)
    u1 = np.where(x < 0.5, np.sin(2 * np.pi * x), 0.0) * bump * 0.5
    u2 = np.where(x > 0.5, np.sin(2 * np.pi * (x - 0.5)), 0.0) * bump * 0.5
    bnd = grid.boundary_mask()
    u1[bnd] = 0.0
    u2[bnd] = 0.0
    return SystemSpec(
        VARIATIONAL,
        [np.diag([1.0, a2]), np.eye(2)],
        np.array([[0.0, 1.0], [1.0, 0.0]]),
        grid,
        [u1, u2],
        [Reaction.graded_logistic(rate, 1.5, -0.5), Reaction.graded_logistic(rate, -0.5, 1.5)],
    )


def _node_weights(grid: Grid):
    w = np.ones(grid.shape)
    for d in range(grid.dim):
        idx = [slice(None)] * grid.dim
        idx[d] = 0
        w[tuple(idx)] *= 0.5
        idx[d] = -1
        w[tuple(idx)] *= 0.5
    return w * grid.h**grid.dim


# ---------------------------------------------------------------------------
# Lotka-Volterra
# ---------------------------------------------------------------------------


def _lv_residual(ops, us, spec, beta):
    worst = 0.0
    b = spec.couplings
    for i, op in enumerate(ops):
        c = beta * sum(b[i, j] * us[j] for j in range(spec.k) if j != i)
        r = op.apply(us[i]) - c * us[i]
        diag = -op.center + c
        interior = ~spec.grid.boundary_mask()
        worst = max(worst, float(np.max(np.abs(r[interior]) / diag[interior])))
    return worst


def solve_lv(
    spec: SystemSpec,
    beta: float,
    initial=None,
    tol: float = 1e-8,
    relaxation: float = 0.7,
    sor_omega: float = 1.9,
    inner_sweeps: int = 2,
    max_sweeps: int = 100_000,
    backend=None,
) -> SimResult:
    """Component-cyclic fixed point for the Lotka-Volterra system.

    Each outer step freezes the competitors, runs ``inner_sweeps`` projected
    SOR sweeps of ``(-L_i + beta sum_j b_ij u_j) u_i = 0`` and under-relaxes
    the update by ``relaxation``. Stops when the sup-norm change of an outer
    step drops below ``tol``.

    Raises
    ------
    ConvergenceError
        More than ``max_sweeps`` SOR sweeps, with the change history.
    """
    if spec.kind != LV:
        raise ValueError("solve_lv needs a lotka-volterra spec")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    ops = [assemble_operator(m.entries, spec.grid) for m in spec.matrices]
    src = initial if initial is not None else spec.traces
    us = [np.ascontiguousarray(np.array(u, dtype=float).reshape(spec.grid.shape)) for u in src]
    bnd = spec.grid.boundary_mask()
    for u, t in zip(us, spec.traces):
        u[bnd] = t[bnd]
    zero = np.zeros(spec.grid.shape)
    b = spec.couplings
    sweeps = 0
    history = []
    while True:
        change = 0.0
        for i, op in enumerate(ops):
            c = beta * sum(b[i, j] * us[j] for j in range(spec.k) if j != i) if beta > 0 else zero
            trial = us[i].copy()
            op.sor(trial, zero, c, omega=sor_omega, sweeps=inner_sweeps, floor=0.0, backend=backend)
            step = relaxation * (trial - us[i])
            us[i] += step
            change = max(change, float(np.max(np.abs(step))))
        sweeps += inner_sweeps
        history.append(change)
        if change < tol:
            break
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Lotka-Volterra iteration exceeded {max_sweeps} sweeps (last change {change:.3e})",
                iterations=sweeps,
                history=history[-100:],
            )
    for u in us:
        if u.min() < -1e-10:
            raise ConvergenceError("negative undershoot in Lotka-Volterra iterate", iterations=sweeps)
        np.maximum(u, 0.0, out=u)
    res = _lv_residual(ops, us, spec, beta)
    return SimResult([SampledField(spec.grid, u) for u in us], float(beta), sweeps, res, spec=spec)


def harmonic_extension(A, trace, grid: Grid, tol: float = 1e-10, backend=None):
    """Discrete ``div(A grad u) = 0`` with the boundary values of ``trace``."""
    op = assemble_operator(A, grid)
    u = np.ascontiguousarray(np.array(trace, dtype=float).reshape(grid.shape))
    zero = np.zeros(grid.shape)
    omega = 2.0 / (1.0 + math.sin(math.pi * grid.h / max(np.subtract(grid.upper, grid.origin))))
    for _ in range(200_000 // 10):
        prev = u.copy()
        op.sor(u, zero, zero, omega=omega, sweeps=10, backend=backend)
        if np.max(np.abs(u - prev)) < tol:
            return u
    raise ConvergenceError("harmonic extension did not converge")


# ---------------------------------------------------------------------------
# variational system
# ---------------------------------------------------------------------------


def variational_energy(ops, us, spec, beta, reactions=None):
    """Discrete energy whose gradient is the stencil system (zero traces)."""
    hd = spec.grid.h**spec.grid.dim
    if reactions is None:
        reactions = [r.bind(spec.grid.points()) for r in spec.reactions]
    e = 0.0
    for op, u, f in zip(ops, us, reactions):
        e += hd * float(np.sum(-0.5 * u * op.apply(u) - f.primitive(u)))
    b = spec.couplings
    for i in range(spec.k):
        for j in range(i + 1, spec.k):
            e += 0.5 * beta * b[i, j] * hd * float(np.sum(us[i] ** 2 * us[j] ** 2))
    return e


def _variational_residual(ops, us, spec, beta, reactions):
    worst = 0.0
    b = spec.couplings
    interior = ~spec.grid.boundary_mask()
    for i, (op, f) in enumerate(zip(ops, reactions)):
        c = beta * sum(b[i, j] * us[j] ** 2 for j in range(spec.k) if j != i)
        r = op.apply(us[i]) + f(us[i]) - c * us[i]
        # a zero component sitting where the residual pushes it negative is a KKT point
        active = (us[i] <= 0) & (r < 0)
        r = np.where(active, 0.0, r)
        diag = -op.center + c
        worst = max(worst, float(np.max(np.abs(r[interior]) / diag[interior])))
    return worst


def solve_variational(
    spec: SystemSpec,
    beta: float,
    initial=None,
    tau: float | None = None,
    energy_tol: float = 1e-10,
    residual_tol: float = 1e-6,
    sor_omega: float = 1.8,
    inner_sweeps: int = 4,
    max_steps: int = 200_000,
    backend=None,
) -> SimResult:
    """Energy-descent iteration for the variational system.

    Each step minimizes, component by component, a quadratic majorant of the
    energy: the reaction is linearized with the stabilizer ``S >= -f'``,
    competitors are frozen, and ``inner_sweeps`` projected SOR sweeps (which
    never increase a convex quadratic) approximate the minimizer. Every step
    therefore lowers the discrete energy. ``tau`` adds the proximal term
    ``(u - u_old)^2 / (2 tau)``; ``None`` means no proximal term.

    Raises
    ------
    ConvergenceError
        Energy rising for 10 consecutive steps, or step cap reached.
    """
    if spec.kind != VARIATIONAL:
        raise ValueError("solve_variational needs a variational spec")
    ops = [assemble_operator(m.entries, spec.grid) for m in spec.matrices]
    src = initial if initial is not None else spec.traces
    us = [np.ascontiguousarray(np.maximum(np.array(u, dtype=float).reshape(spec.grid.shape), 0.0)) for u in src]
    bnd = spec.grid.boundary_mask()
    for u in us:
        u[bnd] = 0.0
    reactions = [r.bind(spec.grid.points()) for r in spec.reactions]
    upper = max(1.5, 1.2 * max(float(u.max()) for u in us))
    stab = [f.stabilizer(upper) for f in reactions]
    inv_tau = 0.0 if tau is None else 1.0 / tau
    b = spec.couplings
    energy = variational_energy(ops, us, spec, beta, reactions)
    history = [energy]
    rises = 0
    steps = 0
    res = math.inf
    while steps < max_steps:
        for i, (op, f) in enumerate(zip(ops, reactions)):
            s = stab[i] + inv_tau
            c = s + beta * sum(b[i, j] * us[j] ** 2 for j in range(spec.k) if j != i)
            rhs = s * us[i] + f(us[i])
            op.sor(us[i], rhs, c, omega=sor_omega, sweeps=inner_sweeps, floor=0.0, backend=backend)
        steps += 1
        new = variational_energy(ops, us, spec, beta, reactions)
        history.append(new)
        if new > energy + 1e-13 * max(abs(energy), 1.0):
            rises += 1
            if rises >= 10:
                raise ConvergenceError("energy increased for 10 consecutive steps", iterations=steps, history=history[-20:])
        else:
            rises = 0
        rel = abs(new - energy) / max(abs(new), 1e-300)
        energy = new
        if steps % 10 == 0 or rel < energy_tol:
            res = _variational_residual(ops, us, spec, beta, reactions)
            if (rel < energy_tol and res < residual_tol) or res < 1e-3 * residual_tol:
                break
    else:
        raise ConvergenceError(f"variational flow hit the {max_steps}-step cap", iterations=steps, history=history[-20:])
    return SimResult([SampledField(spec.grid, u) for u in us], float(beta), steps, res, energy, history, spec=spec)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def holder_seminorm(fld: SampledField, alpha: float, sample_pairs: int = 100_000, seed: int = 42) -> float:
    """Max of ``|u(x) - u(y)| / |x - y|^alpha`` over neighbour pairs and seeded random pairs.

    Small grids (at most ``sample_pairs`` distinct pairs) are treated exhaustively.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    v = fld.values
    h = fld.h
    best = 0.0
    for ax in range(v.ndim):
        d = np.abs(np.diff(v, axis=ax))
        if d.size:
            best = max(best, float(d.max()) / h**alpha)
    pts = fld.grid.points().reshape(-1, fld.dim)
    flat = v.reshape(-1)
    n = flat.size
    if n * (n - 1) // 2 <= sample_pairs:
        for i in range(n - 1):
            dist = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
            best = max(best, float(np.max(np.abs(flat[i + 1:] - flat[i]) / dist**alpha)))
        return best
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, sample_pairs)
    j = rng.integers(0, n, sample_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    dist = np.linalg.norm(pts[i] - pts[j], axis=1)
    return max(best, float(np.max(np.abs(flat[i] - flat[j]) / dist**alpha)))


def overlap_metrics(result: SimResult, couplings=None):
    """Pairwise ``int u_i u_j`` and per-component ``beta int u_i sum_j b_ij u_j``.

    Midpoint rule over cells with bilinear (trilinear) centre values, so
    constants integrate exactly on the box.
    """
    us = [_cell_mean(f.values) for f in result.fields]
    k = len(us)
    if couplings is None:
        couplings = result.spec.couplings if result.spec is not None else np.ones((k, k)) - np.eye(k)
    b = np.asarray(couplings, dtype=float)
    cell = result.fields[0].h ** result.fields[0].dim
    prod = {}
    for i in range(k):
        for j in range(i + 1, k):
            prod[(i, j)] = prod[(j, i)] = float(np.sum(us[i] * us[j])) * cell
    pairs = {(i, j): prod[(i, j)] for i in range(k) for j in range(i + 1, k)}
    scaled = [result.beta * sum(b[i, j] * prod[(i, j)] for j in range(k) if j != i) for i in range(k)]
    return {"overlap": pairs, "scaled": scaled, "scaled_total": float(sum(scaled))}


@dataclass
class InterfaceStats:
    median: float
    mean: float
    max: float
    count: int
    values: np.ndarray


def _interface_points(w: SampledField):
    v = w.values
    pts = []
    origin = np.asarray(w.grid.origin)
    for ax in range(v.ndim):
        lo = [slice(None)] * v.ndim
        hi = [slice(None)] * v.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        s0, s1 = v[tuple(lo)], v[tuple(hi)]
        cross = ((s0 > 0) & (s1 <= 0)) | ((s0 <= 0) & (s1 > 0))
        if not cross.any():
            continue
        coords = np.argwhere(cross).astype(float)
        coords[:, ax] += s0[cross] / (s0[cross] - s1[cross])
        pts.append(origin + coords * w.h)
    return np.concatenate(pts) if pts else np.zeros((0, v.ndim))


def free_boundary_residual(u: SampledField, v: SampledField, A, kind: str = LV, offset: float | None = None):
    """Relative mismatch of the interface balance on the sign-change set of ``u - v``.

    ``LV``: ``|grad u| <A nu, nu> = |grad v|``; ``variational``:
    ``|grad u|^2 <A nu, nu> = |grad v|^2``. Here ``nu = grad v / |grad v|``
    and one-sided slopes are measured by differences of samples taken along
    the normal at ``offset`` and ``2 offset`` (default ``3 h``) on each side,
    which stays clear of the thin overlap layer.

    Raises
    ------
    ValueError
        When no interface is found.
    """
    A = as_spd(A).entries
    h = u.h
    s = 3 * h if offset is None else float(offset)
    w = u.with_values(u.values - v.values)
    pts = _interface_points(w)
    if not len(pts):
        raise ValueError("no interface found")
    lo = np.asarray(u.grid.origin) + 2 * s + h
    hi = np.asarray(u.grid.upper) - 2 * s - h
    pts = pts[np.all((pts >= lo) & (pts <= hi), axis=1)]
    if not len(pts):
        raise ValueError("no interior interface found")
    # normal from the smoothed difference field, pointing into the v phase
    g = w.sample_gradient(pts)
    gn = np.linalg.norm(g, axis=1)
    ok = gn > 0
    pts, g, gn = pts[ok], g[ok], gn[ok]
    nu = -g / gn[:, None]
    u1 = u.sample(pts - s * nu)
    u2 = u.sample(pts - 2 * s * nu)
    v1 = v.sample(pts + s * nu)
    v2 = v.sample(pts + 2 * s * nu)
    du = np.abs(u2 - u1) / s
    dv = np.abs(v2 - v1) / s
    anu = np.einsum("ni,ij,nj->n", nu, A, nu)
    if kind == LV:
        lhs, rhs = du * anu, dv
    elif kind == VARIATIONAL:
        lhs, rhs = du * du * anu, dv * dv
    else:
        raise ValueError(f"unknown kind {kind!r}")
    den = np.abs(lhs) + np.abs(rhs)
    keep = den > 0
    rel = np.abs(lhs - rhs)[keep] / den[keep]
    if not len(rel):
        raise ValueError("interface has vanishing slopes on both sides")
    return InterfaceStats(float(np.median(rel)), float(np.mean(rel)), float(np.max(rel)), int(len(rel)), rel)


def _cell_gradients(values, h):
    from .kernels import _cell_gradient_np

    return np.stack(_cell_gradient_np(values, h), axis=-1)


def _cell_mean(a):
    out = a
    for ax in range(a.ndim):
        sl0 = [slice(None)] * a.ndim
        sl1 = [slice(None)] * a.ndim
        sl0[ax] = slice(None, -1)
        sl1[ax] = slice(1, None)
        out = 0.5 * (out[tuple(sl0)] + out[tuple(sl1)])
    return out


def dirichlet_energy(fld: SampledField, A) -> float:
    """``int <A grad u, grad u>`` over the box, cell-midpoint rule on Q1 gradients."""
    g = _cell_gradients(fld.values, fld.h)
    return float(np.sum((g @ as_spd(A).entries.T) * g)) * fld.h**fld.dim


def bump_test_fields(grid: Grid, count: int = 8, seed: int = 42):
    """Smooth compactly supported test functions inside the box."""
    rng = np.random.default_rng(seed)
    lo = np.asarray(grid.origin)
    hi = np.asarray(grid.upper)
    out = []
    for _ in range(count):
        r = rng.uniform(0.15, 0.3) * float(np.min(hi - lo))
        c = rng.uniform(lo + r + 2 * grid.h, hi - r - 2 * grid.h)
        freq = rng.uniform(0, 3, size=grid.dim)

        def phi(p, c=c, r=r, freq=freq):
            s = np.sum((p - c) ** 2, axis=-1) / r**2
            eta = np.where(s < 1, (1 - s) ** 3, 0.0)
            return eta * np.cos(np.sum(freq * (p - c), axis=-1))

        out.append(phi)
    return out


def quasilinear_residual(w: SampledField, A, test_fields=None, A_negative=None) -> float:
    """``max_phi |int <B(w) grad w, grad phi>| / ||grad phi||_2`` with ``B = A`` on ``{w > 0}``.

    ``A_negative`` (default identity) is used on ``{w <= 0}``.
    """
    A = as_spd(A).entries
    An = np.eye(w.dim) if A_negative is None else as_spd(A_negative).entries
    if test_fields is None:
        test_fields = bump_test_fields(w.grid)
    gw = _cell_gradients(w.values, w.h)
    pos = _cell_mean(w.values) > 0
    flux = np.where(pos[..., None], gw @ A.T, gw @ An.T)
    cell = w.h**w.dim
    worst = 0.0
    for phi in test_fields:
        vals = SampledField.from_function(w.grid, phi).values
        gp = _cell_gradients(vals, w.h)
        num = abs(float(np.sum(flux * gp)) * cell)
        den = math.sqrt(float(np.sum(gp * gp)) * cell)
        if den > 0:
            worst = max(worst, num / den)
    return worst


@dataclass(frozen=True)
class BumpVectorField:
    """``Y(x) = (a + M (x - c)) eta(|x - c|^2 / R^2)`` with ``eta(s) = (1 - s)^3`` on ``s < 1``."""

    center: np.ndarray
    radius: float
    offset: np.ndarray
    linear: np.ndarray

    @classmethod
    def random(cls, grid: Grid, rng, margin: float = 0.05):
        lo = np.asarray(grid.origin)
        hi = np.asarray(grid.upper)
        r = float(rng.uniform(0.2, 0.35) * np.min(hi - lo))
        c = rng.uniform(lo + r + margin, hi - r - margin)
        return cls(c, r, rng.normal(size=grid.dim), rng.normal(size=(grid.dim, grid.dim)))

    def _parts(self, x):
        y = np.asarray(x, dtype=float) - self.center
        s = np.sum(y * y, axis=-1) / self.radius**2
        inside = s < 1
        eta = np.where(inside, (1 - s) ** 3, 0.0)
        deta = np.where(inside, -3 * (1 - s) ** 2, 0.0) * 2 / self.radius**2  # d eta / d y_k = deta * y_k
        poly = self.offset + y @ self.linear.T
        return y, eta, deta, poly

    def value(self, x):
        y, eta, _, poly = self._parts(x)
        return poly * eta[..., None]

    def jacobian(self, x):
        """``dY[..., l, k] = d Y_l / d x_k``."""
        y, eta, deta, poly = self._parts(x)
        return self.linear * eta[..., None, None] + poly[..., :, None] * (deta[..., None] * y)[..., None, :]

    def c1_norm(self, grid: Grid) -> float:
        pts = grid.cell_centers().reshape(-1, grid.dim)
        v = np.linalg.norm(self.value(pts), axis=-1).max()
        j = np.linalg.norm(self.jacobian(pts), axis=(-2, -1), ord=2).max()
        return float(max(v, j))

    def support_inside(self, grid: Grid) -> bool:
        lo = np.asarray(grid.origin)
        hi = np.asarray(grid.upper)
        return bool(np.all(self.center - self.radius > lo) and np.all(self.center + self.radius < hi))


@dataclass
class DomainVariation:
    value: float
    scale: float

    @property
    def relative(self) -> float:
        return abs(self.value) / self.scale if self.scale > 0 else 0.0


def domain_variation_residual(result: SimResult, Y, matrices=None, reactions=None, couplings=None) -> DomainVariation:
    """Left side of the domain-variation identity for a solution of the variational system.

    ``2 int sum_i (<dY A_i grad u_i, grad u_i> - f_i(u_i) <grad u_i, Y>)
    - int div Y (sum_i <A_i grad u_i, grad u_i> + beta sum_{i<j} b_ij u_i^2 u_j^2)``
    by the cell-midpoint rule. ``scale`` is ``||Y||_{C^1}`` times the total
    Dirichlet energy ``sum_i int <A_i grad u_i, grad u_i>``.
    """
    spec = result.spec
    grid = result.fields[0].grid
    mats = [as_spd(m).entries for m in (matrices or spec.matrices)]
    reacts = reactions or (spec.reactions if spec is not None else [])
    reacts = [r.bind(grid.cell_centers()) for r in reacts]
    b = np.asarray(couplings if couplings is not None else spec.couplings, dtype=float)
    if Y is None:
        return DomainVariation(0.0, 0.0)
    if not Y.support_inside(grid):
        raise ValueError("vector field support touches the boundary")
    centers = grid.cell_centers()
    yv = Y.value(centers)
    dy = Y.jacobian(centers)
    div = np.trace(dy, axis1=-2, axis2=-1)
    cell = grid.h**grid.dim
    total = 0.0
    energy = 0.0
    dens_sum = np.zeros(div.shape)
    cells_u = []
    for fld, Am, f in zip(result.fields, mats, reacts or [None] * len(mats)):
        g = _cell_gradients(fld.values, grid.h)
        ag = g @ Am.T
        dens = np.sum(ag * g, axis=-1)
        dens_sum += dens
        energy += float(np.sum(dens)) * cell
        # <dY A g, g>
        total += 2 * float(np.sum(np.einsum("...lk,...k,...l->...", dy, ag, g))) * cell
        uc = _cell_mean(fld.values)
        cells_u.append(uc)
        if f is not None:
            total -= 2 * float(np.sum(f(uc) * np.sum(g * yv, axis=-1))) * cell
    inter = np.zeros(div.shape)
    for i in range(len(cells_u)):
        for j in range(i + 1, len(cells_u)):
            inter += b[i, j] * cells_u[i] ** 2 * cells_u[j] ** 2
    total -= float(np.sum(div * (dens_sum + result.beta * inter))) * cell
    return DomainVariation(total, Y.c1_norm(grid) * energy)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class BetaSweepReport:
    betas: list
    rows: list
    alphas: list
    errors: dict = field(default_factory=dict)
    results: list = field(default_factory=list, repr=False)

    def column(self, name):
        return [row.get(name) for row in self.rows]


def _difference_field(spec: SystemSpec, res: SimResult):
    b = spec.couplings
    u1, u2 = res.fields[0].values, res.fields[1].values
    return res.fields[0].with_values(b[1, 0] * u1 - b[0, 1] * u2)


def beta_sweep(
    spec: SystemSpec,
    betas,
    alphas,
    seed: int = 42,
    sample_pairs: int = 100_000,
    dv_fields: int = 5,
    keep_results: bool = False,
    solver_kwargs=None,
) -> BetaSweepReport:
    """Solve at each beta (warm-started) and collect the diagnostics."""
    betas = [float(b) for b in betas]
    if any(b1 <= b0 for b0, b1 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly increasing")
    solver_kwargs = solver_kwargs or {}
    rows = []
    errors = {}
    results = []
    prev = None
    grid = spec.grid
    weights = _node_weights(grid)
    rng = np.random.default_rng(seed)
    ys = [BumpVectorField.random(grid, rng) for _ in range(dv_fields)] if spec.kind == VARIATIONAL else []
    for beta in betas:
        init = [f.values for f in prev.fields] if prev is not None else None
        try:
            if spec.kind == LV:
                res = solve_lv(spec, beta, initial=init, **solver_kwargs)
            else:
                res = solve_variational(spec, beta, initial=init, **solver_kwargs)
        except ConvergenceError as exc:
            errors[beta] = str(exc)
            break
        row = {"beta": beta, "iterations": res.iterations, "residual": res.residual}
        for i, fld in enumerate(res.fields):
            row[f"linf_{i}"] = float(np.max(np.abs(fld.values)))
            row[f"energy_{i}"] = dirichlet_energy(fld, spec.matrices[i])
            for a in alphas:
                row[f"holder_{i}_a{a:.4g}"] = holder_seminorm(fld, a, sample_pairs, seed)
        ov = overlap_metrics(res)
        for (i, j), val in ov["overlap"].items():
            row[f"overlap_{i}{j}"] = val
        for i, val in enumerate(ov["scaled"]):
            row[f"scaled_overlap_{i}"] = val
        if spec.k == 2:
            try:
                fb = free_boundary_residual(res.fields[0], res.fields[1], spec.matrices[0], spec.kind)
                row["free_boundary_median"] = fb.median
                row["free_boundary_max"] = fb.max
            except ValueError:
                row["free_boundary_median"] = math.nan
                row["free_boundary_max"] = math.nan
            if spec.kind == LV:
                row["quasilinear"] = quasilinear_residual(
                    _difference_field(spec, res), spec.matrices[0], A_negative=spec.matrices[1]
                )
        if spec.kind == VARIATIONAL:
            row["energy"] = res.energy
            dvs = [domain_variation_residual(res, Y) for Y in ys]
            row["domain_variation_max_rel"] = max(d.relative for d in dvs) if dvs else 0.0
        if prev is not None:
            row["cauchy_l2"] = math.sqrt(
                sum(float(np.sum(weights * (a.values - b.values) ** 2)) for a, b in zip(res.fields, prev.fields))
            )
        else:
            row["cauchy_l2"] = math.nan
        rows.append(row)
        if keep_results:
            results.append(res)
        prev = res
    return BetaSweepReport(betas[: len(rows)], rows, list(alphas), errors, results)
