"""Alternating minimization of the diffuse segmentation energy.

One outer iteration fits the two approximation fields for the current phase
field (exactly for p = 2, by descent otherwise), then advances the phase
field by a single semi-implicit gradient-flow step: diffusion implicit, the
well force and data forcing explicit, followed by a clamp to [0, 1].  Steps
that would raise the energy are rejected and the step size halves, so the
reported trace is nonincreasing by construction.

Also here: the sharp-to-diffuse reconstruction used by the convergence
experiments (optimal interface profile across the signed distance, plus
mass-normalized mollification of the fields).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.ndimage import convolve as nd_convolve

from .energy import (
    EnergyBreakdown,
    EnergyParams,
    at_energy,
    _grad_p_density,
    _vector_misfit_p,
)
from .errors import (
    CgDivergenceError,
    DegenerateSetError,
    NoProgressError,
)
from .grid import (
    Grid,
    IndicatorField,
    MultiField,
    ScalarField,
    require_same_grid,
    signed_distance,
    translate_cells,
)
from .potential import DoubleWell

MODES = ("smooth", "piecewise_constant")


@dataclass(frozen=True)
class SegmentationState:
    """The triple (phase field, fit on the phase, fit on its complement)."""

    v: ScalarField
    c1: MultiField
    c2: MultiField

    def __post_init__(self):
        require_same_grid(self.v, self.c1, self.c2)

    @property
    def grid(self) -> Grid:
        return self.v.grid

    def swapped(self) -> "SegmentationState":
        return SegmentationState(
            self.v.with_values(1.0 - self.v.values), self.c2, self.c1
        )


@dataclass(frozen=True)
class SolverConfig:
    max_outer: int = 200
    tol: float = 1e-7
    tau: float = 0.5
    eta: float = 1e-3
    cg_tol: float = 1e-10
    cg_max: int = 5000
    mode: str = "smooth"
    seed: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (0 < self.eta <= 1e-3):
            raise ValueError("eta must lie in (0, 1e-3]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


# ---------------------------------------------------------------------------
# sparse operators and linear solves
# ---------------------------------------------------------------------------


def _grad_ops(grid: Grid):
    dx = sp.diags([-np.ones(grid.nx), np.ones(grid.nx - 1)], [0, 1], format="lil")
    dx[-1, -1] = 0.0
    Gx = sp.kron(sp.eye(grid.ny), dx.tocsr() / grid.hx, format="csr")
    if grid.ny > 1:
        dy = sp.diags([-np.ones(grid.ny), np.ones(grid.ny - 1)], [0, 1], format="lil")
        dy[-1, -1] = 0.0
        Gy = sp.kron(dy.tocsr() / grid.hy, sp.eye(grid.nx), format="csr")
    else:
        Gy = sp.csr_matrix((grid.n_cells, grid.n_cells))
    return Gx, Gy


def _amg_preconditioner(A: sp.csr_matrix):
    import pyamg

    # plain (unsmoothed) aggregation: the smoothed variant estimates a
    # spectral radius from random vectors, which breaks run-to-run
    # determinism of the traces
    ml = pyamg.smoothed_aggregation_solver(A.tocsr(), max_coarse=16, smooth=None)
    return ml.aspreconditioner(cycle="V")


def _cg_solve(A, b, x0, rtol, maxiter, M=None) -> np.ndarray:
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    if info != 0:
        res = float(np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300))
        raise CgDivergenceError(
            f"conjugate gradients stalled (info={info}, residual={res:.3e})", res
        )
    return x


class _VStepSolver:
    """Cached operator I + coeff * G^T G with an AMG-preconditioned CG solve."""

    def __init__(self, grid: Grid, coeff: float):
        Gx, Gy = _grad_ops(grid)
        A = sp.eye(grid.n_cells, format="csr") + coeff * (Gx.T @ Gx + Gy.T @ Gy)
        self.A = A.tocsr()
        h2 = min(grid.hx, grid.hy if grid.ny > 1 else grid.hx) ** 2
        self.M = _amg_preconditioner(self.A) if coeff / h2 > 50.0 else None
        self.grid = grid
        self.coeff = coeff

    def solve(self, rhs: np.ndarray, x0: np.ndarray, cfg: SolverConfig) -> np.ndarray:
        return _cg_solve(self.A, rhs, x0, cfg.cg_tol, cfg.cg_max, self.M)


# ---------------------------------------------------------------------------
# field updates
# ---------------------------------------------------------------------------


class ConstantsFit(NamedTuple):
    c1: np.ndarray
    c2: np.ndarray
    degenerate1: bool
    degenerate2: bool


def _golden_section(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _fit_constant_side(w: np.ndarray, u0: MultiField, p: float, current) -> tuple[np.ndarray, bool]:
    total = float(w.sum())
    if total == 0.0:
        fallback = np.zeros(u0.m) if current is None else np.asarray(current, np.float64)
        return fallback, True
    vals = u0.values
    mean = np.tensordot(w, vals, axes=([0, 1], [0, 1])) / total
    if p == 2.0:
        return mean, False
    c = mean.copy()
    lo = vals.min(axis=(0, 1))
    hi = vals.max(axis=(0, 1))
    for _ in range(2 if u0.m > 1 else 1):
        for k in range(u0.m):
            others2 = np.zeros(u0.values.shape[:2])
            for kk in range(u0.m):
                if kk != k:
                    others2 += (vals[:, :, kk] - c[kk]) ** 2

            def misfit(ck):
                d2 = others2 + (vals[:, :, k] - ck) ** 2
                return float(np.sum(w * d2 ** (p / 2.0)))

            pad = max(1e-9, (hi[k] - lo[k]) * 1e-9)
            c[k] = _golden_section(misfit, lo[k] - pad, hi[k] + pad)
    return c, False


def fit_constants(v: ScalarField, u0: MultiField, p: float, current=None) -> ConstantsFit:
    """Best per-phase constants: weighted means at p = 2, channelwise
    golden-section otherwise.  A massless phase keeps its current value and
    raises the degeneracy flag."""
    require_same_grid(v, u0)
    cur1 = None if current is None else current[0]
    cur2 = None if current is None else current[1]
    c1, d1 = _fit_constant_side(np.abs(v.values), u0, p, cur1)
    c2, d2 = _fit_constant_side(np.abs(1.0 - v.values), u0, p, cur2)
    return ConstantsFit(c1, c2, d1, d2)


def _quad_field_energy(cvals, u0ch, w, mu, Gx, Gy) -> float:
    r = cvals - u0ch
    gx = Gx @ cvals
    gy = Gy @ cvals
    return float(np.sum(w * r * r) + mu * np.sum(w * (gx * gx)) + mu * np.sum(w * (gy * gy)))


def _fit_smooth_side(
    w2d: np.ndarray,
    u0: MultiField,
    params: EnergyParams,
    cfg: SolverConfig,
    current: MultiField,
) -> MultiField:
    g = u0.grid
    w = w2d.ravel()
    Gx, Gy = _grad_ops(g)
    if params.p == 2.0:
        A = sp.diags(w) + params.mu * (Gx.T @ sp.diags(w) @ Gx + Gy.T @ sp.diags(w) @ Gy)
        A = A.tocsr()
        M = _amg_preconditioner(A)
        out = np.empty_like(current.values)
        for k in range(u0.m):
            b = w * u0.channel(k).ravel()
            x0 = current.channel(k).ravel()
            x = _cg_solve(A, b, x0, cfg.cg_tol, cfg.cg_max, M)
            # CG truncation must never raise this side's energy
            if _quad_field_energy(x, u0.channel(k).ravel(), w, params.mu, Gx, Gy) > _quad_field_energy(
                x0, u0.channel(k).ravel(), w, params.mu, Gx, Gy
            ):
                x = x0
            out[:, :, k] = x.reshape(g.shape)
        return MultiField(g, out)
    return _fit_side_descent(w2d, u0, params, cfg, current)


def _fit_side_descent(
    w2d: np.ndarray,
    u0: MultiField,
    params: EnergyParams,
    cfg: SolverConfig,
    current: MultiField,
) -> MultiField:
    """Backtracking gradient descent for p != 2, on the same weighted energy."""
    g = u0.grid
    p = params.p
    mu = params.mu
    c = current.values.copy()
    hx, hy = g.hx, g.hy

    def energy(cv):
        st = MultiField(g, cv)
        mis = np.sum(_vector_misfit_p(st, u0, p) * w2d)
        grad = np.sum(_grad_p_density(st, p) * w2d)
        return float(mis + mu * grad)

    def gradient(cv):
        diff = cv - u0.values
        mag = np.sqrt(np.sum(diff * diff, axis=2)) + 1e-30
        dat = p * (mag ** (p - 2.0))[:, :, None] * diff * w2d[:, :, None]
        out = dat
        gmag2 = np.zeros(g.shape)
        gxs = []
        gys = []
        for k in range(cv.shape[2]):
            gx = np.zeros(g.shape)
            gy = np.zeros(g.shape)
            gx[:, :-1] = (cv[:, 1:, k] - cv[:, :-1, k]) / hx
            if g.ny > 1:
                gy[:-1, :] = (cv[1:, :, k] - cv[:-1, :, k]) / hy
            gxs.append(gx)
            gys.append(gy)
            gmag2 += gx * gx + gy * gy
        fac = mu * p * (gmag2 + 1e-30) ** (p / 2.0 - 1.0) * w2d
        for k in range(cv.shape[2]):
            qx = fac * gxs[k]
            qy = fac * gys[k]
            adj = np.zeros(g.shape)
            adj[:, :-1] -= qx[:, :-1] / hx
            adj[:, 1:] += qx[:, :-1] / hx
            if g.ny > 1:
                adj[:-1, :] -= qy[:-1, :] / hy
                adj[1:, :] += qy[:-1, :] / hy
            out[:, :, k] += adj
        return out

    e = energy(c)
    step = 1.0
    for _ in range(cfg.cg_max):
        grd = gradient(c)
        gn = float(np.max(np.abs(grd)))
        if gn < 1e-14:
            break
        improved = False
        while step > 1e-16:
            cand = c - step * grd
            ec = energy(cand)
            if ec < e - 1e-18:
                c, e = cand, ec
                improved = True
                step *= 1.3
                break
            step *= 0.5
        if not improved:
            break
        if step < 1e-16:
            break
    return MultiField(g, c)


def fit_smooth_fields(
    v: ScalarField,
    u0: MultiField,
    params: EnergyParams,
    cfg: SolverConfig,
    current: tuple[MultiField, MultiField] | None = None,
) -> tuple[MultiField, MultiField]:
    """Per-phase smooth fits with the floored weights max(|v|, eta).

    p = 2 solves the SPD normal equations by preconditioned CG per channel;
    other p descend on the same energy with backtracking.
    """
    require_same_grid(v, u0)
    if current is None:
        fit = fit_constants(v, u0, 2.0)
        current = (
            MultiField.constant(u0.grid, fit.c1),
            MultiField.constant(u0.grid, fit.c2),
        )
    w1 = np.maximum(np.abs(v.values), cfg.eta)
    w2 = np.maximum(np.abs(1.0 - v.values), cfg.eta)
    c1 = _fit_smooth_side(w1, u0, params, cfg, current[0])
    c2 = _fit_smooth_side(w2, u0, params, cfg, current[1])
    return c1, c2


def _semi_implicit_v(
    v: np.ndarray,
    forcing: np.ndarray,
    W: DoubleWell,
    params: EnergyParams,
    cfg: SolverConfig,
    tau: float,
    solver: _VStepSolver,
) -> np.ndarray:
    drive = forcing + (params.nu / (W.cw * params.eps)) * W.deriv(v)
    rhs = (v - tau * drive).ravel()
    out = solver.solve(rhs, v.ravel(), cfg)
    return np.clip(out.reshape(v.shape), 0.0, 1.0)


def _v_solver(grid: Grid, W: DoubleWell, params: EnergyParams, tau: float) -> _VStepSolver:
    kappa = 2.0 * params.nu * params.eps / W.cw
    return _VStepSolver(grid, tau * kappa)


def v_forcing(state: SegmentationState, u0: MultiField, params: EnergyParams) -> np.ndarray:
    """Cellwise data forcing: fit cost of phase 1 minus that of phase 2."""
    p = params.p
    A = _vector_misfit_p(state.c1, u0, p) + params.mu * _grad_p_density(state.c1, p)
    B = _vector_misfit_p(state.c2, u0, p) + params.mu * _grad_p_density(state.c2, p)
    return A - B


def update_v_step(
    state: SegmentationState,
    u0: MultiField,
    W: DoubleWell,
    params: EnergyParams,
    cfg: SolverConfig,
    tau: float | None = None,
    solver: _VStepSolver | None = None,
) -> ScalarField:
    """One semi-implicit, clamped gradient-flow step of the phase field."""
    require_same_grid(state.v, u0)
    t = cfg.tau if tau is None else tau
    if solver is None or solver.coeff != t * 2.0 * params.nu * params.eps / W.cw:
        solver = _v_solver(state.grid, W, params, t)
    forcing = v_forcing(state, u0, params)
    vals = _semi_implicit_v(state.v.values, forcing, W, params, cfg, t, solver)
    return state.v.with_values(vals)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


def _box_smooth(values: np.ndarray, passes: int = 2) -> np.ndarray:
    out = values
    for _ in range(passes):
        acc = out.copy()
        acc += translate_cells(out, 1, 0)
        acc += translate_cells(out, -1, 0)
        acc += translate_cells(out, 0, 1)
        acc += translate_cells(out, 0, -1)
        out = acc / 5.0
    return out


def _two_means_threshold(z: np.ndarray) -> float:
    lo, hi = float(z.min()), float(z.max())
    if hi <= lo:
        return lo
    t = 0.5 * (lo + hi)
    for _ in range(64):
        low = z[z <= t]
        high = z[z > t]
        if low.size == 0 or high.size == 0:
            break
        t_new = 0.5 * (float(low.mean()) + float(high.mean()))
        if abs(t_new - t) < 1e-12 * (hi - lo):
            t = t_new
            break
        t = t_new
    return t


def default_init(u0: MultiField, cfg: SolverConfig) -> ScalarField:
    """Deterministic start: smoothed two-means split plus faint seeded noise."""
    z = u0.channel_mean()
    v0 = (z > _two_means_threshold(z)).astype(np.float64)
    v0 = _box_smooth(v0)
    rng = np.random.default_rng(cfg.seed)
    v0 = v0 + rng.uniform(-0.01, 0.01, size=v0.shape)
    return ScalarField(u0.grid, np.clip(v0, 0.0, 1.0))


def _refit(
    v: ScalarField,
    u0: MultiField,
    params: EnergyParams,
    cfg: SolverConfig,
    current: tuple[MultiField, MultiField],
) -> SegmentationState:
    if cfg.mode == "piecewise_constant":
        cur = (current[0].values[0, 0, :], current[1].values[0, 0, :])
        fit = fit_constants(v, u0, params.p, current=cur)
        return SegmentationState(
            v,
            MultiField.constant(u0.grid, fit.c1),
            MultiField.constant(u0.grid, fit.c2),
        )
    c1, c2 = fit_smooth_fields(v, u0, params, cfg, current)
    return SegmentationState(v, c1, c2)


def minimize(
    u0: MultiField,
    W: DoubleWell,
    params: EnergyParams,
    cfg: SolverConfig,
    init: SegmentationState | None = None,
) -> tuple[SegmentationState, list[EnergyBreakdown]]:
    """Alternate field fits and phase steps until the energy stalls.

    The trace holds the accepted breakdowns and never increases; a phase
    step that raises the energy is retried with half the step size, and a
    stall below float resolution terminates as converged.
    """
    params = params.replace(normalized=False)
    if init is None:
        v0 = default_init(u0, cfg)
        c0 = (
            MultiField.constant(u0.grid, np.zeros(u0.m)),
            MultiField.constant(u0.grid, np.zeros(u0.m)),
        )
        state = _refit(v0, u0, params, cfg, c0)
    else:
        require_same_grid(init.v, u0)
        state = _refit(init.v, u0, params, cfg, (init.c1, init.c2))
    bd = at_energy(state, u0, W, params)
    trace = [bd]
    e_cur = bd.total
    tau = cfg.tau
    solver = _v_solver(u0.grid, W, params, tau)
    for _ in range(cfg.max_outer):
        converged = False
        accepted = False
        while True:
            if solver.coeff != tau * 2.0 * params.nu * params.eps / W.cw:
                solver = _v_solver(u0.grid, W, params, tau)
            forcing = v_forcing(state, u0, params)
            v_vals = _semi_implicit_v(
                state.v.values, forcing, W, params, cfg, tau, solver
            )
            cand = _refit(
                state.v.with_values(v_vals), u0, params, cfg, (state.c1, state.c2)
            )
            bd = at_energy(cand, u0, W, params)
            if bd.total <= e_cur:
                accepted = True
                break
            if bd.total - e_cur <= 1e-12 * max(abs(e_cur), 1.0):
                converged = True  # below float resolution: stationary
                break
            tau *= 0.5
            if tau < 1e-12:
                raise NoProgressError(
                    "step size underflowed without an energy decrease"
                )
        if converged:
            break
        state = cand
        trace.append(bd)
        drop = e_cur - bd.total
        if drop <= cfg.tol * max(abs(e_cur), 1e-30):
            e_cur = bd.total
            break
        e_cur = bd.total
    return state, trace


# ---------------------------------------------------------------------------
# sharp-to-diffuse reconstruction
# ---------------------------------------------------------------------------


def optimal_profile(W: DoubleWell, s_max: float = 40.0, n: int = 8001):
    """Increasing 0-to-1 transition q with q' = sqrt(W(q)), q(0) = 1/2.

    Returns a vectorized callable built on a dense tabulation (RK4 both
    directions, clamped to the wells outside the tabulated range).
    """
    half = (n - 1) // 2
    ds = s_max / half
    q = np.empty(n)
    q[half] = 0.5

    def rhs(t):
        return math.sqrt(max(float(W.w(np.float64(t))), 0.0))

    y = 0.5
    for k in range(half):
        k1 = rhs(y)
        k2 = rhs(min(y + 0.5 * ds * k1, 1.0))
        k3 = rhs(min(y + 0.5 * ds * k2, 1.0))
        k4 = rhs(min(y + ds * k3, 1.0))
        y = min(y + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), 1.0)
        q[half + 1 + k] = y
    y = 0.5
    for k in range(half):
        k1 = rhs(y)
        k2 = rhs(max(y - 0.5 * ds * k1, 0.0))
        k3 = rhs(max(y - 0.5 * ds * k2, 0.0))
        k4 = rhs(max(y - ds * k3, 0.0))
        y = max(y - ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), 0.0)
        q[half - 1 - k] = y
    s_grid = np.linspace(-s_max, s_max, n)

    def profile(s):
        return np.interp(np.asarray(s, np.float64), s_grid, q, left=q[0], right=q[-1])

    return profile


@dataclass(frozen=True)
class Mollifier:
    """Compactly supported smoothing bump on the grid, discretely normalized."""

    grid: Grid
    a: float
    kernel: np.ndarray

    @classmethod
    def build(cls, grid: Grid, a: float) -> "Mollifier":
        if not a >= 0:
            raise ValueError("mollifier scale must be nonnegative")
        ki = int(a / grid.hx)
        kj = int(a / grid.hy) if grid.ny > 1 else 0
        if a == 0.0 or (ki == 0 and kj == 0):
            kern = np.ones((1, 1))
        else:
            di = np.arange(-ki, ki + 1) * grid.hx
            dj = np.arange(-kj, kj + 1) * grid.hy
            r2 = (dj[:, None] ** 2 + di[None, :] ** 2) / (a * a)
            kern = np.zeros_like(r2)
            inside = r2 < 1.0
            kern[inside] = np.exp(1.0 / (r2[inside] - 1.0))
            total = kern.sum()
            if total <= 0.0:
                kern = np.zeros_like(r2)
                kern[kj, ki] = 1.0
                total = 1.0
            kern = kern / total
        return cls(grid=grid, a=float(a), kernel=kern)

    def smooth_from(self, c: MultiField, support: np.ndarray) -> MultiField:
        """Mollify c as extended from its support by mass-normalized
        convolution; constants on the support come back exactly."""
        sup = support.astype(np.float64)
        den = nd_convolve(sup, self.kernel, mode="constant", cval=0.0)
        out = np.empty_like(c.values)
        inside = den > 1e-12
        for k in range(c.m):
            num = nd_convolve(c.channel(k) * sup, self.kernel, mode="constant", cval=0.0)
            mean = (
                float((c.channel(k) * sup).sum() / max(sup.sum(), 1.0))
                if sup.any()
                else 0.0
            )
            ch = np.full(c.grid.shape, mean)
            ch[inside] = num[inside] / den[inside]
            out[:, :, k] = ch
        return MultiField(c.grid, out)


def recovery_sequence(
    E: IndicatorField,
    c1: MultiField,
    c2: MultiField,
    eps: float,
    W: DoubleWell,
    p: float,
) -> SegmentationState:
    """Diffuse state approximating (indicator, fields) at width eps.

    The phase field is the optimal transition profile across the signed
    distance; the fields are mollified at the scale set by the normalized
    mass of the boundary collar of width 4*eps.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if E.is_degenerate():
        raise DegenerateSetError("recovery needs a nondegenerate set")
    require_same_grid(E, c1, c2)
    g = E.grid
    sd = signed_distance(E)
    q = optimal_profile(W)
    v = ScalarField(g, q(sd / eps))
    b = 4.0 * eps
    n_inside = int(np.count_nonzero(E.mask))
    collar1 = int(np.count_nonzero(E.mask & (sd <= b)))
    mass1 = collar1 / max(n_inside, 1)
    n_outside = E.mask.size - n_inside
    collar2 = int(np.count_nonzero(~E.mask & (-sd <= b)))
    mass2 = collar2 / max(n_outside, 1)
    a1 = mass1 ** (1.0 / (2.0 * p))
    a2 = mass2 ** (1.0 / (2.0 * p))
    c1n = Mollifier.build(g, a1).smooth_from(c1, E.mask)
    c2n = Mollifier.build(g, a2).smooth_from(c2, ~E.mask)
    return SegmentationState(v, c1n, c2n)
