"""Experiment harness: the convergence claims as desk-scale ladder studies.

Each experiment runs the solver (or the reconstruction) along a ladder of
diffuseness values and reports the quantities whose trends witness the
limiting behavior: diffuse-vs-sharp energy gaps, L1 thresholding gaps,
transport distances between iterates, interface-energy ratios, and
boundary-collar volumes.  Everything is deterministic given (inputs, plan,
config, seed).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyParams, at_energy, gl_energy, limit_energy, pc_energy_eps, pc_limit_energy
from .errors import GammaSegError, NonStationarityError
from .grid import (
    Grid,
    IndicatorField,
    MultiField,
    ScalarField,
    threshold_half,
    tv_isotropic,
)
from .potential import DoubleWell
from .solver import (
    SegmentationState,
    SolverConfig,
    _semi_implicit_v,
    _VStepSolver,
    fit_constants,
    fit_smooth_fields,
    minimize,
)
from .errors import ZeroMeasureError
from .transport import clp_distance, clp_equivalent

THREADS_ENV = "GAMMASEG_THREADS"


# ---------------------------------------------------------------------------
# plans and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MuRule:
    """How the smoothness weight follows the ladder.

    fixed: always ``value``.  sequence: explicit per-rung values (their last
    entry is taken as the target).  divergent: mu0 / eps**alpha, diverging
    as the ladder descends.
    """

    kind: str = "fixed"
    value: float = 1.0
    sequence: tuple[float, ...] = ()
    mu0: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "sequence", "divergent"):
            raise ValueError(f"unknown mu rule '{self.kind}'")
        if self.kind == "sequence" and not self.sequence:
            raise ValueError("sequence rule needs values")

    def mu_at(self, eps: float, index: int) -> float:
        if self.kind == "fixed":
            return self.value
        if self.kind == "sequence":
            return float(self.sequence[index])
        return self.mu0 / eps**self.alpha

    @property
    def limit(self) -> float:
        if self.kind == "fixed":
            return self.value
        if self.kind == "sequence":
            return float(self.sequence[-1])
        return math.inf

    @property
    def divergent(self) -> bool:
        if self.kind == "divergent":
            return True
        if self.kind == "sequence":
            s = self.sequence
            return all(b > a for a, b in zip(s, s[1:]))
        return False


@dataclass(frozen=True)
class SweepPlan:
    """A descending diffuseness ladder and how mu follows it.

    ``seeds`` lists initializer replicates (see ``replicate_sweeps``);
    ``warm_start`` chains each rung off the previous solution; supports
    larger than ``max_exact`` push state distances onto the entropic path.
    """

    eps_ladder: tuple[float, ...]
    mu_rule: MuRule = MuRule()
    nu: float = 0.1
    p: float = 2.0
    seeds: tuple[int, ...] = (0,)
    warm_start: bool = True
    max_exact: int = 4096

    def __post_init__(self):
        lad = tuple(float(e) for e in self.eps_ladder)
        if len(lad) < 3:
            raise ValueError("the ladder needs at least 3 rungs")
        if any(e <= 0 for e in lad):
            raise ValueError("ladder values must be positive")
        if any(b >= a for a, b in zip(lad, lad[1:])):
            raise ValueError("the ladder must be strictly decreasing")
        object.__setattr__(self, "eps_ladder", lad)


@dataclass(frozen=True)
class GammaRow:
    eps: float
    mu: float
    e_at_norm: float
    e_limit: float
    gap: float
    l1_gap: float
    tv_v: float
    gl_over_tv: float
    d_clp: float
    data1: float
    data2: float
    grad1: float
    grad2: float
    gl: float


@dataclass(frozen=True)
class GammaReport:
    rows: tuple[GammaRow, ...]
    states: tuple[SegmentationState, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        eps = [r.eps for r in self.rows]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("rows must follow the descending ladder")
        for r in self.rows:
            for v in (r.e_at_norm, r.e_limit, r.gap, r.l1_gap, r.tv_v, r.gl_over_tv, r.d_clp):
                if not math.isfinite(v):
                    raise ValueError("report entries must be finite")


@dataclass(frozen=True)
class MmRow:
    eps: float
    n_cells: int
    gl: float
    ratio: float
    steps: int


@dataclass(frozen=True)
class MuRow:
    mu: float
    eps: float
    std1: float
    std2: float
    reldev1: float
    reldev2: float
    u_std1: float
    u_std2: float


@dataclass(frozen=True)
class PcRow:
    eps: float
    e_eps: float
    e_limit: float
    gap: float
    dc1: float
    dc2: float
    tv_sharp: float


@dataclass(frozen=True)
class PcReport:
    rows: tuple[PcRow, ...]
    states: tuple[SegmentationState, ...] = field(default=(), repr=False, compare=False)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, k):
        return self.rows[k]


@dataclass(frozen=True)
class MinkRow:
    a: float
    volume: float
    content: float
    perimeter_ref: float
    rel_dev: float


# ---------------------------------------------------------------------------
# synthetic inputs
# ---------------------------------------------------------------------------


def _with_noise(vals: np.ndarray, noise: float, seed: int) -> np.ndarray:
    if noise == 0.0:
        return vals
    rng = np.random.default_rng(seed)
    return vals + rng.uniform(-noise, noise, size=vals.shape)


def vsplit_image(
    grid: Grid, lo: float = 0.0, hi: float = 1.0, noise: float = 0.0, seed: int = 0
) -> MultiField:
    """Two vertical halves at the given levels, plus seeded uniform noise."""
    vals = np.where(grid.cell_x() < grid.origin[0] + grid.extent[0] / 2.0, lo, hi)
    return MultiField(grid, _with_noise(vals.astype(np.float64), noise, seed))


def disc_image(
    grid: Grid,
    radius: float = 0.25,
    center: tuple[float, float] = (0.5, 0.5),
    inside: float = 1.0,
    outside: float = 0.0,
    noise: float = 0.0,
    seed: int = 0,
) -> MultiField:
    r2 = (grid.cell_x() - center[0]) ** 2 + (grid.cell_y() - center[1]) ** 2
    vals = np.where(r2 < radius * radius, inside, outside).astype(np.float64)
    return MultiField(grid, _with_noise(vals, noise, seed))


def disc_mask(
    grid: Grid, radius: float = 0.25, center: tuple[float, float] = (0.5, 0.5)
) -> IndicatorField:
    r2 = (grid.cell_x() - center[0]) ** 2 + (grid.cell_y() - center[1]) ** 2
    return IndicatorField(grid, r2 < radius * radius)


def halfplane_mask(grid: Grid, split: float = 0.5) -> IndicatorField:
    return IndicatorField(grid, grid.cell_x() < grid.origin[0] + split * grid.extent[0])


def shaded_image(
    grid: Grid,
    lo: float = 0.2,
    hi: float = 0.7,
    shade: float = 0.2,
    noise: float = 0.0,
    seed: int = 0,
) -> MultiField:
    """Two vertical regions, each with a smooth within-region ramp."""
    x = grid.cell_x()
    y = grid.cell_y()
    left = grid.cell_x() < grid.origin[0] + grid.extent[0] / 2.0
    ramp = shade * (y / max(grid.extent[1], 1e-300))
    vals = np.where(left, lo + ramp, hi + ramp * (x / max(grid.extent[0], 1e-300)))
    return MultiField(grid, _with_noise(vals, noise, seed))


def textured_image(
    grid: Grid,
    lo: float = 0.0,
    hi: float = 1.0,
    amp: float = 0.15,
    periods: int = 2,
    texture: float = 0.15,
    seed: int = 0,
) -> MultiField:
    """Two regions split by a wavy boundary, under seeded speckle.

    The wiggles make the interface-length/data tradeoff real: a small
    boundary weight follows them, a large one pays the data cost to
    straighten the cut.
    """
    x = grid.cell_x()
    y = grid.cell_y() / max(grid.extent[1], 1e-300)
    split = grid.origin[0] + grid.extent[0] * (
        0.5 + amp * np.sin(2.0 * np.pi * periods * y)
    )
    vals = np.where(x < split, lo, hi).astype(np.float64)
    return MultiField(grid, _with_noise(vals, texture, seed))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def modica_mortola_1d(
    W: DoubleWell,
    eps_ladder,
    n_cells: int = 4096,
    interfaces: int = 1,
    max_steps: int = 50000,
    rel_tol: float = 1e-13,
) -> list[MmRow]:
    """Relax sharp 1D interfaces under the pure phase-transition flow and
    report the stationary energy against cw per interface."""
    if n_cells < 1024:
        raise ValueError("need at least 1024 cells")
    if interfaces not in (1, 2):
        raise ValueError("one or two interfaces")
    grid = Grid.line(n_cells)
    x = grid.cell_x()
    if interfaces == 1:
        v0 = (x > 0.5).astype(np.float64)
    else:
        v0 = ((x > 0.25) & (x < 0.75)).astype(np.float64)
    ts = np.linspace(-0.2, 1.2, 2001)
    curv = float(np.max(np.abs(np.gradient(W.deriv(ts), ts))))
    cfg = SolverConfig()
    rows = []
    for eps in eps_ladder:
        params = EnergyParams(p=2.0, mu=0.0, nu=W.cw, eps=float(eps))
        tau = 0.4 * eps / max(curv, 1e-12)
        solver = _VStepSolver(grid, tau * 2.0 * params.nu * params.eps / W.cw)
        v = v0.copy()
        vf = ScalarField(grid, v)
        e = gl_energy(vf, W, eps)
        zero_force = np.zeros(grid.shape)
        steps = 0
        calm = 0
        while steps < max_steps:
            v_new = _semi_implicit_v(v, zero_force, W, params, cfg, tau, solver)
            e_new = gl_energy(ScalarField(grid, v_new), W, eps)
            if e_new > e:
                tau *= 0.5
                solver = _VStepSolver(grid, tau * 2.0 * params.nu * params.eps / W.cw)
                continue
            steps += 1
            drop = e - e_new
            v, e = v_new, e_new
            if drop <= rel_tol * max(e_new, 1e-30):
                calm += 1
                if calm >= 3:
                    break
            else:
                calm = 0
        else:
            raise NonStationarityError(
                f"flow at eps={eps} did not settle within {max_steps} steps"
            )
        rows.append(
            MmRow(
                eps=float(eps),
                n_cells=n_cells,
                gl=e,
                ratio=e / (W.cw * interfaces),
                steps=steps,
            )
        )
    return rows


def _ladder_distance(state, finest, plan: SweepPlan, eps: float) -> float:
    """Distance to the finest state; collapsed-phase states compare through
    the equivalence classes (distance 0 in the same class, error across)."""
    try:
        return clp_distance(state, finest, plan.p, max_exact=plan.max_exact)
    except ZeroMeasureError:
        if clp_equivalent(state, finest):
            return 0.0
        raise GammaSegError(
            f"ladder point eps={eps:g}: a phase carries no mass and the state "
            "is not equivalent to the finest one; no distance is defined"
        )


def _limit_state(
    state: SegmentationState,
    u0: MultiField,
    params: EnergyParams,
    mu_limit: float,
    cfg: SolverConfig,
) -> SegmentationState:
    """Threshold the phase field and refit: constants when the limiting mu
    is infinite (or in constant mode), smooth fields otherwise."""
    sharp = threshold_half(state.v).to_scalar()
    if math.isinf(mu_limit) or cfg.mode == "piecewise_constant":
        cur = (state.c1.values[0, 0, :], state.c2.values[0, 0, :]) if cfg.mode == "piecewise_constant" else None
        fit = fit_constants(sharp, u0, params.p, current=cur)
        return SegmentationState(
            sharp,
            MultiField.constant(u0.grid, fit.c1),
            MultiField.constant(u0.grid, fit.c2),
        )
    c1, c2 = fit_smooth_fields(
        sharp, u0, params.replace(mu=mu_limit), cfg, (state.c1, state.c2)
    )
    return SegmentationState(sharp, c1, c2)


def epsilon_sweep(
    u0: MultiField, W: DoubleWell, plan: SweepPlan, cfg: SolverConfig
) -> GammaReport:
    """Descend the ladder, compare each converged diffuse state against its
    thresholded/refit sharp state, and measure distances to the finest one.

    With warm starts the ladder runs sequentially (each rung starts from the
    previous solution); without them the rungs may run in parallel, capped
    by the GAMMASEG_THREADS environment variable.
    """
    entries = []
    if plan.warm_start:
        prev = None
        for k, eps in enumerate(plan.eps_ladder):
            mu = plan.mu_rule.mu_at(eps, k)
            params = EnergyParams(p=plan.p, mu=mu, nu=plan.nu, eps=eps)
            state, _ = minimize(u0, W, params, cfg, init=prev)
            prev = state
            entries.append((eps, mu, params, state))
    else:
        def run(arg):
            k, eps = arg
            mu = plan.mu_rule.mu_at(eps, k)
            params = EnergyParams(p=plan.p, mu=mu, nu=plan.nu, eps=eps)
            state, _ = minimize(u0, W, params, cfg)
            return (eps, mu, params, state)

        workers = max(1, int(os.environ.get(THREADS_ENV, "1")))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(run, enumerate(plan.eps_ladder)))

    finest = entries[-1][3]
    area = u0.grid.cell_area
    rows = []
    for k, (eps, mu, params, state) in enumerate(entries):
        bd = at_energy(state, u0, W, params.replace(normalized=True))
        mu_lim = plan.mu_rule.limit
        lim = _limit_state(state, u0, params, mu_lim, cfg)
        e_lim = limit_energy(lim, u0, params.replace(mu=mu_lim))
        sharp = threshold_half(state.v)
        l1_gap = float(np.sum(np.abs(state.v.values - sharp.mask)) * area)
        tv_v = tv_isotropic(state.v)
        tv_sharp = tv_isotropic(sharp.to_scalar())
        raw_gl = gl_energy(state.v, W, eps)
        gl_over_tv = raw_gl / (W.cw * tv_sharp) if tv_sharp > 0 else 0.0
        if k == len(entries) - 1:
            d = 0.0  # distance of the finest state to itself
        else:
            d = _ladder_distance(state, finest, plan, eps)
        rows.append(
            GammaRow(
                eps=eps,
                mu=mu,
                e_at_norm=bd.total,
                e_limit=e_lim.total,
                gap=bd.total - e_lim.total,
                l1_gap=l1_gap,
                tv_v=tv_v,
                gl_over_tv=gl_over_tv,
                d_clp=d,
                data1=bd.data1,
                data2=bd.data2,
                grad1=bd.grad1,
                grad2=bd.grad2,
                gl=bd.gl,
            )
        )
    return GammaReport(tuple(rows), tuple(e[3] for e in entries))


def replicate_sweeps(
    u0: MultiField, W: DoubleWell, plan: SweepPlan, cfg: SolverConfig
) -> list[GammaReport]:
    """One ladder run per seed in ``plan.seeds`` (initializer replicates)."""
    import dataclasses as _dc

    return [
        epsilon_sweep(u0, W, plan, _dc.replace(cfg, seed=int(s))) for s in plan.seeds
    ]


def mu_sweep(
    u0: MultiField, W: DoubleWell, plan: SweepPlan, cfg: SolverConfig
) -> list[MuRow]:
    """Raise the smoothness weight along a divergent ladder and report how
    far the fitted fields are from segmentwise constants."""
    if not plan.mu_rule.divergent:
        raise ValueError("mu_sweep needs a divergent mu rule")
    if plan.mu_rule.kind == "sequence":
        pairs = [(min(plan.eps_ladder), m) for m in plan.mu_rule.sequence]
    else:
        pairs = [
            (e, plan.mu_rule.mu_at(e, k)) for k, e in enumerate(plan.eps_ladder)
        ]
    rows = []
    prev = None
    for eps, mu in pairs:
        params = EnergyParams(p=plan.p, mu=mu, nu=plan.nu, eps=eps)
        state, _ = minimize(u0, W, params, cfg, init=prev)
        prev = state
        mask = threshold_half(state.v).mask
        stats = []
        for c, seg in ((state.c1, mask), (state.c2, ~mask)):
            if not seg.any():
                stats.append((0.0, 0.0, 0.0))
                continue
            vals = c.values[seg]
            mean = vals.mean(axis=0)
            std = float(np.sqrt(np.mean(np.sum((vals - mean) ** 2, axis=1))))
            scale = float(np.linalg.norm(mean))
            uvals = u0.values[seg]
            ustd = float(
                np.sqrt(np.mean(np.sum((uvals - uvals.mean(axis=0)) ** 2, axis=1)))
            )
            stats.append((std, std / max(scale, 1e-12), ustd))
        rows.append(
            MuRow(
                mu=mu,
                eps=eps,
                std1=stats[0][0],
                std2=stats[1][0],
                reldev1=stats[0][1],
                reldev2=stats[1][1],
                u_std1=stats[0][2],
                u_std2=stats[1][2],
            )
        )
    return rows


def pc_gamma_check(
    u0: MultiField, W: DoubleWell, plan: SweepPlan, cfg: SolverConfig
) -> PcReport:
    """Two-constant ladder: diffuse vs sharp energy and constant drift."""
    if cfg.mode != "piecewise_constant":
        raise ValueError("pc_gamma_check needs piecewise_constant mode")
    rows = []
    states = []
    prev = None
    for k, eps in enumerate(plan.eps_ladder):
        mu = plan.mu_rule.mu_at(eps, k)
        params = EnergyParams(p=plan.p, mu=mu, nu=plan.nu, eps=eps)
        state, _ = minimize(u0, W, params, cfg, init=prev)
        prev = state
        states.append(state)
        c1 = state.c1.values[0, 0, :]
        c2 = state.c2.values[0, 0, :]
        e_eps = pc_energy_eps(state.v, c1, c2, u0, W, params)
        sharp = threshold_half(state.v)
        fit = fit_constants(sharp.to_scalar(), u0, params.p, current=(c1, c2))
        e_lim = pc_limit_energy(sharp, fit.c1, fit.c2, u0, params)
        rows.append(
            PcRow(
                eps=eps,
                e_eps=e_eps,
                e_limit=e_lim,
                gap=e_eps - e_lim,
                dc1=float(np.linalg.norm(c1 - fit.c1)),
                dc2=float(np.linalg.norm(c2 - fit.c2)),
                tv_sharp=tv_isotropic(sharp.to_scalar()),
            )
        )
    return PcReport(tuple(rows), tuple(states))


def minkowski_study(E: IndicatorField, a_ladder) -> list[MinkRow]:
    """Boundary-collar volumes over a ladder of widths, against the
    length of the discrete interface."""
    from .grid import minkowski_volume

    perim = tv_isotropic(E.to_scalar())
    rows = []
    for a in a_ladder:
        vol = minkowski_volume(E, float(a))
        content = vol / (2.0 * float(a))
        rows.append(
            MinkRow(
                a=float(a),
                volume=vol,
                content=content,
                perimeter_ref=perim,
                rel_dev=abs(content - perim) / max(perim, 1e-300),
            )
        )
    return rows
