"""Discrete evaluation of the segmentation energies.

Two families coexist and share one code path, switched by
``EnergyParams.normalized``:

  * the plain-density form, with data and gradient terms weighted by |v| and
    |1-v| directly (what the solver descends on), and
  * the measure-normalized form, where the same terms are integrals against
    the probability measures carried by v (what the convergence reports use).

The sharp-interface limit functionals (finite mu and mu = infinity) return an
extended-real breakdown: +inf is a value here, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ZeroMeasureError
from .grid import (
    IndicatorField,
    MultiField,
    ScalarField,
    gradient_arrays,
    gradient_forward,
    require_same_grid,
    tv_isotropic,
)
from .potential import DoubleWell
from .transport import DiscreteMeasure

if TYPE_CHECKING:  # pragma: no cover
    from .solver import SegmentationState

MU_INF = math.inf


@dataclass(frozen=True)
class EnergyParams:
    """Exponent p, smoothness weight mu (math.inf allowed), interface weight
    nu, and diffuseness eps."""

    p: float = 2.0
    mu: float = 1.0
    nu: float = 0.1
    eps: float = 0.05
    normalized: bool = False

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must lie in (1, inf), got {self.p}")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not (self.mu >= 0):
            raise ValueError("mu must be nonnegative (math.inf allowed)")

    def replace(self, **kw) -> "EnergyParams":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class Measures:
    """The pair of normalized occupation measures carried by a phase field."""

    lam_v: DiscreteMeasure
    lam_1mv: DiscreteMeasure


@dataclass(frozen=True)
class EnergyBreakdown:
    data1: float
    data2: float
    grad1: float
    grad2: float
    gl: float
    tv_term: float

    @property
    def total(self) -> float:
        return self.data1 + self.data2 + self.grad1 + self.grad2 + self.gl + self.tv_term

    @classmethod
    def unbounded(cls) -> "EnergyBreakdown":
        inf = math.inf
        return cls(inf, inf, inf, inf, inf, inf)

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.total)


def _measure_from_density(grid, dens: np.ndarray) -> DiscreteMeasure:
    area = grid.cell_area
    total = float(np.sum(dens)) * area
    pts = grid.cell_centers()
    if total == 0.0:
        return DiscreteMeasure(pts, np.zeros(grid.n_cells), zero_flag=True)
    w = (dens * (area / total)).ravel()
    return DiscreteMeasure(pts, w / w.sum())


def measures_from(v: ScalarField) -> Measures:
    """Normalized |v| and |1-v| densities as grid-supported measures.

    A vanishing mass yields the flagged zero measure rather than an error.
    """
    av = np.abs(v.values)
    a1mv = np.abs(1.0 - v.values)
    return Measures(
        lam_v=_measure_from_density(v.grid, av),
        lam_1mv=_measure_from_density(v.grid, a1mv),
    )


def gl_energy(v: ScalarField, W: DoubleWell, eps: float) -> float:
    """Phase-transition energy: integral of eps|grad v|^2 + W(v)/eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    gx, gy = gradient_forward(v)
    dens = eps * (gx * gx + gy * gy) + W(v.values) / eps
    return float(np.sum(dens) * v.grid.cell_area)


def _vector_misfit_p(c: MultiField, u0: MultiField, p: float) -> np.ndarray:
    diff = c.values - u0.values
    return np.sum(diff * diff, axis=2) ** (p / 2.0)


def _grad_p_density(c: MultiField, p: float) -> np.ndarray:
    g = c.grid
    mag2 = np.zeros(g.shape)
    for k in range(c.m):
        gx, gy = gradient_arrays(c.channel(k), g.hx, g.hy)
        mag2 += gx * gx + gy * gy
    return mag2 ** (p / 2.0)


def sobolev_seminorm_proxy(c: MultiField, lam: DiscreteMeasure, p: float) -> float:
    """Measure-weighted gradient seminorm (sum |grad c|^p dlam)^(1/p).

    Channels combine in l2 before the p-th power.  Undefined against the
    zero measure.
    """
    if lam.zero_flag:
        raise ZeroMeasureError("seminorm against the zero measure")
    w = lam.weights.reshape(c.grid.shape)
    return float(np.sum(_grad_p_density(c, p) * w) ** (1.0 / p))


@dataclass(frozen=True)
class HajlaszReport:
    ok: bool
    max_violation: float
    worst_pair: tuple[int, int]
    samples: int


def hajlasz_pair_check(
    c: MultiField,
    g: ScalarField,
    lam: DiscreteMeasure,
    samples: int = 2000,
    seed: int = 0,
    tol: float = 1e-9,
) -> HajlaszReport:
    """Sampled certificate that g bounds c's variation:
    |c(x) - c(y)| <= |x - y| (g(x) + g(y)) on pairs drawn from lam."""
    if np.any(g.values < 0):
        raise ValueError("candidate upper gradient must be nonnegative")
    require_same_grid(c, g)
    support = np.nonzero(lam.weights > 0)[0]
    if support.size < 2:
        return HajlaszReport(True, 0.0, (-1, -1), 0)
    rng = np.random.default_rng(seed)
    ia = support[rng.integers(0, support.size, samples)]
    ib = support[rng.integers(0, support.size, samples)]
    pts = lam.points
    cv = c.values.reshape(-1, c.m)
    gv = g.values.ravel()
    dx = np.linalg.norm(pts[ia] - pts[ib], axis=1)
    dc = np.linalg.norm(cv[ia] - cv[ib], axis=1)
    viol = dc - dx * (gv[ia] + gv[ib])
    k = int(np.argmax(viol))
    worst = float(viol[k])
    return HajlaszReport(worst <= tol, worst, (int(ia[k]), int(ib[k])), samples)


def at_energy(
    state: "SegmentationState",
    u0: MultiField,
    W: DoubleWell,
    params: EnergyParams,
) -> EnergyBreakdown:
    """Diffuse-interface energy of a segmentation state.

    Normalized form: L^p(lam)-misfits plus mu-weighted measure seminorms
    plus the (nu/cw)-scaled phase-transition term.  Plain form: |v| and
    |1-v| densities instead of the normalized measures.
    """
    g = require_same_grid(state.v, state.c1, state.c2, u0)
    if not math.isfinite(params.mu):
        raise ValueError("at_energy needs a finite mu; the limit handles mu = inf")
    area = g.cell_area
    v = state.v.values
    if params.normalized:
        meas = measures_from(state.v)
        w1 = meas.lam_v.weights.reshape(g.shape)
        w2 = meas.lam_1mv.weights.reshape(g.shape)
    else:
        w1 = np.abs(v) * area
        w2 = np.abs(1.0 - v) * area
    p = params.p
    data1 = float(np.sum(_vector_misfit_p(state.c1, u0, p) * w1))
    data2 = float(np.sum(_vector_misfit_p(state.c2, u0, p) * w2))
    grad1 = params.mu * float(np.sum(_grad_p_density(state.c1, p) * w1))
    grad2 = params.mu * float(np.sum(_grad_p_density(state.c2, p) * w2))
    gl = (params.nu / W.cw) * gl_energy(state.v, W, params.eps)
    return EnergyBreakdown(data1, data2, grad1, grad2, gl, 0.0)


def _segment_constancy_ok(c: MultiField, mask: np.ndarray, rel_tol: float = 1e-6) -> bool:
    if not mask.any():
        return True
    vals = c.values[mask]
    for k in range(vals.shape[1]):
        col = vals[:, k]
        scale = max(1.0, float(np.max(np.abs(col))))
        if float(np.max(np.abs(col - col.mean()))) > rel_tol * scale:
            return False
    return True


def limit_energy(
    state: "SegmentationState",
    u0: MultiField,
    params: EnergyParams,
) -> EnergyBreakdown:
    """Sharp-interface energy; +inf breakdown off its domain.

    Requires v to be an indicator to within 1e-9 cellwise.  With mu = inf
    the fields must be segmentwise constant (relative deviation 1e-6) and
    the gradient terms drop; otherwise they are mu-weighted seminorms.
    """
    g = require_same_grid(state.v, state.c1, state.c2, u0)
    v = state.v.values
    ind_tol = 1e-9
    near0 = np.abs(v) <= ind_tol
    near1 = np.abs(v - 1.0) <= ind_tol
    if not np.all(near0 | near1):
        return EnergyBreakdown.unbounded()
    meas = measures_from(state.v)
    w1 = meas.lam_v.weights.reshape(g.shape)
    w2 = meas.lam_1mv.weights.reshape(g.shape)
    p = params.p
    data1 = float(np.sum(_vector_misfit_p(state.c1, u0, p) * w1))
    data2 = float(np.sum(_vector_misfit_p(state.c2, u0, p) * w2))
    if math.isinf(params.mu):
        if not _segment_constancy_ok(state.c1, near1):
            return EnergyBreakdown.unbounded()
        if not _segment_constancy_ok(state.c2, near0):
            return EnergyBreakdown.unbounded()
        grad1 = grad2 = 0.0
    else:
        grad1 = 0.0 if meas.lam_v.zero_flag else params.mu * float(
            np.sum(_grad_p_density(state.c1, p) * w1)
        )
        grad2 = 0.0 if meas.lam_1mv.zero_flag else params.mu * float(
            np.sum(_grad_p_density(state.c2, p) * w2)
        )
    tv_term = params.nu * tv_isotropic(state.v)
    return EnergyBreakdown(data1, data2, grad1, grad2, 0.0, tv_term)


def _constant_misfit(
    vec, u0: MultiField, weights: np.ndarray, p: float
) -> float:
    c = np.atleast_1d(np.asarray(vec, np.float64))
    diff = u0.values - c[None, None, :]
    return float(np.sum(np.sum(diff * diff, axis=2) ** (p / 2.0) * weights))


def pc_energy_eps(
    v: ScalarField,
    c1,
    c2,
    u0: MultiField,
    W: DoubleWell,
    params: EnergyParams,
) -> float:
    """Two-constant diffuse energy: plain |v|-weighted misfits plus the
    scaled phase-transition term."""
    require_same_grid(v, u0)
    area = v.grid.cell_area
    val = _constant_misfit(c1, u0, np.abs(v.values) * area, params.p)
    val += _constant_misfit(c2, u0, np.abs(1.0 - v.values) * area, params.p)
    val += (params.nu / W.cw) * gl_energy(v, W, params.eps)
    return val


def pc_limit_energy(
    E: IndicatorField,
    c1,
    c2,
    u0: MultiField,
    params: EnergyParams,
) -> float:
    """Two-constant sharp energy: segment misfits plus nu * TV."""
    require_same_grid(E, u0)
    area = E.grid.cell_area
    w1 = E.mask.astype(np.float64) * area
    w2 = (~E.mask).astype(np.float64) * area
    val = _constant_misfit(c1, u0, w1, params.p)
    val += _constant_misfit(c2, u0, w2, params.p)
    val += params.nu * tv_isotropic(E.to_scalar())
    return val
