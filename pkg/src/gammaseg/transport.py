"""Optimal-transport distances between weighted samples.

The distance between pairs (measure, function) charges both how far mass
moves and how much the carried values differ:

    cost(x, y) = |x - y|^p + |f(x) - g(y)|^p.

Small instances are solved exactly by the network simplex in ``_accel``;
supports past ``max_exact`` route to a log-stabilized entropic solver whose
result is declared approximate and carries a certified bracket.  Segmentation
states compare as the sum of two such distances, one per phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import ShapeMismatchError, ZeroMeasureError

MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted points; either a probability measure or the flagged zero."""

    points: np.ndarray
    weights: np.ndarray
    zero_flag: bool = False

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, np.float64))
        if pts.shape[1] != 2:
            pts = pts.reshape(-1, 2)
        w = np.asarray(self.weights, np.float64).ravel()
        if w.shape[0] != pts.shape[0]:
            raise ShapeMismatchError("need one weight per support point")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if self.zero_flag:
            if np.any(w != 0):
                raise ValueError("the zero measure carries no mass")
        elif abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        pts = pts.copy()
        w = w.copy()
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls, points=None) -> "DiscreteMeasure":
        pts = np.zeros((1, 2)) if points is None else points
        return cls(pts, np.zeros(np.atleast_2d(pts).shape[0]), zero_flag=True)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.weights))

    def trimmed(self) -> tuple["DiscreteMeasure", np.ndarray]:
        """Drop zero-weight points; returns the submeasure and kept indices."""
        idx = np.nonzero(self.weights > 0)[0]
        if idx.size == self.weights.size:
            return self, idx
        return DiscreteMeasure(self.points[idx], self.weights[idx]), idx


@dataclass(frozen=True)
class PairedSample:
    """A measure together with one value vector per support point."""

    measure: DiscreteMeasure
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.measure.points.shape[0]:
            raise ShapeMismatchError("need one value vector per support point")
        if not np.all(np.isfinite(v)):
            raise ValueError("paired values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Coupling:
    """Sparse transport plan between two discrete measures."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    src_points: np.ndarray
    tgt_points: np.ndarray
    src_weights: np.ndarray
    tgt_weights: np.ndarray

    def marginal_residuals(self) -> tuple[float, float]:
        r = np.bincount(self.rows, weights=self.vals, minlength=self.src_weights.size)
        c = np.bincount(self.cols, weights=self.vals, minlength=self.tgt_weights.size)
        return (
            float(np.max(np.abs(r - self.src_weights))),
            float(np.max(np.abs(c - self.tgt_weights))),
        )

    def check_marginals(self, tol: float = MARGINAL_TOL) -> None:
        re_, ce = self.marginal_residuals()
        if re_ > tol or ce > tol:
            raise ValueError(f"coupling marginals off by ({re_:.2e}, {ce:.2e})")

    def displacement_moved(self) -> np.ndarray:
        return self.src_points[self.rows] - self.tgt_points[self.cols]


@dataclass(frozen=True)
class TlpResult:
    distance: float
    coupling: Coupling
    exact: bool
    p: float
    bracket: tuple[float, float] = field(default=(0.0, 0.0))


def _pairwise_cost(a: PairedSample, b: PairedSample, p: float) -> np.ndarray:
    xa = a.measure.points
    xb = b.measure.points
    dx = xa[:, 0][:, None] - xb[:, 0][None, :]
    dy = xa[:, 1][:, None] - xb[:, 1][None, :]
    pos = (dx * dx + dy * dy) ** (p / 2.0)
    val2 = np.zeros_like(pos)
    for k in range(a.values.shape[1]):
        d = a.values[:, k][:, None] - b.values[:, k][None, :]
        val2 += d * d
    return pos + val2 ** (p / 2.0)


def _sinkhorn_log(aw, bw, C, reg, max_iter=1500, marg_tol=1e-8):
    """Log-domain entropic transport with a geometric warm-up schedule."""
    loga = np.log(aw)
    logb = np.log(bw)
    f = np.zeros_like(aw)
    g = np.zeros_like(bw)
    scale = float(np.max(C)) if C.size else 1.0
    rg = max(scale, reg)
    schedule = []
    while rg > reg:
        schedule.append(rg)
        rg /= 4.0
    schedule.append(reg)
    for stage, rg in enumerate(schedule):
        last = stage == len(schedule) - 1
        iters = max_iter if last else 60
        for it in range(iters):
            M = (f[:, None] + g[None, :] - C) / rg
            f = f + rg * (loga - _logsumexp_rows(M))
            M = (f[:, None] + g[None, :] - C) / rg
            g = g + rg * (logb - _logsumexp_rows(M.T))
            if last and it % 10 == 9:
                M = (f[:, None] + g[None, :] - C) / rg
                row_mass = np.exp(_logsumexp_rows(M))
                if float(np.max(np.abs(row_mass - aw))) < marg_tol:
                    break
    M = (f[:, None] + g[None, :] - C) / reg
    P = np.exp(M)
    return P, f, g


def _logsumexp_rows(M: np.ndarray) -> np.ndarray:
    mx = np.max(M, axis=1)
    return mx + np.log(np.sum(np.exp(M - mx[:, None]), axis=1))


def _round_to_polytope(P, aw, bw):
    r = P.sum(axis=1)
    P = P * np.minimum(1.0, aw / np.where(r > 0, r, 1.0))[:, None]
    c = P.sum(axis=0)
    P = P * np.minimum(1.0, bw / np.where(c > 0, c, 1.0))[None, :]
    ra = aw - P.sum(axis=1)
    rb = bw - P.sum(axis=0)
    s = ra.sum()
    if s > 1e-300:
        P = P + np.outer(ra, rb) / s
    return P


def tlp_distance(
    a: PairedSample,
    b: PairedSample,
    p: float,
    max_exact: int = 4096,
    sinkhorn_reg: float = 1e-3,
) -> TlpResult:
    """Transport distance between paired samples.

    Exact (network simplex) when both trimmed supports have at most
    ``max_exact`` points, else entropic with ``exact=False`` and a
    ``bracket`` of certified primal/dual bounds around the value.
    """
    if a.measure.zero_flag or b.measure.zero_flag:
        raise ZeroMeasureError("transport distance to the zero measure")
    if not p >= 1:
        raise ValueError("p must be >= 1")
    am, ia = a.measure.trimmed()
    bm, ib = b.measure.trimmed()
    at = PairedSample(am, a.values[ia])
    bt = PairedSample(bm, b.values[ib])
    C = _pairwise_cost(at, bt, p)
    aw = am.weights
    bw = bm.weights
    n, m = C.shape
    if max(n, m) <= max_exact:
        rows, cols, w, total, _ = _accel.network_simplex(aw, bw, C)
        cpl = Coupling(rows, cols, w, am.points, bm.points, aw, bw)
        cpl.check_marginals()
        d = max(total, 0.0) ** (1.0 / p)
        return TlpResult(d, cpl, True, p, (d, d))
    P, f, g = _sinkhorn_log(aw, bw, C, sinkhorn_reg)
    P = _round_to_polytope(P, aw, bw)
    primal = float(np.sum(P * C))
    gt = np.min(C - f[:, None], axis=0)
    ft = np.min(C - gt[None, :], axis=1)
    dual = float(aw @ ft + bw @ gt)
    value = 0.5 * (primal + max(dual, 0.0))
    rows, cols = np.nonzero(P > 1e-15 * P.max())
    cpl = Coupling(rows, cols, P[rows, cols], am.points, bm.points, aw, bw)
    lo = max(dual, 0.0) ** (1.0 / p)
    hi = max(primal, 0.0) ** (1.0 / p)
    return TlpResult(max(value, 0.0) ** (1.0 / p), cpl, False, p, (lo, hi))


def _phase_samples(state) -> tuple[PairedSample, PairedSample]:
    from .energy import measures_from  # local import; energy builds on this module

    meas = measures_from(state.v)
    c1 = state.c1.values.reshape(-1, state.c1.m)
    c2 = state.c2.values.reshape(-1, state.c2.m)
    return PairedSample(meas.lam_v, c1), PairedSample(meas.lam_1mv, c2)


def clp_distance(s, t, p: float, max_exact: int = 4096) -> float:
    """Distance between segmentation states: the two phase-wise transport
    distances added together."""
    s1, s2 = _phase_samples(s)
    t1, t2 = _phase_samples(t)
    d1 = tlp_distance(s1, t1, p, max_exact=max_exact)
    d2 = tlp_distance(s2, t2, p, max_exact=max_exact)
    return d1.distance + d2.distance


def pushforward(T, lam: DiscreteMeasure) -> DiscreteMeasure:
    """Image measure under a map given pointwise on the support."""
    if callable(T):
        img = np.asarray([T(x) for x in lam.points], np.float64)
    else:
        img = np.asarray(T, np.float64)
    img = np.atleast_2d(img)
    if img.shape[0] != lam.points.shape[0]:
        raise ShapeMismatchError("the map must be total on the support")
    uniq, inv = np.unique(img, axis=0, return_inverse=True)
    w = np.bincount(inv, weights=lam.weights, minlength=uniq.shape[0])
    if lam.zero_flag:
        return DiscreteMeasure(uniq, np.zeros(uniq.shape[0]), zero_flag=True)
    return DiscreteMeasure(uniq, w / w.sum())


def stagnation_cost(pi: Coupling, p: float) -> float:
    """How far the plan moves mass: sum of |x - y|^p over the plan."""
    disp = pi.displacement_moved()
    return float(np.sum(pi.vals * np.sum(disp * disp, axis=1) ** (p / 2.0)))


def barycentric_map(pi: Coupling) -> np.ndarray:
    """Plan-to-map reduction: each source point goes to the weighted mean of
    its targets."""
    n = pi.src_weights.size
    out = pi.src_points.copy()
    acc = np.zeros((n, 2))
    np.add.at(acc, pi.rows, pi.vals[:, None] * pi.tgt_points[pi.cols])
    mass = np.bincount(pi.rows, weights=pi.vals, minlength=n)
    pos = mass > 0
    out[pos] = acc[pos] / mass[pos][:, None]
    return out


def map_coupling(T: np.ndarray, lam: DiscreteMeasure) -> Coupling:
    """The deterministic plan that sends each support point x to T(x)."""
    img = np.atleast_2d(np.asarray(T, np.float64))
    if img.shape[0] != lam.points.shape[0]:
        raise ShapeMismatchError("the map must be total on the support")
    n = lam.points.shape[0]
    idx = np.arange(n)
    return Coupling(idx, idx, lam.weights.copy(), lam.points, img, lam.weights, lam.weights)


def clp_equivalent(s, t, tol: float = 1e-9) -> bool:
    """Whether two states are the same point of the quotient space.

    Branches: both phase fields essentially 0 (then only the second fields
    matter), both essentially 1 (only the first), else equal normalized
    densities and fields agreeing wherever the matching measure charges.
    """
    from .energy import measures_from
    from .grid import require_same_grid

    require_same_grid(s.v, t.v, s.c1, t.c1, s.c2, t.c2)
    sv = s.v.values
    tv = t.v.values
    mass_s = float(np.sum(np.abs(sv)))
    mass_t = float(np.sum(np.abs(tv)))
    mass_s1 = float(np.sum(np.abs(1.0 - sv)))
    mass_t1 = float(np.sum(np.abs(1.0 - tv)))

    def fields_close(a, b, where=None):
        d = np.max(np.abs(a.values - b.values), axis=2)
        if where is not None:
            if not where.any():
                return True
            d = d[where]
        return bool(np.max(d) <= tol) if d.size else True

    if mass_s == 0.0 or mass_t == 0.0:
        return (
            np.max(np.abs(sv)) <= tol
            and np.max(np.abs(tv)) <= tol
            and fields_close(s.c2, t.c2)
        )
    if mass_s1 == 0.0 or mass_t1 == 0.0:
        return (
            np.max(np.abs(1.0 - sv)) <= tol
            and np.max(np.abs(1.0 - tv)) <= tol
            and fields_close(s.c1, t.c1)
        )
    ms = measures_from(s.v)
    mt = measures_from(t.v)
    w1s = ms.lam_v.weights
    w1t = mt.lam_v.weights
    w2s = ms.lam_1mv.weights
    w2t = mt.lam_1mv.weights
    if np.max(np.abs(w1s - w1t)) > tol or np.max(np.abs(w2s - w2t)) > tol:
        return False
    g = s.v.grid
    on1 = (np.maximum(w1s, w1t) > tol).reshape(g.shape)
    on2 = (np.maximum(w2s, w2t) > tol).reshape(g.shape)
    return fields_close(s.c1, t.c1, on1) and fields_close(s.c2, t.c2, on2)
