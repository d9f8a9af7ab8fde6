"""Double-well potentials: wells at 0 and 1, linear growth far out.

A well is stored with its derivative, a growth certificate (L, T) meaning
W(t) >= L|t| once |t| >= T, and the cached interface cost

    cw = 2 * integral_0^1 sqrt(W(t)) dt,

the per-unit-length energy of an optimal phase transition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import QuadratureError

BUILTIN_WELLS = ("quartic", "sine")


@dataclass(frozen=True)
class DoubleWell:
    w: Callable[[np.ndarray], np.ndarray]
    dw: Callable[[np.ndarray], np.ndarray]
    growth: tuple[float, float]
    cw: float
    name: str = ""

    def __call__(self, t):
        return self.w(np.asarray(t, np.float64))

    def deriv(self, t):
        return self.dw(np.asarray(t, np.float64))


def _adaptive_simpson(f, lo, hi, tol, max_depth=60):
    """Adaptive Simpson quadrature with absolute tolerance ``tol``."""

    def simpson(a, fa, fm, fb, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, fm, fb, b, whole, tol, depth):
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = float(f(lm))
        frm = float(f(rm))
        left = simpson(a, fa, flm, fm, m)
        right = simpson(m, fm, frm, fb, b)
        err = left + right - whole
        if abs(err) <= 15.0 * tol:
            return left + right + err / 15.0
        if depth <= 0:
            raise QuadratureError(
                f"adaptive quadrature did not converge on [{a}, {b}]"
            )
        return recurse(a, fa, flm, fm, m, left, tol / 2.0, depth - 1) + recurse(
            m, fm, frm, fb, b, right, tol / 2.0, depth - 1
        )

    fa = float(f(lo))
    fm = float(f(0.5 * (lo + hi)))
    fb = float(f(hi))
    whole = simpson(lo, fa, fm, fb, hi)
    return recurse(lo, fa, fm, fb, hi, whole, tol, max_depth)


def _cw_quadrature(w: Callable, tol: float) -> float:
    # split at the wells: sqrt(W) typically has kinks at t = 0 and t = 1
    f = lambda t: 2.0 * np.sqrt(max(float(w(t)), 0.0))
    val = 0.0
    for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
        val += _adaptive_simpson(f, lo, hi, tol / 2.0)
    return val


def compute_cw(well: DoubleWell, tol: float = 1e-10) -> float:
    """Interface cost 2*int_0^1 sqrt(W) by adaptive Simpson quadrature."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    val = _cw_quadrature(well.w, tol)
    if not val > 0:
        raise ValueError("the well constant must be positive")
    return val


def make_well(
    w: Callable,
    dw: Callable,
    growth: tuple[float, float],
    name: str = "",
    cw_tol: float = 1e-12,
) -> DoubleWell:
    cw = _cw_quadrature(w, cw_tol)
    return DoubleWell(w=w, dw=dw, growth=(float(growth[0]), float(growth[1])), cw=cw, name=name)


def make_quartic() -> DoubleWell:
    """W(t) = t^2 (t-1)^2, the standard quartic well; cw = 1/3."""

    def w(t):
        t = np.asarray(t, np.float64)
        return t * t * (t - 1.0) * (t - 1.0)

    def dw(t):
        t = np.asarray(t, np.float64)
        return 2.0 * t * (t - 1.0) * (2.0 * t - 1.0)

    return make_well(w, dw, growth=(1.0, 2.0), name="quartic")


def make_sine() -> DoubleWell:
    """Sine-squared well on [0, 1] with a matched quadratic continuation.

    W(t) = sin(pi t)^2 / 4 between the wells and (pi^2/4) t^2 (resp.
    (pi^2/4)(t-1)^2) outside, which keeps W in C^1, kills the spurious
    periodic zeros, and restores linear growth; cw = 2/pi.
    """
    q = np.pi * np.pi / 4.0

    def w(t):
        t = np.asarray(t, np.float64)
        inside = 0.25 * np.sin(np.pi * t) ** 2
        below = q * t * t
        above = q * (t - 1.0) ** 2
        return np.where(t < 0.0, below, np.where(t > 1.0, above, inside))

    def dw(t):
        t = np.asarray(t, np.float64)
        inside = 0.25 * np.pi * np.sin(2.0 * np.pi * t)
        below = 2.0 * q * t
        above = 2.0 * q * (t - 1.0)
        return np.where(t < 0.0, below, np.where(t > 1.0, above, inside))

    return make_well(w, dw, growth=(1.0, 2.0), name="sine")


def builtin_well(name: str) -> DoubleWell:
    if name == "quartic":
        return make_quartic()
    if name == "sine":
        return make_sine()
    raise ValueError(f"unknown well '{name}'; choose from {BUILTIN_WELLS}")


def scale_well(well: DoubleWell, factor: float) -> DoubleWell:
    """The well factor*W; its interface cost is sqrt(factor)*cw."""
    if not factor > 0:
        raise ValueError("scale factor must be positive")
    return DoubleWell(
        w=lambda t: factor * well.w(t),
        dw=lambda t: factor * well.dw(t),
        growth=(factor * well.growth[0], well.growth[1]),
        cw=float(np.sqrt(factor)) * well.cw,
        name=f"{well.name}*{factor:g}" if well.name else "",
    )


@dataclass(frozen=True)
class AssumptionReport:
    ok: bool
    message: str
    offending_t: float | None
    n_samples: int


def validate_assumption(
    well: DoubleWell, samples: int = 400, zero_tol: float = 1e-12
) -> AssumptionReport:
    """Sampled check of the double-well requirements on [-2T, 2T].

    Verifies nonnegativity, wells exactly at {0, 1}, no other (near-)zeros,
    and the linear-growth certificate W(t) >= L|t| for |t| >= T.  Reports
    the first violation found.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    L, T = well.growth
    ts = np.linspace(-2.0 * T, 2.0 * T, samples)
    ts = np.unique(np.concatenate([ts, [0.0, 1.0]]))
    vals = np.asarray(well(ts), np.float64)

    def fail(t, msg):
        return AssumptionReport(False, msg, float(t), ts.size)

    for t0 in (0.0, 1.0):
        v = float(well(t0))
        if abs(v) > zero_tol:
            return fail(t0, f"W({t0:g}) = {v:.3e}, expected a well (0)")
    bad = np.nonzero(vals < -zero_tol)[0]
    if bad.size:
        t = ts[bad[0]]
        return fail(t, f"W({t:.6g}) = {vals[bad[0]]:.3e} < 0")
    spacing = 4.0 * T / max(samples - 1, 1)
    near_zero = np.nonzero(vals <= zero_tol)[0]
    for k in near_zero:
        t = ts[k]
        if min(abs(t), abs(t - 1.0)) > spacing + 1e-15:
            return fail(t, f"W vanishes at t = {t:.6g}, away from the wells")
    far = np.abs(ts) >= T
    short = vals[far] < L * np.abs(ts[far]) - zero_tol
    if np.any(short):
        t = ts[far][np.nonzero(short)[0][0]]
        return fail(
            t, f"growth W(t) >= {L:g}|t| fails at t = {t:.6g}"
        )
    return AssumptionReport(True, "ok", None, ts.size)
