"""Uniform cell-centered grids and the discrete calculus on them.

Fields live on a rectangular grid of cells over a box domain (``ny == 1``
gives the 1D degenerate mode).  Arrays are indexed ``[j, i]`` with ``j`` the
row (y) and ``i`` the column (x); the center of cell ``(i, j)`` sits at
``origin + ((i + 1/2) hx, (j + 1/2) hy)``.  All types are immutable after
construction and every operation here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import edt_sq
from .errors import DegenerateSetError, ShapeMismatchError


@dataclass(frozen=True)
class Grid:
    """Geometry of the computational domain."""

    nx: int
    ny: int = 1
    hx: float = 1.0
    hy: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 2:
            raise ValueError(f"nx must be >= 2, got {self.nx}")
        if self.ny < 1:
            raise ValueError(f"ny must be >= 1, got {self.ny}")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("cell widths must be positive")

    @classmethod
    def unit_square(cls, n: int) -> "Grid":
        return cls(nx=n, ny=n, hx=1.0 / n, hy=1.0 / n)

    @classmethod
    def line(cls, n: int, length: float = 1.0) -> "Grid":
        return cls(nx=n, ny=1, hx=length / n, hy=1.0)

    @classmethod
    def box(cls, nx: int, ny: int, width: float = 1.0, height: float = 1.0) -> "Grid":
        return cls(nx=nx, ny=ny, hx=width / nx, hy=height / ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def is_1d(self) -> bool:
        return self.ny == 1

    @property
    def dim(self) -> int:
        return 1 if self.is_1d else 2

    @property
    def extent(self) -> tuple[float, float]:
        return (self.nx * self.hx, self.ny * self.hy)

    @property
    def cell_area(self) -> float:
        # 1D cells carry measure hx (hy is a dummy unit width there)
        return self.hx if self.is_1d else self.hx * self.hy

    @property
    def volume(self) -> float:
        return self.n_cells * self.cell_area

    def cell_x(self) -> np.ndarray:
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.hx
        return np.broadcast_to(x[None, :], self.shape)

    def cell_y(self) -> np.ndarray:
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.hy
        return np.broadcast_to(y[:, None], self.shape)

    def cell_centers(self) -> np.ndarray:
        """All cell centers as an (n_cells, 2) array in row-major order."""
        out = np.empty((self.n_cells, 2))
        out[:, 0] = self.cell_x().ravel()
        out[:, 1] = self.cell_y().ravel()
        if self.is_1d:
            out[:, 1] = 0.0
        return out


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScalarField:
    """One real value per cell."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, np.float64).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _freeze(v.copy()))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.grid.cell_area)


@dataclass(frozen=True)
class MultiField:
    """m >= 1 real values per cell, stored channel-last as (ny, nx, m)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.shape[:2] != self.grid.shape:
            raise ShapeMismatchError(
                f"values shape {v.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _freeze(v.copy()))

    @classmethod
    def constant(cls, grid: Grid, vector) -> "MultiField":
        vec = np.atleast_1d(np.asarray(vector, np.float64))
        return cls(grid, np.broadcast_to(vec, grid.shape + (vec.size,)).copy())

    @property
    def m(self) -> int:
        return self.values.shape[2]

    def channel(self, k: int) -> np.ndarray:
        return self.values[:, :, k]

    def channel_mean(self) -> np.ndarray:
        return self.values.mean(axis=2)

    def with_values(self, values: np.ndarray) -> "MultiField":
        return MultiField(self.grid, values)


@dataclass(frozen=True)
class IndicatorField:
    """A {0,1}-valued cell mask."""

    grid: Grid
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.dtype != np.bool_:
            vals = np.asarray(m, np.float64)
            if not np.all((vals == 0) | (vals == 1)):
                raise ValueError("indicator values must be exactly 0 or 1")
            m = vals.astype(bool)
        m = m.reshape(self.grid.shape)
        object.__setattr__(self, "mask", _freeze(m.copy()))

    def to_scalar(self) -> ScalarField:
        return ScalarField(self.grid, self.mask.astype(np.float64))

    @property
    def volume(self) -> float:
        return float(np.count_nonzero(self.mask)) * self.grid.cell_area

    def is_degenerate(self) -> bool:
        n_on = np.count_nonzero(self.mask)
        return n_on == 0 or n_on == self.mask.size


# ---------------------------------------------------------------------------
# discrete calculus
# ---------------------------------------------------------------------------


def gradient_arrays(values: np.ndarray, hx: float, hy: float):
    """Forward differences with zero flux across the top/right boundary."""
    gx = np.zeros_like(values)
    gy = np.zeros_like(values)
    gx[:, :-1] = (values[:, 1:] - values[:, :-1]) / hx
    if values.shape[0] > 1:
        gy[:-1, :] = (values[1:, :] - values[:-1, :]) / hy
    return gx, gy


def gradient_forward(f: ScalarField):
    """Per-cell gradient (gx, gy) of a scalar field."""
    return gradient_arrays(f.values, f.grid.hx, f.grid.hy)


def gradient_magnitude(f: ScalarField) -> np.ndarray:
    gx, gy = gradient_forward(f)
    return np.hypot(gx, gy)


def divergence_adjoint(qx: np.ndarray, qy: np.ndarray, hx: float, hy: float):
    """Adjoint of :func:`gradient_arrays`, so <G f, q> = <f, G^T q> exactly."""
    out = np.zeros_like(qx)
    out[:, :-1] -= qx[:, :-1] / hx
    out[:, 1:] += qx[:, :-1] / hx
    if qy.shape[0] > 1:
        out[:-1, :] -= qy[:-1, :] / hy
        out[1:, :] += qy[:-1, :] / hy
    return out


def tv_isotropic(f: ScalarField) -> float:
    """Total variation: cell sum of the Euclidean gradient norm."""
    return float(np.sum(gradient_magnitude(f)) * f.grid.cell_area)


def threshold_half(v: ScalarField) -> IndicatorField:
    """Cellwise split at 1/2; the tie v == 1/2 goes to the 0 phase."""
    return IndicatorField(v.grid, v.values > 0.5)


def translate_cells(values: np.ndarray, di: int, dj: int) -> np.ndarray:
    """Shift by whole cells (+di right, +dj up), replicating at the edges."""
    ny, nx = values.shape
    src_i = np.clip(np.arange(nx) - di, 0, nx - 1)
    src_j = np.clip(np.arange(ny) - dj, 0, ny - 1)
    return values[np.ix_(src_j, src_i)]


# ---------------------------------------------------------------------------
# boundary geometry of indicator sets
# ---------------------------------------------------------------------------


def boundary_faces(E: IndicatorField):
    """Midpoints and (d-1)-measures of the faces where the mask flips.

    Returns ``(points, lengths)`` with points of shape (P, 2).  In 1D each
    jump point carries counting measure 1.
    """
    g = E.grid
    m = E.mask
    pts = []
    lens = []
    flip_v = m[:, 1:] != m[:, :-1]
    jj, ii = np.nonzero(flip_v)
    if ii.size:
        x = g.origin[0] + (ii + 1.0) * g.hx
        y = g.origin[1] + (jj + 0.5) * g.hy
        if g.is_1d:
            y = np.zeros_like(x)
        pts.append(np.column_stack([x, y]))
        lens.append(np.full(ii.size, 1.0 if g.is_1d else g.hy))
    if not g.is_1d:
        flip_h = m[1:, :] != m[:-1, :]
        jj, ii = np.nonzero(flip_h)
        if ii.size:
            x = g.origin[0] + (ii + 0.5) * g.hx
            y = g.origin[1] + (jj + 1.0) * g.hy
            pts.append(np.column_stack([x, y]))
            lens.append(np.full(ii.size, g.hx))
    if not pts:
        raise DegenerateSetError("the set has no boundary (empty or full mask)")
    return np.concatenate(pts, axis=0), np.concatenate(lens)


def boundary_cells(E: IndicatorField) -> np.ndarray:
    """Boolean mask of cells adjacent to a flip face."""
    m = E.mask
    out = np.zeros_like(m)
    flip_v = m[:, 1:] != m[:, :-1]
    out[:, :-1] |= flip_v
    out[:, 1:] |= flip_v
    if m.shape[0] > 1:
        flip_h = m[1:, :] != m[:-1, :]
        out[:-1, :] |= flip_h
        out[1:, :] |= flip_h
    return out


def distance_to_boundary(E: IndicatorField) -> np.ndarray:
    """Exact Euclidean distance from each cell center to the face set.

    The face midpoints and the cell centers both live on the half-spaced
    lattice, so one exact distance transform on that lattice serves, sampled
    back at the cell centers.
    """
    if E.is_degenerate():
        raise DegenerateSetError("distance to the boundary of an empty/full set")
    g = E.grid
    m = E.mask
    seeds = np.zeros((2 * g.ny, 2 * g.nx), dtype=bool)
    seeds[::2, 1:-1:2] = m[:, 1:] != m[:, :-1]
    if not g.is_1d:
        seeds[1:-1:2, ::2] = m[1:, :] != m[:-1, :]
    d2 = edt_sq(seeds, g.hx / 2.0, g.hy / 2.0)
    return np.sqrt(d2[::2, ::2])


def signed_distance(E: IndicatorField) -> np.ndarray:
    """Distance to the boundary, positive inside the set, negative outside."""
    d = distance_to_boundary(E)
    return np.where(E.mask, d, -d)


def minkowski_volume(E: IndicatorField, a: float) -> float:
    """Measure of the cells whose center lies within distance ``a`` of the
    discrete boundary."""
    g = E.grid
    if not a > max(g.hx, g.hy if not g.is_1d else 0.0):
        raise ValueError(f"a = {a} must exceed the cell size")
    d = distance_to_boundary(E)
    return float(np.count_nonzero(d <= a)) * g.cell_area


@dataclass(frozen=True)
class DensityCheckReport:
    """Outcome of a lower perimeter-density sweep over boundary points."""

    passed: bool
    kappa: float
    exponent: float
    min_ratio: float
    worst_center: tuple[float, float]
    worst_radius: float
    radii: tuple[float, ...] = field(default=())


def perimeter_density_check(
    E: IndicatorField,
    kappa: float,
    r0: float,
    exponent: float | None = None,
) -> DensityCheckReport:
    """Check P(E; B_r(x)) >= kappa * r^exponent on a dyadic radius ladder.

    Radii run over r0/2, r0/4, ... while they stay above twice the cell
    size; x ranges over every boundary cell center.  The exponent defaults
    to d - 1, which makes both sides scale like a (d-1)-measure; pass
    ``exponent=E.grid.dim`` for the stricter variant.
    """
    g = E.grid
    if E.is_degenerate():
        raise DegenerateSetError("density check needs a nondegenerate set")
    ext = g.extent
    if not (0 < r0 <= max(ext)):
        raise ValueError(f"r0 = {r0} outside (0, {max(ext)}]")
    if exponent is None:
        exponent = g.dim - 1
    h = g.hx if g.is_1d else max(g.hx, g.hy)
    radii = []
    r = r0 / 2.0
    while r > 2.0 * h:
        radii.append(r)
        r /= 2.0
    if not radii:
        raise ValueError("r0 leaves no usable radius above the grid resolution")

    face_pts, face_len = boundary_faces(E)
    bmask = boundary_cells(E)
    centers = np.column_stack(
        [g.cell_x()[bmask], g.cell_y()[bmask] if not g.is_1d else np.zeros(np.count_nonzero(bmask))]
    )
    # pairwise distances boundary-cell -> face midpoint, chunked over centers
    min_ratio = np.inf
    worst = (np.nan, np.nan)
    worst_r = np.nan
    chunk = max(1, int(2e7) // max(1, face_pts.shape[0]))
    for s in range(0, centers.shape[0], chunk):
        cs = centers[s : s + chunk]
        d = np.sqrt(
            (cs[:, None, 0] - face_pts[None, :, 0]) ** 2
            + (cs[:, None, 1] - face_pts[None, :, 1]) ** 2
        )
        for r in radii:
            per = (d < r) @ face_len
            ratios = per / r**exponent
            k = int(np.argmin(ratios))
            if ratios[k] < min_ratio:
                min_ratio = float(ratios[k])
                worst = (float(cs[k, 0]), float(cs[k, 1]))
                worst_r = float(r)
    return DensityCheckReport(
        passed=bool(min_ratio >= kappa),
        kappa=float(kappa),
        exponent=float(exponent),
        min_ratio=min_ratio,
        worst_center=worst,
        worst_radius=worst_r,
        radii=tuple(radii),
    )


def require_same_grid(*fields) -> Grid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ShapeMismatchError("fields live on different grids")
    return g
