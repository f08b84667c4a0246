"""Periodic/box chart grids and the fields living on them.

Grids never store a duplicated seam point on periodic axes, so discrete
adjoints and quadratures are exact.  All derivatives are second-order
centered differences with a one-sided second-order fallback at non-periodic
boundaries; operations that had to fall back record it in their metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GridMismatchError


@dataclass(frozen=True)
class ChartGrid:
    """A rectangular chart with per-axis periodicity.

    ``spacing[i]`` is ``length/n`` on periodic axes (points ``lo + j*h``,
    ``j < n``, the seam point identified with ``lo``) and ``length/(n-1)``
    otherwise (both endpoints stored).
    """

    dims: tuple[int, int, int]
    extents: tuple[tuple[float, float], ...]
    periodic: tuple[bool, bool, bool]

    def __post_init__(self):
        if len(self.dims) != 3 or len(self.extents) != 3 or len(self.periodic) != 3:
            raise ConfigError("ChartGrid needs 3 dims, 3 extents, 3 periodic flags")
        for n in self.dims:
            if n < 4:
                raise ConfigError(f"grid needs at least 4 points per axis, got {n}")
        for lo, hi in self.extents:
            if not hi > lo:
                raise ConfigError(f"empty extent ({lo}, {hi})")

    @property
    def spacing(self) -> tuple[float, float, float]:
        out = []
        for n, (lo, hi), per in zip(self.dims, self.extents, self.periodic):
            out.append((hi - lo) / n if per else (hi - lo) / (n - 1))
        return tuple(out)

    @property
    def lengths(self) -> tuple[float, float, float]:
        return tuple(hi - lo for lo, hi in self.extents)

    def axis(self, i: int) -> np.ndarray:
        lo, _ = self.extents[i]
        return lo + self.spacing[i] * np.arange(self.dims[i])

    def meshgrid(self):
        return np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")

    def axis_weights(self, i: int) -> np.ndarray:
        """1D quadrature weights: uniform on periodic axes, trapezoid otherwise."""
        h = self.spacing[i]
        w = np.full(self.dims[i], h)
        if not self.periodic[i]:
            w[0] = w[-1] = h / 2
        return w

    def quadrature_weights(self) -> np.ndarray:
        wx, wy, wz = (self.axis_weights(i) for i in range(3))
        return wx[:, None, None] * wy[None, :, None] * wz[None, None, :]

    def reduce_point(self, q) -> np.ndarray:
        """Reduce a point modulo the chart periods on periodic axes."""
        q = np.array(q, dtype=float)
        for i in range(3):
            if self.periodic[i]:
                lo, hi = self.extents[i]
                q[..., i] = lo + np.mod(q[..., i] - lo, hi - lo)
        return q


def partial_derivative(values: np.ndarray, grid: ChartGrid, axis: int):
    """Second-order d/dx_i of grid samples.

    Returns ``(derivative, used_one_sided)`` where the flag records the
    non-periodic boundary fallback.
    """
    h = grid.spacing[axis]
    if grid.periodic[axis]:
        out = (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2 * h)
        return out, False
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis), True


class ScalarField:
    """Grid samples of a scalar function (real or complex)."""

    def __init__(self, grid: ChartGrid, values):
        values = np.asarray(values)
        if values.shape != tuple(grid.dims):
            raise GridMismatchError(
                f"values shape {values.shape} != grid dims {grid.dims}"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigError("field values must be finite")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: ChartGrid, fn) -> "ScalarField":
        X, Y, Z = grid.meshgrid()
        vals = fn(X, Y, Z)
        if np.ndim(vals) == 0:
            vals = np.full(grid.dims, float(vals))
        return cls(grid, vals)

    @classmethod
    def constant(cls, grid: ChartGrid, value) -> "ScalarField":
        return cls(grid, np.full(grid.dims, value))

    def derivative(self, axis: int):
        out, flag = partial_derivative(self.values, self.grid, axis)
        return ScalarField(self.grid, out), flag

    def integrate(self) -> float:
        """Chart quadrature of the samples."""
        return float(np.sum(self.values * self.grid.quadrature_weights()).real) \
            if np.isrealobj(self.values) else complex(
                np.sum(self.values * self.grid.quadrature_weights()))

    def interpolate(self, points) -> np.ndarray:
        """Trilinear interpolation at (..., 3) points, periodic wrap where set."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = []
        frac = []
        for i in range(3):
            lo, hi = self.grid.extents[i]
            h = self.grid.spacing[i]
            n = self.grid.dims[i]
            t = (pts[:, i] - lo) / h
            if self.grid.periodic[i]:
                t = np.mod(t, n)
                i0 = np.floor(t).astype(int) % n
            else:
                t = np.clip(t, 0, n - 1)
                i0 = np.minimum(np.floor(t).astype(int), n - 2)
            idx.append(i0)
            frac.append(t - np.floor(t) if self.grid.periodic[i]
                        else t - i0)
        v = self.values
        out = np.zeros(pts.shape[0], dtype=v.dtype)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    ii = (idx[0] + dx) % self.grid.dims[0] if self.grid.periodic[0] \
                        else np.minimum(idx[0] + dx, self.grid.dims[0] - 1)
                    jj = (idx[1] + dy) % self.grid.dims[1] if self.grid.periodic[1] \
                        else np.minimum(idx[1] + dy, self.grid.dims[1] - 1)
                    kk = (idx[2] + dz) % self.grid.dims[2] if self.grid.periodic[2] \
                        else np.minimum(idx[2] + dz, self.grid.dims[2] - 1)
                    wx = frac[0] if dx else 1 - frac[0]
                    wy = frac[1] if dy else 1 - frac[1]
                    wz = frac[2] if dz else 1 - frac[2]
                    out += v[ii, jj, kk] * wx * wy * wz
        return out if np.asarray(points).ndim > 1 else out[0]

    def to_csv(self, path):
        """One row per grid point: x,y,z,value."""
        X, Y, Z = self.grid.meshgrid()
        with open(path, "w") as fh:
            fh.write("x,y,z,value\n")
            vals = self.values
            for x, y, z, v in zip(X.ravel(), Y.ravel(), Z.ravel(), vals.ravel()):
                fh.write(f"{x!r},{y!r},{z!r},{v!r}\n")

    def __add__(self, other):
        self._check(other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return ScalarField(self.grid, self.values * other.values)
        return ScalarField(self.grid, self.values * other)

    __rmul__ = __mul__

    def _check(self, other):
        if other.grid is not self.grid and other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")


class VectorFieldSpec:
    """A vector field as three component ScalarFields against (d/dx, d/dy, d/dz)."""

    def __init__(self, components):
        comps = tuple(components)
        if len(comps) != 3:
            raise ConfigError("vector field needs exactly 3 components")
        g = comps[0].grid
        for c in comps[1:]:
            if c.grid != g:
                raise GridMismatchError("vector components on different grids")
        self.components = comps
        self.grid = g

    @classmethod
    def from_functions(cls, grid: ChartGrid, fns) -> "VectorFieldSpec":
        return cls(tuple(ScalarField.from_function(grid, f) for f in fns))

    def component_values(self) -> np.ndarray:
        """Stack of component samples, shape (3, n1, n2, n3)."""
        return np.stack([c.values for c in self.components])

    def evaluate(self, points) -> np.ndarray:
        return np.stack(
            [c.interpolate(points) for c in self.components], axis=-1
        )

    def __neg__(self):
        return VectorFieldSpec(tuple(ScalarField(self.grid, -c.values)
                                     for c in self.components))

    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(c.values))) for c in self.components)


class OneFormSpec:
    """A one-form as three coefficient ScalarFields against (dx, dy, dz)."""

    def __init__(self, components):
        comps = tuple(components)
        if len(comps) != 3:
            raise ConfigError("one-form needs exactly 3 components")
        g = comps[0].grid
        for c in comps[1:]:
            if c.grid != g:
                raise GridMismatchError("one-form components on different grids")
        self.components = comps
        self.grid = g

    def component_values(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])

    def pair(self, V: VectorFieldSpec) -> ScalarField:
        """Pointwise pairing alpha(V)."""
        vals = sum(a.values * v.values
                   for a, v in zip(self.components, V.components))
        return ScalarField(self.grid, vals)
