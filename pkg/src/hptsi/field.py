"""Uniform 1D spatial grids and the fields sampled on them.

All transforms in this package map grid points to off-grid locations, so the
central operation is :func:`evaluate`, a clamped piecewise-linear lookup.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Number of sub-samples used to integrate the mollifier kernel against hats.
KERNEL_QUADRATURE_POINTS = 2001


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[x_min, x_max]`` with ``n_points`` nodes."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be smaller than x_max")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError("n_points must be an integer >= 2")

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, h: float) -> "Grid1D":
        n = int(round((x_max - x_min) / h)) + 1
        grid = cls(float(x_min), float(x_max), n)
        if abs(grid.h - h) > 1e-9 * abs(h):
            raise ValueError(f"h={h} does not divide [{x_min}, {x_max}]")
        return grid

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_points, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid1D":
        return cls(float(d["x_min"]), float(d["x_max"]), int(d["n_points"]))


@dataclass(frozen=True, eq=False)
class SampledField:
    """Values of a function at the nodes of a :class:`Grid1D`."""

    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid1D, func) -> "SampledField":
        return cls(grid, np.asarray(func(grid.x), dtype=float) * np.ones(grid.n_points))

    def __add__(self, other):
        if isinstance(other, SampledField):
            _check_same_grid(self, other)
            return SampledField(self.grid, self.values + other.values)
        return SampledField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, SampledField):
            _check_same_grid(self, other)
            return SampledField(self.grid, self.values - other.values)
        return SampledField(self.grid, self.values - other)

    def __mul__(self, scalar):
        return SampledField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SampledField":
        return cls(Grid1D.from_dict(d["grid"]), np.asarray(d["values"], dtype=float))


def _check_same_grid(f: SampledField, g: SampledField):
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


def evaluate(f: SampledField, x):
    """Piecewise-linear interpolation of ``f`` at ``x``, clamped outside the grid."""
    out = np.interp(x, f.grid.x, f.values)
    return float(out) if np.ndim(out) == 0 else out


def slope(f: SampledField, x) -> np.ndarray:
    """Derivative of the piecewise-linear interpolant; zero outside the grid."""
    return interp_slope(f.grid, f.values, x)


def interp_slope(grid: Grid1D, values: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = grid.h
    idx = np.floor((x - grid.x_min) / h).astype(int)
    np.clip(idx, 0, grid.n_points - 2, out=idx)
    s = (values[idx + 1] - values[idx]) / h
    inside = (x >= grid.x_min) & (x <= grid.x_max)
    return np.where(inside, s, 0.0)


def l1_norm(f: SampledField) -> float:
    return float(np.dot(f.grid.trapezoid_weights(), np.abs(f.values)))


def l1_distance(f: SampledField, g: SampledField) -> float:
    """Composite trapezoid approximation of ``||f - g||_L1``."""
    _check_same_grid(f, g)
    return float(np.dot(f.grid.trapezoid_weights(), np.abs(f.values - g.values)))


def total_variation(f: SampledField) -> float:
    return float(np.sum(np.abs(np.diff(f.values))))


def mollifier_kernel(s, width: float):
    """Normalized squared-cosine bump supported on ``[-width/2, width/2]``."""
    s = np.asarray(s, dtype=float)
    k = (2.0 / width) * np.cos(np.pi * s / width) ** 2
    return np.where(np.abs(s) <= 0.5 * width, k, 0.0)


def mollifier_stencil(h: float, width: float) -> np.ndarray:
    """Discrete weights ``c_k`` with ``(K * f)(x_i) = sum_k c_k f_{i-k}``.

    ``f`` is the piecewise-linear interpolant of the samples, so
    ``c_k = int K(s) hat(k - s/h) ds``.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    r = int(np.ceil(0.5 * width / h)) + 1
    s = np.linspace(-0.5 * width, 0.5 * width, KERNEL_QUADRATURE_POINTS)
    ks = mollifier_kernel(s, width)
    ds = s[1] - s[0]
    tw = np.full(s.size, ds)
    tw[0] = tw[-1] = 0.5 * ds
    offsets = np.arange(-r, r + 1)
    hats = np.clip(1.0 - np.abs(offsets[:, None] - s[None, :] / h), 0.0, None)
    c = hats @ (ks * tw)
    return c / c.sum()


def mollify(f: SampledField, width: float) -> SampledField:
    """Convolve ``f`` with the compact squared-cosine kernel of support ``width``.

    The field is extended by its boundary values, so constants are preserved
    exactly.
    """
    c = mollifier_stencil(f.grid.h, width)
    r = (c.size - 1) // 2
    padded = np.pad(f.values, r, mode="edge")
    # c_k pairs with f_{i-k}: a plain convolution
    out = np.convolve(padded, c, mode="valid")
    return SampledField(f.grid, out)


def mollify_rows(grid: Grid1D, values: np.ndarray, width: float) -> np.ndarray:
    """Apply :func:`mollify` to every row of a ``(..., n_points)`` array."""
    c = mollifier_stencil(grid.h, width)
    r = (c.size - 1) // 2
    values = np.asarray(values, dtype=float)
    flat = values.reshape(-1, values.shape[-1])
    padded = np.pad(flat, ((0, 0), (r, r)), mode="edge")
    out = np.empty_like(flat)
    for i, row in enumerate(padded):
        out[i] = np.convolve(row, c, mode="valid")
    return out.reshape(values.shape)
