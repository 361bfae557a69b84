"""Finite quadrature representations of the measure space and the time axis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, Unsupported


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BoxGeometry:
    dim: int
    points_per_axis: int
    length: float

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.points_per_axis)

    @property
    def volume(self) -> float:
        return self.length**self.dim


@dataclass(frozen=True, eq=False)
class DiscreteMeasureSpace:
    """Points with positive masses; ``coords`` is set for box spaces only."""

    weights: np.ndarray
    label: str = "finite"
    coords: np.ndarray | None = None
    box: BoxGeometry | None = None

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise InvalidArgument("weights must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidArgument("weights must be finite and strictly positive")
        object.__setattr__(self, "weights", w)
        if self.coords is not None:
            c = _frozen(self.coords)
            if c.shape[0] != w.size:
                raise InvalidArgument("coords do not match the number of points")
            object.__setattr__(self, "coords", c)

    @property
    def points(self) -> range:
        return range(self.weights.size)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_n = T."""

    horizon: float
    steps: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidArgument("horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidArgument("steps must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))
        nodes = np.arange(self.steps + 1) * (self.horizon / self.steps)
        nodes[-1] = self.horizon
        object.__setattr__(self, "nodes", _frozen(nodes))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.steps * int(factor))

    def __len__(self) -> int:
        return self.steps + 1


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values indexed by (point, time node)."""

    space: DiscreteMeasureSpace
    time: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.space.size, len(self.time)):
            raise InvalidArgument(
                f"values shape {v.shape} != ({self.space.size}, {len(self.time)})"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, space, time, value: float) -> "GridFunction":
        return cls(space, time, np.full((space.size, len(time)), float(value)))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.space, self.time, values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def build_finite_state_space(weights, label: str = "finite") -> DiscreteMeasureSpace:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidArgument("weight list must be non-empty")
    return DiscreteMeasureSpace(w, label=label)


def build_box_space(dim: int, points_per_axis: int, length: float) -> DiscreteMeasureSpace:
    """Tensor grid on [0, length]^dim with trapezoidal weights.

    Points are ordered row-major (last axis fastest), matching ``np.kron``.
    """
    if dim not in (1, 2):
        raise Unsupported(f"box spaces support dim 1 or 2, got {dim}")
    if int(points_per_axis) != points_per_axis or points_per_axis < 2:
        raise InvalidArgument("need at least 2 points per axis")
    if not length > 0:
        raise InvalidArgument("side length must be positive")
    geom = BoxGeometry(dim, int(points_per_axis), float(length))
    h = geom.length / (geom.points_per_axis - 1)
    w1 = np.full(geom.points_per_axis, h)
    w1[0] = w1[-1] = h / 2
    x1 = geom.axis
    if dim == 1:
        weights, coords = w1, x1[:, None]
    else:
        weights = np.kron(w1, w1)
        xx, yy = np.meshgrid(x1, x1, indexing="ij")
        coords = np.column_stack([xx.ravel(), yy.ravel()])
    return DiscreteMeasureSpace(weights, label=f"box{dim}d", coords=coords, box=geom)


def integrate(space: DiscreteMeasureSpace, f) -> float:
    """Quadrature sum of f against the weights; a scalar means a constant."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        f = np.full(space.size, float(f))
    if f.shape != (space.size,):
        raise InvalidArgument(f"function has shape {f.shape}, space has {space.size} points")
    return float(f @ space.weights)
