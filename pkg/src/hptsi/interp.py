"""Interpolation nodes, barycentric Lagrange weights and plain snapshot
interpolation in one parameter variable."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hptsi.field import SampledField


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Strictly increasing interpolation nodes inside ``interval``."""

    interval: tuple
    nodes: np.ndarray
    kind: str = "custom"
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a, b = map(float, self.interval)
        nodes = np.array(self.nodes, dtype=float).reshape(-1)
        if nodes.size == 0:
            raise ValueError("need at least one node")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        if nodes[0] < a - tol or nodes[-1] > b + tol:
            raise ValueError(f"nodes must lie in [{a}, {b}]")
        nodes.setflags(write=False)
        object.__setattr__(self, "interval", (a, b))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", barycentric_weights(nodes))

    def __len__(self):
        return self.nodes.size

    def __iter__(self):
        return iter(self.nodes.tolist())

    def index(self, value: float, tol: float = 1e-12) -> int:
        """Position of ``value`` among the nodes; ``KeyError`` if absent."""
        d = np.abs(self.nodes - value)
        i = int(np.argmin(d))
        if d[i] > tol * max(1.0, abs(value)):
            raise KeyError(f"{value!r} is not a node of this set")
        return i

    def contains(self, mu: float, tol: float = 1e-12) -> bool:
        a, b = self.interval
        return a - tol <= mu <= b + tol

    def to_dict(self) -> dict:
        return {"interval": list(self.interval), "nodes": self.nodes.tolist(),
                "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "NodeSet":
        return cls(tuple(d["interval"]), np.asarray(d["nodes"]), d.get("kind", "custom"))


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    """Second-kind barycentric weights, scaled to unit maximum."""
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    # scale each factor by the interval length to avoid overflow
    scale = max(nodes[-1] - nodes[0], 1.0) / 4.0 if nodes.size > 1 else 1.0
    w = 1.0 / np.prod(diff / scale, axis=1)
    return w / np.max(np.abs(w))


def chebyshev_nodes(n: int, interval=(-1.0, 1.0)) -> NodeSet:
    """First-kind Chebyshev points mapped to ``interval``, ascending."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = map(float, interval)
    t = np.cos((2 * np.arange(n) + 1) * np.pi / (2 * n))[::-1]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * t
    if n % 2 == 1:
        nodes[n // 2] = 0.5 * (a + b)
    return NodeSet((a, b), nodes, "chebyshev")


def equispaced_nodes(n: int, interval=(-1.0, 1.0)) -> NodeSet:
    a, b = map(float, interval)
    nodes = np.array([0.5 * (a + b)]) if n == 1 else np.linspace(a, b, n)
    return NodeSet((a, b), nodes, "equispaced")


def lagrange_matrix(nodes: NodeSet, mus) -> np.ndarray:
    """Values ``ell_j(mu_i)`` of all Lagrange polynomials, shape ``(len(mus), n)``.

    Uses the second barycentric form; rows are exact unit vectors at nodes.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    x = nodes.nodes
    w = nodes.weights
    d = mus[:, None] - x[None, :]
    exact = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = w[None, :] / d
        out = t / t.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if hit.any():
        out[hit] = exact[hit].astype(float)
    return out


def lagrange_coeffs(nodes: NodeSet, mu: float) -> np.ndarray:
    """Lagrange basis values ``ell_eta(mu)`` for every node ``eta``."""
    if not np.isfinite(mu):
        raise ValueError("mu must be finite")
    return lagrange_matrix(nodes, [mu])[0]


def interpolate_fields(snapshots: Sequence[SampledField], nodes: NodeSet,
                       mu: float) -> SampledField:
    """Plain snapshot interpolation ``sum_eta ell_eta(mu) u(., eta)``."""
    if len(snapshots) != len(nodes):
        raise ValueError(f"{len(snapshots)} snapshots for {len(nodes)} nodes")
    grid = snapshots[0].grid
    for s in snapshots[1:]:
        if s.grid != grid:
            raise ValueError("snapshots must share a grid")
    coeffs = lagrange_coeffs(nodes, mu)
    values = coeffs @ np.stack([s.values for s in snapshots])
    return SampledField(grid, values)


def lebesgue_constant(nodes: NodeSet, resolution: int = 1000) -> float:
    """Maximum of the Lebesgue function over a uniform sample of the interval."""
    if resolution < 10 * len(nodes):
        raise ValueError("resolution must be at least 10 times the node count")
    a, b = nodes.interval
    mus = np.linspace(a, b, resolution)
    return float(np.max(np.abs(lagrange_matrix(nodes, mus)).sum(axis=1)))
