"""Transformed snapshot interpolation on a single parameter cell.

Given snapshots ``u(., eta)`` at nodes ``eta`` and transforms ``phi(mu, eta)``,
the approximation at ``mu`` is

    sum_eta ell_eta(mu) * u(phi(mu, eta)(x), eta),

which reduces to plain Lagrange interpolation for identity transforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from hptsi.field import Grid1D, SampledField, l1_distance
from hptsi.interp import NodeSet, lagrange_matrix
from hptsi.transforms import TransformSet


class OutsideCellError(ValueError):
    """A parameter outside the model's cell was requested."""


@dataclass(frozen=True, eq=False)
class TsiCellModel:
    nodes: NodeSet
    snapshots: tuple
    transforms: TransformSet

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if len(snaps) != len(self.nodes):
            raise ValueError(f"{len(snaps)} snapshots for {len(self.nodes)} nodes")
        grid = snaps[0].grid
        if any(s.grid != grid for s in snaps[1:]):
            raise ValueError("snapshots must share a grid")
        if not np.allclose(self.transforms.source_nodes.nodes, self.nodes.nodes,
                           rtol=0, atol=1e-14):
            raise ValueError("transform source nodes differ from the model nodes")
        object.__setattr__(self, "snapshots", snaps)
        table = np.stack([s.values for s in snaps])
        table.setflags(write=False)
        object.__setattr__(self, "_table", table)

    @property
    def degree(self) -> int:
        return len(self.nodes) - 1

    @property
    def grid(self) -> Grid1D:
        return self.snapshots[0].grid

    @property
    def interval(self):
        return self.nodes.interval

    def to_dict(self) -> dict:
        return {"nodes": self.nodes.to_dict(),
                "snapshots": [s.to_dict() for s in self.snapshots],
                "transforms": self.transforms.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TsiCellModel":
        return cls(NodeSet.from_dict(d["nodes"]),
                   tuple(SampledField.from_dict(s) for s in d["snapshots"]),
                   TransformSet.from_dict(d["transforms"]))


def _check_inside(model: TsiCellModel, mus: np.ndarray):
    a, b = model.interval
    tol = 1e-12 * max(1.0, abs(a), abs(b))
    bad = (mus < a - tol) | (mus > b + tol) | ~np.isfinite(mus)
    if np.any(bad):
        raise OutsideCellError(f"parameter {mus[bad][0]!r} outside cell [{a}, {b}]")


def transformed_snapshot(model: TsiCellModel, mu: float, eta: float) -> SampledField:
    """``x -> u(phi(mu, eta)(x), eta)`` on the model grid."""
    i = model.transforms.source_index(eta)
    x = model.grid.x
    y = model.transforms.apply(mu, eta, x)
    return SampledField(model.grid, np.interp(y, x, model._table[i]))


def tsi_values(model: TsiCellModel, mus) -> np.ndarray:
    """TSI at many parameters, shape ``(len(mus), n_points)``."""
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    _check_inside(model, mus)
    x = model.grid.x
    weights = lagrange_matrix(model.nodes, mus)
    disp = model.transforms.displacement_table(mus, x)
    out = np.zeros((mus.size, x.size))
    for i in range(len(model.nodes)):
        out += weights[:, i:i + 1] * np.interp(x[None, :] + disp[:, i, :], x, model._table[i])
    # reproduce stored snapshots bit-exactly at the nodes
    for q, mu in enumerate(mus):
        hit = np.flatnonzero(model.nodes.nodes == mu)
        if hit.size:
            out[q] = model._table[hit[0]]
    return out


def tsi_evaluate(model: TsiCellModel, mu: float) -> SampledField:
    return SampledField(model.grid, tsi_values(model, [mu])[0])


def worst_case_error(model: TsiCellModel, truth_provider: Callable[[float], SampledField],
                     test_params: Sequence[float]) -> float:
    """Largest L1 distance between TSI and truth over ``test_params``."""
    test_params = np.asarray(test_params, dtype=float)
    if test_params.size == 0:
        return 0.0
    approx = tsi_values(model, test_params)
    errors = [l1_distance(SampledField(model.grid, row), truth_provider(float(mu)))
              for row, mu in zip(approx, test_params)]
    return float(max(errors))
