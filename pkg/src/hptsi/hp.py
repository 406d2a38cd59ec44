"""Adaptive partitions of a one-dimensional parameter interval.

Cells are dyadic subintervals of the domain, kept graded (neighbours differ by
at most one level). Each cell carries either a TSI model or, next to a
topology change, a piecewise-constant model built from one snapshot at the
cell midpoint.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from hptsi.field import SampledField
from hptsi.fit import FitConfig, FitReport, fit_cell
from hptsi.interp import NodeSet, chebyshev_nodes
from hptsi.transforms import TransformSet
from hptsi.tsi import TsiCellModel, tsi_values

log = logging.getLogger(__name__)

#: Training errors at or below this count as exact.
NOISE_FLOOR = 1e-12
MAX_LEVEL = 16


class SnapshotCache:
    """Memoizing wrapper around a snapshot provider that counts unique calls."""

    def __init__(self, provider: Callable[[float], SampledField]):
        self.provider = provider
        self._store: Dict[float, SampledField] = {}

    def __call__(self, mu: float) -> SampledField:
        key = float(mu)
        if key not in self._store:
            self._store[key] = self.provider(key)
        return self._store[key]

    @property
    def count(self) -> int:
        return len(self._store)

    def params(self) -> List[float]:
        return sorted(self._store)


@dataclass
class Cell:
    interval: Tuple[float, float]
    level: int
    degree: int
    model: Optional[TsiCellModel] = None
    error_history: List[Tuple[int, float]] = field(default_factory=list)
    mode: str = "tsi"
    report: Optional[FitReport] = None

    @property
    def error(self) -> Optional[float]:
        """Training error at the current degree, if known."""
        for deg, eps in reversed(self.error_history):
            if deg == self.degree:
                return eps
        return None

    @property
    def width(self) -> float:
        return self.interval[1] - self.interval[0]

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.interval[0] + self.interval[1])

    def history_at(self, degree: int) -> Optional[float]:
        for deg, eps in self.error_history:
            if deg == degree:
                return eps
        return None

    def to_dict(self) -> dict:
        return {"interval": list(self.interval), "level": self.level, "degree": self.degree,
                "mode": self.mode, "error_history": [list(e) for e in self.error_history],
                "model": None if self.model is None else self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Cell":
        model = None if d["model"] is None else TsiCellModel.from_dict(d["model"])
        return cls(tuple(d["interval"]), d["level"], d["degree"], model,
                   [tuple(e) for e in d["error_history"]], d["mode"])


@dataclass
class Partition:
    domain: Tuple[float, float]
    cells: List[Cell]
    converged: Optional[bool] = None
    snapshots_used: int = 0

    def __post_init__(self):
        self.domain = (float(self.domain[0]), float(self.domain[1]))

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def locate(self, mu: float) -> int:
        """Index of the cell containing ``mu``; shared endpoints go to the left cell."""
        a, b = self.domain
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        if not a - tol <= mu <= b + tol:
            raise ValueError(f"{mu} outside the domain [{a}, {b}]")
        rights = np.array([c.interval[1] for c in self.cells])
        return int(min(np.searchsorted(rights, mu, side="left"), len(self.cells) - 1))

    def check(self):
        """Raise ``AssertionError`` unless the cells tile the domain as a graded dyadic mesh."""
        tol = 1e-12 * max(1.0, *map(abs, self.domain))
        assert abs(self.cells[0].interval[0] - self.domain[0]) <= tol
        assert abs(self.cells[-1].interval[1] - self.domain[1]) <= tol
        for c in self.cells:
            assert abs(c.width - self.length * 2.0 ** -c.level) <= tol, "cell not dyadic"
            if c.mode == "piecewise_constant" and c.model is not None:
                assert len(c.model.nodes) == 1
        for c1, c2 in zip(self.cells, self.cells[1:]):
            assert abs(c1.interval[1] - c2.interval[0]) <= tol, "cells do not tile"
            assert abs(c1.level - c2.level) <= 1, "partition not graded"

    def max_error(self) -> float:
        errs = [c.error for c in self.cells if c.error is not None]
        return max(errs) if errs else math.inf

    def nodes(self) -> List[float]:
        """All interpolation nodes in use, sorted."""
        out = set()
        for c in self.cells:
            if c.model is not None:
                out.update(c.model.nodes.nodes.tolist())
        return sorted(out)

    def to_dict(self) -> dict:
        return {"domain": list(self.domain), "converged": self.converged,
                "snapshots_used": self.snapshots_used,
                "cells": [c.to_dict() for c in self.cells]}

    @classmethod
    def from_dict(cls, d: dict) -> "Partition":
        return cls(tuple(d["domain"]), [Cell.from_dict(c) for c in d["cells"]],
                   d.get("converged"), d.get("snapshots_used", 0))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "Partition":
        return cls.from_dict(json.loads(text))


@dataclass
class ScheduleConfig:
    """Parameters of the graded schedule toward a singular parameter ``mu_bar``."""

    L: int
    ell_0: int = 0
    b: float = 2.0
    alpha: float = 0.5
    beta: float = 0.5
    C: float = 1.0
    mu_bar: float = 0.0

    def __post_init__(self):
        if not self.b > self.beta:
            raise ValueError("need b > beta")
        if not 0 <= self.alpha < 1 or not 0 <= self.beta <= 1:
            raise ValueError("need alpha in [0, 1) and beta in [0, 1]")
        if self.C > 0 and self.alpha * (self.ell_0 + 1) < math.log2(self.C):
            raise ValueError("need alpha (ell_0 + 1) >= log2 C")
        if not 0 <= self.ell_0 <= self.L:
            raise ValueError("need 0 <= ell_0 <= L")

    def degree(self, level: int) -> int:
        return math.ceil(self.b * self.L / (level + 1))


def hp_decide(history: Sequence[Tuple[int, float]], n_T: int) -> str:
    """Choose ``"p"`` or ``"h"`` refinement from the training-error history.

    ``m_T`` solves ``eps^{n-1} / eps^{n-2} = ((n-1)/(n-2))^{-(m_T-1)}`` and
    p-refinement is chosen if ``n_T <= m_T - 1``. Without errors at degrees
    ``n_T - 1`` and ``n_T - 2 >= 1`` the answer is ``"h"``.
    """
    errs = dict((int(d), float(e)) for d, e in history)
    if any(e <= 0 for e in errs.values()):
        raise ValueError("training errors must be positive")
    if n_T < 3 or (n_T - 1) not in errs or (n_T - 2) not in errs:
        return "h"
    ratio = errs[n_T - 1] / errs[n_T - 2]
    m_T = 1.0 - math.log(ratio) / math.log((n_T - 1) / (n_T - 2))
    return "p" if n_T <= m_T - 1 else "h"


def _split(cells: List[Cell], k: int, child_degree: int) -> None:
    c = cells[k]
    a, b = c.interval
    m = 0.5 * (a + b)
    kids = [Cell((a, m), c.level + 1, child_degree, mode=c.mode),
            Cell((m, b), c.level + 1, child_degree, mode=c.mode)]
    cells[k:k + 1] = kids


def _split_graded(cells: List[Cell], k: int, child_degree: Callable[[Cell], int]) -> None:
    """Bisect ``cells[k]`` and split coarser neighbours until the mesh is graded."""
    _split(cells, k, child_degree(cells[k]))
    changed = True
    while changed:
        changed = False
        for i in range(len(cells) - 1):
            l1, l2 = cells[i].level, cells[i + 1].level
            if l1 < l2 - 1:
                _split(cells, i, child_degree(cells[i]))
                changed = True
                break
            if l2 < l1 - 1:
                _split(cells, i + 1, child_degree(cells[i + 1]))
                changed = True
                break


def fit_cell_model(provider, cell: Cell, fit_config: FitConfig, degree: Optional[int] = None):
    """Fit a TSI model of the given degree on ``cell``; returns ``(model, report)``."""
    degree = cell.degree if degree is None else degree
    nodes = chebyshev_nodes(degree + 1, cell.interval)
    transforms, report = fit_cell(provider, nodes, fit_config)
    model = TsiCellModel(nodes, tuple(provider(float(z)) for z in nodes.nodes), transforms)
    return model, report


def _fit(provider, cell: Cell, fit_config: FitConfig):
    model, report = fit_cell_model(provider, cell, fit_config)
    cell.model = model
    cell.report = report
    cell.error_history = [e for e in cell.error_history if e[0] != cell.degree]
    cell.error_history.append((cell.degree, report.final_training_error))


def adapt(snapshot_provider, domain, target_tol: float, budget: int,
          fit_config: FitConfig, initial_degree: int = 1, strategy: str = "h",
          initial_level: int = 0, max_level: int = MAX_LEVEL) -> Partition:
    """Refine the cell with the largest training error until all are below ``target_tol``.

    ``strategy`` is ``"h"`` (bisection only, children keep the degree) or
    ``"hp"`` (the ratio rule of :func:`hp_decide`; h-children get degree
    ``max(1, n_T - 1)``). ``budget`` bounds the number of distinct snapshots;
    it is checked between refinements, so the final count can exceed it by
    one refinement step. The partition is flagged ``converged=False`` if the
    budget or ``max_level`` stops the loop first.
    """
    if budget < 2:
        raise ValueError("budget must be >= 2")
    if strategy not in ("h", "hp"):
        raise ValueError("strategy must be 'h' or 'hp'")
    cache = snapshot_provider if isinstance(snapshot_provider, SnapshotCache) \
        else SnapshotCache(snapshot_provider)
    a, b = map(float, domain)
    cells = [Cell((a, b), 0, initial_degree)]
    for _ in range(initial_level):
        cells = [kid for c in cells for kid in
                 (Cell((c.interval[0], c.midpoint), c.level + 1, c.degree),
                  Cell((c.midpoint, c.interval[1]), c.level + 1, c.degree))]
    part = Partition((a, b), cells)

    if strategy == "hp":
        def child_degree(c):
            return max(1, c.degree - 1)
    else:
        def child_degree(c):
            return c.degree

    while True:
        for c in part.cells:
            if c.model is None:
                _fit(cache, c, fit_config)
        part.check()
        worst = part.max_error()
        if worst <= max(target_tol, NOISE_FLOOR):
            part.converged = True
            break
        if cache.count >= budget:
            part.converged = False
            break
        errors = np.array([c.error for c in part.cells])
        order = [k for k in np.argsort(-errors, kind="stable")
                 if errors[k] > target_tol and part.cells[k].level < max_level]
        if not order:
            part.converged = False
            break
        k = int(order[0])
        cell = part.cells[k]
        choice = "h"
        if strategy == "hp" and cell.degree >= 3:
            for deg in (cell.degree - 1, cell.degree - 2):
                if cell.history_at(deg) is None:
                    _, rep = fit_cell_model(cache, cell, fit_config, deg)
                    cell.error_history.append((deg, rep.final_training_error))
            hist = [(d, max(e, NOISE_FLOOR)) for d, e in cell.error_history]
            choice = hp_decide(hist, cell.degree)
        log.debug("refine cell %s (eps=%.3g) by %s", cell.interval, errors[k], choice)
        if choice == "p":
            cell.degree += 1
            cell.model = None
        else:
            _split_graded(part.cells, k, child_degree)
    part.snapshots_used = cache.count
    return part


def theoretical_schedule(cfg: ScheduleConfig, domain) -> Partition:
    """Graded dyadic mesh refined toward ``cfg.mu_bar`` down to level ``cfg.L``.

    Cells on levels ``L`` and ``L - 1`` are piecewise constant; a cell on a
    coarser level ``l`` gets degree ``ceil(b L / (l + 1))``.
    """
    a, b = map(float, domain)
    if not a <= cfg.mu_bar <= b:
        raise ValueError("mu_bar outside the domain")
    cells = [Cell((a, b), 0, 0)]
    for _ in range(cfg.ell_0):
        cells = [kid for c in cells for kid in
                 (Cell((c.interval[0], c.midpoint), c.level + 1, 0),
                  Cell((c.midpoint, c.interval[1]), c.level + 1, 0))]
    while True:
        hits = [k for k, c in enumerate(cells)
                if c.interval[0] <= cfg.mu_bar <= c.interval[1] and c.level < cfg.L]
        if not hits:
            break
        _split_graded(cells, hits[0], lambda c: 0)
    for c in cells:
        if c.level >= cfg.L - 1:
            c.mode = "piecewise_constant"
            c.degree = 0
        else:
            c.mode = "tsi"
            c.degree = cfg.degree(c.level)
    part = Partition((a, b), cells)
    part.check()
    return part


def build_models(partition: Partition, provider,
                 transform_factory: Optional[Callable[[NodeSet, tuple], TransformSet]] = None,
                 fit_config: Optional[FitConfig] = None) -> Partition:
    """Attach models to all cells of a prescribed partition.

    TSI cells use Chebyshev nodes with transforms from ``transform_factory``
    (identity if omitted), or fitted ones when ``fit_config`` is given.
    Piecewise-constant cells store the snapshot at the cell midpoint.
    """
    cache = provider if isinstance(provider, SnapshotCache) else SnapshotCache(provider)
    for c in partition.cells:
        if c.mode == "piecewise_constant":
            nodes = NodeSet(c.interval, [c.midpoint], "midpoint")
            snap = cache(c.midpoint)
            ident = TransformSet.identity(nodes, (snap.grid.x_min, snap.grid.x_max), 0)
            c.model = TsiCellModel(nodes, (snap,), ident)
            continue
        if fit_config is not None:
            _fit(cache, c, fit_config)
            continue
        nodes = chebyshev_nodes(c.degree + 1, c.interval)
        snaps = tuple(cache(float(z)) for z in nodes.nodes)
        interval = (snaps[0].grid.x_min, snaps[0].grid.x_max)
        T = transform_factory(nodes, interval) if transform_factory is not None \
            else TransformSet.identity(nodes, interval, 0)
        c.model = TsiCellModel(nodes, snaps, T)
    partition.snapshots_used = cache.count
    return partition


def partition_values(p: Partition, mus) -> np.ndarray:
    """Model values at many parameters, shape ``(len(mus), n_points)``."""
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    idx = np.array([p.locate(m) for m in mus], dtype=int)
    out = None
    for k in np.unique(idx):
        cell = p.cells[k]
        if cell.model is None:
            raise ValueError(f"cell {cell.interval} has no model")
        sel = idx == k
        if cell.mode == "piecewise_constant":
            vals = np.broadcast_to(cell.model.snapshots[0].values,
                                   (int(sel.sum()), cell.model.grid.n_points))
        else:
            vals = tsi_values(cell.model, np.clip(mus[sel], *cell.interval))
        if out is None:
            out = np.empty((mus.size, vals.shape[1]))
        out[sel] = vals
    return out


def evaluate_partition(p: Partition, mu: float) -> SampledField:
    k = p.locate(mu)
    cell = p.cells[k]
    if cell.model is None:
        raise ValueError(f"cell {cell.interval} has no model")
    return SampledField(cell.model.grid, partition_values(p, [mu])[0])


def active_nodes(p: Partition, mu: float) -> List[float]:
    """Interpolation nodes contributing to the value at ``mu``."""
    cell = p.cells[p.locate(mu)]
    if cell.model is None:
        raise ValueError(f"cell {cell.interval} has no model")
    return cell.model.nodes.nodes.tolist()


def level_distance_bound(level: int, L: int, length: float) -> float:
    """Lower bound ``2^-l (1 - 2^-(L-l)+1) |P|`` on the distance of a level-``l`` cell to ``mu_bar``."""
    return 2.0 ** -level * (1.0 - 2.0 ** (-(L - level) + 1)) * length


def distance_to(cell: Cell, mu_bar: float) -> float:
    a, b = cell.interval
    return max(a - mu_bar, mu_bar - b, 0.0)
