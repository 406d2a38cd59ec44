"""Component-wise TSI for two parameter axes.

Stage 1 interpolates along the first axis ``mu1`` with the second axis frozen
at its interpolation nodes ``eta2`` (optionally hp-adaptive in ``mu1``).
Stage 2 interpolates the stage-1 models along ``mu2``, with transforms that
move both the spatial point and the first parameter:

    u(x, mu1, mu2) ~ sum_eta2 ell_eta2(mu2) * w_eta2(phi(mu2, eta2)(x, mu1)),

where ``w_eta2`` is the stage-1 model at ``eta2``. The ``mu1`` component of
``phi`` does not depend on ``x``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from hptsi.field import Grid1D, SampledField, mollify_rows
from hptsi.fit import FitConfig, _descend, default_training_params, objective_quadrature
from hptsi.hp import Cell, Partition, adapt, fit_cell_model, partition_values
from hptsi.interp import NodeSet, chebyshev_nodes, lagrange_matrix, lebesgue_constant
from hptsi.transforms import FoldingTransformError, TransformSet, spatial_basis

log = logging.getLogger(__name__)

Provider2 = Callable[[float, float], SampledField]


class PairCache:
    """Memoizing two-parameter provider counting distinct snapshots."""

    def __init__(self, provider: Provider2):
        self.provider = provider
        self._store: Dict[Tuple[float, float], SampledField] = {}

    def __call__(self, mu1: float, mu2: float) -> SampledField:
        key = (float(mu1), float(mu2))
        if key not in self._store:
            self._store[key] = self.provider(*key)
        return self._store[key]

    def frozen(self, mu2: float) -> Callable[[float], SampledField]:
        return lambda mu1: self(mu1, mu2)

    @property
    def count(self) -> int:
        return len(self._store)


@dataclass
class Axis1Config:
    """Stage-1 settings along the first parameter axis."""

    domain: Tuple[float, float]
    degree: int = 1
    adaptive: bool = True
    strategy: str = "h"
    tol: float = 0.02
    budget: int = 200
    fit: FitConfig = field(default_factory=FitConfig)


@dataclass
class Axis2Config:
    """Stage-2 settings along the second parameter axis.

    ``param_nodes`` is the number of Chebyshev nodes of the Lagrange basis in
    ``mu1`` used by the stage-2 transforms. ``table_step`` is the ``mu1``
    resolution of the stage-1 tables used during the fit; fine quadrature
    integrates over ``fine_points`` equispaced ``mu1`` values.
    """

    domain: Tuple[float, float]
    degree: int = 2
    spatial_degree: int = 1
    param_nodes: int = 2
    quadrature_mode: str = "fine"
    coarse_points: int = 3
    fine_points: int = 41
    table_step: float = 0.01
    smoothing_width: float = 0.02
    max_iters: int = 300
    rel_tol: float = 1e-7
    training_params: Optional[Sequence[float]] = None
    warp_init: bool = True
    seed: Optional[int] = None


@dataclass
class ParamWarp:
    """Monotone piecewise-linear maps of the first parameter axis.

    ``warp(mu_hat, eta_hat)`` fixes the endpoints of ``domain`` and maps the
    anchor ``mu_bar(mu_hat)`` to ``mu_bar(eta_hat)``.
    """

    domain: Tuple[float, float]
    anchor: Callable[[float], float]
    pairs: Tuple[Tuple[float, float], ...] = ()

    def __call__(self, mu_hat: float, eta_hat: float, mu1):
        lo, hi = self.domain
        a_src, a_dst = self.anchor(mu_hat), self.anchor(eta_hat)
        return np.interp(mu1, [lo, a_src, hi], [lo, a_dst, hi])


def build_param_warp(mu_bar_curve: Callable[[float], float], node_pairs, domain) -> ParamWarp:
    lo, hi = map(float, domain)
    for pair in node_pairs:
        for v in pair:
            m = float(mu_bar_curve(v))
            if not lo < m < hi:
                raise ValueError(f"anchor {m} at {v} is not interior to ({lo}, {hi})")
    return ParamWarp((lo, hi), mu_bar_curve, tuple(tuple(map(float, p)) for p in node_pairs))


@dataclass
class ComponentModel:
    grid: Grid1D
    axis1_domain: Tuple[float, float]
    stage1: Dict[float, Partition]
    stage2: TransformSet
    stage1_train: Dict[float, Partition] = field(default_factory=dict)
    warp: Optional[ParamWarp] = None
    axis_order: Tuple[int, int] = (0, 1)
    stage2_error: float = 0.0
    stage2_report: Dict[str, object] = field(default_factory=dict)
    snapshots_all: int = 0

    @property
    def nodes2(self) -> NodeSet:
        return self.stage2.source_nodes

    def partition_at(self, eta2: float) -> Partition:
        i = self.nodes2.index(eta2)
        return self.stage1[float(self.nodes2.nodes[i])]

    @property
    def snapshots_tsi(self) -> int:
        pairs = set()
        for eta2, part in self.stage1.items():
            pairs.update((m, eta2) for m in part.nodes())
        return len(pairs)

    @property
    def stage1_error(self) -> float:
        parts = list(self.stage1.values()) + list(self.stage1_train.values())
        return max(p.max_error() for p in parts)

    @property
    def training_error(self) -> float:
        return max(self.stage1_error, self.stage2_error)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "axis1_domain": list(self.axis1_domain),
            "axis_order": list(self.axis_order),
            "stage1": [[k, p.to_dict()] for k, p in self.stage1.items()],
            "stage1_train": [[k, p.to_dict()] for k, p in self.stage1_train.items()],
            "stage2": self.stage2.to_dict(),
            "stage2_error": self.stage2_error,
            "snapshots_all": self.snapshots_all,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentModel":
        return cls(Grid1D.from_dict(d["grid"]), tuple(d["axis1_domain"]),
                   {float(k): Partition.from_dict(p) for k, p in d["stage1"]},
                   TransformSet.from_dict(d["stage2"]),
                   {float(k): Partition.from_dict(p) for k, p in d["stage1_train"]},
                   axis_order=tuple(d["axis_order"]), stage2_error=d["stage2_error"],
                   snapshots_all=d.get("snapshots_all", 0))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "ComponentModel":
        return cls.from_dict(json.loads(text))


def single_cell_partition(provider, domain, degree: int, fit_config: FitConfig) -> Partition:
    """Non-adaptive stage-1 model wrapped as a one-cell partition."""
    cell = Cell(tuple(map(float, domain)), 0, degree)
    model, report = fit_cell_model(provider, cell, fit_config)
    cell.model, cell.report = model, report
    cell.error_history.append((degree, report.final_training_error))
    return Partition(cell.interval, [cell], True)


def _fit_stage1(provider, cfg: Axis1Config, adaptive: bool) -> Partition:
    if adaptive:
        return adapt(provider, cfg.domain, cfg.tol, cfg.budget, cfg.fit,
                     initial_degree=cfg.degree, strategy=cfg.strategy)
    return single_cell_partition(provider, cfg.domain, cfg.degree, cfg.fit)


def anchor_estimate(part: Partition) -> Optional[float]:
    """Centre of the most refined cell, ``None`` for an unrefined partition.

    Ties between equally refined cells go to the one with the largest error.
    """
    if len(part.cells) == 1:
        return None
    top = max(c.level for c in part.cells)
    finest = [c for c in part.cells if c.level == top]
    best = max(finest, key=lambda c: (c.error or 0.0))
    return best.midpoint


# {{{ stage-2 objective

def _bilinear(table: np.ndarray, r: np.ndarray, x: np.ndarray, X: np.ndarray, R: np.ndarray):
    """Bilinear interpolation of ``table[r_index, x_index]`` and its partials.

    ``X`` has shape ``(..., nx)`` and ``R`` shape ``(...)``; both are clamped,
    with zero derivative outside the table.
    """
    hr = r[1] - r[0]
    hx = x[1] - x[0]
    rr = np.clip(R, r[0], r[-1])
    xx = np.clip(X, x[0], x[-1])
    ir = np.clip(np.floor((rr - r[0]) / hr).astype(int), 0, r.size - 2)
    ix = np.clip(np.floor((xx - x[0]) / hx).astype(int), 0, x.size - 2)
    fr = ((rr - r[0]) / hr - ir)[..., None]
    fx = (xx - x[0]) / hx - ix
    irb = np.broadcast_to(ir[..., None], ix.shape)
    v00 = table[irb, ix]
    v01 = table[irb, ix + 1]
    v10 = table[irb + 1, ix]
    v11 = table[irb + 1, ix + 1]
    lo = v00 + fx * (v01 - v00)
    hi = v10 + fx * (v11 - v10)
    val = lo + fr * (hi - lo)
    dx = ((1 - fr) * (v01 - v00) + fr * (v11 - v10)) / hx
    dr = (hi - lo) / hr
    inside_x = (X >= x[0]) & (X <= x[-1])
    inside_r = ((R >= r[0]) & (R <= r[-1]))[..., None]
    return val, np.where(inside_x, dx, 0.0), np.where(inside_r, dr, 0.0)


class Stage2Objective:
    """Mean over training ``mu2`` of the ``L1(Omega x P1)/|P1|`` error."""

    def __init__(self, tables, r_grid, grid: Grid1D, nodes2: NodeSet, train2: np.ndarray,
                 q_points: np.ndarray, q_weights: np.ndarray, truth: np.ndarray,
                 pnodes: NodeSet, spatial_degree: int):
        self.tables = tables
        self.r = r_grid
        self.grid = grid
        self.x = grid.x
        self.w = grid.trapezoid_weights()
        self.nodes2 = nodes2
        self.train = train2
        self.q = q_points
        self.qw = q_weights
        self.truth = truth  # (T, Q, nx)
        self.L = lagrange_matrix(nodes2, train2)  # (T, n)
        self.shift = train2[:, None] - nodes2.nodes[None, :]  # (T, n)
        self.B = lagrange_matrix(pnodes, q_points)  # (Q, M)
        self.psi = spatial_basis(self.x, (grid.x_min, grid.x_max), spatial_degree)
        self.n = len(nodes2)
        self.M = len(pnodes)
        self.K = spatial_degree + 1

    def split(self, theta):
        nc = self.n * self.n * self.M * self.K
        c = theta[:nc].reshape(self.n, self.n, self.M, self.K)
        e = theta[nc:].reshape(self.n, self.n, self.M)
        return c, e

    @staticmethod
    def join(c, e):
        return np.concatenate([c.ravel(), e.ravel()])

    def mapped(self, c, e):
        """``x~`` with shape ``(T, Q, n, nx)`` and ``mu1~`` with shape ``(T, Q, n)``."""
        a = np.einsum("tk,ikmj->timj", self.L, c)
        s = np.einsum("timj,qm->tqij", a, self.B)
        X = self.x + self.shift[:, None, :, None] * (s @ self.psi.T)
        ae = np.einsum("tk,ikm->tim", self.L, e)
        R = self.q[None, :, None] + self.shift[:, None, :] * np.einsum("tim,qm->tqi", ae, self.B)
        return X, R

    def value_and_grad(self, theta):
        c, e = self.split(theta)
        X, R = self.mapped(c, e)
        pred = np.zeros(self.truth.shape)
        dX = np.empty(X.shape)
        dR = np.empty(X.shape)
        for i in range(self.n):
            v, gx, gr = _bilinear(self.tables[i], self.r, self.x, X[:, :, i, :], R[:, :, i])
            pred += self.L[:, None, i:i + 1] * v
            dX[:, :, i, :] = gx
            dR[:, :, i, :] = gr
        res = pred - self.truth
        T = len(self.train)
        per = np.abs(res) @ self.w  # (T, Q)
        value = float(np.mean(per @ self.qw))
        g = np.sign(res) * self.w * self.qw[None, :, None]  # (T, Q, nx)
        common = g[:, :, None, :] * (self.L * self.shift)[:, None, :, None]  # (T,Q,n,nx)
        gc = np.einsum("tqix,tk,qm,xj->ikmj", common * dX, self.L, self.B, self.psi) / T
        ge = np.einsum("tqix,tk,qm->ikm", common * dR, self.L, self.B) / T
        return value, self.join(gc, ge)

    def admissible(self, theta) -> bool:
        c, e = self.split(theta)
        X, R = self.mapped(c, e)
        if not np.all(np.diff(X, axis=-1) > 0):
            return False
        if self.q.size > 1 and not np.all(np.diff(R, axis=1) > 0):
            return False
        return True

# }}}


def _stage1_table(part: Partition, r_grid: np.ndarray, width: float) -> np.ndarray:
    vals = partition_values(part, r_grid)
    grid = part.cells[0].model.grid
    return mollify_rows(grid, vals, width) if width > 0 else vals


def _warp_init(model_nodes: NodeSet, chain: np.ndarray, warp: ParamWarp,
               pnodes: NodeSet, q: np.ndarray) -> np.ndarray:
    """Least-squares projection of ``warp`` onto the stage-2 ``mu1`` displacement."""
    n, M = len(model_nodes), len(pnodes)
    B = lagrange_matrix(pnodes, q)
    e = np.zeros((n, n, M))
    for i, eta in enumerate(model_nodes.nodes):
        rows, rhs = [], []
        for mu in chain:
            if abs(mu - eta) < 1e-14:
                continue
            lk = lagrange_matrix(model_nodes, [mu])[0]
            target = (warp(mu, eta, q) - q) / (mu - eta)
            rows.append(np.kron(lk[None, :], B))  # unknowns e[i, k, m] in (k, m) order
            rhs.append(target)
        A = np.vstack(rows)
        y = np.concatenate(rhs)
        sol, *_ = np.linalg.lstsq(A, y, rcond=None)
        e[i] = sol.reshape(n, M)
    return e


def fit_componentwise(provider: Provider2, axis1_cfg: Axis1Config, axis2_cfg: Axis2Config,
                      adaptive_axis1: bool = True) -> ComponentModel:
    """Fit stage-1 models at the second-axis nodes, then the stage-2 transforms."""
    cache = provider if isinstance(provider, PairCache) else PairCache(provider)
    nodes2 = chebyshev_nodes(axis2_cfg.degree + 1, axis2_cfg.domain)
    if axis2_cfg.training_params is None:
        train2 = default_training_params(nodes2)
    else:
        train2 = np.unique(np.asarray(axis2_cfg.training_params, dtype=float))
    mode = axis2_cfg.quadrature_mode
    plan = objective_quadrature(mode, [("mu1", axis1_cfg.domain)], axis2_cfg.coarse_points)

    stage1 = {}
    for eta in nodes2.nodes:
        stage1[float(eta)] = _fit_stage1(cache.frozen(float(eta)), axis1_cfg, adaptive_axis1)
    stage1_train = {}
    if mode == "fine":
        for mu in train2:
            stage1_train[float(mu)] = _fit_stage1(cache.frozen(float(mu)), axis1_cfg,
                                                  adaptive_axis1)

    grid = next(iter(stage1.values())).cells[0].model.grid
    lo, hi = map(float, axis1_cfg.domain)
    n_table = int(round((hi - lo) / axis2_cfg.table_step)) + 1
    r_grid = np.linspace(lo, hi, n_table)
    width = axis2_cfg.smoothing_width
    tables = [_stage1_table(stage1[float(eta)], r_grid, width) for eta in nodes2.nodes]

    if mode == "fine":
        q = np.linspace(lo, hi, axis2_cfg.fine_points)
        qw = np.full(q.size, 1.0)
        qw[0] = qw[-1] = 0.5
        qw /= qw.sum()
        raw_truth = np.stack([partition_values(stage1_train[float(mu)], q) for mu in train2])
    else:
        q = np.asarray(plan.axis_points[0][1], dtype=float)
        qw = np.full(q.size, 1.0 / q.size)
        raw_truth = np.stack([np.stack([cache(float(m1), float(mu)).values for m1 in q])
                              for mu in train2])
    truth = mollify_rows(grid, raw_truth, width) if width > 0 else raw_truth

    pnodes = chebyshev_nodes(axis2_cfg.param_nodes, (lo, hi))
    obj = Stage2Objective(tables, r_grid, grid, nodes2, train2, q, qw, truth, pnodes,
                          axis2_cfg.spatial_degree)
    n, M, K = len(nodes2), len(pnodes), axis2_cfg.spatial_degree + 1
    c0 = np.zeros((n, n, M, K))
    e0 = np.zeros((n, n, M))
    theta0 = obj.join(c0, e0)

    warp = None
    if axis2_cfg.warp_init:
        anchors = [anchor_estimate(stage1[float(eta)]) for eta in nodes2.nodes]
        if all(a is not None and lo < a < hi for a in anchors):
            curve = _anchor_curve(nodes2.nodes, np.array(anchors))
            chain = np.unique(np.concatenate([nodes2.nodes, train2]))
            pairs = [(float(m), float(eta)) for m in chain for eta in nodes2.nodes]
            warp = build_param_warp(curve, pairs, (lo, hi))
            dense = np.linspace(lo, hi, 201)
            e_w = _warp_init(nodes2, chain, warp, pnodes, dense)
            cand = obj.join(c0, e_w)
            if obj.admissible(cand) and obj.value_and_grad(cand)[0] < obj.value_and_grad(theta0)[0]:
                theta0 = cand

    fit_cfg = FitConfig(max_iters=axis2_cfg.max_iters, rel_tol=axis2_cfg.rel_tol,
                        smoothing_width=width, seed=axis2_cfg.seed)
    theta, history, iters = _descend(obj.value_and_grad, theta0, fit_cfg, obj.admissible)
    c, e = obj.split(theta)
    stage2 = TransformSet(nodes2, (grid.x_min, grid.x_max), c, (pnodes,), e[..., None])
    model = ComponentModel(grid, (lo, hi), stage1, stage2, stage1_train, warp)

    # unmollified training error with the exact stage-1 models
    errs = []
    for t, mu in enumerate(train2):
        vals = np.stack([evaluate_componentwise(model, float(m1), float(mu)).values for m1 in q])
        per = np.abs(vals - raw_truth[t]) @ grid.trapezoid_weights()
        errs.append(float(per @ qw))
    model.stage2_error = max(errs)
    model.stage2_report = {"per_param_errors": dict(zip(map(float, train2), errs)),
                           "iterations": iters, "objective_history": history,
                           "quadrature": plan.mode}
    model.snapshots_all = cache.count
    return model


def _anchor_curve(nodes: np.ndarray, anchors: np.ndarray) -> Callable[[float], float]:
    def curve(mu):
        return float(np.interp(mu, nodes, anchors))
    return curve


def evaluate_componentwise(model: ComponentModel, mu1: float, mu2: float,
                           diagnostics: Optional[dict] = None) -> SampledField:
    """Stage-2 interpolation of the stage-1 models at transformed points.

    Transformed ``mu1`` values outside the first-axis domain are clamped and
    recorded in ``diagnostics["clamped"]``.
    """
    lo2, hi2 = model.nodes2.interval
    tol = 1e-12 * max(1.0, abs(lo2), abs(hi2))
    if not lo2 - tol <= mu2 <= hi2 + tol:
        raise ValueError(f"mu2={mu2} outside [{lo2}, {hi2}]")
    lo, hi = model.axis1_domain
    if not lo - tol <= mu1 <= hi + tol:
        raise ValueError(f"mu1={mu1} outside [{lo}, {hi}]")
    x = model.grid.x
    weights = lagrange_matrix(model.nodes2, [mu2])[0]
    out = np.zeros(x.size)
    for i, eta in enumerate(model.nodes2.nodes):
        if weights[i] == 0.0:
            continue
        X, R = model.stage2.apply(mu2, float(eta), x, [[mu1]])
        m1 = float(R[0, 0])
        if not lo <= m1 <= hi:
            if diagnostics is not None:
                diagnostics.setdefault("clamped", []).append((float(eta), m1))
            m1 = min(max(m1, lo), hi)
        row = partition_values(model.stage1[float(eta)], [m1])[0]
        out += weights[i] * np.interp(X[0], x, row)
    return SampledField(model.grid, out)


def active_points(model: ComponentModel, mu1: float, mu2: float) -> set:
    """Node pairs ``(mu1_node, eta2)`` with nonzero weight in the evaluation."""
    weights = lagrange_matrix(model.nodes2, [mu2])[0]
    lo, hi = model.axis1_domain
    out = set()
    for i, eta in enumerate(model.nodes2.nodes):
        if weights[i] == 0.0:
            continue
        _, R = model.stage2.apply(mu2, float(eta), model.grid.x[:1], [[mu1]])
        m1 = min(max(float(R[0, 0]), lo), hi)
        part = model.stage1[float(eta)]
        cell = part.cells[part.locate(m1)]
        lw = lagrange_matrix(cell.model.nodes, [m1])[0]
        out.update((float(z), float(eta)) for z, wz in zip(cell.model.nodes.nodes, lw)
                   if wz != 0.0)
    return out


def stage2_gamma(model: ComponentModel, mu1: float, mu2: float) -> float:
    """Largest inverse stretch of the stage-2 maps at ``(mu1, mu2)``.

    Combines the spatial stretch at fixed ``mu1`` with the ``mu1`` stretch,
    estimated by finite differences over the first-axis domain.
    """
    x = model.grid.x
    lo, hi = model.axis1_domain
    gam = 0.0
    q = np.linspace(lo, hi, 101)
    for eta in model.nodes2.nodes:
        X, R = model.stage2.apply(mu2, float(eta), x, [[mu1]])
        dx = np.diff(X[0])
        if np.any(dx <= 0):
            raise FoldingTransformError(f"stage-2 map ({mu2}, {eta}) folds in x")
        gx = float(np.max(model.grid.h / dx))
        _, Rq = model.stage2.apply(mu2, float(eta), x[:1], q[:, None])
        dr = np.diff(Rq[:, 0])
        if np.any(dr <= 0):
            raise FoldingTransformError(f"stage-2 map ({mu2}, {eta}) folds in mu1")
        gr = float(np.max((q[1] - q[0]) / dr))
        gam = max(gam, gx * gr)
    return gam


def stage2_stability_bound(model: ComponentModel, mu1: float, mu2: float) -> float:
    """Stability prefactor ``gamma * Lambda_n`` of the stage-2 interpolation."""
    lam = lebesgue_constant(model.nodes2, max(1000, 10 * len(model.nodes2)))
    return stage2_gamma(model, mu1, mu2) * lam
