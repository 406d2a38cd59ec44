"""Fitting transform coefficients by descent on the training error.

The objective is the mean over training parameters of the L1 error between
the TSI of mollified snapshots and the mollified truth. Its gradient is
computed analytically through the piecewise-linear field lookup. The reported
training error is the sup over training parameters of the unmollified error.

Initial values come from localization: short transforms between neighbouring
parameters are fitted from the identity and composed into long ones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from hptsi.field import Grid1D, SampledField, interp_slope, mollify_rows
from hptsi.interp import NodeSet, equispaced_nodes, lagrange_matrix
from hptsi.transforms import Step, TransformSet, compose_chain, spatial_basis

log = logging.getLogger(__name__)

Provider = Callable[[float], SampledField]

ARMIJO_C = 1e-4
MAX_HALVINGS = 20
MAX_RESTARTS = 3
LBFGS_MEMORY = 10
#: Parameters per cell at which the realized maps are checked for folding.
FOLD_CHECK_POINTS = 21


class FitError(RuntimeError):
    """Fitting failed; ``diagnostics`` holds the state at failure."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class FitConfig:
    """Settings of a single-cell transform fit.

    ``training_params`` defaults to the cell endpoints plus the midpoints of
    consecutive nodes. ``stop_tol`` stops the descent once the mollified mean
    objective falls below it; ``rel_tol`` stops it on stagnation.
    """

    training_params: Optional[Sequence[float]] = None
    smoothing_width: float = 0.02
    max_iters: int = 300
    step_size: float = 1.0
    stop_tol: float = 0.0
    rel_tol: float = 1e-7
    quadrature_mode: str = "fine"
    coarse_points: int = 3
    spatial_degree: int = 1
    localize: bool = True
    direction: str = "lbfgs"
    finite_difference: bool = False
    fd_step: float = 1e-6
    seed: Optional[int] = None

    def __post_init__(self):
        if self.quadrature_mode not in ("fine", "coarse"):
            raise ValueError("quadrature_mode must be 'fine' or 'coarse'")
        if self.direction not in ("lbfgs", "gradient"):
            raise ValueError("direction must be 'lbfgs' or 'gradient'")
        if self.smoothing_width < 0:
            raise ValueError("smoothing_width must be nonnegative")
        if self.max_iters < 0 or self.step_size <= 0:
            raise ValueError("need max_iters >= 0 and step_size > 0")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if d["training_params"] is not None:
            d["training_params"] = [float(v) for v in d["training_params"]]
        return d


@dataclass
class FitReport:
    final_training_error: float
    per_param_errors: Dict[float, float]
    iterations_used: int
    error_history: List[Tuple[int, float]] = field(default_factory=list)
    objective_history: List[float] = field(default_factory=list)
    restarts: int = 0

    def to_dict(self) -> dict:
        return {"final_training_error": self.final_training_error,
                "per_param_errors": [[k, v] for k, v in self.per_param_errors.items()],
                "iterations_used": self.iterations_used,
                "error_history": [list(e) for e in self.error_history],
                "restarts": self.restarts}

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(d["final_training_error"], {k: v for k, v in d["per_param_errors"]},
                   d["iterations_used"], [tuple(e) for e in d["error_history"]],
                   restarts=d.get("restarts", 0))


@dataclass(frozen=True)
class QuadraturePlan:
    """Where the objective is integrated.

    ``axis_points`` maps each previously transformed parameter axis to the
    values at which truth is needed; ``None`` means the full snapshot
    resolution of that axis.
    """

    mode: str
    spatial: str
    axis_points: Tuple[Tuple[str, Optional[np.ndarray]], ...] = ()


def objective_quadrature(mode: str, transformed_axes: Sequence[Tuple[str, tuple]] = (),
                         coarse_points: int = 3) -> QuadraturePlan:
    """Quadrature plan of the training objective.

    ``transformed_axes`` lists ``(name, (lo, hi))`` of the parameter axes that
    the transforms also act on. In coarse mode each gets ``coarse_points``
    equispaced values where truth comes directly from the PDE solver.
    """
    if mode not in ("fine", "coarse"):
        raise ValueError("mode must be 'fine' or 'coarse'")
    points = []
    for name, interval in transformed_axes:
        if mode == "fine":
            points.append((name, None))
        else:
            if coarse_points < 2:
                raise ValueError("coarse_points must be >= 2")
            points.append((name, equispaced_nodes(coarse_points, interval).nodes.copy()))
    return QuadraturePlan(mode, "grid", tuple(points))


def default_training_params(nodes: NodeSet) -> np.ndarray:
    """Cell endpoints and midpoints between consecutive nodes."""
    a, b = nodes.interval
    z = nodes.nodes
    mids = 0.5 * (z[1:] + z[:-1])
    return np.unique(np.concatenate([[a], mids, [b]]))


def training_params_for(nodes: NodeSet, config: FitConfig) -> np.ndarray:
    if config.training_params is None:
        params = default_training_params(nodes)
    else:
        params = np.unique(np.asarray(config.training_params, dtype=float))
    tol = 1e-12 * max(1.0, *np.abs(nodes.interval))
    if np.any(np.min(np.abs(params[:, None] - nodes.nodes[None, :]), axis=1) <= tol):
        raise ValueError("training parameters must be disjoint from the nodes")
    if params.size < len(nodes):
        raise ValueError("need at least as many training parameters as nodes")
    return params


# {{{ descent

def _lbfgs_direction(grad: np.ndarray, s_hist, y_hist) -> np.ndarray:
    """Two-loop recursion for the limited-memory BFGS direction."""
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / np.dot(y, s)
        a = rho * np.dot(s, q)
        alphas.append((rho, a))
        q -= a * y
    if s_hist:
        q *= np.dot(s_hist[-1], y_hist[-1]) / np.dot(y_hist[-1], y_hist[-1])
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _descend(fun: Callable[[np.ndarray], Tuple[float, np.ndarray]], theta0: np.ndarray,
             config: FitConfig, admissible: Optional[Callable[[np.ndarray], bool]] = None,
             step_size: Optional[float] = None):
    """Descent with Armijo backtracking.

    Directions are limited-memory BFGS (``config.direction == "lbfgs"``) or
    the negative gradient. The trial step halves up to ``MAX_HALVINGS``
    times; candidates rejected by ``admissible`` count as failed trials.
    Returns ``(theta, history, iterations)`` where ``history`` holds the
    objective after every accepted step.
    """
    shape = np.shape(theta0)
    theta = np.array(theta0, dtype=float).ravel()

    def f(v):
        val, g = fun(v.reshape(shape))
        return val, np.asarray(g, dtype=float).ravel()

    value, grad = f(theta)
    if not np.isfinite(value):
        raise FitError("non-finite objective at the initial point", {"theta": theta})
    history = [value]
    base_step = config.step_size if step_size is None else step_size
    alpha = base_step
    s_hist, y_hist = [], []
    it = 0
    while it < config.max_iters and value > config.stop_tol:
        if not np.any(grad):
            break
        if config.direction == "lbfgs":
            d = _lbfgs_direction(grad, s_hist, y_hist)
            if np.dot(d, grad) >= 0:
                s_hist.clear()
                y_hist.clear()
                d = -grad
            trial = base_step if s_hist else alpha
        else:
            d = -grad
            trial = alpha
        slope = float(np.dot(d, grad))
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + trial * d
            cv, cg = f(cand)
            if not np.isfinite(cv):
                raise FitError("non-finite objective during descent",
                               {"theta": cand, "step": trial})
            if cv <= value + ARMIJO_C * trial * slope and (
                    admissible is None or admissible(cand.reshape(shape))):
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            if s_hist:
                # curvature memory may be stale; retry once along the gradient
                s_hist.clear()
                y_hist.clear()
                continue
            break
        it += 1
        improvement = value - cv
        sk, yk = cand - theta, cg - grad
        curvature = np.dot(sk, yk) > 1e-12 * np.linalg.norm(sk) * np.linalg.norm(yk)
        if config.direction == "lbfgs" and curvature:
            s_hist.append(sk)
            y_hist.append(yk)
            if len(s_hist) > LBFGS_MEMORY:
                s_hist.pop(0)
                y_hist.pop(0)
        theta, value, grad = cand, cv, cg
        history.append(value)
        alpha = 2.0 * trial
        if improvement <= config.rel_tol * max(value, 1e-300):
            break
    return theta.reshape(shape), history, it


def _fd_gradient(obj: Callable[[np.ndarray], float], theta: np.ndarray, step: float):
    g = np.zeros_like(theta)
    flat = g.reshape(-1)
    base = theta.reshape(-1)
    for k in range(base.size):
        e = np.zeros_like(base)
        e[k] = step
        flat[k] = (obj((base + e).reshape(theta.shape))
                   - obj((base - e).reshape(theta.shape))) / (2 * step)
    return g

# }}}


# {{{ single-cell objective

class CellObjective:
    """Mean training L1 error of a single-cell TSI and its gradient."""

    def __init__(self, node_values: np.ndarray, nodes: NodeSet, truth: np.ndarray,
                 params: np.ndarray, grid: Grid1D, degree: int):
        self.grid = grid
        self.x = grid.x
        self.nodes = nodes
        self.params = np.asarray(params, dtype=float)
        self.node_values = node_values
        self.truth = truth
        self.weights = grid.trapezoid_weights()
        self.basis = spatial_basis(self.x, (grid.x_min, grid.x_max), degree)
        self.lag = lagrange_matrix(nodes, self.params)
        self.shift = self.params[:, None] - nodes.nodes[None, :]
        self.n = len(nodes)
        self.K = degree + 1

    def shape(self):
        return (self.n, self.n, self.K)

    def mapped(self, c: np.ndarray) -> np.ndarray:
        """Realized points ``phi(mu_t, eta_i)(x)``, shape ``(T, n, nx)``."""
        a = np.einsum("tk,ikj->tij", self.lag, c)
        return self.x + self.shift[:, :, None] * (a @ self.basis.T)

    def predict(self, y: np.ndarray, values: Optional[np.ndarray] = None) -> np.ndarray:
        values = self.node_values if values is None else values
        out = np.zeros((y.shape[0], y.shape[2]))
        for i in range(self.n):
            out += self.lag[:, i:i + 1] * np.interp(y[:, i, :], self.x, values[i])
        return out

    def value_and_grad(self, c: np.ndarray):
        y = self.mapped(c)
        res = self.predict(y) - self.truth
        value = float(np.mean(np.abs(res) @ self.weights))
        g = np.sign(res) * self.weights
        slopes = np.stack([interp_slope(self.grid, self.node_values[i], y[:, i, :])
                           for i in range(self.n)], axis=1)
        factor = g[:, None, :] * slopes * (self.lag * self.shift)[:, :, None]
        grad = np.einsum("tix,tk,xj->ikj", factor, self.lag, self.basis) / len(self.params)
        return value, grad

    def value(self, c: np.ndarray) -> float:
        res = self.predict(self.mapped(c)) - self.truth
        return float(np.mean(np.abs(res) @ self.weights))

    def errors(self, c: np.ndarray, node_values: np.ndarray, truth: np.ndarray) -> np.ndarray:
        res = self.predict(self.mapped(c), node_values) - truth
        return np.abs(res) @ self.weights

# }}}


def _is_monotone(points: np.ndarray) -> bool:
    return bool(np.all(np.diff(points, axis=-1) > 0))


def _fold_check(T: TransformSet, x: np.ndarray, samples: int = FOLD_CHECK_POINTS) -> bool:
    a, b = T.source_nodes.interval
    mus = np.unique(np.concatenate([np.linspace(a, b, samples), T.source_nodes.nodes]))
    return _is_monotone(x + T.displacement_table(mus, x))


def _poly_map(b: np.ndarray, interval, degree: int):
    def f(x):
        x = np.asarray(x, dtype=float)
        return x + spatial_basis(x, interval, degree) @ b
    return f


def fit_step(source: SampledField, target: SampledField, config: FitConfig,
             step_size: Optional[float] = None) -> np.ndarray:
    """Coefficients ``b`` of ``x -> x + sum_j b_j psi_j(x)`` aligning two fields.

    Minimizes ``|| source(x + d(x)) - target(x) ||_L1`` on mollified copies,
    starting from the identity; the map is kept monotone on the grid.
    """
    grid = source.grid
    x = grid.x
    w = grid.trapezoid_weights()
    basis = spatial_basis(x, (grid.x_min, grid.x_max), config.spatial_degree)
    width = config.smoothing_width
    src = mollify_rows(grid, source.values, width) if width > 0 else source.values
    tgt = mollify_rows(grid, target.values, width) if width > 0 else target.values

    def fun(b):
        y = x + basis @ b
        res = np.interp(y, x, src) - tgt
        g = np.sign(res) * w * interp_slope(grid, src, y)
        return float(np.abs(res) @ w), basis.T @ g

    def admissible(b):
        return _is_monotone(x + basis @ b)

    b0 = np.zeros(basis.shape[1])
    b, _, _ = _descend(fun, b0, replace(config, stop_tol=0.0), admissible, step_size)
    return b


def localized_init(provider: Provider, nodes: NodeSet, config: FitConfig,
                   params: Optional[np.ndarray] = None) -> TransformSet:
    """Initial transforms from composed local steps.

    All nodes and training parameters are sorted into one chain. Maps between
    neighbours are fitted in both directions, composed into
    ``phi(mu, eta_i)`` for every chain point ``mu`` and projected by least
    squares onto the coefficient representation.
    """
    if params is None:
        params = training_params_for(nodes, config)
    first = provider(float(nodes.nodes[0]))
    grid = first.grid
    interval = (grid.x_min, grid.x_max)
    x = grid.x
    degree = config.spatial_degree
    n = len(nodes)
    T0 = TransformSet.identity(nodes, interval, degree)
    if n == 1:
        return T0
    chain = np.unique(np.concatenate([nodes.nodes, params]))
    fields = [provider(float(z)) for z in chain]

    forward, backward = [], []
    for a in range(chain.size - 1):
        # phi(z_{a+1}, z_a) pulls the field at z_a back to z_{a+1}, and vice versa
        b_f = _fit_step_restarting(fields[a], fields[a + 1], config)
        b_b = _fit_step_restarting(fields[a + 1], fields[a], config)
        forward.append(Step(chain[a + 1], chain[a], _poly_map(b_f, interval, degree)))
        backward.append(Step(chain[a], chain[a + 1], _poly_map(b_b, interval, degree)))

    basis = spatial_basis(x, interval, degree)
    coeffs = np.zeros((n, n, 1, degree + 1))
    for i, eta in enumerate(nodes.nodes):
        si = int(np.argmin(np.abs(chain - eta)))
        targets, rows = [], []
        for ti, mu in enumerate(chain):
            if ti == si:
                continue
            steps = forward[si:ti] if ti > si else backward[ti:si][::-1]
            mapped = compose_chain(steps)(x)
            rows.append(lagrange_matrix(nodes, [mu])[0])
            targets.append((mapped - x) / (mu - eta))
        # displacement/(mu - eta) = sum_k ell_k(mu) a_k(x),  a_k = basis @ c[i, k]
        L = np.array(rows)
        D = np.array(targets)
        a_k, *_ = np.linalg.lstsq(L, D, rcond=None)
        c_k, *_ = np.linalg.lstsq(basis, a_k.T, rcond=None)
        coeffs[i, :, 0, :] = c_k.T
    T = T0.with_coeffs(coeffs)
    if not _fold_check(T, x):
        log.debug("localized initial transforms fold; falling back to identity")
        return T0
    return T


def _fit_step_restarting(source, target, config):
    step = config.step_size
    for _ in range(MAX_RESTARTS + 1):
        try:
            return fit_step(source, target, config, step)
        except FitError:
            step /= 10.0
    raise FitError("local step fit failed after restarts")


def fit_cell(provider: Provider, nodes: NodeSet, config: FitConfig,
             init: Optional[TransformSet] = None) -> Tuple[TransformSet, FitReport]:
    """Fit the transforms of one cell.

    Folding results trigger a restart from the initial transforms with a ten
    times smaller step, at most ``MAX_RESTARTS`` times.
    """
    params = training_params_for(nodes, config)
    snaps = [provider(float(z)) for z in nodes.nodes]
    grid = snaps[0].grid
    interval = (grid.x_min, grid.x_max)
    raw_nodes = np.stack([s.values for s in snaps])
    raw_truth = np.stack([provider(float(mu)).values for mu in params])
    width = config.smoothing_width
    if width > 0:
        node_values = mollify_rows(grid, raw_nodes, width)
        truth = mollify_rows(grid, raw_truth, width)
    else:
        node_values, truth = raw_nodes, raw_truth
    obj = CellObjective(node_values, nodes, truth, params, grid, config.spatial_degree)

    if init is None:
        init = TransformSet.identity(nodes, interval, config.spatial_degree)
        if config.localize:
            # smooth families are often fitted best by plain interpolation
            local = localized_init(provider, nodes, config, params)
            if obj.value(local.coeffs[:, :, 0, :]) < obj.value(init.coeffs[:, :, 0, :]):
                init = local
    if init.spatial_degree != config.spatial_degree:
        raise ValueError("initial transforms have a different spatial degree")
    c0 = init.coeffs[:, :, 0, :]

    if config.finite_difference:
        def fun(c):
            return obj.value(c), _fd_gradient(obj.value, c, config.fd_step)
    else:
        fun = obj.value_and_grad

    x = grid.x

    def admissible(c):
        return _is_monotone(obj.mapped(c))

    step = config.step_size
    rng = np.random.default_rng(config.seed) if config.seed is not None else None
    total_iters = 0
    for restart in range(MAX_RESTARTS + 1):
        start = c0
        if restart and rng is not None:
            start = c0 + 1e-3 * rng.standard_normal(c0.shape)
        c, history, iters = _descend(fun, start, config, admissible, step)
        total_iters += iters
        T = init.with_coeffs(c[:, :, None, :])
        if _fold_check(T, x):
            break
        log.debug("fitted transforms fold, restart %d with step %g", restart + 1, step / 10)
        step /= 10.0
    else:
        raise FitError("fitted transforms fold after restarts",
                       {"coeffs": c, "params": params})

    errors = obj.errors(c, raw_nodes, raw_truth)
    per_param = {float(mu): float(e) for mu, e in zip(params, errors)}
    final = max(per_param.values()) if per_param else 0.0
    report = FitReport(final, per_param, total_iters, [(len(nodes) - 1, final)],
                       history, restart)
    return T, report


def fit_localized(provider: Provider, nodes: NodeSet, config: FitConfig) -> TransformSet:
    init = localized_init(provider, nodes, config)
    return fit_cell(provider, nodes, config, init=init)[0]


def training_error(T: TransformSet, provider: Provider, params: Sequence[float]) -> Dict[float, float]:
    """Unmollified L1 training errors recomputed from scratch."""
    nodes = T.source_nodes
    snaps = np.stack([provider(float(z)).values for z in nodes.nodes])
    grid = provider(float(nodes.nodes[0])).grid
    x = grid.x
    w = grid.trapezoid_weights()
    params = np.asarray(params, dtype=float)
    lag = lagrange_matrix(nodes, params)
    disp = T.displacement_table(params, x)
    out = {}
    for t, mu in enumerate(params):
        pred = sum(lag[t, i] * np.interp(x + disp[t, i], x, snaps[i])
                   for i in range(len(nodes)))
        out[float(mu)] = float(np.abs(pred - provider(float(mu)).values) @ w)
    return out
