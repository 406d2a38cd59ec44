"""Reproducible Burgers experiments writing CSV data files.

Every run writes a solution file (truth and model at four sample parameter
pairs), a parameter file (training, node, sample and collision parameters),
and appends one row to a results table. The rate study additionally writes
error against snapshot count, and the n-width demo compares plain and
transformed interpolation of a moving step.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hptsi.burgers import (collision_time, sample, shock_rarefaction_ic,
                           solve_front_tracking, two_shock_ic)
from hptsi.field import Grid1D, SampledField, l1_distance
from hptsi.fit import FitConfig, fit_cell
from hptsi.interp import chebyshev_nodes, interpolate_fields
from hptsi.tensor import (Axis1Config, Axis2Config, ComponentModel, PairCache,
                          evaluate_componentwise, fit_componentwise)
from hptsi.tsi import TsiCellModel, worst_case_error

log = logging.getLogger(__name__)

EXPERIMENTS = ("two_shocks", "shock_rwave", "rate_study", "nwidth_demo")
RESULTS_HEADER = ["experiment", "snapshots_tsi", "snapshots_all", "error_train", "error_sample"]
RATE_HEADER = ["n_snapshots", "error"]
PARAMS_HEADER = ["mu", "time", "label"]


def fmt(v: float) -> str:
    """Shortest decimal that reads back to the same double, never in exponent form."""
    return np.format_float_positional(float(v), unique=True, trim="0")


@dataclass
class ExperimentConfig:
    """Settings of one experiment run; see :meth:`for_experiment` for defaults."""

    experiment: str = "two_shocks"
    output_dir: str = "out"
    x_min: float = -1.0
    x_max: float = 2.5
    h: float = 0.01
    mu_min: float = 1.3
    mu_max: float = 1.6
    t_min: float = 0.0
    t_max: float = 2.0
    mu_degree: int = 2
    t_degree: int = 1
    spatial_degree: int = 1
    param_degree: int = 1
    strategy: str = "h"
    quadrature_mode: str = "fine"
    coarse_points: int = 3
    smoothing_width: float = 0.02
    stop_tol: float = 0.02
    budget: int = 200
    max_iters: int = 300
    seed: int = 0
    label: str = ""
    rate_tols: Tuple[float, ...] = (0.32, 0.16, 0.08, 0.04, 0.02, 0.01)
    rate_test_mu: int = 5
    rate_test_t: int = 9
    nwidth_max: int = 16
    nwidth_tsi_max: int = 8
    nwidth_interval: Tuple[float, float] = (0.3, 0.7)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not (self.x_min < self.x_max and self.mu_min < self.mu_max
                and self.t_min < self.t_max):
            raise ValueError("parameter and spatial ranges must be nonempty")
        if self.quadrature_mode not in ("fine", "coarse"):
            raise ValueError("quadrature must be 'fine' or 'coarse'")
        self.rate_tols = tuple(float(v) for v in self.rate_tols)
        self.nwidth_interval = tuple(float(v) for v in self.nwidth_interval)

    @classmethod
    def for_experiment(cls, name: str, **overrides) -> "ExperimentConfig":
        base = {"experiment": name}
        if name == "shock_rwave":
            base.update(x_min=-0.5, x_max=3.0, mu_min=-0.5, mu_max=0.5, mu_degree=2,
                        t_degree=3, spatial_degree=2, param_degree=2, strategy="hp",
                        quadrature_mode="coarse")
        elif name == "rate_study":
            base.update(quadrature_mode="coarse")
        elif name == "nwidth_demo":
            base.update(x_min=0.0, x_max=1.0)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    @property
    def grid(self) -> Grid1D:
        return Grid1D.from_spacing(self.x_min, self.x_max, self.h)

    @property
    def run_label(self) -> str:
        if self.label:
            return self.label
        if self.experiment in ("two_shocks", "shock_rwave"):
            return f"{self.experiment}_{self.quadrature_mode}"
        return self.experiment


@dataclass
class ResultsRow:
    experiment: str
    snapshots_tsi: int
    snapshots_all: int
    error_train: float
    error_sample: float

    def __post_init__(self):
        if self.snapshots_all < self.snapshots_tsi:
            raise ValueError("snapshots_all must be >= snapshots_tsi")
        if self.error_train < 0 or self.error_sample < 0:
            raise ValueError("errors must be nonnegative")

    def cells(self) -> List[str]:
        return [self.experiment, str(self.snapshots_tsi), str(self.snapshots_all),
                fmt(self.error_train), fmt(self.error_sample)]


@dataclass
class RunResult:
    files: Dict[str, str]
    row: Optional[ResultsRow]
    model: Optional[ComponentModel] = None
    samples: List[Tuple[float, float]] = field(default_factory=list)
    rates: List[Tuple[int, float]] = field(default_factory=list)
    config: Optional[ExperimentConfig] = None


def burgers_provider(config: ExperimentConfig):
    """``(t, mu) -> SampledField`` for the configured Burgers family."""
    grid = config.grid
    ic = two_shock_ic if config.experiment in ("two_shocks", "rate_study") \
        else shock_rarefaction_ic

    def provider(t: float, mu: float) -> SampledField:
        return sample(solve_front_tracking(ic(mu), t), grid)

    return provider


def family_collision_time(config: ExperimentConfig, mu: float) -> Optional[float]:
    if config.experiment in ("two_shocks", "rate_study"):
        return 2.0 / mu
    try:
        return collision_time(shock_rarefaction_ic(mu))
    except ValueError:
        return None


def fit_model(config: ExperimentConfig, provider=None, tol: Optional[float] = None
              ) -> ComponentModel:
    provider = provider or burgers_provider(config)
    fit_cfg = FitConfig(smoothing_width=config.smoothing_width, max_iters=config.max_iters,
                        spatial_degree=config.spatial_degree, seed=config.seed)
    axis1 = Axis1Config((config.t_min, config.t_max), degree=config.t_degree,
                        strategy=config.strategy,
                        tol=config.stop_tol if tol is None else tol,
                        budget=config.budget, fit=fit_cfg)
    axis2 = Axis2Config((config.mu_min, config.mu_max), degree=config.mu_degree,
                        spatial_degree=config.spatial_degree,
                        param_nodes=config.param_degree + 1,
                        quadrature_mode=config.quadrature_mode,
                        coarse_points=config.coarse_points,
                        smoothing_width=config.smoothing_width,
                        max_iters=config.max_iters, seed=config.seed)
    return fit_componentwise(provider, axis1, axis2, adaptive_axis1=True)


def sample_pairs(model: ComponentModel) -> List[Tuple[float, float]]:
    """Four ``(t, mu)`` pairs away from the nodes.

    ``mu`` takes the midpoints of the two widest gaps between second-axis
    nodes (or the cell ends), ``t`` the midpoints of the two widest gaps
    between first-axis nodes of all stage-1 models.
    """
    def two_gaps(points, lo, hi):
        pts = np.unique(np.concatenate([[lo], points, [hi]]))
        gaps = np.diff(pts)
        order = np.argsort(-gaps, kind="stable")[:2]
        return sorted(float(0.5 * (pts[k] + pts[k + 1])) for k in order)

    lo2, hi2 = model.nodes2.interval
    mus = two_gaps(model.nodes2.nodes, lo2, hi2)
    t_nodes = np.unique(np.concatenate([p.nodes() for p in model.stage1.values()]))
    ts = two_gaps(t_nodes, *model.axis1_domain)
    return [(t, mu) for mu in mus for t in ts]


def sample_error(model: ComponentModel, provider, pairs) -> float:
    return max(l1_distance(evaluate_componentwise(model, t, mu), provider(t, mu))
               for t, mu in pairs)


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[str]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def append_results(path: str, row: ResultsRow):
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RESULTS_HEADER)
        w.writerow(row.cells())


def solution_rows(model: ComponentModel, provider, pairs) -> Tuple[List[str], List[List[str]]]:
    header = ["x"]
    cols = [model.grid.x]
    for k, (t, mu) in enumerate(pairs):
        header += [f"true {k}", f"tsi {k}"]
        cols += [provider(t, mu).values, evaluate_componentwise(model, t, mu).values]
    data = np.column_stack(cols)
    return header, [[fmt(v) for v in row] for row in data]


def param_rows(config: ExperimentConfig, model: ComponentModel, pairs) -> List[List[str]]:
    rows = []
    node_pairs = set()
    for eta, part in model.stage1.items():
        node_pairs.update((t, eta) for t in part.nodes())
    train = set()
    for eta, part in list(model.stage1.items()) + list(model.stage1_train.items()):
        for cell in part.cells:
            if cell.report is not None:
                train.update((t, eta) for t in cell.report.per_param_errors)
    train -= node_pairs
    for t, mu in sorted(train, key=lambda p: (p[1], p[0])):
        rows.append([fmt(mu), fmt(t), "train"])
    for t, mu in sorted(node_pairs, key=lambda p: (p[1], p[0])):
        rows.append([fmt(mu), fmt(t), "nodes"])
    for t, mu in pairs:
        rows.append([fmt(mu), fmt(t), "experiment"])
    for mu in model.nodes2.nodes:
        tc = family_collision_time(config, float(mu))
        if tc is not None:
            rows.append([fmt(mu), fmt(tc), "collision"])
    return rows


def _remove(paths):
    for p in paths:
        try:
            os.remove(p)
        except FileNotFoundError:
            pass


def run(config: ExperimentConfig) -> RunResult:
    """Run one experiment and write its CSV files into ``config.output_dir``."""
    os.makedirs(config.output_dir, exist_ok=True)
    if config.experiment == "nwidth_demo":
        return nwidth_demo(config)
    label = config.run_label
    out = config.output_dir
    files = {"solution": os.path.join(out, f"{label}_2d.csv"),
             "params": os.path.join(out, f"{label}_params.csv"),
             "results": os.path.join(out, "results.csv")}
    if config.experiment == "rate_study":
        files["rates"] = os.path.join(out, f"{label}_rates.csv")
    written = []
    try:
        raw = burgers_provider(config)
        provider = PairCache(raw)  # truth for evaluation, separate from fit accounting
        rates = []
        fitted = {}
        if config.experiment == "rate_study":
            test = rate_test_set(config)
            for tol in config.rate_tols:
                m = fitted[tol] = fit_model(config, PairCache(raw), tol)
                err = sample_error(m, provider, test)
                rates.append((m.snapshots_all, err))
                log.info("tol %g: %d snapshots, error %.4g", tol, m.snapshots_all, err)
            _write_csv(files["rates"], RATE_HEADER, [[str(n), fmt(e)] for n, e in rates])
            written.append(files["rates"])
        model = fitted.get(config.stop_tol) or fit_model(config, PairCache(raw))
        pairs = sample_pairs(model)
        header, rows = solution_rows(model, provider, pairs)
        _write_csv(files["solution"], header, rows)
        written.append(files["solution"])
        _write_csv(files["params"], PARAMS_HEADER, param_rows(config, model, pairs))
        written.append(files["params"])
        row = ResultsRow(label, model.snapshots_tsi, model.snapshots_all,
                         model.training_error, sample_error(model, provider, pairs))
    except Exception:
        _remove(written)
        raise
    append_results(files["results"], row)
    return RunResult(files, row, model, pairs, rates, config)


def rate_test_set(config: ExperimentConfig) -> List[Tuple[float, float]]:
    """Fixed grid of ``(t, mu)`` validation pairs for the rate study."""
    mus = np.linspace(config.mu_min, config.mu_max, config.rate_test_mu)
    ts = np.linspace(config.t_min, config.t_max, config.rate_test_t)
    return [(float(t), float(mu)) for mu in mus for t in ts]


def moving_step_provider(grid: Grid1D):
    def provider(mu: float) -> SampledField:
        return SampledField(grid, (grid.x >= mu).astype(float))
    return provider


def nwidth_demo(config: ExperimentConfig) -> RunResult:
    """Plain and transformed interpolation of ``H(x - mu)`` against the node count.

    Errors are maxima of the L1 error over 201 equispaced parameters.
    """
    grid = config.grid
    provider = moving_step_provider(grid)
    interval = config.nwidth_interval
    test = np.linspace(*interval, 201)
    truth = {float(m): provider(float(m)) for m in test}
    plain, tsi = [], []
    for n in range(2, config.nwidth_max + 1):
        nodes = chebyshev_nodes(n, interval)
        snaps = [provider(float(z)) for z in nodes.nodes]
        err = max(l1_distance(interpolate_fields(snaps, nodes, m), truth[m]) for m in truth)
        plain.append((n, err))
        if n <= config.nwidth_tsi_max:
            fit_cfg = FitConfig(smoothing_width=config.smoothing_width,
                                max_iters=config.max_iters, spatial_degree=1,
                                seed=config.seed)
            T, _ = fit_cell(provider, nodes, fit_cfg)
            model = TsiCellModel(nodes, tuple(snaps), T)
            tsi.append((n, worst_case_error(model, truth.__getitem__, list(truth))))
    out = config.output_dir
    files = {"plain": os.path.join(out, "nwidth_plain_rates.csv"),
             "tsi": os.path.join(out, "nwidth_tsi_rates.csv")}
    _write_csv(files["plain"], RATE_HEADER, [[str(n), fmt(e)] for n, e in plain])
    _write_csv(files["tsi"], RATE_HEADER, [[str(n), fmt(e)] for n, e in tsi])
    return RunResult(files, None, rates=plain + tsi, config=config)


def loglog_slope(points: Sequence[Tuple[float, float]]) -> float:
    n = np.log([p[0] for p in points])
    e = np.log([p[1] for p in points])
    return float(np.polyfit(n, e, 1)[0])


def read_config_file(path: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def coerce_config_values(raw: Dict[str, str]) -> Dict[str, object]:
    """Convert string values to the field types of :class:`ExperimentConfig`."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        t = str(types[key])
        if t == "int":
            out[key] = int(value)
        elif t == "float":
            out[key] = float(value)
        elif t.startswith("Tuple"):
            out[key] = tuple(float(v) for v in value.replace(",", " ").split())
        else:
            out[key] = value
    return out
