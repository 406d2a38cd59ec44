"""Command-line runner: ``python3 -m hptsi --experiment two_shocks --out results``."""

from __future__ import annotations

import argparse
import logging
import sys

from hptsi.experiments import (EXPERIMENTS, ExperimentConfig, coerce_config_values,
                               read_config_file, run)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="python3 -m hptsi",
                                description="Run a Burgers TSI experiment and write CSV files.")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--out", help="output directory")
    p.add_argument("--h", type=float, help="spatial grid spacing")
    p.add_argument("--tol", type=float, help="refinement stop threshold")
    p.add_argument("--quadrature", choices=("fine", "coarse"))
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="file with one 'key = value' per line")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        values = coerce_config_values(read_config_file(args.config)) if args.config else {}
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    flags = {"experiment": args.experiment, "output_dir": args.out, "h": args.h,
             "stop_tol": args.tol, "quadrature_mode": args.quadrature, "seed": args.seed}
    values.update({k: v for k, v in flags.items() if v is not None})
    name = values.pop("experiment", None)
    if name is None:
        print("error: no experiment given (--experiment or config key)", file=sys.stderr)
        return 2
    try:
        config = ExperimentConfig.for_experiment(name, **values)
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run(config)
    except Exception as exc:  # reported, not re-raised, so the exit code carries it
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for kind, path in result.files.items():
        print(f"{kind}: {path}")
    if result.row is not None:
        r = result.row
        print(f"{r.experiment}: snapshots {r.snapshots_tsi}/{r.snapshots_all}, "
              f"train {r.error_train:.4g}, sample {r.error_sample:.4g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
