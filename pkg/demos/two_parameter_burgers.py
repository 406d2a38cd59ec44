"""
Two parameters: time and initial amplitude
==========================================

The two-shock family depends on ``t`` and on the amplitude ``mu`` of the
initial data. Stage 1 adapts in ``t`` at a few frozen ``mu`` nodes; stage 2
interpolates those models in ``mu`` after warping ``(x, t)`` so that the
collision times ``2/mu`` line up.

This script runs the experiment pipeline on a coarse grid so it finishes in
seconds, then prints what landed in the CSV files. For the full-resolution
run use ``python3 -m hptsi --experiment two_shocks --out results``.
"""

import csv
import tempfile

from hptsi.experiments import ExperimentConfig, run

out = tempfile.mkdtemp(prefix="two_shocks_")
config = ExperimentConfig.for_experiment("two_shocks", output_dir=out, h=0.02,
                                         smoothing_width=0.04, stop_tol=0.04)
result = run(config)
model = result.model

###############################################################################
# Stage 1: adaptive cells per frozen amplitude
# --------------------------------------------

for eta, part in model.stage1.items():
    finest = max(c.level for c in part.cells)
    cells = [c.interval for c in part.cells if c.level == finest]
    print(f"mu={eta:.4f}: {len(part.cells)} cells, finest level {finest} at {cells}, "
          f"collision at {2 / eta:.4f}")

###############################################################################
# Results
# -------

row = result.row
print(f"\nsnapshots {row.snapshots_tsi} stored / {row.snapshots_all} computed")
print(f"training error {row.error_train:.4f}, sample error {row.error_sample:.4f}")
print("sample pairs (t, mu):", [(round(t, 3), round(m, 3)) for t, m in result.samples])

with open(result.files["params"], newline="") as fh:
    labels = [r["label"] for r in csv.DictReader(fh)]
print("parameter rows:", {k: labels.count(k) for k in sorted(set(labels))})
print("files written to", out)
