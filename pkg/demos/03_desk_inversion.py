"""Train on sloped beds, then recover an unseen bumpy bed from waves alone.

A desk-sized run (16x16 grid, 20 steps) that finishes in a few minutes:

1. simulate 16 training sequences over randomly rotated and scaled slopes,
2. fit the stencil networks to the surface frames,
3. freeze them and fit H to 32 sequences over one bumpy bed,
4. compare the recovered bed with the truth and render both.

    python demos/03_desk_inversion.py [out_dir]
"""

import sys
import time
from pathlib import Path

import numpy as np

from finnswe.inversion import InverseConfig, infer_topography, reconstruction_error
from finnswe.render import render
from finnswe.scenario import generate_dataset
from finnswe.swe import Grid, SimConfig
from finnswe.training import TrainConfig, load_sequences, train

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_desk")
cfg = SimConfig(grid=Grid(16, 16), steps=20)

train_set = generate_dataset(out / "train", "train", 16, 3, cfg)
infer_set = load_sequences(generate_dataset(out / "infer", "infer", 32, 5, cfg, beta=0.68))
H_true = infer_set[0].H
print(f"true bed spans {H_true.min():.1f}..{H_true.max():.1f} m")

t0 = time.time()
fit = train(train_set, TrainConfig(epochs=200, batch_size=2, learning_rate=1e-2), log_path=out / "train.log")
print(f"training: loss {fit.losses[0]:.2e} -> {fit.best_loss:.2e} in {time.time() - t0:.0f} s")

t0 = time.time()
icfg = InverseConfig(iterations=300, learning_rate=0.05, lambda_smooth=1e-8, lambda_edge=1e-8, snapshot_every=50)
inv = infer_topography(infer_set, fit.params, icfg, log_path=out / "infer.log")
print(f"inversion: best data term {inv.inference_error:.2e} at iteration {inv.best_iteration} "
      f"({time.time() - t0:.0f} s)")

flat = np.full_like(H_true, icfg.h_init_m)
for mode in ("full", "inner"):
    print(f"{mode:5s} RMSE: recovered {reconstruction_error(inv.H, H_true, mode):.3f} m, "
          f"flat start {reconstruction_error(flat, H_true, mode):.3f} m")

# plotted as -H so deep water is dark
render(H_true, out / "H_true.pgm", negate=True)
render(inv.H, out / "H_inferred.pgm", negate=True)
for it, H in sorted(inv.snapshots.items()):
    render(H, out / f"H_iter_{it:04d}.pgm", negate=True)
print(f"renders and logs in {out}/")
