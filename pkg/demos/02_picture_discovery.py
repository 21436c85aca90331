"""Recover a hidden picture from pixel errors alone.

Generates a secret five-blob target image, then runs the full staged
search against it: greedy priming, an optimizer stage, and two rounds
of cull / split / re-optimize.  Prints the stage-by-stage story and
writes the target, the primed guess, and the final reconstruction to
demos/output/.
"""

import pathlib

import numpy as np

from blobinv import (
    Blob,
    CmaConfig,
    FieldData,
    Model,
    PrimeConfig,
    SearchConfig,
    rasterize_2d,
    search,
    split_recoveries,
    write_pgm,
)

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
SIZE = 64

rng = np.random.default_rng(2024)
secret = Model(
    background=0.35,
    blobs=tuple(
        Blob(delta=rng.uniform(), s=rng.uniform(0.4, 1.0), alpha=rng.uniform(0.2, 0.8),
             x_loc=rng.uniform(0.2, 0.8), y_loc=rng.uniform(0.2, 0.8),
             x_s=rng.uniform(0.08, 0.3), y_s=rng.uniform(0.08, 0.3),
             z_r=rng.uniform())
        for _ in range(5)
    ),
)
target = rasterize_2d(secret, SIZE, SIZE)
write_pgm(target, OUT / "discovery_target.pgm")
print(f"secret model has {secret.n_blobs} blobs; target written to output/")

config = SearchConfig(
    num_rounds=2,
    split_count=3,
    cma=CmaConfig(sigma0=0.05, max_iterations=10**6, flat_fitness_window=50),
    prime=PrimeConfig(scan_grid=8, max_blobs=6),
    seed=7,
    max_evaluations=40000,
)
best, trace = search(FieldData.picture(target), config)

print("\nstage history (evaluations, best error):")
for span in trace.stages:
    print(f"  {span.label:>5}: {span.start_evaluations:>6} -> {span.end_evaluations:>6}  "
          f"best {span.best_error:8.3f}  ({span.wall_seconds:.1f}s)")

for peak in split_recoveries(trace):
    recovered = "recovered" if peak["best_later"] < peak["error_before"] else "not recovered"
    print(f"split at eval {peak['evaluations']}: {peak['error_before']:.2f} -> "
          f"{peak['error_after']:.2f}, later best {peak['best_later']:.2f} ({recovered})")

print(f"\nfinal: {best.n_blobs} blobs, error {trace.min_error():.3f} "
      f"(mean |pixel difference| out of 255)")
write_pgm(rasterize_2d(best, SIZE, SIZE), OUT / "discovery_reconstruction.pgm")
print("reconstruction written to output/discovery_reconstruction.pgm")
