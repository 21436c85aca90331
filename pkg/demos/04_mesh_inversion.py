"""Invert 3D response data over a resistivity mesh.

A known two-blob 3D model is sampled onto a hexahedral mesh
(resistivity = 10^(-2+5v) ohm-m) and pushed through the synthetic
forward model — depth-weighted log-resistivity averages under each
surface station, one weight profile per simulated sensing depth.  The
search then has to recover a model matching those responses.  Writes
depth slices of the recovered mesh to demos/output/.
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
    SyntheticForward,
    rms_error,
    sample_mesh,
    search,
    station_grid,
    write_pgm,
)
from blobinv.raster import Image2D, quantize, value_from_resistivity

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
MESH = (13, 14, 10)

truth = Model(
    background=0.6,  # 10 ohm-m background
    blobs=(
        Blob(delta=0.95, s=1.0, alpha=0.5, x_loc=0.35, y_loc=0.4, x_s=0.25, y_s=0.2,
             z_r=0.1, z_loc=0.3, z_s=0.2, x_r=0.0, y_r=0.0),
        Blob(delta=0.15, s=0.7, alpha=0.4, x_loc=0.7, y_loc=0.6, x_s=0.2, y_s=0.25,
             z_r=0.8, z_loc=0.6, z_s=0.25, x_r=0.0, y_r=0.0),
    ),
    dim=3,
)

forward = SyntheticForward(station_grid(MESH[0], MESH[1], stride=2))
field = FieldData.responses(forward.respond(sample_mesh(truth, *MESH)))
print(f"{len(field.values)} synthetic responses "
      f"({len(forward.stations)} stations x {len(forward.decay_rates)} depth profiles)")

config = SearchConfig(
    num_rounds=2,
    split_count=2,
    cma=CmaConfig(sigma0=0.05, max_iterations=10**6, flat_fitness_window=50),
    prime=PrimeConfig(scan_grid=5, max_blobs=4),
    initial_background=0.6,
    seed=3,
    max_evaluations=30000,
)
best, trace = search(field, config, forward=forward, mesh_shape=MESH)

print("\nstage history:")
for span in trace.stages:
    print(f"  {span.label:>5}: evals {span.start_evaluations:>6} -> {span.end_evaluations:>6}  "
          f"best rms {span.best_error:7.3f}")

recovered = sample_mesh(best, *MESH)
final_rms = rms_error(forward.respond(recovered), field)
print(f"\nrecovered {best.n_blobs} blobs at rms {final_rms:.3f} "
      f"(1.0 = fitting within the assumed data errors)")

gray = quantize(value_from_resistivity(recovered.values))
for iz in range(recovered.nz):
    write_pgm(Image2D(gray[iz]), OUT / f"mesh_slice_z{iz:02d}.pgm")
print(f"wrote {recovered.nz} depth slices to output/ (dark = conductive)")
