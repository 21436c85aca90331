"""Build blob models by hand and render them.

Walks through the representation: a single diffuse ellipse, the effect
of the sharpness parameter, and how the strength parameter decides
which of two overlapping blobs dominates the blend.  Writes a handful
of PGM images into demos/output/.
"""

import pathlib

from blobinv import Blob, Model, combined_value, rasterize_2d, write_pgm

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)


def render(model, name, size=160):
    path = OUT / f"{name}.pgm"
    write_pgm(rasterize_2d(model, size, size), path)
    print(f"  wrote {path}")


print("A single blob: centre intensity delta, half intensity on the boundary")
blob = Blob(delta=0.9, s=1.0, alpha=0.5, x_loc=0.5, y_loc=0.5,
            x_s=0.3, y_s=0.15, z_r=0.12)
model = Model(background=0.15, blobs=(blob,))
centre = combined_value(model, (0.5, 0.5))
print(f"  value at centre: {centre:.3f} (background is 0.15)")
render(model, "single_blob")

print("Sharpness: alpha near 0 is fog, alpha near 1 is a hard-edged ellipse")
for alpha in (0.1, 0.4, 1.0):
    soft = Blob(delta=0.9, s=1.0, alpha=alpha, x_loc=0.5, y_loc=0.5,
                x_s=0.3, y_s=0.15, z_r=0.12)
    render(Model(background=0.15, blobs=(soft,)), f"alpha_{alpha:0.1f}")

print("Strength: the stronger blob takes the foreground where they overlap")
for name, (s_left, s_right) in {
    "left_dominant": (1.0, 0.05),
    "balanced": (0.5, 0.5),
    "right_dominant": (0.05, 1.0),
}.items():
    left = Blob(delta=0.95, s=s_left, alpha=0.6, x_loc=0.38, y_loc=0.5,
                x_s=0.22, y_s=0.22, z_r=0.0)
    right = Blob(delta=0.25, s=s_right, alpha=0.6, x_loc=0.62, y_loc=0.5,
                 x_s=0.22, y_s=0.22, z_r=0.0)
    pair = Model(background=0.55, blobs=(left, right))
    midpoint = combined_value(pair, (0.5, 0.5))
    print(f"  {name}: value at the overlap midpoint = {midpoint:.3f}")
    render(pair, f"strength_{name}")
