"""Forward samplers: model -> grayscale image, model -> resistivity mesh.

Sampling happens at cell centres, so a blob centred at 0.5 renders
symmetrically in an even-sized raster.  The 0-255 pixel mapping rounds
half away from zero; both choices are fixed conventions so that
identical models always produce bit-identical rasters.

Mesh cells map the blended value v onto resistivity via
res = 10^(-2 + 5v) ohm-metres, covering 0.01 to 1000 ohm-metres.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Model, combined_values

RES_MIN = 0.01
RES_MAX = 1000.0


@dataclass(frozen=True)
class Image2D:
    """Grayscale raster; pixels is a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError(f"pixels must be a nonempty 2D array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.min() < 0 or px.max() > 255:
                raise ValueError("pixel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Mesh3D:
    """Hexahedral resistivity mesh; values is a (nz, ny, nx) float array in ohm-metres.

    Flattened in C order the x index varies fastest, which is also the
    order used by the plain-text mesh format.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.size == 0:
            raise ValueError(f"values must be a nonempty 3D array, got shape {v.shape}")
        if v.min() < RES_MIN * (1 - 1e-12) or v.max() > RES_MAX * (1 + 1e-12):
            raise ValueError(
                f"resistivities must lie in [{RES_MIN}, {RES_MAX}] ohm-m, "
                f"got [{v.min()}, {v.max()}]"
            )
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[2]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def nz(self) -> int:
        return self.values.shape[0]


def cell_centers_2d(width: int, height: int) -> np.ndarray:
    """Sample points ((i+0.5)/width, (j+0.5)/height), row-major over (j, i)."""
    xs = (np.arange(width) + 0.5) / width
    ys = (np.arange(height) + 0.5) / height
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def cell_centers_3d(nx: int, ny: int, nz: int) -> np.ndarray:
    """Sample points with x fastest, then y, then z."""
    xs = (np.arange(nx) + 0.5) / nx
    ys = (np.arange(ny) + 0.5) / ny
    zs = (np.arange(nz) + 0.5) / nz
    gz, gy, gx = np.meshgrid(zs, ys, xs, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def quantize(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to 0-255 ints, rounding half away from zero."""
    return np.floor(np.asarray(values) * 255.0 + 0.5).astype(np.uint8)


def rasterize_2d(model: Model, width: int, height: int) -> Image2D:
    """Sample the model at pixel centres and quantize to 8-bit grayscale."""
    if model.dim != 2:
        raise ValueError(f"rasterize_2d needs a 2D model, got {model.dim}D")
    if width < 1 or height < 1:
        raise ValueError("width and height must be positive")
    v = combined_values(model, cell_centers_2d(width, height))
    return Image2D(quantize(v).reshape(height, width))


def resistivity_from_value(v) -> np.ndarray:
    """Blended value in [0, 1] -> resistivity in ohm-metres, 10^(-2+5v)."""
    return np.power(10.0, -2.0 + 5.0 * np.asarray(v, dtype=float))


def value_from_resistivity(res) -> np.ndarray:
    """Inverse of resistivity_from_value."""
    return (np.log10(np.asarray(res, dtype=float)) + 2.0) / 5.0


def sample_mesh(model: Model, nx: int, ny: int, nz: int) -> Mesh3D:
    """Sample the model at cell centres and map values to resistivities."""
    if model.dim != 3:
        raise ValueError(f"sample_mesh needs a 3D model, got {model.dim}D")
    if min(nx, ny, nz) < 1:
        raise ValueError("mesh cell counts must be positive")
    v = combined_values(model, cell_centers_3d(nx, ny, nz))
    return Mesh3D(resistivity_from_value(v).reshape(nz, ny, nx))


# ----------------------------------------------------------------------
# File formats
# ----------------------------------------------------------------------

def write_pgm(image: Image2D, path) -> None:
    """Binary PGM (P5), maxval 255."""
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.pixels.tobytes())


def read_pgm(path) -> Image2D:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        ch = data[pos:pos + 1]
        if ch == b"#":  # comment to end of line
            pos = data.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            fields.append(data[pos:end])
            pos = end
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos:pos + width * height]
    if len(raw) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes, got {len(raw)}")
    return Image2D(np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy())


def write_png(image: Image2D, path) -> None:
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover - depends on optional install
        raise RuntimeError("PNG output requires Pillow (pip install blobinv[png])") from exc
    PILImage.fromarray(image.pixels, mode="L").save(Path(path), format="PNG")


def read_image(path) -> Image2D:
    """Read a grayscale image: PGM natively, anything else via Pillow."""
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        return read_pgm(p)
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError(f"reading {p.suffix} images requires Pillow") from exc
    with PILImage.open(p) as img:
        return Image2D(np.asarray(img.convert("L"), dtype=np.uint8))


def write_mesh(mesh: Mesh3D, path) -> None:
    """Header line "nx ny nz", then resistivities with x varying fastest."""
    lines = [f"{mesh.nx} {mesh.ny} {mesh.nz}"]
    flat = mesh.values.ravel()
    per_row = mesh.nx
    for start in range(0, flat.size, per_row):
        lines.append(" ".join(repr(float(v)) for v in flat[start:start + per_row]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh3D:
    tokens = Path(path).read_text().split()
    if len(tokens) < 3:
        raise ValueError(f"{path}: missing mesh header")
    nx, ny, nz = (int(t) for t in tokens[:3])
    vals = np.array([float(t) for t in tokens[3:]])
    if vals.size != nx * ny * nz:
        raise ValueError(
            f"{path}: expected {nx * ny * nz} values for {nx}x{ny}x{nz} mesh, got {vals.size}"
        )
    return Mesh3D(vals.reshape(nz, ny, nx))
