import numpy as np
import pytest

from blobinv.model import Blob, Model, combined_value
from blobinv.raster import (
    Image2D,
    Mesh3D,
    cell_centers_2d,
    rasterize_2d,
    read_mesh,
    read_pgm,
    resistivity_from_value,
    sample_mesh,
    value_from_resistivity,
    write_mesh,
    write_pgm,
)
from helpers import random_model, target_model

RTOL = 1e-12


def test_blank_white():
    img = rasterize_2d(Model(background=1.0), 4, 4)
    assert (img.pixels == 255).all()


def test_blank_black():
    img = rasterize_2d(Model(background=0.0), 4, 4)
    assert (img.pixels == 0).all()


def test_blank_mid_gray_rounds_half_away_from_zero():
    # 0.5 * 255 = 127.5 rounds up to 128
    img = rasterize_2d(Model(background=0.5), 4, 4)
    assert (img.pixels == 128).all()


def test_rasterize_rejects_3d_model():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="2D"):
        rasterize_2d(random_model(rng, 1, dim=3), 4, 4)


def test_rasterize_samples_cell_centers():
    rng = np.random.default_rng(1)
    m = random_model(rng, 3)
    img = rasterize_2d(m, 7, 5)
    for j, i in [(0, 0), (2, 3), (4, 6)]:
        v = combined_value(m, ((i + 0.5) / 7, (j + 0.5) / 5))
        assert img.pixels[j, i] == int(np.floor(v * 255 + 0.5))


def test_rasterize_deterministic():
    rng = np.random.default_rng(2)
    m = random_model(rng, 4)
    a = rasterize_2d(m, 33, 17)
    b = rasterize_2d(m, 33, 17)
    assert np.array_equal(a.pixels, b.pixels)


def test_downsampling_consistency():
    # Doubling resolution then 2x2 box averaging stays within +/-2 levels
    # of the direct low-resolution raster for smooth models.  Smooth here
    # means: alpha in [0.07, 0.5] (below ~1/15 the falloff has an r^(30a)
    # cusp at the blob centre with unbounded curvature), sizes large
    # relative to a pixel, and blended values away from the 0/1 clamp
    # (the clamp is a crease).
    from blobinv.model import combined_values
    from blobinv.raster import cell_centers_2d

    rng = np.random.default_rng(3)
    fine_centers = cell_centers_2d(128, 128)
    kept = 0
    while kept < 25:
        m = Model(
            background=rng.uniform(0.05, 0.3),
            blobs=tuple(
                Blob(delta=rng.uniform(0.4, 0.8), s=rng.uniform(0.7, 1.0),
                     alpha=rng.uniform(0.07, 0.5),
                     x_loc=rng.uniform(0.2, 0.8), y_loc=rng.uniform(0.2, 0.8),
                     x_s=rng.uniform(0.25, 0.45), y_s=rng.uniform(0.25, 0.45),
                     z_r=rng.uniform())
                for _ in range(3)
            ),
        )
        v = combined_values(m, fine_centers)
        if v.min() < 0.02 or v.max() > 0.98:
            continue
        kept += 1
        low = rasterize_2d(m, 64, 64).pixels.astype(float)
        high = rasterize_2d(m, 128, 128).pixels.astype(float)
        box = (high[0::2, 0::2] + high[0::2, 1::2] + high[1::2, 0::2] + high[1::2, 1::2]) / 4
        assert np.max(np.abs(box - low)) <= 2.0


# ----------------------------------------------------------------------
# mesh sampling
# ----------------------------------------------------------------------

def blank3(v):
    return Model(background=v, dim=3)


def test_mesh_resistivity_extremes():
    assert (sample_mesh(blank3(0.0), 3, 3, 3).values == pytest.approx(0.01, rel=RTOL))
    assert (sample_mesh(blank3(1.0), 3, 3, 3).values == pytest.approx(1000.0, rel=RTOL))


def test_mesh_resistivity_midpoint():
    # v=0.4: exponent -2 + 2 = 0 -> 1 ohm-m
    assert sample_mesh(blank3(0.4), 2, 2, 2).values == pytest.approx(1.0, rel=RTOL)


def test_mesh_rejects_2d_model():
    with pytest.raises(ValueError, match="3D"):
        sample_mesh(Model(background=0.5), 2, 2, 2)


def test_resistivity_map_monotone_and_exact_range():
    v = np.linspace(0, 1, 101)
    res = resistivity_from_value(v)
    assert res[0] == pytest.approx(0.01, rel=RTOL)
    assert res[-1] == pytest.approx(1000.0, rel=RTOL)
    assert (np.diff(res) > 0).all()
    assert value_from_resistivity(res) == pytest.approx(v, rel=1e-9, abs=1e-12)


def test_mesh_shape_and_order():
    rng = np.random.default_rng(4)
    m = random_model(rng, 2, dim=3)
    mesh = sample_mesh(m, 5, 4, 3)
    assert (mesh.nx, mesh.ny, mesh.nz) == (5, 4, 3)
    # raveled order: x fastest, then y, then z
    v = combined_value(m, ((2 + 0.5) / 5, (1 + 0.5) / 4, (0 + 0.5) / 3))
    assert mesh.values.ravel()[0 * 20 + 1 * 5 + 2] == pytest.approx(
        float(resistivity_from_value(v)), rel=RTOL
    )


# ----------------------------------------------------------------------
# file formats
# ----------------------------------------------------------------------

def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    img = Image2D(rng.integers(0, 256, size=(9, 13), dtype=np.uint8))
    path = tmp_path / "img.pgm"
    write_pgm(img, path)
    again = read_pgm(path)
    assert np.array_equal(img.pixels, again.pixels)
    header = path.read_bytes()[:15]
    assert header.startswith(b"P5\n13 9\n255\n")


def test_pgm_reader_handles_comments(tmp_path):
    path = tmp_path / "c.pgm"
    payload = bytes([1, 2, 3, 4, 5, 6])
    path.write_bytes(b"P5\n# a comment\n3 2\n255\n" + payload)
    img = read_pgm(path)
    assert img.width == 3 and img.height == 2
    assert img.pixels.ravel().tolist() == [1, 2, 3, 4, 5, 6]


def test_pgm_reader_rejects_truncation(tmp_path):
    path = tmp_path / "t.pgm"
    path.write_bytes(b"P5\n3 2\n255\n\x01\x02")
    with pytest.raises(ValueError, match="pixel bytes"):
        read_pgm(path)


def test_mesh_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    mesh = Mesh3D(10.0 ** rng.uniform(-2, 3, size=(3, 4, 5)))
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    again = read_mesh(path)
    assert np.array_equal(mesh.values, again.values)
    assert path.read_text().splitlines()[0] == "5 4 3"


def test_mesh_reader_rejects_short_file(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("2 2 2\n1.0 1.0 1.0\n")
    with pytest.raises(ValueError, match="expected 8 values"):
        read_mesh(path)


def test_png_round_trip(tmp_path):
    pytest.importorskip("PIL")
    from blobinv.raster import read_image, write_png

    rng = np.random.default_rng(7)
    img = Image2D(rng.integers(0, 256, size=(6, 8), dtype=np.uint8))
    path = tmp_path / "img.png"
    write_png(img, path)
    again = read_image(path)
    assert np.array_equal(img.pixels, again.pixels)
