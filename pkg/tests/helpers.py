"""Shared test utilities: random models and an independent scalar oracle.

The oracle reimplements the blended-value formula with plain Python
floats and explicit loops, deliberately sharing no code with the
vectorized library path, so tests can cross-check one against the other.
"""

from __future__ import annotations

import math

import numpy as np

from blobinv.model import AXIS_EPSILON, Blob, Model


def random_blob(rng: np.random.Generator, dim: int = 2, **overrides) -> Blob:
    fields = {
        "delta": rng.uniform(),
        "s": rng.uniform(),
        "alpha": rng.uniform(),
        "x_loc": rng.uniform(),
        "y_loc": rng.uniform(),
        "x_s": rng.uniform(),
        "y_s": rng.uniform(),
        "z_r": rng.uniform(),
    }
    if dim == 3:
        fields.update(
            z_loc=rng.uniform(), z_s=rng.uniform(), x_r=rng.uniform(), y_r=rng.uniform()
        )
    fields.update(overrides)
    return Blob(**fields)


def random_model(rng: np.random.Generator, n_blobs: int, dim: int = 2) -> Model:
    return Model(
        background=rng.uniform(),
        blobs=tuple(random_blob(rng, dim) for _ in range(n_blobs)),
        dim=dim,
    )


def target_blob(rng: np.random.Generator, dim: int = 2) -> Blob:
    """A blob with the moderate sizes and strengths used for test targets."""
    return random_blob(
        rng,
        dim,
        s=rng.uniform(0.3, 1.0),
        alpha=rng.uniform(0.15, 0.8),
        x_loc=rng.uniform(0.15, 0.85),
        y_loc=rng.uniform(0.15, 0.85),
        x_s=rng.uniform(0.06, 0.35),
        y_s=rng.uniform(0.06, 0.35),
        **({"z_loc": rng.uniform(0.2, 0.8), "z_s": rng.uniform(0.1, 0.35)} if dim == 3 else {}),
    )


def target_model(rng: np.random.Generator, n_blobs: int, dim: int = 2) -> Model:
    return Model(
        background=rng.uniform(0.1, 0.9),
        blobs=tuple(target_blob(rng, dim) for _ in range(n_blobs)),
        dim=dim,
    )


# ----------------------------------------------------------------------
# Independent scalar oracle
# ----------------------------------------------------------------------

def oracle_intensity(blob: Blob, point) -> float:
    """Scalar blob intensity via explicit rotation arithmetic."""
    dx = point[0] - blob.x_loc
    dy = point[1] - blob.y_loc
    if blob.dim == 2:
        t = blob.z_r * math.pi
        ux = math.cos(t) * dx + math.sin(t) * dy
        uy = -math.sin(t) * dx + math.cos(t) * dy
        coords = [ux, uy]
        axes = [blob.x_s, blob.y_s]
    else:
        dz = point[2] - blob.z_loc
        tx, ty, tz = blob.x_r * math.pi, blob.y_r * math.pi, blob.z_r * math.pi

        def rot_x(v, t):
            return [v[0], math.cos(t) * v[1] - math.sin(t) * v[2],
                    math.sin(t) * v[1] + math.cos(t) * v[2]]

        def rot_y(v, t):
            return [math.cos(t) * v[0] + math.sin(t) * v[2], v[1],
                    -math.sin(t) * v[0] + math.cos(t) * v[2]]

        def rot_z(v, t):
            return [math.cos(t) * v[0] - math.sin(t) * v[1],
                    math.sin(t) * v[0] + math.cos(t) * v[1], v[2]]

        # inverse of R = Rz Ry Rx is Rx(-tx) Ry(-ty) Rz(-tz)
        coords = rot_x(rot_y(rot_z([dx, dy, dz], -tz), -ty), -tx)
        axes = [blob.x_s, blob.y_s, blob.z_s]
    r2 = sum((c / max(a, AXIS_EPSILON)) ** 2 for c, a in zip(coords, axes))
    return blob.delta / (r2 ** (15.0 * blob.alpha) + 1.0)


def oracle_combined(model: Model, point) -> float:
    """Scalar blended value via explicit loops over blobs."""
    if not model.blobs:
        return model.background
    strengths = [b.s for b in model.blobs]
    top = max(strengths)
    adjusted = [0.0 if top == 0 else (s / top) ** 6 for s in strengths]
    normalised = [
        0.0 if b.delta == 0 else oracle_intensity(b, point) / b.delta
        for b in model.blobs
    ]
    bg = model.background + sum((1 - sp) * f for sp, f in zip(adjusted, normalised))
    fg = sum(sp * f for sp, f in zip(adjusted, normalised))
    wi = sum(sp * b.delta for sp, b in zip(adjusted, model.blobs))
    v = bg if wi == 0 else bg + fg * (1 - bg / wi)
    return min(1.0, max(0.0, v))
