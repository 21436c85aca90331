"""Diffuse-ellipse ("blob") spatial models.

A model is a background level plus an ordered list of blobs.  Each blob
is an ellipse-shaped intensity function: it peaks at its centre and
falls off radially, with a sharpness parameter controlling how hard the
edge is.  A per-blob strength parameter decides how much the blob sits
in the foreground when several blobs overlap; strengths are normalised
against the strongest blob and sharpened by a sixth power so that the
strongest blobs dominate their neighbourhood.

Every parameter lives in [0, 1].  Positions and sizes are fractions of
the model extent, rotations map linearly onto [0, pi].  The combined
value at a point is produced by blending a background sum and a
foreground sum of the normalised blob intensities (``combined_values``);
the result is always clamped back into [0, 1].

Models are immutable value objects and all evaluation functions are
pure, so they can be shared freely across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

# Semi-axes of exactly zero would divide by zero in the point transform;
# they are treated as this tiny but finite size instead (invisible at any
# practical sampling resolution).
AXIS_EPSILON = 1e-4

# Exponent multiplier in the radial falloff: intensity = delta / (r^(2*15*alpha) + 1).
SHARPNESS_SCALE = 15.0

# Normalised strengths are raised to this power to widen the gap between
# foreground and background blobs.
STRENGTH_POWER = 6

PARAM_NAMES_2D = ("delta", "s", "alpha", "x_loc", "y_loc", "x_s", "y_s", "z_r")
PARAM_NAMES_3D = PARAM_NAMES_2D + ("z_loc", "z_s", "x_r", "y_r")

MODEL_FORMAT_VERSION = 1


def params_per_blob(dim: int) -> int:
    """Number of genome entries used by one blob of the given dimensionality."""
    if dim == 2:
        return 8
    if dim == 3:
        return 12
    raise ValueError(f"dim must be 2 or 3, got {dim}")


def param_names(dim: int) -> tuple[str, ...]:
    return PARAM_NAMES_2D if dim == 2 else PARAM_NAMES_3D


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


@dataclass(frozen=True)
class Blob:
    """One diffuse ellipse.

    2D blobs carry the first eight parameters; 3D blobs add a z position
    and size plus rotations about the x and y axes.  Values outside
    [0, 1] are clamped at construction and the ``clamped`` flag records
    that this happened (the flag is ignored for equality).
    """

    delta: float          # central intensity
    s: float              # strength (foreground dominance)
    alpha: float          # sharpness of the edge falloff
    x_loc: float
    y_loc: float
    x_s: float            # semi-axis sizes, fraction of model extent
    y_s: float
    z_r: float            # rotation about z, fraction of pi
    z_loc: float | None = None
    z_s: float | None = None
    x_r: float | None = None
    y_r: float | None = None
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        three_d = (self.z_loc, self.z_s, self.x_r, self.y_r)
        if any(v is None for v in three_d) and any(v is not None for v in three_d):
            raise ValueError("3D blob fields z_loc, z_s, x_r, y_r must be set together")
        was_clamped = bool(self.clamped)
        for f in fields(self):
            if f.name == "clamped":
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            c = _clamp01(float(v))
            if c != v:
                was_clamped = True
            object.__setattr__(self, f.name, c)
        object.__setattr__(self, "clamped", was_clamped)

    @property
    def dim(self) -> int:
        return 2 if self.z_loc is None else 3

    def params(self) -> tuple[float, ...]:
        """Parameter tuple in fixed genome order."""
        return tuple(getattr(self, name) for name in param_names(self.dim))

    @classmethod
    def from_params(cls, values, dim: int) -> Blob:
        names = param_names(dim)
        if len(values) != len(names):
            raise ValueError(
                f"blob parameter count {len(values)} != expected {len(names)} for dim={dim}"
            )
        return cls(**{n: float(v) for n, v in zip(names, values)})

    def center(self) -> np.ndarray:
        if self.dim == 2:
            return np.array([self.x_loc, self.y_loc])
        return np.array([self.x_loc, self.y_loc, self.z_loc])

    def semi_axes(self) -> np.ndarray:
        """Semi-axis sizes with zero axes replaced by AXIS_EPSILON."""
        if self.dim == 2:
            axes = np.array([self.x_s, self.y_s])
        else:
            axes = np.array([self.x_s, self.y_s, self.z_s])
        return np.maximum(axes, AXIS_EPSILON)

    def rotation(self) -> np.ndarray:
        """Blob-frame -> world rotation matrix.

        3D rotations compose in the fixed order x, then y, then z
        (R = Rz @ Ry @ Rx); each parameter maps linearly onto [0, pi].
        """
        if self.dim == 2:
            t = self.z_r * math.pi
            c, s = math.cos(t), math.sin(t)
            return np.array([[c, -s], [s, c]])
        tx, ty, tz = self.x_r * math.pi, self.y_r * math.pi, self.z_r * math.pi
        cx, sx = math.cos(tx), math.sin(tx)
        cy, sy = math.cos(ty), math.sin(ty)
        cz, sz = math.cos(tz), math.sin(tz)
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return rz @ ry @ rx


@dataclass(frozen=True)
class Model:
    """Background level plus an ordered tuple of blobs, all of one dimensionality."""

    background: float
    blobs: tuple[Blob, ...] = ()
    dim: int = 2

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        object.__setattr__(self, "background", _clamp01(float(self.background)))
        object.__setattr__(self, "blobs", tuple(self.blobs))
        for i, b in enumerate(self.blobs):
            if b.dim != self.dim:
                raise ValueError(f"blob {i} is {b.dim}D inside a {self.dim}D model")

    @property
    def n_blobs(self) -> int:
        return len(self.blobs)

    def with_blob(self, blob: Blob) -> Model:
        return replace(self, blobs=self.blobs + (blob,))

    def without_blob(self, index: int) -> Model:
        return replace(self, blobs=self.blobs[:index] + self.blobs[index + 1:])

    def with_replaced_blob(self, index: int, *replacements: Blob) -> Model:
        return replace(
            self, blobs=self.blobs[:index] + tuple(replacements) + self.blobs[index + 1:]
        )

    def with_background(self, background: float) -> Model:
        return replace(self, background=background)


# ----------------------------------------------------------------------
# Point evaluation
# ----------------------------------------------------------------------

def _scaled_rotation(blob: Blob) -> np.ndarray:
    """Rotation with each output column pre-divided by its semi-axis.

    Folding the axis scaling into the matrix saves whole-array division
    passes in the samplers: transformed = offset @ scaled_rotation.
    """
    return blob.rotation() / blob.semi_axes()


def _squared_radii(blobs: tuple[Blob, ...], pts: np.ndarray) -> np.ndarray:
    """Squared radius of every point in every blob's scaled frame, shape (B, N).

    One shared kernel backs the scalar helpers and the raster samplers,
    so a single point and a full raster see bit-identical arithmetic.
    """
    mats = np.stack([_scaled_rotation(b) for b in blobs])  # (B, dim, dim)
    if pts.shape[1] == 2:
        dx = pts[None, :, 0] - np.array([[b.x_loc] for b in blobs])
        dy = pts[None, :, 1] - np.array([[b.y_loc] for b in blobs])
        ux = dx * mats[:, 0:1, 0] + dy * mats[:, 1:2, 0]
        uy = dx * mats[:, 0:1, 1] + dy * mats[:, 1:2, 1]
        ux *= ux
        uy *= uy
        ux += uy
        return ux
    centers = np.stack([b.center() for b in blobs])
    offs = pts[None, :, :] - centers[:, None, :]           # (B, N, dim)
    tr = np.einsum("bni,bij->bnj", offs, mats)             # inverse-rotate + scale
    return np.einsum("bni,bni->bn", tr, tr)


def transform_points(blob: Blob, points: np.ndarray) -> np.ndarray:
    """Map world points into the blob's scaled frame.

    Translates by the blob centre, applies the inverse of the blob's
    rotation, and divides each axis by its semi-axis size.  A point is
    on the ellipse boundary exactly when its transformed squared radius
    is 1.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != blob.dim:
        raise ValueError(f"points are {pts.shape[1]}D but blob is {blob.dim}D")
    offset = pts - blob.center()
    return np.einsum("ni,ij->nj", offset, _scaled_rotation(blob))


def transform_point(blob: Blob, point) -> tuple[float, ...]:
    return tuple(transform_points(blob, [point])[0])


def local_intensities(blob: Blob, points: np.ndarray) -> np.ndarray:
    """Intensity of one blob at each point: delta / (r2^(15*alpha) + 1).

    r2 is the squared radius in the transformed frame, so the value is
    delta at the centre and delta/2 anywhere on the ellipse boundary.
    At alpha = 0 the falloff exponent is zero and the blob is uniformly
    delta/2 (0^0 is taken as 1).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != blob.dim:
        raise ValueError(f"points are {pts.shape[1]}D but blob is {blob.dim}D")
    r2 = _squared_radii((blob,), pts)[0]
    return blob.delta / (np.power(r2, SHARPNESS_SCALE * blob.alpha) + 1.0)


def local_intensity(blob: Blob, point) -> float:
    return float(local_intensities(blob, [point])[0])


def adjusted_strengths(model: Model) -> np.ndarray:
    """Per-blob strengths normalised by the maximum and raised to the sixth power.

    If every strength is zero the normalisation is skipped and all
    adjusted strengths are zero.  (The implicit background dummy blob
    always has adjusted strength zero; it is not part of this array.)
    """
    if not model.blobs:
        raise ValueError("model has no blobs")
    s = np.array([b.s for b in model.blobs])
    top = s.max()
    if top == 0.0:
        return np.zeros_like(s)
    return (s / top) ** STRENGTH_POWER


def combined_values(model: Model, points: np.ndarray) -> np.ndarray:
    """Blend all blobs plus the background into one value per point.

    The background acts as a dummy blob with normalised intensity equal
    to the background level and strength zero.  With f'_i the per-blob
    intensities normalised by their deltas and s'_i the adjusted
    strengths:

        bg = b + sum_i (1 - s'_i) * f'_i      (background-weighted sum)
        fg = sum_i s'_i * f'_i                (foreground-weighted sum)
        wi = sum_i s'_i * delta_i             (whole-model weighted intensity)
        v  = bg + fg * (1 - bg / wi)

    clamped into [0, 1].  When wi is zero the foreground term vanishes
    and the background sum is returned (clamped).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != model.dim:
        raise ValueError(f"points are {pts.shape[1]}D but model is {model.dim}D")
    n = pts.shape[0]
    if not model.blobs:
        return np.full(n, model.background)

    sp = adjusted_strengths(model)
    deltas = np.array([b.delta for b in model.blobs])
    exponents = SHARPNESS_SCALE * np.array([b.alpha for b in model.blobs])

    r2 = _squared_radii(model.blobs, pts)
    den = np.power(r2, exponents[:, None], out=r2)
    den += 1.0
    intensities = np.divide(deltas[:, None], den, out=den)
    # Normalise by each blob's peak intensity; zero-delta blobs are
    # defined to contribute nothing.
    if deltas.all():
        norm = intensities / deltas[:, None]
    else:
        nonzero = deltas != 0.0
        norm = np.zeros_like(intensities)
        norm[nonzero] = intensities[nonzero] / deltas[nonzero, None]

    bg = model.background + (1.0 - sp) @ norm
    fg = sp @ norm
    wi = float(sp @ deltas)
    if wi == 0.0:
        return np.clip(bg, 0.0, 1.0)
    return np.clip(bg + fg * (1.0 - bg / wi), 0.0, 1.0)


def combined_value(model: Model, point) -> float:
    return float(combined_values(model, [point])[0])


# ----------------------------------------------------------------------
# Genome encoding
# ----------------------------------------------------------------------

def genome_length(dim: int, n_blobs: int) -> int:
    return 1 + n_blobs * params_per_blob(dim)


def encode(model: Model) -> np.ndarray:
    """Flatten a model to [background, blob 0 params..., blob 1 params...]."""
    out = [model.background]
    for blob in model.blobs:
        out.extend(blob.params())
    return np.array(out)


def decode(genome: np.ndarray, dim: int, n_blobs: int) -> Model:
    """Rebuild a model from a flat vector; entries are clamped into [0, 1].

    Raises ValueError when the vector length does not match the declared
    shape.
    """
    g = np.asarray(genome, dtype=float).ravel()
    expected = genome_length(dim, n_blobs)
    if g.size != expected:
        raise ValueError(
            f"genome length {g.size} != expected {expected} (dim={dim}, {n_blobs} blobs)"
        )
    per = params_per_blob(dim)
    blobs = [
        Blob.from_params(g[1 + i * per: 1 + (i + 1) * per], dim)
        for i in range(n_blobs)
    ]
    return Model(background=float(g[0]), blobs=tuple(blobs), dim=dim)


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------

def model_to_dict(model: Model) -> dict:
    blobs = []
    for b in model.blobs:
        blobs.append({name: getattr(b, name) for name in param_names(b.dim)})
    return {
        "version": MODEL_FORMAT_VERSION,
        "dim": model.dim,
        "background": model.background,
        "blobs": blobs,
    }


def model_from_dict(doc: dict) -> Model:
    unknown = set(doc) - {"version", "dim", "background", "blobs"}
    if unknown:
        raise ValueError(f"unknown model fields: {sorted(unknown)}")
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {version!r}")
    dim = int(doc["dim"])
    names = set(param_names(dim))
    blobs = []
    for i, bd in enumerate(doc["blobs"]):
        extra = set(bd) - names
        if extra:
            raise ValueError(f"blob {i} has unknown fields: {sorted(extra)}")
        missing = names - set(bd)
        if missing:
            raise ValueError(f"blob {i} is missing fields: {sorted(missing)}")
        blobs.append(Blob(**{k: float(v) for k, v in bd.items()}))
    return Model(background=float(doc["background"]), blobs=tuple(blobs), dim=dim)


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def load_model(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))
