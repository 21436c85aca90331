"""Error evaluation: pixel error, normalised RMS, and forward models.

Two problem kinds are supported.  Picture problems compare a rasterized
model against a target image by mean absolute pixel difference.  Mesh
problems sample the model into a resistivity mesh, push the mesh through
a forward model to obtain a simulated response vector, and compare that
against field data by an RMS normalised with per-datum standard errors.

``Evaluator`` owns the single evaluation counter for a run: priming,
culling, splitting and optimizer populations all draw from the same
budget.  The counter update is locked so populations may be evaluated
from worker threads.
"""

from __future__ import annotations

import shlex
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .model import Model
from .raster import Image2D, Mesh3D, rasterize_2d, sample_mesh, write_mesh

# Default noise model for synthetic response data: sigma = 5% of |d| plus a floor.
NOISE_FRACTION = 0.05
NOISE_FLOOR = 1e-3


class EvaluationError(RuntimeError):
    """A forward model or evaluation step failed; the message carries diagnostics."""


@dataclass(frozen=True)
class FieldData:
    """The data being inverted: a target image, or a response vector with errors."""

    kind: str  # "picture" | "mesh3d"
    target: Image2D | None = None
    values: np.ndarray | None = None
    sigmas: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind == "picture":
            if self.target is None:
                raise ValueError("picture problems need a target image")
        elif self.kind == "mesh3d":
            if self.values is None or len(self.values) == 0:
                raise ValueError("mesh3d problems need a nonempty response vector")
            if self.sigmas is None or len(self.sigmas) != len(self.values):
                raise ValueError("mesh3d problems need one standard error per datum")
            if np.min(self.sigmas) <= 0:
                raise ValueError("standard errors must be strictly positive")
        else:
            raise ValueError(f"unknown problem kind: {self.kind!r}")

    @classmethod
    def picture(cls, target: Image2D) -> FieldData:
        return cls(kind="picture", target=target)

    @classmethod
    def responses(cls, values, sigmas=None) -> FieldData:
        """Response data; missing sigmas get the default noise model."""
        values = np.asarray(values, dtype=float)
        if sigmas is None:
            sigmas = NOISE_FRACTION * np.abs(values) + NOISE_FLOOR
        return cls(kind="mesh3d", values=values, sigmas=np.asarray(sigmas, dtype=float))

    @property
    def dim(self) -> int:
        return 2 if self.kind == "picture" else 3


class ForwardModel(Protocol):
    """Maps a sampled mesh to a simulated response vector, deterministically."""

    response_length: int

    def respond(self, mesh: Mesh3D) -> np.ndarray: ...


def picture_error(candidate: Image2D, target: Image2D) -> float:
    """Mean absolute pixel difference, in intensity levels (0-255)."""
    if candidate.pixels.shape != target.pixels.shape:
        raise ValueError(
            f"image shapes differ: {candidate.pixels.shape} vs {target.pixels.shape}"
        )
    a = candidate.pixels.astype(np.int32)
    b = target.pixels.astype(np.int32)
    return float(np.mean(np.abs(a - b)))


def rms_error(response: np.ndarray, field: FieldData) -> float:
    """Error-normalised RMS: sqrt(mean(((r - d) / sigma)^2))."""
    if field.kind != "mesh3d":
        raise ValueError("rms_error needs response-vector field data")
    r = np.asarray(response, dtype=float)
    if r.shape != field.values.shape:
        raise ValueError(f"response length {r.size} != data length {field.values.size}")
    z = (r - field.values) / field.sigmas
    return float(np.sqrt(np.mean(z * z)))


class Evaluator:
    """Scalar error of a model against one problem, with shared evaluation counting."""

    def __init__(
        self,
        field: FieldData,
        forward: ForwardModel | None = None,
        mesh_shape: tuple[int, int, int] | None = None,
    ) -> None:
        if field.kind == "mesh3d":
            if forward is None:
                raise ValueError("mesh3d problems need a forward model")
            if mesh_shape is None:
                raise ValueError("mesh3d problems need a mesh shape (nx, ny, nz)")
        self.field = field
        self.forward = forward
        self.mesh_shape = mesh_shape
        self._count = 0
        self._lock = threading.Lock()

    @property
    def evaluations(self) -> int:
        return self._count

    @property
    def dim(self) -> int:
        return self.field.dim

    def __call__(self, model: Model) -> float:
        if self.field.kind == "picture":
            target = self.field.target
            err = picture_error(rasterize_2d(model, target.width, target.height), target)
        else:
            mesh = sample_mesh(model, *self.mesh_shape)
            response = self.forward.respond(mesh)
            err = rms_error(response, self.field)
        with self._lock:
            self._count += 1
        return err


# ----------------------------------------------------------------------
# Forward models
# ----------------------------------------------------------------------

DEFAULT_DECAY_RATES = (0.30, 0.50, 0.70, 0.85, 0.95)


def station_grid(nx: int, ny: int, stride: int = 2) -> tuple[tuple[int, int], ...]:
    """Surface station columns on a regular sub-grid of the mesh."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    xs = range(stride // 2, nx, stride)
    ys = range(stride // 2, ny, stride)
    return tuple((ix, iy) for iy in ys for ix in xs)


class SyntheticForward:
    """Cheap smooth stand-in for a physics solver.

    Each station column reports, for every depth-weight profile, the
    weighted mean of log10(resistivity) over its own column and the
    surrounding 3x3 neighbourhood of columns.  Weights decay
    geometrically with depth, one rate per profile, so fast-decaying
    profiles see only the shallow structure — an underdetermined,
    frequency-like projection of the mesh.
    """

    def __init__(
        self,
        stations: tuple[tuple[int, int], ...],
        decay_rates: tuple[float, ...] = DEFAULT_DECAY_RATES,
    ) -> None:
        if not stations:
            raise ValueError("need at least one station")
        if not decay_rates or any(not 0 < r < 1 for r in decay_rates):
            raise ValueError("decay rates must lie strictly between 0 and 1")
        self.stations = tuple(stations)
        self.decay_rates = tuple(decay_rates)
        self.response_length = len(self.stations) * len(self.decay_rates)

    def respond(self, mesh: Mesh3D) -> np.ndarray:
        logres = np.log10(mesh.values)  # (nz, ny, nx)
        nz = mesh.nz
        depths = np.arange(nz)
        out = np.empty(self.response_length)
        k = 0
        for ix, iy in self.stations:
            if not (0 <= ix < mesh.nx and 0 <= iy < mesh.ny):
                raise ValueError(f"station ({ix}, {iy}) outside mesh {mesh.nx}x{mesh.ny}")
            x0, x1 = max(ix - 1, 0), min(ix + 2, mesh.nx)
            y0, y1 = max(iy - 1, 0), min(iy + 2, mesh.ny)
            column = logres[:, y0:y1, x0:x1].mean(axis=(1, 2))  # (nz,)
            for rate in self.decay_rates:
                w = rate ** depths
                out[k] = float(np.dot(w, column) / w.sum())
                k += 1
        return out


class ExternalForward:
    """Subprocess bridge to an external solver via a file exchange directory.

    Protocol per call: write ``mesh.txt`` (plain-text mesh format) into
    the exchange directory, run the command with the directory as its
    working directory, then read ``response.txt`` (one real per line).
    If the solver writes ``status.txt``, a first token other than OK
    fails the evaluation.  Calls are serialised per exchange directory.
    """

    def __init__(self, exchange_dir, command: str, response_length: int,
                 timeout: float = 60.0) -> None:
        self.exchange_dir = Path(exchange_dir)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("empty forward command")
        self.response_length = int(response_length)
        self.timeout = timeout
        self._lock = threading.Lock()

    def respond(self, mesh: Mesh3D) -> np.ndarray:
        with self._lock:
            self.exchange_dir.mkdir(parents=True, exist_ok=True)
            response_path = self.exchange_dir / "response.txt"
            status_path = self.exchange_dir / "status.txt"
            for stale in (response_path, status_path):
                stale.unlink(missing_ok=True)
            write_mesh(mesh, self.exchange_dir / "mesh.txt")
            try:
                proc = subprocess.run(
                    self.command,
                    cwd=self.exchange_dir,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except FileNotFoundError as exc:
                raise EvaluationError(f"forward command not found: {self.command[0]}") from exc
            except subprocess.TimeoutExpired as exc:
                raise EvaluationError(
                    f"forward command timed out after {self.timeout}s: {self.command}"
                ) from exc
            if proc.returncode != 0:
                raise EvaluationError(
                    f"forward command exited {proc.returncode}: {self.command}\n"
                    f"stderr: {proc.stderr.strip()[:500]}"
                )
            if status_path.exists():
                status = status_path.read_text().strip()
                if not status.startswith("OK"):
                    raise EvaluationError(f"forward solver reported failure: {status[:500]}")
            if not response_path.exists():
                raise EvaluationError(f"forward command wrote no {response_path.name}")
            try:
                values = [float(line) for line in response_path.read_text().split()]
            except ValueError as exc:
                raise EvaluationError(f"malformed forward response: {exc}") from exc
            if len(values) != self.response_length:
                raise EvaluationError(
                    f"forward response has {len(values)} values, expected {self.response_length}"
                )
            return np.array(values)
