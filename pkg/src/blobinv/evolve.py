"""Staged global search: prime, evolve, cull, split, repeat.

The schedule follows a fixed pattern: greedy priming, one optimizer
stage, then ``num_rounds`` repetitions of cull -> split -> optimizer,
and a final cull to drop vestigial blobs.  Splitting replaces the most
significant blobs (largest leave-one-out contribution) with two children
scaled to 2/3 of the parent along every semi-axis and displaced along
the parent's long axis so their inner boundaries meet at the parent
centre.  Splits intentionally disrupt the model — the error typically
jumps at the split boundary and recovers in the following optimizer
stage at the higher dimension.

Every stage draws evaluations from the shared counter of one Evaluator,
and each optimizer stage gets its own deterministically derived RNG, so
the whole run is reproducible from a single seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .cmaes import CmaConfig, optimize
from .model import Blob, Model, decode, encode
from .objective import Evaluator, FieldData, ForwardModel
from .prime import PrimeConfig, prime
from .trace import RunTrace

SPLIT_SHRINK = 2.0 / 3.0


@dataclass(frozen=True)
class SearchConfig:
    num_rounds: int = 5
    split_count: int = 5
    cma: CmaConfig = field(default_factory=CmaConfig)
    prime: PrimeConfig = field(default_factory=PrimeConfig)
    stage_iteration_caps: tuple[int, ...] | None = None
    seed: int = 0
    initial_background: float = 0.5
    max_evaluations: int | None = None

    def __post_init__(self) -> None:
        if self.num_rounds < 0:
            raise ValueError("num_rounds must be >= 0")
        if self.split_count < 1:
            raise ValueError("split_count must be >= 1")
        if self.stage_iteration_caps is not None:
            object.__setattr__(self, "stage_iteration_caps",
                               tuple(int(c) for c in self.stage_iteration_caps))


def stage_rng(seed: int, stage_index: int) -> np.random.Generator:
    """RNG for one optimizer stage, derived so stages do not perturb each other."""
    return np.random.default_rng(np.random.SeedSequence([seed, stage_index]))


def contribution(model: Model, blob_index: int, evaluator,
                 model_error: float | None = None) -> float:
    """Leave-one-out error delta: error without the blob minus error with it.

    Positive means the blob helps the fit.
    """
    if not 0 <= blob_index < model.n_blobs:
        raise IndexError(f"blob index {blob_index} out of range")
    if model_error is None:
        model_error = evaluator(model)
    return evaluator(model.without_blob(blob_index)) - model_error


def cull(model: Model, evaluator) -> Model:
    """Delete blobs whose contribution is negative, in index order.

    Contributions are recomputed against the shrinking model, so each
    removal strictly lowers the error and the result is never worse
    than the input.
    """
    error = evaluator(model)
    i = 0
    while i < model.n_blobs:
        without = model.without_blob(i)
        error_without = evaluator(without)
        if error_without < error:  # contribution < 0
            model, error = without, error_without
        else:
            i += 1
    return model


def _long_axis(blob: Blob) -> int:
    axes = blob.semi_axes()
    return int(np.argmax(axes))  # ties break toward x, then y


def split_blob(parent: Blob) -> tuple[Blob, Blob]:
    """Divide a blob in two along its longest axis.

    Children keep the parent's intensity, strength and sharpness; every
    semi-axis shrinks to 2/3 of the parent's, and the centres move
    +/- (2/3 of the parent's long semi-axis) along the rotated long-axis
    direction, so the children just touch at the parent centre.  Centres
    are clamped back into the unit box.
    """
    axis = _long_axis(parent)
    axes = parent.semi_axes()
    offset_len = SPLIT_SHRINK * float(axes[axis])
    direction = parent.rotation()[:, axis]
    center = parent.center()

    shrunk = {"x_s": parent.x_s * SPLIT_SHRINK, "y_s": parent.y_s * SPLIT_SHRINK}
    if parent.dim == 3:
        shrunk["z_s"] = parent.z_s * SPLIT_SHRINK

    children = []
    for sign in (-1.0, 1.0):
        c = center + sign * offset_len * direction
        moved = {"x_loc": float(c[0]), "y_loc": float(c[1])}
        if parent.dim == 3:
            moved["z_loc"] = float(c[2])
        children.append(dc_replace(parent, **shrunk, **moved))
    return children[0], children[1]


def split(model: Model, split_count: int, evaluator) -> Model:
    """Replace the top-contribution blobs with their children.

    Blobs are ranked by leave-one-out contribution (descending, ties by
    index) against the unmodified model; up to ``split_count`` of them
    are split.  The error is allowed to rise — recovery is the next
    optimizer stage's job.
    """
    if model.n_blobs == 0 or split_count < 1:
        return model
    base_error = evaluator(model)
    contributions = [
        contribution(model, i, evaluator, model_error=base_error)
        for i in range(model.n_blobs)
    ]
    ranked = sorted(range(model.n_blobs), key=lambda i: (-contributions[i], i))
    chosen = sorted(ranked[: min(split_count, model.n_blobs)])

    new_blobs: list[Blob] = []
    for i, blob in enumerate(model.blobs):
        if i in chosen:
            new_blobs.extend(split_blob(blob))
        else:
            new_blobs.append(blob)
    return dc_replace(model, blobs=tuple(new_blobs))


@dataclass
class _Incumbent:
    model: Model
    error: float

    def offer(self, model: Model, error: float) -> None:
        if error < self.error:
            self.model, self.error = model, error


def _cma_stage(model: Model, stage_index: int, cfg: SearchConfig,
               evaluator, trace: RunTrace, incumbent: _Incumbent) -> Model:
    caps = cfg.stage_iteration_caps
    max_iters = cfg.cma.max_iterations if caps is None else caps[min(stage_index, len(caps) - 1)]
    stage_cfg = dc_replace(cfg.cma, max_iterations=max_iters)

    dim, n_blobs = model.dim, model.n_blobs
    x0 = encode(model)

    def objective(genome: np.ndarray) -> float:
        return evaluator(decode(genome, dim, n_blobs))

    remaining = None
    if cfg.max_evaluations is not None:
        remaining = cfg.max_evaluations - evaluator.evaluations
        if remaining <= 0:
            return model

    trace.begin_stage("cma", evaluator.evaluations)
    best_genome, best_error, _ = optimize(
        objective,
        x0,
        stage_cfg,
        rng=stage_rng(cfg.seed, stage_index),
        max_evaluations=remaining,
        on_generation=lambda st: trace.sample(evaluator.evaluations, st.best_error, "cma"),
    )
    trace.end_stage(evaluator.evaluations, best_error)
    best = decode(best_genome, dim, n_blobs)
    incumbent.offer(best, best_error)
    return best


def search(
    problem: FieldData,
    cfg: SearchConfig,
    forward: ForwardModel | None = None,
    mesh_shape: tuple[int, int, int] | None = None,
) -> tuple[Model, RunTrace]:
    """Run the full staged search; returns the best model seen and the trace.

    ``num_rounds=0`` degenerates to priming plus a single optimizer
    stage (the no-splitting baseline).
    """
    evaluator = Evaluator(problem, forward=forward, mesh_shape=mesh_shape)
    trace = RunTrace()
    model = Model(background=cfg.initial_background, blobs=(), dim=problem.dim)

    trace.begin_stage("prime", evaluator.evaluations)
    model = prime(model, cfg.prime, evaluator, trace)
    error = evaluator(model)
    trace.end_stage(evaluator.evaluations, error)
    incumbent = _Incumbent(model, error)

    model = _cma_stage(model, 0, cfg, evaluator, trace, incumbent)

    for round_index in range(cfg.num_rounds):
        if cfg.max_evaluations is not None and evaluator.evaluations >= cfg.max_evaluations:
            break

        trace.begin_stage("cull", evaluator.evaluations)
        model = cull(model, evaluator)
        error = evaluator(model)
        trace.end_stage(evaluator.evaluations, error)
        trace.sample(evaluator.evaluations, error, "cull")
        incumbent.offer(model, error)

        trace.begin_stage("split", evaluator.evaluations)
        pre_split_error = error
        model = split(model, cfg.split_count, evaluator)
        error = evaluator(model)
        trace.end_stage(evaluator.evaluations, error)
        trace.sample(evaluator.evaluations, error, "split")
        trace.event(
            "split",
            round=round_index,
            error_before=pre_split_error,
            error_after=error,
            n_blobs=model.n_blobs,
        )
        incumbent.offer(model, error)

        model = _cma_stage(model, round_index + 1, cfg, evaluator, trace, incumbent)

    trace.begin_stage("cull", evaluator.evaluations)
    model = cull(model, evaluator)
    error = evaluator(model)
    trace.end_stage(evaluator.evaluations, error)
    trace.sample(evaluator.evaluations, error, "cull")
    incumbent.offer(model, error)

    trace.event("evaluations_total", evaluations=evaluator.evaluations)
    return incumbent.model, trace
