"""Greedy priming: scan-place diffuse blobs, refine, adjust the background.

Each round scans one diffuse light probe and one diffuse dark probe over
a regular grid of candidate centres, refines both by half-interval
coordinate search, keeps whichever refined candidate lowers the total
error more, and then re-fits the background.  Rounds continue until
neither polarity improves the error or the blob cap is reached, so the
primed error decreases strictly with every accepted blob.

All tie-breaks are first-in-scan-order and every step is deterministic:
the same target and config always prime to the same model.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace as dc_replace

from .model import Blob, Model, param_names
from .trace import RunTrace


@dataclass(frozen=True)
class PrimeConfig:
    scan_grid: int = 10          # probe positions per axis
    probe_radius: float = 0.15   # semi-axis of scan probes
    probe_alpha: float = 0.2     # low alpha = diffuse probe
    probe_strength: float = 1.0
    light_delta: float = 0.9
    dark_delta: float = 0.1
    max_blobs: int = 40
    initial_step: float = 0.25
    refine_min_step: float = 1.0 / 512.0

    def __post_init__(self) -> None:
        if self.scan_grid < 2:
            raise ValueError("scan_grid must be >= 2")
        if not 0.0 < self.refine_min_step < 1.0:
            raise ValueError("refine_min_step must lie in (0, 1)")


def _probe_blob(position, polarity: str, cfg: PrimeConfig, dim: int) -> Blob:
    delta = cfg.light_delta if polarity == "light" else cfg.dark_delta
    fields = {
        "delta": delta,
        "s": cfg.probe_strength,
        "alpha": cfg.probe_alpha,
        "x_loc": position[0],
        "y_loc": position[1],
        "x_s": cfg.probe_radius,
        "y_s": cfg.probe_radius,
        "z_r": 0.0,
    }
    if dim == 3:
        fields.update(z_loc=position[2], z_s=cfg.probe_radius, x_r=0.0, y_r=0.0)
    return Blob(**fields)


def scan_positions(grid: int, dim: int):
    """Cell centres of a grid x grid (x grid) lattice over the unit box.

    The x coordinate varies fastest; this ordering is the documented
    tie-break for equal-error probe placements.
    """
    axis = [(i + 0.5) / grid for i in range(grid)]
    if dim == 2:
        return [(x, y) for y, x in itertools.product(axis, axis)]
    return [(x, y, z) for z, y, x in itertools.product(axis, axis, axis)]


def scan_place(model: Model, polarity: str, cfg: PrimeConfig, evaluator) -> tuple[Blob, float]:
    """Try one probe blob at every grid position; return the best (blob, error).

    The best candidate is returned even when it is worse than the
    current model — the caller decides whether to accept it.
    """
    if polarity not in ("light", "dark"):
        raise ValueError(f"polarity must be 'light' or 'dark', got {polarity!r}")
    best_blob = None
    best_error = float("inf")
    for pos in scan_positions(cfg.scan_grid, model.dim):
        blob = _probe_blob(pos, polarity, cfg, model.dim)
        err = evaluator(model.with_blob(blob))
        if err < best_error:
            best_blob, best_error = blob, err
    return best_blob, best_error


def _refine_parameters(model: Model, names, get, set_, cfg: PrimeConfig, evaluator,
                       start_error: float | None = None) -> tuple[Model, float]:
    """Half-interval coordinate search over the named parameters.

    For each parameter in turn, +step and -step are tried and an
    improving move is kept.  When a full cycle over all parameters
    yields no improvement the step halves; the search stops once the
    step falls below the configured minimum.  The error never increases.
    """
    error = evaluator(model) if start_error is None else start_error
    step = cfg.initial_step
    while step >= cfg.refine_min_step:
        improved = False
        for name in names:
            current = get(model, name)
            for trial in (current + step, current - step):
                clipped = min(1.0, max(0.0, trial))
                if clipped == current:
                    continue
                candidate = set_(model, name, clipped)
                err = evaluator(candidate)
                if err < error:
                    model, error = candidate, err
                    improved = True
                    break
        if not improved:
            step /= 2.0
    return model, error


def half_interval_refine(model: Model, blob_index: int, cfg: PrimeConfig, evaluator,
                         start_error: float | None = None) -> Model:
    """Refine one blob's parameters in their fixed genome order."""
    names = param_names(model.blobs[blob_index].dim)

    def get(m: Model, name: str) -> float:
        return getattr(m.blobs[blob_index], name)

    def set_(m: Model, name: str, value: float) -> Model:
        return m.with_replaced_blob(blob_index, dc_replace(m.blobs[blob_index], **{name: value}))

    refined, _ = _refine_parameters(model, names, get, set_, cfg, evaluator, start_error)
    return refined


def adjust_background(model: Model, cfg: PrimeConfig, evaluator,
                      start_error: float | None = None) -> Model:
    """Half-interval search on the background level alone."""
    refined, _ = _refine_parameters(
        model,
        ("background",),
        lambda m, _n: m.background,
        lambda m, _n, v: m.with_background(v),
        cfg,
        evaluator,
        start_error,
    )
    return refined


def prime(model: Model, cfg: PrimeConfig, evaluator,
          trace: RunTrace | None = None) -> Model:
    """Add scan-placed, refined blobs while they strictly improve the error.

    The background is fitted first (so a uniform target primes to zero
    blobs), then once more after every accepted blob.
    """
    model = adjust_background(model, cfg, evaluator)
    error = evaluator(model)
    if trace is not None:
        trace.sample(evaluator.evaluations, error, "prime")

    while model.n_blobs < cfg.max_blobs:
        candidates = []
        for polarity in ("light", "dark"):
            blob, scan_error = scan_place(model, polarity, cfg, evaluator)
            extended = model.with_blob(blob)
            refined = half_interval_refine(
                extended, extended.n_blobs - 1, cfg, evaluator, start_error=scan_error
            )
            candidates.append((polarity, refined, evaluator(refined)))

        polarity, refined, refined_error = min(candidates, key=lambda c: c[2])
        if refined_error >= error:
            break
        refined = adjust_background(refined, cfg, evaluator, start_error=refined_error)
        new_error = evaluator(refined)
        if trace is not None:
            trace.event(
                "blob_accepted",
                blob_index=refined.n_blobs - 1,
                polarity=polarity,
                error_before=error,
                error_after=new_error,
            )
            trace.sample(evaluator.evaluations, new_error, "prime")
        model, error = refined, new_error

    return model
