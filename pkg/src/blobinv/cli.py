"""Command-line surface: discover, invert3d, render, compare.

Each invocation owns one run and writes an append-only run directory:
the final model (JSON), the rendered reconstruction or sampled mesh,
the trace CSV, and last of all a manifest recording the resolved
config, seed, stage summaries and final error.  An existing manifest
is never overwritten.  ``--runs N --jobs J`` launches N independent
seeded runs as separate processes, J at a time.

Exit codes: 0 success, 2 usage, 3 unreadable input, 4 bad config,
5 output write failure, 6 forward-model or evaluation failure.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunSettings, load_settings, settings_to_dict
from .evolve import search
from .model import load_model, save_model
from .objective import (
    EvaluationError,
    ExternalForward,
    FieldData,
    SyntheticForward,
    station_grid,
)
from .raster import (
    Image2D,
    quantize,
    rasterize_2d,
    read_image,
    sample_mesh,
    value_from_resistivity,
    write_mesh,
    write_pgm,
)
from .stats import rank_sum_test
from .trace import RunTrace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_WRITE = 5
EXIT_FORWARD = 6


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _load_settings(args) -> RunSettings:
    settings = load_settings(args.config) if args.config else RunSettings()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "rounds", None) is not None:
        overrides["rounds"] = args.rounds
    if getattr(args, "split_count", None) is not None:
        overrides["split_count"] = args.split_count
    if getattr(args, "budget", None) is not None:
        overrides["budget"] = args.budget
    if getattr(args, "timeout", None) is not None:
        overrides["forward"] = replace(settings.forward, timeout=args.timeout)
    if getattr(args, "forward", None) is not None:
        spec = args.forward
        fwd = overrides.get("forward", settings.forward)
        if spec == "synthetic":
            overrides["forward"] = replace(fwd, kind="synthetic", command=None)
        elif spec.startswith("exec:"):
            overrides["forward"] = replace(fwd, kind="exec", command=spec[len("exec:"):])
        else:
            raise ConfigError(f"--forward must be 'synthetic' or 'exec:<command>', got {spec!r}")
    return replace(settings, **overrides) if overrides else settings


def _prepare_out_dir(out: str) -> Path:
    out_dir = Path(out)
    if (out_dir / "manifest.json").exists():
        raise CliError(
            f"{out_dir} already holds a manifest; run directories are append-only",
            EXIT_WRITE,
        )
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out_dir}: {exc}", EXIT_WRITE) from exc
    return out_dir


def _write_manifest(out_dir: Path, settings: RunSettings, problem: dict,
                    outputs: dict, trace: RunTrace, final_error: float,
                    wall_seconds: float) -> None:
    evaluations = trace.stages[-1].end_evaluations if trace.stages else 0
    manifest = {
        "tool_version": __version__,
        "config": settings_to_dict(settings),
        "seed": settings.seed,
        "problem": problem,
        "outputs": outputs,
        "stages": trace.stage_summaries(),
        "events": trace.events,
        "final_error": final_error,
        "evaluations": evaluations,
        "wall_seconds": wall_seconds,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _spawn_runs(args, argv_rest: list[str], base_seed: int) -> int:
    """Launch --runs independent child processes, --jobs at a time."""
    out_root = Path(args.out)
    commands = []
    for i in range(args.runs):
        run_dir = out_root / f"run_{i:04d}"
        child = [sys.executable, "-m", "blobinv"] + argv_rest
        child += ["--out", str(run_dir), "--seed", str(base_seed + i), "--runs", "1"]
        commands.append(child)
    failures = 0
    active: list[subprocess.Popen] = []
    pending = list(commands)
    while pending or active:
        while pending and len(active) < max(1, args.jobs):
            active.append(subprocess.Popen(pending.pop(0)))
        done = [p for p in active if p.poll() is not None]
        if not done:
            time.sleep(0.05)
            continue
        for p in done:
            active.remove(p)
            if p.returncode != 0:
                failures += 1
    if failures:
        print(f"{failures}/{args.runs} runs failed", file=sys.stderr)
        return EXIT_FORWARD
    return EXIT_OK


def _strip_multi_run_args(argv: list[str]) -> list[str]:
    """Drop --out/--seed/--runs/--jobs so the parent can respecify them per child."""
    out: list[str] = []
    skip = False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--out", "--seed", "--runs", "--jobs"):
            skip = True
            continue
        out.append(a)
    return out


def cmd_discover(args, argv: list[str]) -> int:
    try:
        settings = _load_settings(args)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc

    if args.runs > 1:
        return _spawn_runs(args, ["discover"] + _strip_multi_run_args(argv[1:]), settings.seed)

    try:
        target = read_image(args.target)
    except (OSError, ValueError, RuntimeError) as exc:
        raise CliError(f"cannot read target image {args.target}: {exc}", EXIT_INPUT) from exc

    out_dir = _prepare_out_dir(args.out)
    problem = FieldData.picture(target)
    t0 = time.perf_counter()
    best, trace = search(problem, settings.search_config())
    wall = time.perf_counter() - t0
    final_error = trace.min_error()

    try:
        save_model(best, out_dir / "model.json")
        write_pgm(rasterize_2d(best, target.width, target.height),
                  out_dir / "reconstruction.pgm")
        trace.to_csv(out_dir / "trace.csv")
        _write_manifest(
            out_dir, settings,
            {"kind": "picture", "target": str(args.target),
             "width": target.width, "height": target.height},
            {"model": "model.json", "reconstruction": "reconstruction.pgm",
             "trace": "trace.csv"},
            trace, final_error, wall,
        )
    except OSError as exc:
        raise CliError(f"cannot write outputs to {out_dir}: {exc}", EXIT_WRITE) from exc

    print(f"final error: {final_error!r} ({best.n_blobs} blobs)")
    return EXIT_OK


def read_response_data(path) -> FieldData:
    """Response file: one datum per line, value then its standard error."""
    values, sigmas = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'value sigma', got {line!r}")
        values.append(float(parts[0]))
        sigmas.append(float(parts[1]))
    return FieldData.responses(np.array(values), np.array(sigmas))


def _make_forward(settings: RunSettings, response_length: int):
    fwd = settings.forward
    if fwd.kind == "synthetic":
        stations = station_grid(settings.mesh.nx, settings.mesh.ny, fwd.station_stride)
        return SyntheticForward(stations, fwd.decay_rates)
    if fwd.kind == "exec":
        if not fwd.command:
            raise ConfigError("forward kind 'exec' needs a command")
        exchange = fwd.exchange_dir or "forward_exchange"
        return ExternalForward(exchange, fwd.command, response_length, fwd.timeout)
    raise ConfigError(f"unknown forward kind: {fwd.kind!r}")


def cmd_invert3d(args, argv: list[str]) -> int:
    try:
        settings = _load_settings(args)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc

    if args.runs > 1:
        return _spawn_runs(args, ["invert3d"] + _strip_multi_run_args(argv[1:]), settings.seed)

    try:
        problem = read_response_data(args.data)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read response data {args.data}: {exc}", EXIT_INPUT) from exc

    try:
        forward = _make_forward(settings, len(problem.values))
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    if forward.response_length != len(problem.values):
        raise CliError(
            f"forward model produces {forward.response_length} responses but the data "
            f"file has {len(problem.values)}", EXIT_CONFIG,
        )

    out_dir = _prepare_out_dir(args.out)
    mesh_shape = (settings.mesh.nx, settings.mesh.ny, settings.mesh.nz)
    t0 = time.perf_counter()
    try:
        best, trace = search(problem, settings.search_config(),
                             forward=forward, mesh_shape=mesh_shape)
    except EvaluationError as exc:
        raise CliError(f"forward model failed: {exc}", EXIT_FORWARD) from exc
    wall = time.perf_counter() - t0
    final_error = trace.min_error()

    try:
        save_model(best, out_dir / "model.json")
        write_mesh(sample_mesh(best, *mesh_shape), out_dir / "mesh.txt")
        trace.to_csv(out_dir / "trace.csv")
        _write_manifest(
            out_dir, settings,
            {"kind": "mesh3d", "data": str(args.data),
             "mesh": list(mesh_shape), "responses": len(problem.values)},
            {"model": "model.json", "mesh": "mesh.txt", "trace": "trace.csv"},
            trace, final_error, wall,
        )
    except OSError as exc:
        raise CliError(f"cannot write outputs to {out_dir}: {exc}", EXIT_WRITE) from exc

    print(f"final rms: {final_error!r} ({best.n_blobs} blobs)")
    return EXIT_OK


def _parse_dims(spec: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in spec.lower().split("x"))
    except ValueError as exc:
        raise CliError(f"bad --dims {spec!r}: {exc}", EXIT_CONFIG) from exc
    if len(dims) not in (2, 3) or min(dims) < 1:
        raise CliError(f"--dims must be WxH or NXxNYxNZ with positive sizes, got {spec!r}",
                       EXIT_CONFIG)
    return dims


def cmd_render(args, argv: list[str]) -> int:
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read model {args.model}: {exc}", EXIT_INPUT) from exc
    dims = _parse_dims(args.dims)
    out = Path(args.out)
    if model.dim == 2:
        if len(dims) != 2:
            raise CliError(f"2D model needs WxH dims, got {args.dims!r}", EXIT_CONFIG)
        try:
            write_pgm(rasterize_2d(model, dims[0], dims[1]), out)
        except OSError as exc:
            raise CliError(f"cannot write {out}: {exc}", EXIT_WRITE) from exc
        print(f"wrote {out}")
        return EXIT_OK
    if len(dims) != 3:
        raise CliError(f"3D model needs NXxNYxNZ dims, got {args.dims!r}", EXIT_CONFIG)
    mesh = sample_mesh(model, *dims)
    # One slice per depth layer; gray level inverts the resistivity map.
    gray = quantize(value_from_resistivity(mesh.values))
    try:
        for iz in range(mesh.nz):
            slice_path = out.with_name(f"{out.stem}_z{iz:02d}{out.suffix or '.pgm'}")
            write_pgm(Image2D(gray[iz]), slice_path)
    except OSError as exc:
        raise CliError(f"cannot write slices next to {out}: {exc}", EXIT_WRITE) from exc
    print(f"wrote {mesh.nz} slices next to {out}")
    return EXIT_OK


def collect_final_errors(runs_dir) -> list[float]:
    """Final errors from manifest.json files directly in or one level under runs_dir."""
    root = Path(runs_dir)
    manifests = sorted(root.glob("manifest.json")) + sorted(root.glob("*/manifest.json"))
    errors = []
    for m in manifests:
        doc = json.loads(m.read_text())
        errors.append(float(doc["final_error"]))
    return errors


def cmd_compare(args, argv: list[str]) -> int:
    try:
        sample_a = collect_final_errors(args.runs_a)
        sample_b = collect_final_errors(args.runs_b)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot collect run manifests: {exc}", EXIT_INPUT) from exc
    if not sample_a or not sample_b:
        raise CliError("each directory must hold at least one manifest.json", EXIT_INPUT)

    result = rank_sum_test(sample_a, sample_b)
    report = {
        "a": {"dir": str(args.runs_a), "runs": len(sample_a), "best": min(sample_a),
              "worst": max(sample_a), "mean": sum(sample_a) / len(sample_a)},
        "b": {"dir": str(args.runs_b), "runs": len(sample_b), "best": min(sample_b),
              "worst": max(sample_b), "mean": sum(sample_b) / len(sample_b)},
        "rank_sum_statistic": result.statistic,
        "p_value": result.p_value,
        "method": result.method,
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blobinv",
        description="Staged stochastic inversion over diffuse-ellipse models",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", required=True, help="output run directory")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--rounds", type=int, help="splitting rounds (overrides config)")
        p.add_argument("--split-count", dest="split_count", type=int,
                       help="blobs split per round (overrides config)")
        p.add_argument("--budget", type=int, help="total evaluation budget")
        p.add_argument("--runs", type=int, default=1, help="number of independent runs")
        p.add_argument("--jobs", type=int, default=1,
                       help="concurrent run processes when --runs > 1")

    p = sub.add_parser("discover", help="invert a grayscale picture")
    p.add_argument("target", help="target image (PGM, or PNG with Pillow)")
    add_run_flags(p)

    p = sub.add_parser("invert3d", help="invert 3D response data over a resistivity mesh")
    p.add_argument("data", help="response data file: 'value sigma' per line")
    add_run_flags(p)
    p.add_argument("--forward", help="forward model: synthetic | exec:<command>")
    p.add_argument("--timeout", type=float, help="external forward timeout in seconds")

    p = sub.add_parser("render", help="render a model file to PGM")
    p.add_argument("model", help="model JSON file")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--dims", required=True, help="WxH for 2D, NXxNYxNZ for 3D slices")

    p = sub.add_parser("compare", help="rank-sum comparison of two run populations")
    p.add_argument("runs_a", help="directory of run manifests (sample A)")
    p.add_argument("runs_b", help="directory of run manifests (sample B)")
    return parser


COMMANDS = {
    "discover": cmd_discover,
    "invert3d": cmd_invert3d,
    "render": cmd_render,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORWARD


if __name__ == "__main__":
    sys.exit(main())
