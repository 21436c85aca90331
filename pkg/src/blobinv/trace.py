"""Per-run history: error samples, stage spans, and operation events.

A trace sample records the shared evaluation count, the current stage's
best error, and the stage label.  Samples within one optimizer stage are
non-increasing, but stage boundaries (splitting in particular) may jump
upward — that is the point: the trace must show the disruption and the
recovery.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

STAGE_LABELS = ("prime", "cma", "cull", "split")


@dataclass(frozen=True)
class TraceSample:
    evaluations: int
    best_error: float
    stage: str


@dataclass
class StageSpan:
    label: str
    start_evaluations: int
    end_evaluations: int = -1
    best_error: float = float("nan")
    wall_seconds: float = 0.0


@dataclass
class RunTrace:
    samples: list[TraceSample] = field(default_factory=list)
    stages: list[StageSpan] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    def sample(self, evaluations: int, best_error: float, stage: str) -> None:
        if stage not in STAGE_LABELS:
            raise ValueError(f"unknown stage label: {stage!r}")
        self.samples.append(TraceSample(evaluations, float(best_error), stage))

    def event(self, kind: str, **payload) -> None:
        self.events.append({"kind": kind, **payload})

    def begin_stage(self, label: str, evaluations: int) -> None:
        if label not in STAGE_LABELS:
            raise ValueError(f"unknown stage label: {label!r}")
        self.stages.append(StageSpan(label, evaluations))
        self._stage_start_time = time.perf_counter()

    def end_stage(self, evaluations: int, best_error: float) -> None:
        span = self.stages[-1]
        span.end_evaluations = evaluations
        span.best_error = float(best_error)
        span.wall_seconds = time.perf_counter() - self._stage_start_time

    def min_error(self) -> float:
        return min(s.best_error for s in self.samples)

    def to_csv(self, path) -> None:
        """Columns: evaluations, best_error, stage."""
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["evaluations", "best_error", "stage"])
            for s in self.samples:
                writer.writerow([s.evaluations, repr(s.best_error), s.stage])

    def stage_summaries(self) -> list[dict]:
        return [
            {
                "label": s.label,
                "start_evaluations": s.start_evaluations,
                "end_evaluations": s.end_evaluations,
                "best_error": s.best_error,
                "wall_seconds": s.wall_seconds,
            }
            for s in self.stages
        ]


def read_trace_csv(path) -> RunTrace:
    trace = RunTrace()
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            trace.samples.append(
                TraceSample(int(row["evaluations"]), float(row["best_error"]), row["stage"])
            )
    return trace


def split_recoveries(trace: RunTrace) -> list[dict]:
    """For each split boundary: the error before, after, and the best later error.

    "Before" is the last sample preceding the split (normally the
    post-cull model), "after" is the split sample itself, and
    "recovered" is the minimum over all samples after the split.
    """
    out = []
    samples = trace.samples
    for i, s in enumerate(samples):
        if s.stage != "split":
            continue
        before = samples[i - 1].best_error if i > 0 else float("nan")
        later = [t.best_error for t in samples[i + 1:]]
        out.append(
            {
                "evaluations": s.evaluations,
                "error_before": before,
                "error_after": s.best_error,
                "best_later": min(later) if later else float("nan"),
            }
        )
    return out
