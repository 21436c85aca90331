import pytest

from blobinv.trace import RunTrace, read_trace_csv, split_recoveries


def test_sample_and_min_error():
    tr = RunTrace()
    tr.sample(10, 5.0, "prime")
    tr.sample(20, 3.0, "cma")
    tr.sample(30, 4.0, "split")
    assert tr.min_error() == 3.0


def test_rejects_unknown_stage_label():
    tr = RunTrace()
    with pytest.raises(ValueError):
        tr.sample(1, 1.0, "warmup")
    with pytest.raises(ValueError):
        tr.begin_stage("warmup", 0)


def test_stage_spans_record_bounds_and_wall_clock():
    tr = RunTrace()
    tr.begin_stage("prime", 0)
    tr.end_stage(120, 2.5)
    span = tr.stages[0]
    assert span.label == "prime"
    assert (span.start_evaluations, span.end_evaluations) == (0, 120)
    assert span.best_error == 2.5
    assert span.wall_seconds >= 0.0
    assert tr.stage_summaries()[0]["end_evaluations"] == 120


def test_csv_round_trip(tmp_path):
    tr = RunTrace()
    tr.sample(5, 1.25, "prime")
    tr.sample(55, 0.5, "cma")
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    assert path.read_text().splitlines()[0] == "evaluations,best_error,stage"
    again = read_trace_csv(path)
    assert [(s.evaluations, s.best_error, s.stage) for s in again.samples] == [
        (5, 1.25, "prime"),
        (55, 0.5, "cma"),
    ]


def test_split_recoveries_structure():
    tr = RunTrace()
    tr.sample(10, 5.0, "prime")
    tr.sample(100, 2.0, "cma")
    tr.sample(101, 2.0, "cull")
    tr.sample(102, 7.0, "split")   # disruption
    tr.sample(200, 1.5, "cma")     # recovery below pre-split
    tr.sample(201, 1.5, "cull")
    tr.sample(202, 6.0, "split")
    tr.sample(300, 1.8, "cma")     # no recovery below 1.5 afterwards
    peaks = split_recoveries(tr)
    assert len(peaks) == 2
    first, second = peaks
    assert first["error_before"] == 2.0 and first["error_after"] == 7.0
    assert first["best_later"] == 1.5
    assert second["error_before"] == 1.5 and second["best_later"] == 1.8
