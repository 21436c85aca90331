import dataclasses
import math

import numpy as np
import pytest

from blobinv.cmaes import CmaConfig
from blobinv.evolve import (
    SPLIT_SHRINK,
    SearchConfig,
    contribution,
    cull,
    search,
    split,
    split_blob,
)
from blobinv.model import Blob, Model
from blobinv.objective import Evaluator, FieldData
from blobinv.prime import PrimeConfig
from blobinv.raster import rasterize_2d
from blobinv.trace import split_recoveries
from helpers import random_blob, target_model

RTOL = 1e-12


def evaluator_for(model, size=32):
    return Evaluator(FieldData.picture(rasterize_2d(model, size, size)))


def small_search_config(**kw):
    base = dict(
        num_rounds=2,
        split_count=2,
        cma=CmaConfig(max_iterations=50, flat_fitness_window=25),
        prime=PrimeConfig(scan_grid=5, max_blobs=3),
        seed=13,
    )
    base.update(kw)
    return SearchConfig(**base)


# ----------------------------------------------------------------------
# contribution
# ----------------------------------------------------------------------

def test_contribution_positive_for_matching_blob():
    truth = Blob(delta=0.9, s=1.0, alpha=0.6, x_loc=0.4, y_loc=0.5, x_s=0.2, y_s=0.15, z_r=0.0)
    m = Model(background=0.2, blobs=(truth,))
    ev = evaluator_for(m)
    assert contribution(m, 0, ev) > 0


def test_contribution_zero_for_redundant_blob():
    # A truly redundant blob is one whose removal changes no pixel.  An
    # exact duplicate of a foreground blob is NOT redundant (the blend
    # sums normalised intensities over copies), and even a zero-size
    # blob still enters the whole-model weighted intensity through
    # s'*delta; a strength-zero, zero-size blob is genuinely invisible
    # at sampling resolution.
    truth = Blob(delta=0.9, s=1.0, alpha=0.6, x_loc=0.4, y_loc=0.5, x_s=0.2, y_s=0.15, z_r=0.0)
    target = Model(background=0.2, blobs=(truth,))
    speck = Blob(delta=0.9, s=0.0, alpha=0.6, x_loc=0.7, y_loc=0.2, x_s=0.0, y_s=0.0, z_r=0.0)
    ev = evaluator_for(target)
    assert contribution(Model(background=0.2, blobs=(truth, speck)), 1, ev) == 0.0


def test_contribution_duplicate_foreground_blob_is_not_neutral():
    # pinned: duplicating a blob intensifies the blend (fg and wi both
    # sum over copies), so removal of either copy changes the render
    truth = Blob(delta=0.9, s=1.0, alpha=0.6, x_loc=0.4, y_loc=0.5, x_s=0.2, y_s=0.15, z_r=0.0)
    target = Model(background=0.2, blobs=(truth,))
    doubled = Model(background=0.2, blobs=(truth, truth))
    ev = evaluator_for(target)
    assert contribution(doubled, 0, ev) < 0.0


def test_contribution_negative_for_flipped_polarity():
    truth = Blob(delta=0.9, s=1.0, alpha=0.6, x_loc=0.4, y_loc=0.5, x_s=0.2, y_s=0.15, z_r=0.0)
    target = Model(background=0.2, blobs=(truth,))
    spoiled = Model(background=0.2,
                    blobs=(truth, dataclasses.replace(truth, delta=0.05)))
    ev = evaluator_for(target)
    assert contribution(spoiled, 1, ev) < 0


def test_contribution_index_out_of_range():
    m = Model(background=0.5)
    with pytest.raises(IndexError):
        contribution(m, 0, evaluator_for(m))


def test_zero_delta_zero_strength_blob_is_inert():
    # a delta=0, s=0 blob renders as nothing, so no contribution moves
    rng = np.random.default_rng(0)
    tm = target_model(rng, 2)
    ev = evaluator_for(tm)
    m = target_model(rng, 3)
    ghost = random_blob(rng, s=0.0, delta=0.0)
    extended = m.with_blob(ghost)
    for i in range(m.n_blobs):
        assert contribution(extended, i, ev) == pytest.approx(
            contribution(m, i, ev), abs=1e-12
        )
    assert contribution(extended, m.n_blobs, ev) == 0.0


# ----------------------------------------------------------------------
# cull
# ----------------------------------------------------------------------

def test_cull_keeps_all_helpful_blobs():
    rng = np.random.default_rng(1)
    tm = target_model(rng, 3)
    ev = evaluator_for(tm)
    assert cull(tm, ev) == tm  # the generating model: every blob helps (or is neutral)


def test_cull_removes_exactly_the_adversarial_blob():
    truth = Blob(delta=0.9, s=1.0, alpha=0.6, x_loc=0.4, y_loc=0.5, x_s=0.2, y_s=0.15, z_r=0.0)
    target = Model(background=0.2, blobs=(truth,))
    bad = dataclasses.replace(truth, delta=0.05)
    ev = evaluator_for(target)
    culled = cull(Model(background=0.2, blobs=(truth, bad)), ev)
    assert culled.blobs == (truth,)


def test_cull_empty_model_unchanged():
    m = Model(background=0.4)
    assert cull(m, evaluator_for(m)) == m


def test_cull_never_raises_error():
    rng = np.random.default_rng(2)
    for _ in range(10):
        tm = target_model(rng, 2)
        ev = evaluator_for(tm, 24)
        messy = target_model(rng, 5)
        before = ev(messy)
        after = ev(cull(messy, ev))
        assert after <= before + 1e-12


# ----------------------------------------------------------------------
# split_blob geometry
# ----------------------------------------------------------------------

def test_split_blob_axis_aligned_example():
    parent = Blob(delta=0.5, s=0.5, alpha=0.5, x_loc=0.5, y_loc=0.5, x_s=0.3, y_s=0.1, z_r=0.0)
    left, right = split_blob(parent)
    assert left.x_loc == pytest.approx(0.3, rel=RTOL)
    assert right.x_loc == pytest.approx(0.7, rel=RTOL)
    for child in (left, right):
        assert child.x_s == pytest.approx(0.2, rel=RTOL)
        assert child.y_s == pytest.approx(0.1 * 2 / 3, rel=RTOL)
        assert child.y_loc == 0.5
        assert (child.delta, child.s, child.alpha) == (0.5, 0.5, 0.5)


def test_split_blob_circular_ties_toward_x():
    parent = Blob(delta=0.5, s=0.5, alpha=0.5, x_loc=0.5, y_loc=0.5, x_s=0.2, y_s=0.2, z_r=0.0)
    left, right = split_blob(parent)
    assert left.y_loc == right.y_loc == 0.5
    assert left.x_loc < right.x_loc


def test_split_blob_respects_rotation():
    # quarter-turn: the long x axis points along world +y
    parent = Blob(delta=0.5, s=0.5, alpha=0.5, x_loc=0.5, y_loc=0.5, x_s=0.3, y_s=0.1, z_r=0.5)
    a, b = split_blob(parent)
    assert a.x_loc == pytest.approx(0.5, abs=1e-12)
    assert b.x_loc == pytest.approx(0.5, abs=1e-12)
    assert sorted([a.y_loc, b.y_loc]) == pytest.approx([0.3, 0.7], rel=1e-9)


def test_split_blob_clamps_near_boundary():
    parent = Blob(delta=0.5, s=0.5, alpha=0.5, x_loc=0.05, y_loc=0.5, x_s=0.3, y_s=0.1, z_r=0.0)
    left, right = split_blob(parent)
    assert left.x_loc == 0.0  # -0.15 clamped
    assert right.x_loc == pytest.approx(0.25, rel=RTOL)


def test_split_blob_geometry_random_parents():
    # interior parents (no clamping): children's semi-axes are 2/3 of the
    # parent's and the centres sit 4/3 of the long semi-axis apart
    rng = np.random.default_rng(3)
    for _ in range(300):
        dim = 2 if rng.uniform() < 0.5 else 3
        parent = random_blob(
            rng, dim,
            x_loc=rng.uniform(0.45, 0.55), y_loc=rng.uniform(0.45, 0.55),
            x_s=rng.uniform(0.01, 0.3), y_s=rng.uniform(0.01, 0.3),
            **({"z_loc": rng.uniform(0.45, 0.55), "z_s": rng.uniform(0.01, 0.3)}
               if dim == 3 else {}),
        )
        a, b = split_blob(parent)
        axes = parent.semi_axes()
        long = float(axes.max())
        for child, sign in ((a, -1), (b, 1)):
            got = child.semi_axes()
            assert np.allclose(got, SPLIT_SHRINK * axes, rtol=RTOL)
        gap = np.linalg.norm(a.center() - b.center())
        assert gap == pytest.approx(4.0 / 3.0 * long, rel=1e-9)


def test_split_blob_3d_long_axis_z():
    parent = Blob(delta=0.5, s=0.5, alpha=0.5, x_loc=0.5, y_loc=0.5, x_s=0.1, y_s=0.1,
                  z_r=0.0, z_loc=0.5, z_s=0.3, x_r=0.0, y_r=0.0)
    a, b = split_blob(parent)
    assert a.z_loc == pytest.approx(0.3, rel=RTOL)
    assert b.z_loc == pytest.approx(0.7, rel=RTOL)
    assert a.x_loc == b.x_loc == 0.5


# ----------------------------------------------------------------------
# split (model level)
# ----------------------------------------------------------------------

def test_split_count_arithmetic():
    rng = np.random.default_rng(4)
    m = target_model(rng, 4)
    ev = evaluator_for(m)
    assert split(m, 3, ev).n_blobs == 7
    assert split(m, 99, ev).n_blobs == 8  # all blobs split


def test_split_picks_top_contributors():
    truth = Blob(delta=0.9, s=1.0, alpha=0.6, x_loc=0.35, y_loc=0.5, x_s=0.25, y_s=0.2, z_r=0.0)
    faint = Blob(delta=0.55, s=0.4, alpha=0.4, x_loc=0.75, y_loc=0.6, x_s=0.08, y_s=0.08, z_r=0.0)
    target = Model(background=0.2, blobs=(truth, faint))
    ev = evaluator_for(target)
    model = Model(background=0.2, blobs=(truth, faint))
    contribs = [contribution(model, i, ev) for i in range(2)]
    top = int(np.argmax(contribs))
    after = split(model, 1, ev)
    assert after.n_blobs == 3
    # the non-top blob survives unsplit
    survivor = model.blobs[1 - top]
    assert survivor in after.blobs


def test_split_empty_model_noop():
    m = Model(background=0.4)
    assert split(m, 3, evaluator_for(m)) == m


def test_split_then_cma_beats_single_blob_floor():
    # a bent bar cannot be expressed by one blob; splitting the primed
    # blob and re-optimizing must drop the error below the pre-split
    # floor (end-to-end oracle for the split operator)
    from blobinv.cmaes import optimize
    from blobinv.model import decode, encode
    from blobinv.prime import prime

    bent = Model(background=0.15, blobs=(
        Blob(delta=0.95, s=1.0, alpha=0.8, x_loc=0.35, y_loc=0.40, x_s=0.22, y_s=0.06, z_r=0.10),
        Blob(delta=0.95, s=1.0, alpha=0.8, x_loc=0.65, y_loc=0.55, x_s=0.22, y_s=0.06, z_r=0.90),
    ))
    ev = Evaluator(FieldData.picture(rasterize_2d(bent, 48, 48)))
    cfg = CmaConfig(max_iterations=200, flat_fitness_window=50)

    primed = prime(Model(background=0.5), PrimeConfig(scan_grid=8, max_blobs=1), ev)
    genome, _, _ = optimize(lambda x: ev(decode(x, 2, 1)), encode(primed), cfg,
                            rng=np.random.default_rng(1))
    floor_model = cull(decode(genome, 2, 1), ev)
    floor = ev(floor_model)

    grown = cull(split(floor_model, 1, ev), ev)
    genome2, err2, _ = optimize(lambda x: ev(decode(x, 2, grown.n_blobs)),
                                encode(grown), cfg, rng=np.random.default_rng(2))
    assert err2 < floor


# ----------------------------------------------------------------------
# search
# ----------------------------------------------------------------------

def test_search_no_rounds_is_prime_plus_single_cma():
    rng = np.random.default_rng(5)
    tm = target_model(rng, 2)
    problem = FieldData.picture(rasterize_2d(tm, 24, 24))
    best, trace = search(problem, small_search_config(num_rounds=0))
    labels = [s.label for s in trace.stages]
    assert labels == ["prime", "cma", "cull"]
    assert all(s.stage != "split" for s in trace.samples)


def test_search_trace_minimum_equals_returned_error():
    rng = np.random.default_rng(6)
    tm = target_model(rng, 3)
    problem = FieldData.picture(rasterize_2d(tm, 24, 24))
    best, trace = search(problem, small_search_config())
    ev = Evaluator(problem)
    assert ev(best) == pytest.approx(trace.min_error(), rel=RTOL)


def test_search_deterministic():
    rng = np.random.default_rng(7)
    tm = target_model(rng, 2)
    problem = FieldData.picture(rasterize_2d(tm, 24, 24))
    cfg = small_search_config()
    a, trace_a = search(problem, cfg)
    b, trace_b = search(problem, cfg)
    assert a == b
    assert [(s.evaluations, s.best_error) for s in trace_a.samples] == \
           [(s.evaluations, s.best_error) for s in trace_b.samples]


def test_search_respects_budget():
    rng = np.random.default_rng(8)
    tm = target_model(rng, 2)
    problem = FieldData.picture(rasterize_2d(tm, 24, 24))
    cfg = small_search_config(max_evaluations=3000)
    _, trace = search(problem, cfg)
    total = trace.events[-1]["evaluations"]
    # prime is allowed to finish; optimizer stages stop at the budget
    assert total <= 3000 + 60 * 2  # slack: one generation + bookkeeping


def test_search_stage_caps_limit_generations():
    rng = np.random.default_rng(9)
    tm = target_model(rng, 1)
    problem = FieldData.picture(rasterize_2d(tm, 16, 16))
    cfg = small_search_config(num_rounds=1, stage_iteration_caps=(3, 2))
    _, trace = search(problem, cfg)
    cma_spans = [s for s in trace.stages if s.label == "cma"]
    assert len(cma_spans) == 2
    pop = cfg.cma.population_size
    first = cma_spans[0]
    assert first.end_evaluations - first.start_evaluations <= 3 * pop + 1
    second = cma_spans[1]
    assert second.end_evaluations - second.start_evaluations <= 2 * pop + 1


def test_search_split_peak_and_recovery_on_5_blob_target():
    rng = np.random.default_rng(10)
    tm = target_model(rng, 5)
    problem = FieldData.picture(rasterize_2d(tm, 32, 32))
    cfg = SearchConfig(
        num_rounds=2,
        split_count=3,
        cma=CmaConfig(max_iterations=120, flat_fitness_window=40),
        prime=PrimeConfig(scan_grid=6, max_blobs=5),
        seed=21,
    )
    best, trace = search(problem, cfg)
    prime_span = trace.stages[0]
    assert prime_span.label == "prime"
    assert trace.min_error() <= prime_span.best_error
    peaks = split_recoveries(trace)
    assert peaks, "expected at least one split in the trace"
    assert any(p["error_after"] > p["error_before"] and
               p["best_later"] < p["error_before"] for p in peaks)
