"""Does cell-division splitting actually help?  A miniature experiment.

Runs the staged search on one self-generated target with and without
splitting rounds, several seeds each, at equal evaluation budgets, then
compares the two populations of final errors with the exact rank-sum
test.  A small-scale version of the benchmark experiments; expect a
couple of minutes.
"""

import time

import numpy as np

from blobinv import (
    Blob,
    CmaConfig,
    FieldData,
    Model,
    PrimeConfig,
    SearchConfig,
    rank_sum_test,
    rasterize_2d,
    search,
)

SEEDS = range(4)
BUDGET = 25000

rng = np.random.default_rng(99)
secret = Model(
    background=0.3,
    blobs=tuple(
        Blob(delta=rng.uniform(), s=rng.uniform(0.4, 1.0), alpha=rng.uniform(0.2, 0.8),
             x_loc=rng.uniform(0.2, 0.8), y_loc=rng.uniform(0.2, 0.8),
             x_s=rng.uniform(0.08, 0.3), y_s=rng.uniform(0.08, 0.3),
             z_r=rng.uniform())
        for _ in range(6)
    ),
)
problem = FieldData.picture(rasterize_2d(secret, 48, 48))


def final_error(seed, rounds):
    config = SearchConfig(
        num_rounds=rounds,
        split_count=3,
        cma=CmaConfig(sigma0=0.05, max_iterations=10**6, flat_fitness_window=50),
        prime=PrimeConfig(scan_grid=8, max_blobs=5),
        seed=seed,
        max_evaluations=BUDGET,
    )
    _, trace = search(problem, config)
    return trace.min_error()


split_errors, plain_errors = [], []
for seed in SEEDS:
    t0 = time.time()
    with_split = final_error(seed, rounds=3)
    without = final_error(seed, rounds=0)
    split_errors.append(with_split)
    plain_errors.append(without)
    print(f"seed {seed}: split {with_split:7.3f}   no-split {without:7.3f}   "
          f"({time.time() - t0:.0f}s)")

result = rank_sum_test(split_errors, plain_errors)
print(f"\nmean with splitting:    {np.mean(split_errors):7.3f}")
print(f"mean without splitting: {np.mean(plain_errors):7.3f}")
print(f"rank-sum p-value ({result.method}): {result.p_value:.4f}")
