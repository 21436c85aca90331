"""Covariance matrix adaptation evolution strategy on the unit box.

Standard (mu/mu_w, lambda) CMA-ES with cumulative step-size adaptation
and rank-one plus rank-mu covariance updates, following the reference
formulation.  Two departures suit the blob-genome setting: sampled
candidates are clamped coordinate-wise into [0, 1] (cheap, deterministic
box handling), and the driver loop stops early when the best error
stops improving over a window of generations (flat-fitness stall).

The elitist bookkeeping is external to the distribution update: the
incumbent (best-so-far) never regresses, and ``optimize`` seeds it with
the supplied start point so the result is never worse than the input.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

# Smallest eigenvalue allowed in the covariance decomposition; repairs
# numerically collapsed directions during long runs at small sigma.
EIGEN_FLOOR = 1e-14


@dataclass(frozen=True)
class CmaConfig:
    population_size: int = 50
    parent_count: int = 25
    sigma0: float = 0.01
    max_iterations: int = 1000
    flat_fitness_window: int = 50
    flat_fitness_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.parent_count > self.population_size:
            raise ValueError("parent_count must be <= population_size")
        if self.parent_count < 1:
            raise ValueError("parent_count must be >= 1")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.flat_fitness_window < 1:
            raise ValueError("flat_fitness_window must be >= 1")


@dataclass
class GenerationStats:
    generation: int
    evaluations: int
    best_error: float
    sigma: float
    mean_norm: float


class CmaEs:
    """Ask/tell interface; one instance owns one search state."""

    def __init__(self, x0: np.ndarray, config: CmaConfig,
                 rng: np.random.Generator | None = None) -> None:
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.mean = np.asarray(x0, dtype=float).copy()
        n = self.mean.size
        self.n = n
        self.sigma = float(config.sigma0)

        mu = config.parent_count
        w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        self.weights = w / w.sum()
        self.mu_eff = 1.0 / np.sum(self.weights ** 2)

        self.c_sigma = (self.mu_eff + 2.0) / (n + self.mu_eff + 5.0)
        self.d_sigma = (
            1.0
            + 2.0 * max(0.0, math.sqrt((self.mu_eff - 1.0) / (n + 1.0)) - 1.0)
            + self.c_sigma
        )
        self.c_c = (4.0 + self.mu_eff / n) / (n + 4.0 + 2.0 * self.mu_eff / n)
        self.c_1 = 2.0 / ((n + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(
            1.0 - self.c_1,
            2.0 * (self.mu_eff - 2.0 + 1.0 / self.mu_eff) / ((n + 2.0) ** 2 + self.mu_eff),
        )
        self.chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

        self.cov = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.generation = 0
        self.best_genome = self.mean.copy()
        self.best_error = math.inf
        self._decomposition: tuple[np.ndarray, np.ndarray] | None = None

    def _basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenbasis (B, sqrt-eigenvalues) of the covariance, floored and cached."""
        if self._decomposition is None:
            eigvals, basis = np.linalg.eigh(self.cov)
            eigvals = np.maximum(eigvals, EIGEN_FLOOR)
            self._decomposition = (basis, np.sqrt(eigvals))
        return self._decomposition

    def ask(self) -> np.ndarray:
        """Sample population_size candidates, clamped into [0, 1]^n."""
        basis, scale = self._basis()
        z = self.rng.standard_normal((self.config.population_size, self.n))
        steps = (z * scale) @ basis.T
        return np.clip(self.mean + self.sigma * steps, 0.0, 1.0)

    def tell(self, candidates: np.ndarray, errors) -> None:
        """Rank candidates by error and update mean, paths, sigma and covariance."""
        errs = np.asarray(errors, dtype=float)
        if len(errs) != len(candidates):
            raise ValueError("need one error per candidate")
        # Non-finite errors rank behind everything else.
        order = np.argsort(np.where(np.isfinite(errs), errs, np.inf), kind="stable")
        ranked = np.asarray(candidates, dtype=float)[order]

        top = order[0]
        if np.isfinite(errs[top]) and errs[top] < self.best_error:
            self.best_error = float(errs[top])
            self.best_genome = ranked[0].copy()

        mu = self.config.parent_count
        old_mean = self.mean
        self.mean = self.weights @ ranked[:mu]
        mean_step = (self.mean - old_mean) / self.sigma

        basis, scale = self._basis()
        cov_inv_sqrt_step = basis @ ((basis.T @ mean_step) / scale)
        self.p_sigma = (1.0 - self.c_sigma) * self.p_sigma + math.sqrt(
            self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff
        ) * cov_inv_sqrt_step

        self.generation += 1
        expected_decay = math.sqrt(
            1.0 - (1.0 - self.c_sigma) ** (2.0 * self.generation)
        )
        h_sigma = (
            np.linalg.norm(self.p_sigma) / expected_decay
            < (1.4 + 2.0 / (self.n + 1.0)) * self.chi_n
        )
        self.p_c = (1.0 - self.c_c) * self.p_c + (
            h_sigma * math.sqrt(self.c_c * (2.0 - self.c_c) * self.mu_eff)
        ) * mean_step

        y = (ranked[:mu] - old_mean) / self.sigma
        rank_mu = (self.weights[:, None] * y).T @ y
        rank_one = np.outer(self.p_c, self.p_c)
        if not h_sigma:  # compensate the missing rank-one variance
            rank_one = rank_one + self.c_c * (2.0 - self.c_c) * self.cov
        self.cov = (
            (1.0 - self.c_1 - self.c_mu) * self.cov
            + self.c_1 * rank_one
            + self.c_mu * rank_mu
        )
        self.cov = (self.cov + self.cov.T) / 2.0  # keep exact symmetry
        self._decomposition = None

        self.sigma *= math.exp(
            (self.c_sigma / self.d_sigma)
            * (np.linalg.norm(self.p_sigma) / self.chi_n - 1.0)
        )


def optimize(
    objective: Callable[[np.ndarray], float],
    x0: np.ndarray,
    config: CmaConfig,
    rng: np.random.Generator | None = None,
    max_evaluations: int | None = None,
    on_generation: Callable[[GenerationStats], None] | None = None,
) -> tuple[np.ndarray, float, list[GenerationStats]]:
    """Run ask/tell until the iteration cap, budget, or flat-fitness stall.

    The start point is evaluated first and kept as the incumbent, so the
    returned (genome, error) is never worse than the input.  Improvement
    is measured on the incumbent across a window of generations; when
    the relative gain over the window drops below the configured epsilon
    the run stops.
    """
    x0 = np.clip(np.asarray(x0, dtype=float), 0.0, 1.0)
    best_genome = x0.copy()
    best_error = float(objective(x0))
    evaluations = 1

    es = CmaEs(x0, config, rng)
    es.best_genome = best_genome.copy()
    es.best_error = best_error

    history = [best_error]
    trace: list[GenerationStats] = []
    window = config.flat_fitness_window

    for _ in range(config.max_iterations):
        if max_evaluations is not None and evaluations >= max_evaluations:
            break
        candidates = es.ask()
        errors = [float(objective(c)) for c in candidates]
        evaluations += len(candidates)
        es.tell(candidates, errors)

        history.append(es.best_error)
        stats = GenerationStats(
            generation=es.generation,
            evaluations=evaluations,
            best_error=es.best_error,
            sigma=es.sigma,
            mean_norm=float(np.linalg.norm(es.mean)),
        )
        trace.append(stats)
        if on_generation is not None:
            on_generation(stats)

        if len(history) > window:
            before = history[-window - 1]
            gain = before - history[-1]
            denom = max(abs(before), 1e-300)
            if gain / denom < config.flat_fitness_epsilon:
                break

    return es.best_genome.copy(), es.best_error, trace


def write_optimizer_trace(rows: list[GenerationStats], path) -> None:
    """CSV export with columns generation, evaluations, best_error, sigma, mean_norm."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "evaluations", "best_error", "sigma", "mean_norm"])
        for r in rows:
            writer.writerow([r.generation, r.evaluations, repr(r.best_error),
                             repr(r.sigma), repr(r.mean_norm)])
