"""Greedy enlargement of the feature set, one monomial at a time.

Each round scores every candidate one variable flip away from the current
set by solving the relaxation at a coarse tolerance, keeps the best
(smallest bound for the log-partition objective, largest divergence for
the KL objective), and finishes with a single fine-tolerance solve.
Candidate solves are warm-started from the parent solution, padded with an
identity block for the new feature.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exact import ExactDistribution, moment_matrix
from .features import (FeatureSet, base_feature_set, distance_one_candidates)
from .model import IsingModel, parameter_matrix
from .qtsolver import (SolverConfig, SolverResult, primal_dual_solve,
                       von_neumann_term)

__all__ = [
    "GreedyStep",
    "GreedyTrace",
    "greedy_select_bound",
    "greedy_select_kl",
    "degree_ordered_features",
    "worker_count",
]

WORKERS_ENV = "ISINGBOUND_WORKERS"


def worker_count() -> int:
    """Worker override from the environment; defaults to serial."""
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GreedyStep:
    chosen: int
    bound: float
    n_candidates: int
    n_solves: int


@dataclass
class GreedyTrace:
    steps: list[GreedyStep] = field(default_factory=list)
    final_features: FeatureSet | None = None

    def bounds(self) -> list[float]:
        return [s.bound for s in self.steps]

    def csv_rows(self) -> list[tuple[int, str, float]]:
        """(step, mask-hex, bound) rows for persistence."""
        return [(k + 1, format(s.chosen, "x"), s.bound)
                for k, s in enumerate(self.steps)]


def _pad_warm_start(result: SolverResult, n_new: int):
    """Embed a parent solution in the larger feature space."""
    n_old = result.sigma_feasible.n
    x0 = np.eye(n_new)
    x0[:n_old, :n_old] = result.sigma_feasible.entries
    return x0


def greedy_select_bound(model: IsingModel, k: int, epsilon: float = 1.0,
                        coarse_tol: float = 1e-3, fine_tol: float = 1e-6,
                        max_iterations: int = 200_000,
                        workers: int | None = None):
    """Add k features greedily to tighten the log-partition bound.

    Returns the trace of choices (bounds at the coarse selection
    tolerance) and the final fine-tolerance solve.  Ties break on the
    smallest candidate mask; candidates whose solves do not converge are
    skipped with a warning flag, and a round where every candidate fails
    raises.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    workers = worker_count() if workers is None else workers
    features = base_feature_set(model.d)
    coarse = SolverConfig(tolerance=coarse_tol, epsilon=epsilon,
                          max_iterations=max_iterations)
    fine = SolverConfig(tolerance=fine_tol, epsilon=epsilon,
                        max_iterations=max_iterations)
    trace = GreedyTrace()
    parent = primal_dual_solve(parameter_matrix(model, features), features, coarse)

    for _ in range(k):
        candidates = distance_one_candidates(features)
        if not candidates:
            break

        def solve_candidate(mask: int):
            trial = features.with_feature(mask)
            f = parameter_matrix(model, trial)
            x0 = _pad_warm_start(parent, trial.n)
            return mask, primal_dual_solve(f, trial, coarse, x0=x0)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(solve_candidate, candidates))
        else:
            results = [solve_candidate(m) for m in candidates]
        converged = [(mask, res) for mask, res in results if res.converged]
        if len(converged) < len(results):
            skipped = [f"{m:#x}" for m, res in results if not res.converged]
            warnings.warn(f"skipped non-converged candidates: {skipped}")
        if not converged:
            raise RuntimeError("no candidate solve converged in a greedy round")
        # candidates arrive mask-sorted, so min() keeps the smallest mask on ties
        best_mask, best_res = min(converged, key=lambda item: item[1].bound)
        features = features.with_feature(best_mask)
        parent = best_res
        trace.steps.append(GreedyStep(chosen=best_mask, bound=best_res.bound,
                                      n_candidates=len(candidates),
                                      n_solves=len(converged)))

    final = primal_dual_solve(parameter_matrix(model, features), features, fine,
                              x0=_pad_warm_start(parent, features.n)
                              if trace.steps else None)
    trace.final_features = features
    return trace, final


def greedy_select_kl(p: ExactDistribution, k: int):
    """Greedily grow the divergence lower bound on the KL from uniform.

    Uses exact moment matrices, so it is limited to modest d.  Each round
    adds the candidate maximizing the divergence of the enlarged moment
    matrix from the identity; ties break on the smallest mask.
    """
    if p.d > 10:
        raise ValueError("exact moment matrices needed; d > 10 refused")
    features = base_feature_set(p.d)
    trace = GreedyTrace()
    for _ in range(k):
        candidates = distance_one_candidates(features)
        if not candidates:
            break
        values = []
        for mask in candidates:
            trial = features.with_feature(mask)
            values.append((von_neumann_term(moment_matrix(p, trial)), mask))
        best_value, best_mask = max(values, key=lambda item: (item[0], -item[1]))
        features = features.with_feature(best_mask)
        trace.steps.append(GreedyStep(chosen=best_mask, bound=best_value,
                                      n_candidates=len(candidates),
                                      n_solves=len(candidates)))
    trace.final_features = features
    return trace


def degree_ordered_features(d: int, count: int) -> FeatureSet:
    """Base features, then remaining masks by increasing weight then mask."""
    if count < d + 1 or count > (1 << d):
        raise ValueError(f"count must lie in [d+1, 2^d], got {count}")
    rest = sorted((m for m in range(1 << d) if bin(m).count("1") >= 2),
                  key=lambda m: (bin(m).count("1"), m))
    masks = base_feature_set(d).masks + tuple(rest[: count - d - 1])
    return FeatureSet(d, masks)
