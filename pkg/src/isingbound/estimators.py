"""Estimator-style front end for every bound method.

Each class takes its hyperparameters in the constructor, computes on
``fit(model)`` and exposes the results as trailing-underscore attributes
(``bound_``, ``marginals_``, ``converged_``, ...).  They derive from
scikit-learn's ``BaseEstimator``, so ``get_params`` / ``set_params`` /
``clone`` compose with that ecosystem, and the experiment harness can
treat all methods uniformly.

The temperature enters the quantum relaxation natively.  The two
classical baselines are defined at unit temperature; other temperatures
are handled by the exact rescaling identity: the log-partition value of
``f`` at temperature eps equals eps times the unit-temperature value of
``f / eps``, and the Gibbs distribution is unchanged, so a baseline bound
of the rescaled model multiplied by eps is a valid bound and its
marginals need no correction.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import exact as exact_mod
from .baselines import logdet_bound, trw_bound
from .features import FeatureSet, base_feature_set
from .greedy import degree_ordered_features, greedy_select_bound
from .metriclearn import kelley_solve
from .model import IsingModel, parameter_matrix
from .qtsolver import (SolverConfig, extract_marginals, primal_dual_solve)
from .validation import (check_in, check_model, check_nonnegative,
                         check_positive)

__all__ = [
    "QuantumEntropyBound",
    "GreedyQuantumBound",
    "DiagonalMetricBound",
    "LogDetBound",
    "TRWBound",
    "ExactValue",
]


def _scaled_model(model: IsingModel, epsilon: float) -> IsingModel:
    if epsilon == 1.0:
        return model
    return IsingModel(
        d=model.d,
        linear=np.asarray(model.linear) / epsilon,
        quadratic={e: v / epsilon for e, v in model.quadratic.items()},
        graph=model.graph,
    )


class QuantumEntropyBound(BaseEstimator):
    """Certified entropy-relaxation bound, optionally on a feature hierarchy.

    ``features=None`` uses the base feature vector; an integer selects that
    many degree-ordered features; a FeatureSet is used as given.  At
    ``epsilon=0`` the temperature-zero linear relaxation is solved instead.
    """

    def __init__(self, epsilon: float = 1.0, tol: float = 1e-6,
                 features: int | FeatureSet | None = None, tau: float = 3.0,
                 sigma: float = 0.3, extrapolation: float = 1.0,
                 max_iter: int = 200_000, collect_trace: bool = False):
        self.epsilon = epsilon
        self.tol = tol
        self.features = features
        self.tau = tau
        self.sigma = sigma
        self.extrapolation = extrapolation
        self.max_iter = max_iter
        self.collect_trace = collect_trace

    def _feature_set(self, model: IsingModel) -> FeatureSet:
        if self.features is None:
            return base_feature_set(model.d)
        if isinstance(self.features, FeatureSet):
            return self.features
        return degree_ordered_features(model.d, int(self.features))

    def fit(self, model: IsingModel, y=None):
        model = check_model(model)
        check_nonnegative("epsilon", self.epsilon)
        config = SolverConfig(tau=self.tau, sigma=self.sigma,
                              extrapolation=self.extrapolation,
                              tolerance=check_positive("tol", self.tol),
                              max_iterations=self.max_iter,
                              epsilon=self.epsilon)
        features = self._feature_set(model)
        result = primal_dual_solve(parameter_matrix(model, features), features,
                                   config, collect_trace=self.collect_trace)
        self.bound_ = result.bound
        self.dual_value_ = result.dual_value
        self.gap_ = result.gap
        self.converged_ = result.converged
        self.iterations_ = result.iterations
        self.moment_matrix_ = result.sigma_feasible
        self.marginals_ = extract_marginals(result.sigma_feasible)
        self.n_features_ = features.n
        self.trace_ = result.trace
        return self


class GreedyQuantumBound(BaseEstimator):
    """Bound after k greedily selected extra features."""

    def __init__(self, k: int = 3, epsilon: float = 1.0,
                 coarse_tol: float = 1e-3, fine_tol: float = 1e-6,
                 max_iter: int = 200_000):
        self.k = k
        self.epsilon = epsilon
        self.coarse_tol = coarse_tol
        self.fine_tol = fine_tol
        self.max_iter = max_iter

    def fit(self, model: IsingModel, y=None):
        model = check_model(model)
        trace, result = greedy_select_bound(
            model, k=int(self.k), epsilon=self.epsilon,
            coarse_tol=check_positive("coarse_tol", self.coarse_tol),
            fine_tol=check_positive("fine_tol", self.fine_tol),
            max_iterations=self.max_iter)
        self.bound_ = result.bound
        self.dual_value_ = result.dual_value
        self.gap_ = result.gap
        self.converged_ = result.converged
        self.iterations_ = result.iterations
        self.moment_matrix_ = result.sigma_feasible
        self.marginals_ = extract_marginals(result.sigma_feasible)
        self.greedy_trace_ = trace
        self.features_ = trace.final_features
        self.n_features_ = trace.final_features.n
        return self


class DiagonalMetricBound(BaseEstimator):
    """Cutting-plane bound with the diagonal-metric divergence term."""

    def __init__(self, epsilon: float = 1.0, tol: float = 1e-4,
                 max_cuts: int = 200):
        self.epsilon = epsilon
        self.tol = tol
        self.max_cuts = max_cuts

    def fit(self, model: IsingModel, y=None):
        model = check_model(model)
        features = base_feature_set(model.d)
        result = kelley_solve(parameter_matrix(model, features), features,
                              epsilon=check_nonnegative("epsilon", self.epsilon),
                              tol=check_positive("tol", self.tol),
                              max_cuts=int(self.max_cuts))
        self.bound_ = result.bound
        self.converged_ = result.converged
        self.iterations_ = result.cuts_used
        self.gap_ = result.state.upper_bound - result.state.lower_bound
        self.marginals_ = None
        self.n_features_ = features.n
        return self


class LogDetBound(BaseEstimator):
    """Gaussian-entropy baseline; other temperatures enter by rescaling."""

    def __init__(self, pairwise: bool = False, epsilon: float = 1.0,
                 tol: float = 1e-8):
        self.pairwise = pairwise
        self.epsilon = epsilon
        self.tol = tol

    def fit(self, model: IsingModel, y=None):
        model = check_model(model)
        eps = check_positive("epsilon", self.epsilon)
        result = logdet_bound(_scaled_model(model, eps),
                              pairwise_constraints=self.pairwise,
                              tol=self.tol)
        self.bound_ = eps * result.bound
        self.converged_ = result.converged
        self.iterations_ = result.iterations
        self.marginals_ = result.marginals
        self.pseudo_marginals_ = result.pseudo
        return self


class TRWBound(BaseEstimator):
    """Tree-reweighted baseline; other temperatures enter by rescaling."""

    MODES = ("fixed_uniform", "tree_indicator", "optimize")

    def __init__(self, rho_mode: str = "optimize", epsilon: float = 1.0,
                 max_mp_iters: int = 10_000, damping: float = 0.5):
        self.rho_mode = rho_mode
        self.epsilon = epsilon
        self.max_mp_iters = max_mp_iters
        self.damping = damping

    def fit(self, model: IsingModel, y=None):
        model = check_model(model)
        check_in("rho_mode", self.rho_mode, self.MODES)
        eps = check_positive("epsilon", self.epsilon)
        result = trw_bound(_scaled_model(model, eps), rho_mode=self.rho_mode,
                           max_mp_iters=int(self.max_mp_iters),
                           damping=self.damping)
        self.bound_ = eps * result.bound
        self.converged_ = result.converged
        self.iterations_ = result.iterations
        self.marginals_ = result.marginals
        self.pseudo_marginals_ = result.pseudo
        self.rho_ = result.rho
        return self


class ExactValue(BaseEstimator):
    """Brute-force reference wrapped in the same interface."""

    def __init__(self, epsilon: float = 1.0):
        self.epsilon = epsilon

    def fit(self, model: IsingModel, y=None):
        model = check_model(model)
        eps = check_positive("epsilon", self.epsilon)
        self.bound_ = exact_mod.log_partition(model, eps)
        dist = exact_mod.exact_distribution(model, eps)
        self.marginals_ = exact_mod.exact_marginals(dist)
        self.converged_ = True
        self.iterations_ = 1 << model.d
        return self
