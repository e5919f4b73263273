"""Certified upper bounds on the log-partition function of pairwise binary
Markov random fields, via matrix-entropy relaxations over moment matrices,
with greedy feature hierarchies, a diagonal-metric tightening, and the
classical log-determinant and tree-reweighted baselines."""

from .estimators import (DiagonalMetricBound, ExactValue, GreedyQuantumBound,
                         LogDetBound, QuantumEntropyBound, TRWBound)
from .features import (FeatureSet, MomentMatrix, base_feature_set,
                       full_feature_set)
from .model import (GraphTopology, IsingModel, ParameterScheme, random_tree,
                    sample_parameters)
from .qtsolver import SolverConfig, SolverResult, primal_dual_solve

__version__ = "0.1.0"

__all__ = [
    "DiagonalMetricBound",
    "ExactValue",
    "FeatureSet",
    "GraphTopology",
    "GreedyQuantumBound",
    "IsingModel",
    "LogDetBound",
    "MomentMatrix",
    "ParameterScheme",
    "QuantumEntropyBound",
    "SolverConfig",
    "SolverResult",
    "TRWBound",
    "base_feature_set",
    "full_feature_set",
    "primal_dual_solve",
    "random_tree",
    "sample_parameters",
    "__version__",
]
