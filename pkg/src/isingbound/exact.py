"""Exhaustive ground-truth oracles over all 2^d spin configurations.

States are enumerated in binary counting order: bit i of the state index
gives spin i, with 0 -> -1 and 1 -> +1.  The base measure is the uniform
probability measure, so the log-partition value of the zero model is 0.
All reductions are fixed-order, hence deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureSet, MomentMatrix, xor_class_table
from .model import IsingModel

__all__ = [
    "ExactDistribution",
    "state_matrix",
    "score_table",
    "log_partition",
    "exact_distribution",
    "kl_divergence",
    "moment_matrix",
    "max_score",
    "exact_marginals",
]

MAX_EXHAUSTIVE_D = 25
_CHUNK = 1 << 20


def _check_d(d: int) -> None:
    if d > MAX_EXHAUSTIVE_D:
        raise ValueError(f"exhaustive enumeration refused for d={d} > {MAX_EXHAUSTIVE_D}")


@dataclass(frozen=True)
class ExactDistribution:
    """A probability vector over all 2^d states, in enumeration order."""

    d: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (1 << self.d,):
            raise ValueError("probs must have length 2^d")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)


def state_matrix(d: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Spin matrix of states [start, stop), one row per state."""
    _check_d(d)
    stop = (1 << d) if stop is None else stop
    idx = np.arange(start, stop, dtype=np.uint64)
    bits = (idx[:, None] >> np.arange(d, dtype=np.uint64)[None, :]) & np.uint64(1)
    return 2.0 * bits.astype(np.float64) - 1.0


def score_table(model: IsingModel) -> np.ndarray:
    """f(x) for every state, computed in chunks to bound memory."""
    _check_d(model.d)
    total = 1 << model.d
    out = np.empty(total)
    edges = list(model.quadratic.items())
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        x = state_matrix(model.d, start, stop)
        f = x @ model.linear
        for (i, j), v in edges:
            f += v * x[:, i] * x[:, j]
        out[start:stop] = f
    return out


def log_partition(model: IsingModel, epsilon: float = 1.0) -> float:
    """eps * log of the uniform average of exp(f(x)/eps), by enumeration.

    Stable through max-subtraction; the uniform-probability base measure
    contributes the -d*log(2) normalization.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    f = score_table(model) / epsilon
    m = f.max()
    lse = m + np.log(np.exp(f - m).sum())
    return float(epsilon * (lse - model.d * np.log(2.0)))


def exact_distribution(model: IsingModel, epsilon: float = 1.0) -> ExactDistribution:
    """The Gibbs distribution with probabilities proportional to exp(f/eps)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    f = score_table(model) / epsilon
    f -= f.max()
    p = np.exp(f)
    p /= p.sum()
    return ExactDistribution(model.d, p)


def kl_divergence(p: ExactDistribution, q: ExactDistribution) -> float:
    """sum_x p(x) log(p(x)/q(x)), with 0*log(0) = 0; errors unless p << q."""
    if p.d != q.d:
        raise ValueError("dimension mismatch")
    pp, qq = p.probs, q.probs
    support = pp > 0
    if np.any(qq[support] == 0):
        raise ValueError("absolute continuity violated: p > 0 where q = 0")
    return float(np.sum(pp[support] * np.log(pp[support] / qq[support])))


def uniform_distribution(d: int) -> ExactDistribution:
    return ExactDistribution(d, np.full(1 << d, 1.0 / (1 << d)))


def _monomial_columns(d: int, masks: np.ndarray) -> np.ndarray:
    """x^mask for every state (rows) and mask (columns), as +-1 floats."""
    _check_d(d)
    idx = np.arange(1 << d, dtype=np.uint64)
    neg = ~idx  # bits where the spin is -1
    parity = np.bitwise_count(neg[:, None] & masks[None, :].astype(np.uint64)) & np.uint64(1)
    return np.where(parity, -1.0, 1.0)


def moment_matrix(p: ExactDistribution, features: FeatureSet) -> MomentMatrix:
    """E_p[phi(x) phi(x)^T], assembled per XOR class.

    Each entry is the expectation of the monomial indexed by the XOR of its
    row and column masks, so the result lies exactly in the class span,
    has trace n and is PSD.
    """
    if features.d != p.d:
        raise ValueError("dimension mismatch")
    table = xor_class_table(features)
    cols = _monomial_columns(p.d, np.asarray(table.class_mask))
    class_means = p.probs @ cols
    entries = class_means[table.class_of]
    return MomentMatrix(entries=entries, features=features)


def max_score(model: IsingModel) -> float:
    """Exact maximum of f over all states."""
    return float(score_table(model).max())


def exact_marginals(p: ExactDistribution) -> np.ndarray:
    """P(x_i = +1) for every spin."""
    idx = np.arange(1 << p.d, dtype=np.uint64)
    out = np.empty(p.d)
    for i in range(p.d):
        up = (idx >> np.uint64(i)) & np.uint64(1)
        out[i] = p.probs[up == 1].sum()
    return out
