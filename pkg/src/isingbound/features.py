"""Monomial features on the hypercube and the moment-matrix subspace.

A feature is a multilinear monomial ``x^a = prod_i x_i**a_i`` on
``{-1, 1}^d``, identified with the bitmask of its exponent vector
(bit ``i`` set means variable ``i`` appears).  Because ``x_i**2 = 1``,
products of features reduce through XOR of masks, and a moment matrix
``E[phi(x) phi(x)^T]`` is constant on the classes of index pairs whose
masks XOR to the same value.  The span of all outer products
``phi(x) phi(x)^T`` is exactly the set of symmetric matrices constant
on those XOR classes; projecting onto it is per-class averaging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FeatureSet",
    "XorClassTable",
    "MomentMatrix",
    "base_feature_set",
    "full_feature_set",
    "xor_class_table",
    "project_span",
    "project_span_trace",
    "distance_one_candidates",
    "feature_vector",
]

# Masks are stored in int64 arrays, so variable indices must fit in 62 bits.
MAX_VARIABLES = 62


def _check_mask(mask: int, d: int) -> None:
    if mask < 0 or mask >> d:
        raise ValueError(f"mask {mask:#x} has bits outside the {d} variables")


@dataclass(frozen=True)
class FeatureSet:
    """An ordered collection of distinct monomial masks over d variables."""

    d: int
    masks: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= self.d <= MAX_VARIABLES:
            raise ValueError(f"d must be in [1, {MAX_VARIABLES}], got {self.d}")
        if len(set(self.masks)) != len(self.masks):
            raise ValueError("duplicate feature masks")
        for m in self.masks:
            _check_mask(m, self.d)

    @property
    def n(self) -> int:
        return len(self.masks)

    def index_of(self, mask: int) -> int:
        return self.masks.index(mask)

    def has_base(self) -> bool:
        """True if the constant and all singletons lead the ordering."""
        base = (0,) + tuple(1 << i for i in range(self.d))
        return self.masks[: self.d + 1] == base

    def require_base(self) -> None:
        if not self.has_base():
            raise ValueError(
                "feature set must start with the constant feature and the "
                "d singleton features, in index order"
            )

    def with_feature(self, mask: int) -> "FeatureSet":
        _check_mask(mask, self.d)
        if mask in self.masks:
            raise ValueError(f"feature {mask:#x} already present")
        return FeatureSet(self.d, self.masks + (mask,))

    def to_hex(self) -> list[str]:
        """Serialize as hex-encoded masks (for reproducible traces)."""
        return [format(m, "x") for m in self.masks]

    @classmethod
    def from_hex(cls, d: int, items: list[str]) -> "FeatureSet":
        return cls(d, tuple(int(s, 16) for s in items))


def base_feature_set(d: int) -> FeatureSet:
    """The constant feature plus the d singletons, size d + 1."""
    return FeatureSet(d, (0,) + tuple(1 << i for i in range(d)))


def full_feature_set(d: int) -> FeatureSet:
    """All 2^d monomials: base features first, then by weight and mask."""
    if d > 20:
        raise ValueError("full feature set is exponential; d > 20 refused")
    rest = sorted(
        (m for m in range(1 << d) if bin(m).count("1") >= 2),
        key=lambda m: (bin(m).count("1"), m),
    )
    return FeatureSet(d, base_feature_set(d).masks + tuple(rest))


@dataclass(frozen=True)
class XorClassTable:
    """Partition of index pairs (a, b) by the XOR of their masks.

    ``class_of[a, b]`` is a dense class id; ``class_mask[k]`` is the XOR
    mask shared by every pair in class k; ``class_size[k]`` counts its
    entries.  Class ids are assigned in increasing mask order, so the
    all-zero (diagonal) class is always id 0.  Built once per feature set
    and reused across solver iterations, which keeps the projection O(n^2).
    """

    features: FeatureSet
    class_of: np.ndarray
    class_mask: np.ndarray
    class_size: np.ndarray

    @property
    def n(self) -> int:
        return self.features.n

    @property
    def n_classes(self) -> int:
        return len(self.class_mask)

    def members(self, class_id: int) -> list[tuple[int, int]]:
        idx = np.argwhere(self.class_of == class_id)
        return [tuple(pair) for pair in idx]


def xor_class_table(features: FeatureSet) -> XorClassTable:
    masks = np.asarray(features.masks, dtype=np.int64)
    xor = masks[:, None] ^ masks[None, :]
    class_mask, class_of = np.unique(xor, return_inverse=True)
    class_of = class_of.reshape(xor.shape)
    class_size = np.bincount(class_of.ravel(), minlength=len(class_mask))
    class_of.setflags(write=False)
    class_mask.setflags(write=False)
    class_size.setflags(write=False)
    return XorClassTable(features, class_of, class_mask, class_size)


@dataclass(frozen=True)
class MomentMatrix:
    """A symmetric matrix indexed by a feature set.

    Feasible moment matrices are additionally PSD, have trace n and are
    constant on XOR classes; `is_feasible` checks all three.
    """

    entries: np.ndarray
    features: FeatureSet

    def __post_init__(self):
        n = self.features.n
        if self.entries.shape != (n, n):
            raise ValueError("entries shape does not match feature count")

    @property
    def n(self) -> int:
        return self.features.n

    def is_feasible(self, tol: float = 1e-10) -> bool:
        m = self.entries
        table = xor_class_table(self.features)
        in_span = np.max(np.abs(m - project_span(m, table))) <= tol
        trace_ok = abs(np.trace(m) - self.n) <= tol * self.n
        psd = np.linalg.eigvalsh(m)[0] >= -tol
        return bool(in_span and trace_ok and psd)


def _check_square(m: np.ndarray, n: int) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix, got shape {m.shape}")
    return m


def project_span(m: np.ndarray, table: XorClassTable) -> np.ndarray:
    """Orthogonal projection onto the span of the feature outer products.

    Replaces every entry by the mean of its XOR class.  Idempotent,
    self-adjoint and nonexpansive; always returns a symmetric matrix
    (transposed pairs share a class).
    """
    m = _check_square(m, table.n)
    sums = np.bincount(table.class_of.ravel(), weights=m.ravel(),
                       minlength=table.n_classes)
    means = sums / table.class_size
    return means[table.class_of]


def project_span_trace(m: np.ndarray, table: XorClassTable) -> np.ndarray:
    """Projection onto the span intersected with the trace-n hyperplane."""
    p = project_span(m, table)
    n = table.n
    correction = 1.0 - np.trace(p) / n
    p[np.diag_indices(n)] += correction
    return p


def distance_one_candidates(features: FeatureSet) -> list[int]:
    """Masks one variable flip away from a member, excluding members.

    Returned in increasing mask order so downstream tie-breaking is
    deterministic.
    """
    have = set(features.masks)
    out = {m ^ (1 << i) for m in features.masks for i in range(features.d)}
    return sorted(out - have)


def feature_vector(features: FeatureSet, x) -> np.ndarray:
    """Evaluate every monomial at a spin vector, component per feature."""
    x = np.asarray(x)
    if x.shape != (features.d,):
        raise ValueError(f"expected {features.d} spins, got shape {x.shape}")
    if not np.all(np.abs(x) == 1):
        raise ValueError("spin entries must be -1 or +1")
    neg = 0
    for i in range(features.d):
        if x[i] < 0:
            neg |= 1 << i
    masks = np.asarray(features.masks, dtype=np.uint64)
    parity = np.bitwise_count(masks & np.uint64(neg)) & 1
    return np.where(parity, -1.0, 1.0)
