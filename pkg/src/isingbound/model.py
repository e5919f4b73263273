"""Pairwise binary Markov random fields and the experiment parameter draws.

A model assigns the score ``f(x) = sum_i h_i x_i + sum_{(i,j)} J_ij x_i x_j``
to spin configurations ``x in {-1, 1}^d``, with couplings supported on the
edges of a graph.  Random instances follow three schemes: standard normal
draws on all active parameters, the uniform-field/uniform-coupling scheme
used with the log-determinant baseline, and a weaker-field variant used
with the tree-reweighted baseline.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSet

__all__ = [
    "GraphTopology",
    "IsingModel",
    "ParameterScheme",
    "evaluate",
    "parameter_matrix",
    "sample_parameters",
    "random_tree",
    "dump_model",
    "load_model",
]

Edge = tuple[int, int]


def _normalize_edges(d: int, edges) -> tuple[Edge, ...]:
    out = []
    seen = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self-loop ({i},{j}) not allowed")
        if not (0 <= i < d and 0 <= j < d):
            raise ValueError(f"edge ({i},{j}) out of range for d={d}")
        if i > j:
            i, j = j, i
        if (i, j) in seen:
            raise ValueError(f"duplicate edge ({i},{j})")
        seen.add((i, j))
        out.append((i, j))
    return tuple(sorted(out))


def _is_tree(d: int, edges: tuple[Edge, ...]) -> bool:
    if len(edges) != d - 1:
        return False
    parent = list(range(d))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


@dataclass(frozen=True)
class GraphTopology:
    """Edge structure of a model: independent, tree, complete or custom."""

    kind: str
    d: int
    edges: tuple[Edge, ...]

    KINDS = ("independent", "tree", "complete", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("d must be positive")
        object.__setattr__(self, "edges", _normalize_edges(self.d, self.edges))
        if self.kind == "independent" and self.edges:
            raise ValueError("independent graph must have no edges")
        if self.kind == "complete" and len(self.edges) != self.d * (self.d - 1) // 2:
            raise ValueError("complete graph must contain all pairs")
        if self.kind == "tree" and self.d > 1 and not _is_tree(self.d, self.edges):
            raise ValueError("tree graph must be connected and acyclic")

    @classmethod
    def independent(cls, d: int) -> "GraphTopology":
        return cls("independent", d, ())

    @classmethod
    def complete(cls, d: int) -> "GraphTopology":
        edges = tuple((i, j) for i in range(d) for j in range(i + 1, d))
        return cls("complete", d, edges)

    @classmethod
    def tree(cls, d: int, edges) -> "GraphTopology":
        return cls("tree", d, tuple(edges))

    @classmethod
    def custom(cls, d: int, edges) -> "GraphTopology":
        return cls("custom", d, tuple(edges))

    def is_connected(self) -> bool:
        if self.d == 1:
            return True
        adj = {i: [] for i in range(self.d)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            for k in adj[stack.pop()]:
                if k not in seen:
                    seen.add(k)
                    stack.append(k)
        return len(seen) == self.d


@dataclass(frozen=True)
class IsingModel:
    """Linear and pairwise spin parameters on a graph.

    `linear[i]` multiplies x_i; `quadratic[(i, j)]` with i < j multiplies
    x_i x_j and may be nonzero only on graph edges.  Instances are
    immutable and safe to share across threads.
    """

    d: int
    linear: np.ndarray
    quadratic: dict[Edge, float]
    graph: GraphTopology

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        lin = np.asarray(self.linear, dtype=float)
        if lin.shape != (self.d,):
            raise ValueError(f"linear must have length {self.d}")
        lin = lin.copy()
        lin.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        if self.graph.d != self.d:
            raise ValueError("graph dimension mismatch")
        edgeset = set(self.graph.edges)
        quad = {}
        for (i, j), v in self.quadratic.items():
            if i == j:
                raise ValueError("no diagonal quadratic terms")
            if i > j:
                i, j = j, i
            if (i, j) not in edgeset:
                raise ValueError(f"quadratic term on non-edge ({i},{j})")
            quad[(i, j)] = float(v)
        object.__setattr__(self, "quadratic", quad)

    def coupling(self, i: int, j: int) -> float:
        if i > j:
            i, j = j, i
        return self.quadratic.get((i, j), 0.0)


def evaluate(model: IsingModel, x) -> float:
    """Score a spin configuration under the model."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.d,):
        raise ValueError(f"expected {model.d} spins, got shape {x.shape}")
    if not np.all(np.abs(x) == 1):
        raise ValueError("spin entries must be -1 or +1")
    value = float(model.linear @ x)
    for (i, j), v in model.quadratic.items():
        value += v * x[i] * x[j]
    return value


def parameter_matrix(model: IsingModel, features: FeatureSet) -> np.ndarray:
    """Symmetric matrix F with phi(x)^T F phi(x) equal to the model score.

    Linear terms are split in half across the two (constant, singleton)
    entries and couplings across the two singleton pairs, so the quadratic
    form reproduces the score exactly.  Rows and columns of any extra
    features are zero, embedding the base-feature matrix unchanged.
    """
    if features.d != model.d:
        raise ValueError("feature set dimension mismatch")
    features.require_base()
    n = features.n
    f = np.zeros((n, n))
    for i in range(model.d):
        f[0, 1 + i] = f[1 + i, 0] = model.linear[i] / 2.0
    for (i, j), v in model.quadratic.items():
        f[1 + i, 1 + j] = f[1 + j, 1 + i] = v / 2.0
    return f


@dataclass(frozen=True)
class ParameterScheme:
    """How random model parameters are drawn.

    gaussian: every active parameter is standard normal.
    logdet:   fields U(-0.25, 0.25); couplings U(0, 2w) attractive,
              U(-w, w) mixed, U(-2w, 0) repulsive.
    trw:      fields U(-0.05, 0.05); couplings U(0, w) attractive,
              U(-w, w) mixed; repulsive is not defined for this scheme.
    """

    kind: str
    coupling: str | None = None
    strength: float | None = None

    KINDS = ("gaussian", "logdet", "trw")
    COUPLINGS = ("attractive", "mixed", "repulsive")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scheme {self.kind!r}")
        if self.kind == "gaussian":
            if self.coupling is not None or self.strength is not None:
                raise ValueError("gaussian scheme takes no coupling/strength")
            return
        if self.coupling not in self.COUPLINGS:
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.kind == "trw" and self.coupling == "repulsive":
            raise ValueError("trw scheme admits only attractive and mixed coupling")
        if self.strength is None or self.strength < 0:
            raise ValueError("coupling strength must be a nonnegative real")


def _coupling_bounds(scheme: ParameterScheme) -> tuple[float, float]:
    w = scheme.strength
    if scheme.kind == "logdet":
        return {"attractive": (0.0, 2 * w),
                "mixed": (-w, w),
                "repulsive": (-2 * w, 0.0)}[scheme.coupling]
    return {"attractive": (0.0, w), "mixed": (-w, w)}[scheme.coupling]


def sample_parameters(scheme: ParameterScheme, graph: GraphTopology,
                      d: int, seed: int) -> IsingModel:
    """Draw a model: linear terms first, then couplings on sorted edges.

    Pure function of its arguments; the stream is PCG64 keyed by the seed,
    so outputs are reproducible bit-for-bit across runs and platforms.
    """
    if graph.d != d:
        raise ValueError("graph dimension mismatch")
    rng = np.random.default_rng(seed)
    if scheme.kind == "gaussian":
        linear = rng.standard_normal(d)
        quad = {e: float(v) for e, v in
                zip(graph.edges, rng.standard_normal(len(graph.edges)))}
    else:
        half = 0.25 if scheme.kind == "logdet" else 0.05
        linear = rng.uniform(-half, half, size=d)
        lo, hi = _coupling_bounds(scheme)
        quad = {e: float(v) for e, v in
                zip(graph.edges, rng.uniform(lo, hi, size=len(graph.edges)))}
    return IsingModel(d=d, linear=linear, quadratic=quad, graph=graph)


def random_tree(d: int, seed: int) -> GraphTopology:
    """Uniform random labeled tree on d nodes, decoded from a Prufer sequence."""
    if d < 1:
        raise ValueError("d must be positive")
    if d == 1:
        return GraphTopology.tree(1, ())
    if d == 2:
        return GraphTopology.tree(2, ((0, 1),))
    rng = np.random.default_rng(seed)
    prufer = rng.integers(0, d, size=d - 2)
    degree = np.ones(d, dtype=int)
    for node in prufer:
        degree[node] += 1
    edges = []
    leaves = sorted(i for i in range(d) if degree[i] == 1)
    import heapq

    heapq.heapify(leaves)
    for node in prufer:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, int(node)))
        degree[node] -= 1
        if degree[node] == 1:
            heapq.heappush(leaves, int(node))
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return GraphTopology.tree(d, edges)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dump_model(model: IsingModel) -> str:
    """Plain-text serialization; floats keep 17 significant digits."""
    buf = io.StringIO()
    buf.write(f"d {model.d}\n")
    buf.write(f"graph {model.graph.kind}\n")
    buf.write("linear " + " ".join(_fmt(v) for v in model.linear) + "\n")
    for (i, j) in model.graph.edges:
        buf.write(f"edge {i} {j} {_fmt(model.quadratic.get((i, j), 0.0))}\n")
    return buf.getvalue()


def load_model(text: str) -> IsingModel:
    d = None
    kind = "custom"
    linear = None
    edges = []
    quad = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, *rest = line.split()
        if tag == "d":
            d = int(rest[0])
        elif tag == "graph":
            kind = rest[0]
        elif tag == "linear":
            linear = np.array([float(v) for v in rest])
        elif tag == "edge":
            i, j, v = int(rest[0]), int(rest[1]), float(rest[2])
            edges.append((i, j))
            quad[(i, j)] = v
        else:
            raise ValueError(f"unknown model line {line!r}")
    if d is None or linear is None:
        raise ValueError("model text must define d and linear")
    graph = GraphTopology(kind, d, tuple(edges))
    return IsingModel(d=d, linear=linear, quadratic=quad, graph=graph)
