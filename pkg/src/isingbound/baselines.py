"""The two classical competing upper bounds: log-determinant and
tree-reweighted message passing.

Both methods natively bound the counting-measure log-sum-exp; values are
converted to the uniform-probability convention by subtracting d*log(2),
matching the rest of the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import minimum_spanning_tree

from .features import base_feature_set
from .model import GraphTopology, IsingModel, parameter_matrix

__all__ = [
    "PseudoMarginals",
    "EdgeAppearance",
    "BaselineResult",
    "logdet_bound",
    "trw_bound",
    "spanning_tree_cg_step",
    "max_weight_spanning_tree",
    "singleton_entropy",
    "edge_mutual_information",
]


@dataclass(frozen=True)
class PseudoMarginals:
    """Node means E[x_i] and edge means E[x_i x_j] on the graph edges."""

    mu_node: np.ndarray
    mu_edge: dict[tuple[int, int], float]

    def pairwise_consistent(self, tol: float = 1e-9) -> bool:
        for (i, j), mij in self.mu_edge.items():
            for a in (-1.0, 1.0):
                for b in (-1.0, 1.0):
                    if 1.0 + a * self.mu_node[i] + b * self.mu_node[j] + a * b * mij < -tol:
                        return False
        return True

    def node_probabilities(self) -> np.ndarray:
        return np.clip((1.0 + self.mu_node) / 2.0, 0.0, 1.0)


@dataclass(frozen=True)
class EdgeAppearance:
    """Edge weights from the spanning-tree polytope (appearance probabilities)."""

    edges: tuple[tuple[int, int], ...]
    rho: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=float)
        if r.shape != (len(self.edges),):
            raise ValueError("one rho per edge required")
        if np.any(r < -1e-12) or np.any(r > 1.0 + 1e-12):
            raise ValueError("rho entries must lie in [0, 1]")
        r = np.clip(r, 0.0, 1.0)
        r.setflags(write=False)
        object.__setattr__(self, "rho", r)


@dataclass
class BaselineResult:
    bound: float
    marginals: np.ndarray
    converged: bool
    iterations: int
    pseudo: PseudoMarginals | None = None
    rho: EdgeAppearance | None = None


# ---------------------------------------------------------------------------
# log-determinant relaxation


class _SymmetricBasis:
    """Free coordinates of a unit-diagonal symmetric (d+1) moment matrix."""

    def __init__(self, d: int):
        rows, cols = [], []
        for i in range(d):
            rows.append(0)
            cols.append(i + 1)
        for i in range(d):
            for j in range(i + 1, d):
                rows.append(i + 1)
                cols.append(j + 1)
        self.rows = np.array(rows)
        self.cols = np.array(cols)
        self.k = len(rows)
        self.n = d + 1

    def matrix(self, v: np.ndarray) -> np.ndarray:
        s = np.eye(self.n)
        s[self.rows, self.cols] = v
        s[self.cols, self.rows] = v
        return s

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """d tr(X dSigma) / dv, i.e. 2 X_pq per free coordinate."""
        return 2.0 * x[self.rows, self.cols]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """tr(X E_a X E_b) for symmetric pair-basis matrices E."""
        p, q = self.rows, self.cols
        return 2.0 * (x[np.ix_(p, p)] * x[np.ix_(q, q)]
                      + x[np.ix_(p, q)] * x[np.ix_(q, p)])


def _pairwise_rows(d: int, k: int) -> np.ndarray:
    """Affine pairwise constraints 1 + a mu_i + b mu_j + ab mu_ij >= 0.

    One row per (pair, sign combination), in the free-coordinate layout of
    `_SymmetricBasis`: the d node means first, then the pair means.
    """
    rows = []
    pos = d
    pair_index = {}
    for i in range(d):
        for j in range(i + 1, d):
            pair_index[(i, j)] = pos
            pos += 1
    for i in range(d):
        for j in range(i + 1, d):
            for a in (-1.0, 1.0):
                for b in (-1.0, 1.0):
                    row = np.zeros(k)
                    row[i] = a
                    row[j] = b
                    row[pair_index[(i, j)]] = a * b
                    rows.append(row)
    return np.array(rows)


def _logdet_interior(f: np.ndarray, shift: np.ndarray, d: int,
                     pairwise: bool):
    """Interior-point Newton maximization over the free moment coordinates.

    The PSD constraint (and, optionally, the pairwise mean inequalities)
    enter through log barriers whose weight decreases along the central
    path; gradients and Hessians of the log-determinant terms come from
    closed-form expressions in the inverse matrices, so each step is
    exact.  Returns the point, its objective value and the Newton count.
    """
    basis = _SymmetricBasis(d)
    k = basis.k
    cons = _pairwise_rows(d, k) if pairwise else np.zeros((0, k))

    v = np.zeros(k)
    beta = 1.0
    f_grad = basis.gradient(f)  # <F, E_a> = 2 F_pq
    steps = 0
    while True:
        for _ in range(80):
            s = basis.matrix(v)
            a_inv = np.linalg.inv(s + shift)
            s_inv = np.linalg.inv(s)
            grad = (f_grad + 0.5 * basis.gradient(a_inv)
                    + beta * basis.gradient(s_inv))
            hess = 0.5 * basis.hessian(a_inv) + beta * basis.hessian(s_inv)
            if len(cons):
                g_vals = 1.0 + cons @ v
                grad = grad + beta * cons.T @ (1.0 / g_vals)
                hess = hess + beta * (cons.T * (1.0 / g_vals**2)) @ cons
            try:
                dv = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                dv = np.linalg.lstsq(hess, grad, rcond=None)[0]
            decrement = 0.5 * float(grad @ dv)
            step = 1.0
            for _ in range(60):
                v_new = v + step * dv
                if not len(cons) or np.all(1.0 + cons @ v_new > 0):
                    try:
                        np.linalg.cholesky(basis.matrix(v_new))
                        break
                    except np.linalg.LinAlgError:
                        pass
                step /= 2.0
            else:
                step = 0.0
            if step == 0.0:
                break
            v = v + step * dv
            steps += 1
            if decrement < 1e-12:
                break
        if beta < 1e-9:
            break
        beta /= 10.0

    s = basis.matrix(v)
    sign, logdet = np.linalg.slogdet(s + shift)
    val = float(np.tensordot(s, f)) + 0.5 * logdet
    return s, val, steps


def logdet_bound(model: IsingModel, pairwise_constraints: bool = False,
                 tol: float = 1e-8, max_iterations: int = 20_000) -> BaselineResult:
    """Gaussian-entropy upper bound on the log-partition value.

    Maximizes ``tr(S F) + (1/2) log det(S + diag(0, I)/3)`` over unit-diagonal
    PSD moment matrices (optionally intersected with the pairwise mean
    inequalities), adds the Gaussian entropy constant and converts to the
    uniform base measure.
    """
    d = model.d
    f = parameter_matrix(model, base_feature_set(d))
    shift = np.diag([0.0] + [1.0 / 3.0] * d)
    constant = 0.5 * d * np.log(np.pi * np.e / 2.0) - d * np.log(2.0)

    s, val, iterations = _logdet_interior(f, shift, d, pairwise_constraints)
    converged = True

    mu_node = s[0, 1:].copy()
    mu_edge = {(i, j): float(s[i + 1, j + 1]) for i, j in model.graph.edges}
    pseudo = PseudoMarginals(mu_node=mu_node, mu_edge=mu_edge)
    return BaselineResult(
        bound=val + constant,
        marginals=pseudo.node_probabilities(),
        converged=converged,
        iterations=iterations,
        pseudo=pseudo,
    )


# ---------------------------------------------------------------------------
# tree-reweighted message passing


def max_weight_spanning_tree(graph: GraphTopology, weights: np.ndarray) -> np.ndarray:
    """0/1 indicator of a maximum-weight spanning tree over the graph edges."""
    if not graph.is_connected():
        raise ValueError("spanning tree requires a connected graph")
    d = graph.d
    if d == 1:
        return np.zeros(0)
    # negate and shift so every entry is strictly negative: entries stay
    # explicit in the sparse graph, and the minimum spanning tree of the
    # negated weights is the maximum spanning tree of the original ones
    w = np.asarray(weights, dtype=float)
    vals = (w.min() - 1.0) - w
    rows = [i for i, _ in graph.edges]
    cols = [j for _, j in graph.edges]
    mat = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(d, d))
    tree = minimum_spanning_tree(mat).tocoo()
    chosen = {(min(i, j), max(i, j)) for i, j in zip(tree.row, tree.col)}
    return np.array([1.0 if e in chosen else 0.0 for e in graph.edges])


def spanning_tree_cg_step(graph: GraphTopology, weights: np.ndarray,
                          rho: EdgeAppearance, step: float) -> EdgeAppearance:
    """Conditional-gradient move toward the best spanning tree vertex."""
    if not 0.0 <= step <= 1.0:
        raise ValueError("step must lie in [0, 1]")
    indicator = max_weight_spanning_tree(graph, weights)
    return EdgeAppearance(edges=graph.edges,
                          rho=(1.0 - step) * rho.rho + step * indicator)


def uniform_tree_appearance(graph: GraphTopology) -> np.ndarray:
    """Edge appearance probabilities of the uniform spanning tree.

    Equal to the effective resistances of the unweighted graph (2/d on the
    complete graph); strictly positive on every edge and summing to d - 1,
    so they are an interior point of the spanning-tree polytope.
    """
    if not graph.is_connected():
        raise ValueError("spanning-tree appearances require a connected graph")
    d = graph.d
    lap = np.zeros((d, d))
    for i, j in graph.edges:
        lap[i, i] += 1.0
        lap[j, j] += 1.0
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
    pinv = np.linalg.pinv(lap)
    return np.array([pinv[i, i] + pinv[j, j] - 2.0 * pinv[i, j]
                     for i, j in graph.edges])


def singleton_entropy(p_up: float) -> float:
    """Entropy of a single spin with P(x = +1) = p_up."""
    out = 0.0
    for p in (p_up, 1.0 - p_up):
        if p > 0:
            out -= p * np.log(p)
    return out


def edge_mutual_information(belief: np.ndarray) -> float:
    """Mutual information of a 2x2 joint belief (rows x_s, cols x_t)."""
    b = np.asarray(belief, dtype=float)
    ps = b.sum(axis=1)
    pt = b.sum(axis=0)
    out = 0.0
    for r in range(2):
        for c in range(2):
            if b[r, c] > 0:
                out += b[r, c] * np.log(b[r, c] / (ps[r] * pt[c]))
    return max(out, 0.0)


class _MessagePassing:
    """Vectorized reweighted sum-product on directed edges, in log domain."""

    SPINS = np.array([-1.0, 1.0])

    def __init__(self, model: IsingModel, rho: np.ndarray):
        self.model = model
        edges = model.graph.edges
        self.edges = edges
        # directed edge e=2k goes i->j, e=2k+1 goes j->i for undirected k
        self.n_dir = 2 * len(edges)
        self.tail = np.empty(self.n_dir, dtype=int)   # message source node t
        self.head = np.empty(self.n_dir, dtype=int)   # message target node s
        self.rev = np.empty(self.n_dir, dtype=int)
        self.rho_dir = np.empty(self.n_dir)
        self.coupling = np.empty(self.n_dir)
        for k, (i, j) in enumerate(edges):
            self.tail[2 * k], self.head[2 * k] = i, j
            self.tail[2 * k + 1], self.head[2 * k + 1] = j, i
            self.rev[2 * k], self.rev[2 * k + 1] = 2 * k + 1, 2 * k
            self.rho_dir[2 * k] = self.rho_dir[2 * k + 1] = rho[k]
            self.coupling[2 * k] = self.coupling[2 * k + 1] = model.quadratic.get((i, j), 0.0)
        self.theta = np.asarray(model.linear, dtype=float)
        active = self.rho_dir > 0
        if not np.all(active) and np.any(self.coupling[~active] != 0):
            raise ValueError("zero edge appearance on an active coupling")
        # pairwise kernel K[e, x_s, x_t] = theta_st * x_s * x_t / rho_st
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self.rho_dir > 0, self.coupling / np.maximum(self.rho_dir, 1e-300), 0.0)
        self.kernel = ratio[:, None, None] * np.einsum("a,b->ab", self.SPINS, self.SPINS)

    def aggregate(self, logm: np.ndarray) -> np.ndarray:
        """agg[t, x_t] = sum over incoming edges of rho * log message."""
        agg = np.zeros((self.model.d, 2))
        np.add.at(agg, self.head, self.rho_dir[:, None] * logm)
        return agg

    def sweep(self, logm: np.ndarray, damping: float) -> tuple[np.ndarray, float]:
        agg = self.aggregate(logm)
        # input[e, x_t]: local field + incoming aggregate at the tail,
        # with the reverse message removed regardless of its weight
        local = self.theta[self.tail][:, None] * self.SPINS[None, :]
        inbound = local + agg[self.tail] - logm[self.rev]
        stacked = self.kernel + inbound[:, None, :]
        proposal = np.logaddexp(stacked[:, :, 0], stacked[:, :, 1])
        proposal -= np.logaddexp(proposal[:, 0], proposal[:, 1])[:, None]
        new = damping * logm + (1.0 - damping) * proposal
        if not np.all(np.isfinite(new)):
            raise FloatingPointError("message values diverged (non-finite)")
        delta = float(np.max(np.abs(new - logm))) if len(new) else 0.0
        return new, delta

    def beliefs(self, logm: np.ndarray):
        agg = self.aggregate(logm)
        node_log = self.theta[:, None] * self.SPINS[None, :] + agg
        node_log -= node_log.max(axis=1, keepdims=True)
        node = np.exp(node_log)
        node /= node.sum(axis=1, keepdims=True)

        edge_beliefs = []
        for k, (i, j) in enumerate(self.edges):
            e_ij = 2 * k       # i -> j
            e_ji = 2 * k + 1   # j -> i
            row = (self.theta[i] * self.SPINS + agg[i] - logm[e_ji])[:, None]
            col = (self.theta[j] * self.SPINS + agg[j] - logm[e_ij])[None, :]
            logb = self.kernel[e_ij].T * 1.0
            # kernel[e_ij] is indexed [x_j, x_i]; transpose to [x_i, x_j]
            logb = logb + row + col
            logb -= logb.max()
            b = np.exp(logb)
            b /= b.sum()
            edge_beliefs.append(b)
        return node, edge_beliefs


def _resolve_rho(model: IsingModel, rho_mode, rho_edges) -> np.ndarray:
    edges = model.graph.edges
    if rho_mode == "fixed_uniform":
        if not edges:
            return np.zeros(0)
        return np.full(len(edges), (model.d - 1) / len(edges))
    if rho_mode == "tree_indicator":
        tree_edges = rho_edges if rho_edges is not None else edges
        if not _edges_form_spanning_tree(model.d, tree_edges):
            raise ValueError("tree_indicator requires spanning-tree edges")
        chosen = {(min(i, j), max(i, j)) for i, j in tree_edges}
        return np.array([1.0 if e in chosen else 0.0 for e in edges])
    raise ValueError(f"unknown rho mode {rho_mode!r}")


def _edges_form_spanning_tree(d: int, edges) -> bool:
    from .model import _is_tree

    return d == 1 or _is_tree(d, tuple((min(i, j), max(i, j)) for i, j in edges))


def _trw_value(model: IsingModel, mp: _MessagePassing, logm: np.ndarray,
               rho: np.ndarray):
    node, edge_beliefs = mp.beliefs(logm)
    mu_node = node[:, 1] - node[:, 0]
    value = float(model.linear @ mu_node)
    entropy = float(sum(singleton_entropy(node[i, 1]) for i in range(model.d)))
    mu_edge = {}
    for k, (i, j) in enumerate(model.graph.edges):
        b = edge_beliefs[k]
        mij = b[1, 1] + b[0, 0] - b[1, 0] - b[0, 1]
        mu_edge[(i, j)] = float(mij)
        value += model.quadratic.get((i, j), 0.0) * mij
        entropy -= rho[k] * edge_mutual_information(b)
    bound = value + entropy - model.d * np.log(2.0)
    pseudo = PseudoMarginals(mu_node=mu_node, mu_edge=mu_edge)
    return bound, pseudo


def _trw_fixed_rho(model: IsingModel, rho: np.ndarray, max_mp_iters: int,
                   damping: float, logm0: np.ndarray | None = None,
                   message_tol: float = 1e-10, deltas: list | None = None):
    mp = _MessagePassing(model, rho)
    logm = np.zeros((mp.n_dir, 2)) if logm0 is None else logm0.copy()
    converged = mp.n_dir == 0
    sweeps = 0
    while sweeps < max_mp_iters and not converged:
        sweeps += 1
        logm, delta = mp.sweep(logm, damping)
        if deltas is not None:
            deltas.append((sweeps, delta))
        converged = delta <= message_tol
    bound, pseudo = _trw_value(model, mp, logm, rho)
    return bound, pseudo, converged, sweeps, logm, mp


def write_trw_diagnostics(deltas, path) -> None:
    """Persist per-sweep message residuals as (iteration, max_delta) CSV."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "max_message_delta"])
        for it, delta in deltas:
            writer.writerow([it, format(delta, ".17g")])


def trw_bound(model: IsingModel, rho_mode: str = "optimize",
              max_mp_iters: int = 10_000, damping: float = 0.5,
              rho_edges=None, max_cg_steps: int = 20,
              message_tol: float = 1e-10,
              diagnostics: list | None = None) -> BaselineResult:
    """Tree-reweighted upper bound on the log-partition value.

    Runs damped reweighted sum-product to a fixed point for the requested
    edge-appearance mode.  In ``optimize`` mode the appearance vector is
    improved by conditional-gradient steps over the spanning-tree
    polytope, moving toward the maximum-weight spanning tree under the
    current edge mutual informations, with halving line search so the
    bound never increases.  A run that exhausts its message budget is
    flagged, since only converged runs certify an upper bound.
    """
    edges = model.graph.edges
    if rho_mode in ("fixed_uniform", "tree_indicator"):
        rho = _resolve_rho(model, rho_mode, rho_edges)
        bound, pseudo, conv, iters, _, _ = _trw_fixed_rho(
            model, rho, max_mp_iters, damping, message_tol=message_tol,
            deltas=diagnostics)
        return BaselineResult(bound=bound, marginals=pseudo.node_probabilities(),
                              converged=conv, iterations=iters, pseudo=pseudo,
                              rho=EdgeAppearance(edges, rho) if len(edges) else None)
    if rho_mode != "optimize":
        raise ValueError(f"unknown rho mode {rho_mode!r}")
    if not model.graph.is_connected():
        raise ValueError("rho optimization requires a connected graph")
    if not edges:
        bound, pseudo, conv, iters, _, _ = _trw_fixed_rho(
            model, np.zeros(0), max_mp_iters, damping, message_tol=message_tol)
        return BaselineResult(bound=bound, marginals=pseudo.node_probabilities(),
                              converged=conv, iterations=iters, pseudo=pseudo)

    rho = uniform_tree_appearance(model.graph)
    bound, pseudo, conv, iters, logm, mp = _trw_fixed_rho(
        model, rho, max_mp_iters, damping, message_tol=message_tol,
        deltas=diagnostics)
    total_iters = iters
    all_converged = conv
    for _ in range(max_cg_steps):
        _, edge_beliefs = mp.beliefs(logm)
        infos = np.array([edge_mutual_information(b) for b in edge_beliefs])
        appearance = EdgeAppearance(edges, rho)
        improved = False
        # full steps would zero the appearance of off-tree couplings, so
        # the line search stays strictly inside the polytope
        for step in (0.5, 0.25, 0.125, 0.0625):
            cand = spanning_tree_cg_step(model.graph, infos, appearance, step)
            cand_bound, cand_pseudo, cand_conv, cand_iters, cand_logm, cand_mp = \
                _trw_fixed_rho(model, cand.rho, max_mp_iters, damping,
                               logm0=logm, message_tol=message_tol)
            total_iters += cand_iters
            if cand_conv and cand_bound < bound - 1e-12:
                rho, bound, pseudo = cand.rho, cand_bound, cand_pseudo
                logm, mp = cand_logm, cand_mp
                all_converged = all_converged and cand_conv
                improved = True
                break
        if not improved:
            break
    return BaselineResult(bound=bound, marginals=pseudo.node_probabilities(),
                          converged=all_converged, iterations=total_iters,
                          pseudo=pseudo, rho=EdgeAppearance(edges, rho))
