"""Certified bounds on the log-partition function via a matrix-entropy
relaxation, computed with a first-order primal-dual splitting method.

The relaxed problem maximizes ``tr(S F) - (eps/n) tr(S log S)`` over the
outer approximation K' = {S PSD, tr S = n, S constant on XOR classes}.
Each solve tracks two certified values:

* ``bound``: evaluated from the dual iterate through the Fenchel
  conjugates, always an upper bound on the relaxed optimum (hence on the
  log-partition value);
* ``dual_value``: the objective at a rounded feasible moment matrix,
  always a lower bound on the relaxed optimum.

Their difference is the duality gap, nonnegative by construction, and the
stopping criterion.  At temperature zero the entropy disappears and the
same machinery solves the linear program over K', with the upper
certificate obtained by shifting the dual iterate along the identity
until the slack matrix is negative semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import (FeatureSet, MomentMatrix, XorClassTable,
                       project_span, project_span_trace, xor_class_table)
from .matfun import entropy_integrand, wright_omega

__all__ = [
    "SolverConfig",
    "SolverResult",
    "quantum_divergence",
    "von_neumann_term",
    "prox_primal",
    "prox_dual",
    "feasible_point",
    "extract_marginals",
    "primal_dual_solve",
    "zero_temperature_bound",
]

EIGENVALUE_FLOOR = -1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Primal-dual step sizes, stopping rule and temperature.

    The default steps tau=3, sigma=0.3 satisfy tau*sigma < 1, which with
    full extrapolation guarantees convergence of the iterates.
    """

    tau: float = 3.0
    sigma: float = 0.3
    extrapolation: float = 1.0
    tolerance: float = 1e-6
    max_iterations: int = 200_000
    epsilon: float = 1.0
    check_every: int = 25

    def __post_init__(self):
        if self.tau <= 0 or self.sigma <= 0:
            raise ValueError("tau and sigma must be positive")
        if not 0.0 <= self.extrapolation <= 1.0:
            raise ValueError("extrapolation must lie in [0, 1]")
        if self.extrapolation == 1.0 and self.tau * self.sigma >= 1.0:
            raise ValueError("tau * sigma must be < 1 for full extrapolation")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.check_every < 1:
            raise ValueError("check_every must be positive")

    def replace(self, **kw) -> "SolverConfig":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass
class SolverResult:
    """Outcome of one solve; `bound` is the certified upper bound."""

    bound: float
    dual_value: float
    gap: float
    sigma_feasible: MomentMatrix
    iterations: int
    converged: bool
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)


def _clip_psd_eigvals(lam: np.ndarray, context: str) -> np.ndarray:
    if lam.min() < EIGENVALUE_FLOOR * max(1.0, abs(lam.max())):
        raise ValueError(f"{context}: eigenvalue {lam.min():.3e} below PSD floor")
    return np.maximum(lam, 0.0)


def _entropy_trace(lam: np.ndarray) -> float:
    """tr(S log S) from clipped eigenvalues, with 0*log(0) = 0."""
    pos = lam > 0
    return float(np.sum(lam[pos] * np.log(lam[pos])))


def quantum_divergence(a: np.ndarray, b: np.ndarray) -> float:
    """Matrix relative-entropy lower bound on the KL divergence.

    ``(1/n) (tr a log(b^{-1} a) - tr a + tr b)`` evaluated through the
    symmetric form ``(1/n) tr[b^{1/2} h(b^{-1/2} a b^{-1/2}) b^{1/2}]``
    with ``h(t) = t log t - t + 1``; nonnegative, zero iff a = b.
    """
    return float(np.trace(_divergence_core(a, b))) / len(a)


def _divergence_core(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``b^{1/2} h(b^{-1/2} a b^{-1/2}) b^{1/2}`` with h(t)=t log t - t + 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected square matrices of equal size")
    lam_b, u_b = np.linalg.eigh((b + b.T) / 2.0)
    if lam_b.min() <= 0:
        raise ValueError("second argument must be positive definite")
    b_half = (u_b * np.sqrt(lam_b)) @ u_b.T
    b_ihalf = (u_b / np.sqrt(lam_b)) @ u_b.T
    m = b_ihalf @ ((a + a.T) / 2.0) @ b_ihalf
    lam, u = np.linalg.eigh((m + m.T) / 2.0)
    lam = _clip_psd_eigvals(lam, "quantum divergence")
    h = entropy_integrand(lam)
    core = (u * h) @ u.T
    out = b_half @ core @ b_half
    return (out + out.T) / 2.0


def von_neumann_term(s: MomentMatrix | np.ndarray) -> float:
    """Divergence of a moment matrix from the identity.

    For trace-n input this is ``(1/n) tr(S log S)``, the entropy-style
    term of the relaxed objective.
    """
    entries = s.entries if isinstance(s, MomentMatrix) else np.asarray(s, dtype=float)
    lam = np.linalg.eigvalsh((entries + entries.T) / 2.0)
    lam = _clip_psd_eigvals(lam, "entropy term")
    n = len(lam)
    return float((_entropy_trace(lam) - lam.sum() + n) / n)


def prox_primal(s0: np.ndarray, tau: float, f: np.ndarray, epsilon: float,
                n: int) -> np.ndarray:
    """Proximal step of the entropy-minus-linear objective.

    Solves ``log S + (n / (eps tau)) S = (n/eps)(F + S0/tau)`` through the
    spectral map ``t -> lam * omega(t - log lam)`` with lam = tau*eps/n,
    where omega is the Wright omega function.  The output is positive
    definite.
    """
    if epsilon <= 0:
        raise ValueError("prox_primal requires a positive temperature")
    lam_scale = tau * epsilon / n
    m = (n / epsilon) * (f + s0 / tau)
    w, u = np.linalg.eigh((m + m.T) / 2.0)
    vals = lam_scale * wright_omega(w - np.log(lam_scale))
    out = (u * vals) @ u.T
    return (out + out.T) / 2.0


def prox_dual(y0: np.ndarray, sigma: float, table: XorClassTable) -> np.ndarray:
    """Proximal step of the conjugate of the constraint-set indicator.

    Through Moreau's identity this subtracts the projection onto the
    constraint affine space: ``y0 - proj(y0) - (sigma - tr(proj(y0))/n) I``.
    The output always lies in the orthogonal complement of the class span
    plus multiples of the identity, which is exactly dual feasibility.
    """
    n = table.n
    p = project_span(y0, table)
    out = y0 - p
    out[np.diag_indices(n)] -= sigma - np.trace(p) / n
    return out


def feasible_point(s: np.ndarray, table: XorClassTable):
    """Round an iterate to the constraint set, mixing toward the identity.

    Projects onto the class span and trace hyperplane, then blends with I
    just enough to clear negative eigenvalues.  Returns the rounded matrix
    together with its (already computed) eigenvalues.
    """
    p = project_span_trace(np.asarray(s, dtype=float), table)
    lam, _ = np.linalg.eigh(p)
    lam_min = lam[0]
    n = table.n
    if lam_min > 1.0 + 1e-9 and n > 1:
        # trace is n, so the smallest eigenvalue cannot exceed the mean 1
        raise AssertionError("projection produced an impossible spectrum")
    if lam_min < 0.0:
        u = -lam_min / (1.0 - lam_min)
        p *= 1.0 - u
        p[np.diag_indices(n)] += u
        lam = (1.0 - u) * lam + u
    return p, np.maximum(lam, 0.0)


def extract_marginals(s: MomentMatrix) -> np.ndarray:
    """P(x_i = +1) read from the constant-feature row of a moment matrix."""
    s.features.require_base()
    first = s.entries[0, 1:s.features.d + 1]
    return np.clip((1.0 + first) / 2.0, 0.0, 1.0)


def _certified_pair(x, y, f, table, epsilon, n):
    """(bound, dual_value, feasible matrix): the two sides of the gap."""
    p, lam = feasible_point(x, table)
    value_feasible = float(np.tensordot(p, f))
    if epsilon > 0:
        value_feasible -= epsilon / n * _entropy_trace(lam)
        z = np.linalg.eigvalsh(f - y)
        with np.errstate(over="ignore"):
            expsum = np.exp((n / epsilon) * z).sum()
        bound = float(np.trace(y) + (epsilon / n) * expsum - epsilon)
    else:
        z_max = float(np.linalg.eigvalsh(f - y).max())
        bound = float(np.trace(y) + n * max(0.0, z_max))
    return bound, value_feasible, p


def _solve(f: np.ndarray, features: FeatureSet, config: SolverConfig,
           x0: np.ndarray | None, y0: np.ndarray | None,
           collect_trace: bool) -> SolverResult:
    table = xor_class_table(features)
    n = features.n
    f = np.asarray(f, dtype=float)
    if f.shape != (n, n):
        raise ValueError(f"F must be {n}x{n}")
    f = (f + f.T) / 2.0
    eps = config.epsilon
    tau, sigma, theta = config.tau, config.sigma, config.extrapolation

    x = np.eye(n) if x0 is None else np.array(x0, dtype=float)
    y = np.zeros((n, n)) if y0 is None else np.array(y0, dtype=float)
    x_bar = x.copy()

    trace: list[tuple[int, float, float, float]] = []
    best = None
    iterations = 0
    converged = False

    # Early checks let trivial instances stop within a handful of steps;
    # afterwards the rounding cost is amortized over check_every iterations.
    def should_check(t: int) -> bool:
        return t <= 5 or t % config.check_every == 0 or t == config.max_iterations

    for t in range(1, config.max_iterations + 1):
        y = prox_dual(y + sigma * x_bar, sigma, table)
        s0 = x - tau * y
        if eps > 0:
            x_new = prox_primal(s0, tau, f, eps, n)
        else:
            w, u = np.linalg.eigh(s0 + tau * f)
            x_new = (u * np.maximum(w, 0.0)) @ u.T
        x_bar = x_new + theta * (x_new - x)
        x = x_new
        iterations = t
        if should_check(t):
            bound, dual_value, p = _certified_pair(x, y, f, table, eps, n)
            gap = bound - dual_value
            if collect_trace:
                trace.append((t, bound, dual_value, gap))
            if best is None or gap < best[2]:
                best = (bound, dual_value, gap, p, t)
            if gap <= config.tolerance:
                converged = True
                break

    bound, dual_value, gap, p, _ = best
    return SolverResult(
        bound=bound,
        dual_value=dual_value,
        gap=gap,
        sigma_feasible=MomentMatrix(entries=p, features=features),
        iterations=iterations,
        converged=converged,
        trace=trace,
    )


def primal_dual_solve(f: np.ndarray, features: FeatureSet,
                      config: SolverConfig | None = None,
                      x0: np.ndarray | None = None,
                      y0: np.ndarray | None = None,
                      collect_trace: bool = False) -> SolverResult:
    """Solve the entropy relaxation for a parameter matrix F.

    Starts from the identity (the feasible center) and the zero dual
    point unless warm-start iterates are supplied.  Stops once the
    certified gap falls below the tolerance; on iteration exhaustion the
    best certified pair seen is returned with ``converged=False``.
    """
    config = config or SolverConfig()
    if config.epsilon == 0:
        return zero_temperature_bound(f, features, config, x0=x0, y0=y0,
                                      collect_trace=collect_trace)
    return _solve(f, features, config, x0, y0, collect_trace)


def zero_temperature_bound(f: np.ndarray, features: FeatureSet,
                           config: SolverConfig | None = None,
                           x0: np.ndarray | None = None,
                           y0: np.ndarray | None = None,
                           collect_trace: bool = False) -> SolverResult:
    """Certified maximum of ``tr(S F)`` over the constraint set.

    The temperature-zero limit of the relaxation: the primal step becomes
    a PSD projection of a linear move, and the upper certificate shifts
    the dual iterate by the identity until ``F - y`` is negative
    semidefinite.
    """
    config = (config or SolverConfig(epsilon=0.0)).replace(epsilon=0.0)
    return _solve(f, features, config, x0, y0, collect_trace)
