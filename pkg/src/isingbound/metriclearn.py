"""Diagonal-metric tightening of the divergence and its cutting-plane solver.

Replacing the uniform trace weighting of the matrix divergence by the best
diagonal weighting turns the entropy term into the maximum diagonal entry
of ``h(S)``, which is convex but nonsmooth.  The resulting bound is
computed with Kelley's method: supergradient cuts of the concave objective
are accumulated, and the master problem (maximize the cut minimum over the
constraint set) is solved in XOR-class coordinates with a log-barrier
Newton method.  Every reported value is certified from above through the
master's dual: the barrier multipliers for the cuts and the PSD block are
repaired to exact dual feasibility, so weak duality bounds the master
optimum, which itself dominates the relaxed objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSet, XorClassTable, xor_class_table
from .matfun import (entropy_integrand, entropy_integrand_derivative,
                     spectral_gradient)
from .qtsolver import _divergence_core, feasible_point

__all__ = [
    "KelleyState",
    "KelleyResult",
    "max_diag_divergence",
    "max_diag_subgradient",
    "kelley_solve",
    "kelley_bound",
]


def max_diag_divergence(a: np.ndarray, b: np.ndarray) -> float:
    """Largest diagonal entry of the divergence matrix of (a, b).

    Equals the divergence maximized over diagonal weightings summing to
    one, so it dominates the uniform-trace divergence.
    """
    return float(np.max(np.diag(_divergence_core(a, b))))


def _diag_entropy(s: np.ndarray) -> np.ndarray:
    """diag of h(S) with h(t) = t log t - t + 1, eigenvalues clipped at 0."""
    lam, u = np.linalg.eigh((s + s.T) / 2.0)
    lam = np.maximum(lam, 0.0)
    return (u * entropy_integrand(lam)) @ u.T


def max_diag_subgradient(s: np.ndarray) -> np.ndarray:
    """A subgradient of ``S -> max(diag(h(S)))`` at a PSD matrix.

    Uses the gradient of the attaining diagonal entry (smallest index on
    ties), computed through divided differences of h.
    """
    s = np.asarray(s, dtype=float)
    hmat = _diag_entropy(s)
    i = int(np.argmax(np.diag(hmat)))
    basis = np.zeros_like(s)
    basis[i, i] = 1.0
    return spectral_gradient(entropy_integrand, entropy_integrand_derivative,
                             s, basis)


def _all_diag_gradients(s: np.ndarray):
    """Values and gradients of every diagonal entry of h(S), in one pass.

    Each diagonal entry is itself convex in S and everywhere below their
    maximum, so every (value, gradient) pair yields a valid cut; returning
    all of them enriches the cutting-plane model n-fold per round.
    """
    s = np.asarray(s, dtype=float)
    lam, u = np.linalg.eigh((s + s.T) / 2.0)
    lam = np.maximum(lam, 0.0)
    hv = entropy_integrand(lam)
    diff = lam[:, None] - lam[None, :]
    close = np.abs(diff) <= 1e-10 * np.maximum(1.0, np.abs(lam))[:, None]
    kernel = np.empty_like(diff)
    kernel[~close] = (hv[:, None] - hv[None, :])[~close] / diff[~close]
    mid = (lam[:, None] + lam[None, :]) / 2.0
    kernel[close] = entropy_integrand_derivative(np.maximum(mid[close], 1e-300))
    hmat = (u * hv) @ u.T
    values = np.diag(hmat).copy()
    # gradient of entry i: U (kernel o v_i v_i^T) U^T with v_i the i-th row of U
    grads = np.einsum("ik,kl,il,ak,bl->iab", u, kernel, u, u, u, optimize=True)
    grads = (grads + np.transpose(grads, (0, 2, 1))) / 2.0
    return values, grads


@dataclass
class KelleyState:
    """Bracketing state of the cutting-plane loop, in minimization terms."""

    cuts: list[tuple[np.ndarray, float, np.ndarray]] = field(default_factory=list)
    lower_bound: float = -np.inf
    upper_bound: float = np.inf

    def record(self, point, value, subgradient, lower, upper):
        self.cuts.append((point, value, subgradient))
        self.lower_bound = max(self.lower_bound, lower)
        self.upper_bound = min(self.upper_bound, upper)


@dataclass
class KelleyResult:
    bound: float
    converged: bool
    cuts_used: int
    state: KelleyState


class _ClassCoordinates:
    """Dense basis of the class span: Sigma(c) = I + sum_a c_a B_a."""

    def __init__(self, table: XorClassTable):
        self.table = table
        self.n = table.n
        ids = table.class_of
        self.n_free = table.n_classes - 1
        self.basis = np.stack([np.asarray(ids == a, dtype=float)
                               for a in range(1, table.n_classes)])

    def matrix(self, c: np.ndarray) -> np.ndarray:
        return np.eye(self.n) + np.einsum("a,aij->ij", c, self.basis)

    def inner(self, m: np.ndarray) -> np.ndarray:
        """<m, B_a> for every free class."""
        sums = np.bincount(self.table.class_of.ravel(), weights=m.ravel(),
                           minlength=self.table.n_classes)
        return sums[1:]

    def logdet_hessian(self, sigma_inv: np.ndarray) -> np.ndarray:
        """tr(S^-1 B_a S^-1 B_b) for every free class pair."""
        inv_b = np.einsum("ij,ajk,kl->ail", sigma_inv, self.basis, sigma_inv)
        return np.einsum("aij,bij->ab", inv_b, self.basis)


def _solve_master(coords: _ClassCoordinates, consts: np.ndarray,
                  grads: np.ndarray, warm: tuple[np.ndarray, float] | None = None):
    """Maximize t subject to t <= consts_i + grads_i . c and Sigma(c) PSD.

    Log-barrier Newton path following over (c, t); returns the central
    point and the cut weights (the barrier multipliers, which sum to one
    on the central path).  A warm (c, t) from the previous round skips
    the early barrier stages.
    """
    k = coords.n_free

    def slacks(c, t):
        return consts + grads @ c - t

    c = None
    if warm is not None:
        # pull the previous center back toward the identity so the PSD
        # block is strictly interior again
        candidate = 0.9 * warm[0]
        try:
            np.linalg.cholesky(coords.matrix(candidate) - 1e-12 * np.eye(coords.n))
            c = candidate
            t = min(warm[1], float(slacks(c, 0.0).min()) - 1e-3)
            mu = 1e-2
        except np.linalg.LinAlgError:
            c = None
    if c is None:
        c = np.zeros(k)
        t = float(slacks(c, 0.0).min()) - 1.0
        mu = 1.0

    while True:
        for _ in range(30):
            s = slacks(c, t)
            sigma = coords.matrix(c)
            try:
                sigma_inv = np.linalg.inv(sigma)
            except np.linalg.LinAlgError:
                sigma_inv = np.linalg.inv(sigma + 1e-12 * np.eye(coords.n))
            grad_c = -grads.T @ (1.0 / s) - coords.inner(sigma_inv)
            grad_t = -1.0 / mu + np.sum(1.0 / s)
            h_logdet = coords.logdet_hessian(sigma_inv)
            w2 = 1.0 / s**2
            h_cc = (grads.T * w2) @ grads + h_logdet
            h_ct = -grads.T @ w2
            h_tt = np.sum(w2)
            hess = np.zeros((k + 1, k + 1))
            hess[:k, :k] = h_cc
            hess[:k, k] = h_ct
            hess[k, :k] = h_ct
            hess[k, k] = h_tt
            g = np.concatenate([grad_c, [grad_t]])
            try:
                dv = np.linalg.solve(hess, -g)
            except np.linalg.LinAlgError:
                dv = np.linalg.lstsq(hess, -g, rcond=None)[0]
            decrement = -0.5 * g @ dv
            step = 1.0
            for _ in range(60):
                c_new = c + step * dv[:k]
                t_new = t + step * dv[k]
                s_new = slacks(c_new, t_new)
                if s_new.min() > 0:
                    try:
                        np.linalg.cholesky(coords.matrix(c_new))
                        break
                    except np.linalg.LinAlgError:
                        pass
                step /= 2.0
            else:
                step = 0.0
            if step == 0.0:
                break
            c = c + step * dv[:k]
            t = t + step * dv[k]
            if decrement < 1e-11:
                break
        if mu < 1e-9:
            break
        mu /= 10.0

    s = slacks(c, t)
    weights = np.maximum(mu / s, 0.0)
    weights /= weights.sum()
    psd_multiplier = mu * np.linalg.inv(coords.matrix(c) + 1e-14 * np.eye(coords.n))
    return c, t, weights, psd_multiplier


def kelley_solve(f: np.ndarray, features: FeatureSet, epsilon: float,
                 tol: float = 1e-4, max_cuts: int = 200) -> KelleyResult:
    """Certified upper bound with the diagonal-metric divergence term.

    The returned bound never falls below the true relaxed optimum: every
    round certifies the master value from its repaired dual multipliers,
    and the cut model majorizes the concave objective everywhere.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    table = xor_class_table(features)
    coords = _ClassCoordinates(table)
    n = features.n
    f = (np.asarray(f, dtype=float) + np.asarray(f, dtype=float).T) / 2.0

    def objective(x: np.ndarray) -> float:
        value = float(np.tensordot(x, f))
        if epsilon > 0:
            value -= epsilon * float(np.max(np.diag(_diag_entropy(x))))
        return value

    def supergradient(x: np.ndarray) -> np.ndarray:
        if epsilon == 0:
            return f
        return f - epsilon * max_diag_subgradient(x)

    state = KelleyState()
    x = np.eye(n)
    offsets: list[float] = []      # value - <grad, point>, per cut
    cut_grads: list[np.ndarray] = []
    class_grads: list[np.ndarray] = []
    best_upper = np.inf
    best_lower = -np.inf
    converged = False
    used = 0

    def add_cut(value: float, grad: np.ndarray, point: np.ndarray):
        offsets.append(value - float(np.tensordot(grad, point)))
        cut_grads.append(grad)
        class_grads.append(coords.inner(grad))

    def certify(consts, weights, psd_multiplier) -> float:
        """Exact weak-duality bound on the master optimum.

        For any nonnegative cut weights summing to one and any PSD
        multiplier Z whose class inner products cancel the weighted cut
        gradients, the master value is at most ``w . consts + tr(Z)``.
        The barrier multipliers nearly satisfy the cancellation; the
        residual is spread over each class and any lost positive
        semidefiniteness is restored along the identity, which leaves the
        off-diagonal class sums untouched.
        """
        residual = weights @ np.array(class_grads) + coords.inner(psd_multiplier)
        z = psd_multiplier.copy()
        for a, b in enumerate(coords.basis):
            z -= residual[a] / table.class_size[a + 1] * b
        lam_min = float(np.linalg.eigvalsh(z).min())
        shift = max(0.0, -lam_min)
        return float(weights @ consts + np.trace(z) + n * shift)

    warm = None
    for used in range(1, max_cuts + 1):
        value = objective(x)
        grad = supergradient(x)
        best_lower = max(best_lower, value)
        if epsilon > 0:
            # one valid cut per diagonal entry of h(x), not just the argmax
            h_values, h_grads = _all_diag_gradients(x)
            linear_part = float(np.tensordot(x, f))
            for i in range(n):
                add_cut(linear_part - epsilon * h_values[i],
                        f - epsilon * h_grads[i], x)
        else:
            add_cut(value, grad, x)

        consts = np.array([o + np.trace(g) for o, g in zip(offsets, cut_grads)])
        c, t, weights, psd_multiplier = _solve_master(
            coords, consts, np.array(class_grads), warm=warm)
        warm = (c, t)

        best_upper = min(best_upper, certify(consts, weights, psd_multiplier))
        state.record(x, -value, -grad, lower=-best_upper, upper=-best_lower)
        if best_upper - best_lower < tol:
            converged = True
            break

        rounded, _ = feasible_point(coords.matrix(c), table)
        # keep strictly positive eigenvalues so the entropy gradient exists
        x = (1.0 - 1e-8) * rounded + 1e-8 * np.eye(n)

    return KelleyResult(best_upper, converged, used, state)


def kelley_bound(f: np.ndarray, features: FeatureSet, epsilon: float,
                 tol: float = 1e-4, max_cuts: int = 200) -> float:
    return kelley_solve(f, features, epsilon, tol, max_cuts).bound
