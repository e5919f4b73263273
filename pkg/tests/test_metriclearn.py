import numpy as np
import pytest

from isingbound.exact import (ExactDistribution, exact_distribution,
                              kl_divergence, log_partition, moment_matrix,
                              uniform_distribution)
from isingbound.features import base_feature_set
from isingbound.matfun import entropy_integrand
from isingbound.metriclearn import (kelley_bound, kelley_solve,
                                    max_diag_divergence, max_diag_subgradient)
from isingbound.model import (GraphTopology, ParameterScheme,
                              parameter_matrix, sample_parameters)
from isingbound.qtsolver import SolverConfig, primal_dual_solve, quantum_divergence


def logdet_model(d, seed, coupling="mixed", w=0.4):
    g = GraphTopology.complete(d)
    return sample_parameters(ParameterScheme("logdet", coupling, w), g, d, seed)


class TestMaxDiagDivergence:
    def test_zero_at_equal(self):
        a = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert max_diag_divergence(a, a) == pytest.approx(0.0, abs=1e-12)

    def test_diagonal_example(self):
        value = max_diag_divergence(np.diag([1.6, 0.4]), np.eye(2))
        h = entropy_integrand(np.array([1.6, 0.4]))
        assert value == pytest.approx(max(h), abs=1e-12)
        assert value == pytest.approx(0.2334837, abs=1e-6)

    def test_dominates_trace_divergence(self, rng):
        from tests.conftest import random_psd

        for _ in range(5):
            a = random_psd(rng, 4)
            b = random_psd(rng, 4) + 0.5 * np.eye(4)
            assert max_diag_divergence(a, b) >= quantum_divergence(a, b) - 1e-10

    def test_still_lower_bounds_kl(self, rng):
        # a feasible diagonal weighting keeps the divergence below the KL
        from tests.conftest import random_distribution

        fs = base_feature_set(4)
        for _ in range(5):
            p = ExactDistribution(4, random_distribution(rng, 4))
            sigma = moment_matrix(p, fs)
            lhs = max_diag_divergence(sigma.entries, np.eye(fs.n))
            assert lhs <= kl_divergence(p, uniform_distribution(4)) + 1e-8


class TestSubgradient:
    def test_zero_at_identity(self):
        assert np.allclose(max_diag_subgradient(np.eye(4)), 0.0, atol=1e-12)

    def test_diagonal_case_single_coordinate(self):
        s = np.diag([0.5, 2.0, 1.0])
        grad = max_diag_subgradient(s)
        h = entropy_integrand(np.array([0.5, 2.0, 1.0]))
        argmax = int(np.argmax(h))
        expected = np.zeros((3, 3))
        expected[argmax, argmax] = np.log(s[argmax, argmax])
        assert np.allclose(grad, expected, atol=1e-12)

    def test_supports_the_function_from_below(self, rng):
        # convexity: g(T) >= g(S) + <grad, T - S> for the attained entry
        from tests.conftest import random_psd

        def g(mat):
            lam, u = np.linalg.eigh(mat)
            return float(np.max(np.diag((u * entropy_integrand(
                np.maximum(lam, 0.0))) @ u.T)))

        for _ in range(5):
            s = random_psd(rng, 4) + 0.2 * np.eye(4)
            t = random_psd(rng, 4) + 0.2 * np.eye(4)
            grad = max_diag_subgradient(s)
            assert g(t) >= g(s) + np.tensordot(grad, t - s) - 1e-8


class TestKelleyBound:
    def test_zero_matrix(self):
        fs = base_feature_set(3)
        result = kelley_solve(np.zeros((4, 4)), fs, epsilon=1.0, tol=1e-4)
        assert abs(result.bound) <= 1e-4
        assert result.converged

    def test_never_looser_than_uniform_weighting(self):
        for d, seed in ((3, 0), (4, 1), (5, 2)):
            m = logdet_model(d, seed)
            fs = base_feature_set(d)
            f = parameter_matrix(m, fs)
            diag = kelley_solve(f, fs, epsilon=1.0, tol=1e-4)
            qt = primal_dual_solve(f, fs, SolverConfig(tolerance=1e-6))
            assert diag.converged
            assert diag.bound <= qt.bound + 2e-4

    def test_upper_bounds_log_partition(self):
        for d, seed in ((3, 5), (4, 6), (5, 7)):
            m = logdet_model(d, seed)
            fs = base_feature_set(d)
            result = kelley_solve(parameter_matrix(m, fs), fs, epsilon=1.0,
                                  tol=1e-4)
            assert result.bound >= log_partition(m, 1.0) - 1e-6

    def test_bracket_invariants(self):
        m = logdet_model(4, 11)
        fs = base_feature_set(4)
        result = kelley_solve(parameter_matrix(m, fs), fs, epsilon=1.0, tol=1e-4)
        state = result.state
        assert state.lower_bound <= state.upper_bound + 1e-9
        assert state.upper_bound - state.lower_bound < 1e-4

    def test_zero_temperature_linear_case(self):
        g = GraphTopology.independent(4)
        m = sample_parameters(ParameterScheme("gaussian"), g, 4, 0)
        fs = base_feature_set(4)
        result = kelley_solve(parameter_matrix(m, fs), fs, epsilon=0.0, tol=1e-4)
        assert result.converged
        assert result.bound == pytest.approx(np.abs(m.linear).sum(), abs=2e-4)

    def test_budget_exhaustion_flagged(self):
        m = logdet_model(4, 3)
        fs = base_feature_set(4)
        result = kelley_solve(parameter_matrix(m, fs), fs, epsilon=1.0,
                              tol=1e-10, max_cuts=3)
        assert not result.converged
        assert np.isfinite(result.bound)
        # the certificate holds even without convergence
        assert result.bound >= log_partition(m, 1.0) - 1e-6

    def test_scalar_wrapper(self):
        fs = base_feature_set(3)
        value = kelley_bound(np.zeros((4, 4)), fs, epsilon=1.0, tol=1e-4)
        assert abs(value) <= 1e-4
