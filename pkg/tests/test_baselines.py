import numpy as np
import pytest

from isingbound.baselines import (EdgeAppearance, edge_mutual_information,
                                  logdet_bound, max_weight_spanning_tree,
                                  singleton_entropy, spanning_tree_cg_step,
                                  trw_bound, uniform_tree_appearance)
from isingbound.exact import log_partition
from isingbound.model import (GraphTopology, IsingModel, ParameterScheme,
                              random_tree, sample_parameters)


def zero_model(d):
    return IsingModel(d=d, linear=np.zeros(d), quadratic={},
                      graph=GraphTopology.independent(d))


def logdet_model(d, seed, coupling="attractive", w=0.4):
    g = GraphTopology.complete(d)
    return sample_parameters(ParameterScheme("logdet", coupling, w), g, d, seed)


class TestLogDet:
    def test_uniform_closed_form(self):
        result = logdet_bound(zero_model(5))
        target = 5 * (np.log(np.sqrt(2 * np.pi * np.e / 3)) - np.log(2))
        assert result.bound == pytest.approx(target, abs=1e-6)
        assert np.allclose(result.marginals, 0.5, atol=1e-6)

    def test_gaussian_entropy_exceeds_discrete(self):
        # per-site: log sqrt(2 pi e / 3) > log 2
        assert np.log(np.sqrt(2 * np.pi * np.e / 3)) > np.log(2.0)
        assert logdet_bound(zero_model(5)).bound > 0.0

    @pytest.mark.parametrize("coupling", ["attractive", "mixed", "repulsive"])
    def test_upper_bounds_log_partition(self, coupling):
        for d, seed in ((4, 0), (6, 1), (8, 2)):
            m = logdet_model(d, seed, coupling)
            result = logdet_bound(m)
            assert result.converged
            assert result.bound >= log_partition(m, 1.0) - 1e-6

    def test_pairwise_tightens(self):
        for seed in range(3):
            m = logdet_model(5, seed, "attractive", 0.5)
            plain = logdet_bound(m)
            constrained = logdet_bound(m, pairwise_constraints=True)
            assert constrained.bound <= plain.bound + 1e-8
            assert constrained.bound >= log_partition(m, 1.0) - 1e-6
            assert constrained.pseudo.pairwise_consistent(tol=1e-9)

    def test_marginals_in_range(self):
        m = logdet_model(5, 7)
        result = logdet_bound(m)
        assert np.all(result.marginals >= 0.0)
        assert np.all(result.marginals <= 1.0)


class TestEntropyHelpers:
    def test_singleton_entropy_table(self):
        # direct two-state computation
        for p in (0.0, 0.2, 0.5, 0.9, 1.0):
            direct = -sum(q * np.log(q) for q in (p, 1 - p) if q > 0)
            assert singleton_entropy(p) == pytest.approx(direct, abs=1e-12)

    def test_mutual_information_from_table(self):
        b = np.array([[0.4, 0.1], [0.1, 0.4]])
        direct = sum(
            b[r, c] * np.log(b[r, c] / (b[r].sum() * b[:, c].sum()))
            for r in range(2) for c in range(2))
        assert edge_mutual_information(b) == pytest.approx(direct, abs=1e-12)

    def test_independent_table_has_zero_information(self):
        marg = np.array([0.3, 0.7])
        assert edge_mutual_information(np.outer(marg, marg)) == pytest.approx(
            0.0, abs=1e-12)


class TestSpanningTrees:
    def test_max_weight_tree_on_triangle(self):
        g = GraphTopology.complete(3)
        indicator = max_weight_spanning_tree(g, np.array([3.0, 1.0, 2.0]))
        # edges ordered (0,1), (0,2), (1,2): keep the two heaviest
        assert np.allclose(indicator, [1.0, 0.0, 1.0])

    def test_cg_full_step_is_indicator(self):
        g = GraphTopology.complete(3)
        rho = EdgeAppearance(g.edges, np.full(3, 2.0 / 3.0))
        out = spanning_tree_cg_step(g, np.array([3.0, 1.0, 2.0]), rho, 1.0)
        assert np.allclose(out.rho, [1.0, 0.0, 1.0])

    def test_cg_zero_step_unchanged(self):
        g = GraphTopology.complete(3)
        rho = EdgeAppearance(g.edges, np.full(3, 2.0 / 3.0))
        out = spanning_tree_cg_step(g, np.array([1.0, 1.0, 1.0]), rho, 0.0)
        assert np.allclose(out.rho, rho.rho)

    def test_cg_preserves_polytope_mass(self):
        g = GraphTopology.complete(5)
        rho = EdgeAppearance(g.edges, uniform_tree_appearance(g))
        rng = np.random.default_rng(0)
        for _ in range(6):
            rho = spanning_tree_cg_step(g, rng.random(len(g.edges)), rho, 0.3)
            assert np.sum(rho.rho) == pytest.approx(4.0, abs=1e-12)

    def test_uniform_appearance_complete_graph(self):
        g = GraphTopology.complete(5)
        assert np.allclose(uniform_tree_appearance(g), 0.4, atol=1e-12)

    def test_bridge_has_unit_appearance(self):
        g = GraphTopology.custom(4, ((0, 1), (1, 2), (2, 3), (0, 2)))
        rho = uniform_tree_appearance(g)
        bridge = g.edges.index((2, 3))
        assert rho[bridge] == pytest.approx(1.0, abs=1e-12)


class TestTRW:
    def test_zero_model_is_exact(self):
        result = trw_bound(zero_model(5), rho_mode="fixed_uniform")
        assert result.bound == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(result.marginals, 0.5, atol=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_exact_on_trees(self, seed):
        g = random_tree(9, seed)
        m = sample_parameters(ParameterScheme("gaussian"), g, 9, seed + 31)
        result = trw_bound(m, rho_mode="tree_indicator")
        assert result.converged
        assert result.bound == pytest.approx(log_partition(m, 1.0), abs=1e-6)

    def test_pseudo_marginals_consistent(self):
        m = logdet_model(5, 3, "mixed", 0.3)
        result = trw_bound(m, rho_mode="fixed_uniform")
        assert result.pseudo.pairwise_consistent(tol=1e-7)

    def test_upper_bound_random(self):
        for coupling in ("attractive", "mixed"):
            for seed in range(3):
                m = logdet_model(5, seed, coupling, 0.4)
                result = trw_bound(m, rho_mode="optimize")
                assert result.converged
                assert result.bound >= log_partition(m, 1.0) - 1e-6

    def test_optimize_beats_fixed_rho(self):
        m = logdet_model(5, 9, "attractive", 0.5)
        fixed = trw_bound(m, rho_mode="fixed_uniform")
        optimized = trw_bound(m, rho_mode="optimize")
        assert optimized.bound <= fixed.bound + 1e-8

    def test_attractive_strong_coupling_beats_logdet(self):
        # the qualitative ordering at d=5, attractive coupling, w = 0.5
        wins = 0
        for seed in range(5):
            m = logdet_model(5, seed + 20, "attractive", 0.5)
            if trw_bound(m, rho_mode="optimize").bound <= logdet_bound(m).bound:
                wins += 1
        assert wins >= 4

    def test_trw_scheme_model_runs(self):
        g = GraphTopology.complete(6)
        m = sample_parameters(ParameterScheme("trw", "mixed", 0.6), g, 6, 0)
        result = trw_bound(m, rho_mode="fixed_uniform")
        assert result.converged
        assert result.bound >= log_partition(m, 1.0) - 1e-6

    def test_tree_indicator_requires_tree(self):
        m = logdet_model(4, 0)
        with pytest.raises(ValueError):
            trw_bound(m, rho_mode="tree_indicator")

    def test_optimize_requires_connected(self):
        m = zero_model(3)
        with pytest.raises(ValueError):
            trw_bound(m, rho_mode="optimize")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            trw_bound(zero_model(2), rho_mode="nonsense")

    def test_nonconvergence_flagged(self):
        m = logdet_model(5, 1, "attractive", 2.0)
        result = trw_bound(m, rho_mode="fixed_uniform", max_mp_iters=3)
        assert not result.converged

    def test_diagnostics_csv(self, tmp_path):
        from isingbound.baselines import write_trw_diagnostics

        m = logdet_model(4, 2, "mixed", 0.3)
        deltas = []
        trw_bound(m, rho_mode="fixed_uniform", diagnostics=deltas)
        assert deltas and deltas[-1][1] <= 1e-10
        path = tmp_path / "diag.csv"
        write_trw_diagnostics(deltas, path)
        import csv

        rows = list(csv.DictReader(open(path)))
        assert list(rows[0].keys()) == ["iteration", "max_message_delta"]
        assert len(rows) == len(deltas)
