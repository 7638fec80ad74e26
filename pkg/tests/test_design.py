"""Design-module tests: optimizers, Birkhoff decomposition, matchings."""

import itertools
import math

import numpy as np
import pytest

from elochain import (
    ComparisonGraph,
    DesignProblem,
    MatchingDistribution,
    MatchupDistribution,
    RngStream,
    birkhoff_von_neumann,
    build_laplacian,
    build_matching_distribution,
    make_complete,
    make_dumbbell,
    make_path,
    optimize_discrete,
    optimize_sequential,
    permutation_to_matchings,
    spectral_gap,
    stochastic_completion,
)
from elochain.design import project_simplex, _gap_and_fiedler


def gap_of(q: MatchupDistribution) -> float:
    return spectral_gap(build_laplacian(q)).gap


def p3_gap(q1: float) -> float:
    g = make_path(3)
    return gap_of(MatchupDistribution(g, np.array([q1, 1.0 - q1])))


class TestSimplexProjection:
    def test_already_on_simplex(self):
        v = np.array([0.2, 0.3, 0.5])
        assert np.allclose(project_simplex(v), v, atol=1e-15)

    def test_matches_exhaustive_small(self):
        rng = np.random.default_rng(0)
        grid = [
            np.array([a, b, 1.0 - a - b])
            for a in np.linspace(0, 1, 101)
            for b in np.linspace(0, 1, 101)
            if a + b <= 1.0
        ]
        grid = np.array(grid)
        for _ in range(20):
            v = rng.normal(size=3)
            p = project_simplex(v)
            assert p.min() >= -1e-12
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            dists = np.linalg.norm(grid - v, axis=1)
            assert np.linalg.norm(p - v) <= dists.min() + 1e-3


class TestDesignProblem:
    def test_rejects_disconnected(self):
        g = ComparisonGraph(4, ((0, 1), (2, 3)))
        with pytest.raises(ValueError, match="connected"):
            DesignProblem(g, "continuous")

    def test_rejects_unknown_regime(self):
        with pytest.raises(ValueError, match="regime"):
            DesignProblem(make_path(3), "fastest")


class TestOptimizeSequential:
    def test_single_edge_trivial(self):
        g = ComparisonGraph(2, ((0, 1),))
        res = optimize_sequential(DesignProblem(g, "continuous"))
        assert res.weights.weights[0] == pytest.approx(1.0, abs=1e-12)
        assert res.gap == pytest.approx(2.0, abs=1e-9)

    def test_p3_matches_grid_search(self):
        # independent oracle: 1-d grid search over the only free weight
        grid = np.linspace(0.0, 1.0, 2001)
        oracle = max(p3_gap(float(v)) for v in grid)
        res = optimize_sequential(DesignProblem(make_path(3), "continuous"))
        assert oracle == pytest.approx(0.5, abs=1e-6)
        assert res.gap == pytest.approx(oracle, abs=1e-4)
        assert np.allclose(res.weights.weights, [0.5, 0.5], atol=1e-3)

    def test_wrong_regime_rejected(self):
        with pytest.raises(ValueError, match="continuous"):
            optimize_sequential(DesignProblem(make_path(3), "discrete"))

    def test_dominates_uniform_everywhere(self):
        rng = np.random.default_rng(1)
        for n in (4, 6, 9):
            g = make_complete(n)
            res = optimize_sequential(
                DesignProblem(g, "continuous", budget=800, stall_window=200)
            )
            assert res.gap >= gap_of(MatchupDistribution.uniform(g)) - 1e-9

    def test_dumbbell_beats_uniform_tenfold(self):
        g = make_dumbbell(20, 1)
        uniform_gap = gap_of(MatchupDistribution.uniform(g))
        res = optimize_sequential(DesignProblem(g, "continuous"))
        assert res.gap >= 10.0 * uniform_gap
        # diameter of dumbbell(20, 1) is 3; optimum obeys gap * n >= c / diam^2
        assert res.gap * g.n >= 0.1 * (1.0 / 9.0)
        assert res.weights.is_sequential(1e-9)


class TestOptimizeDiscrete:
    def test_single_edge_saturates(self):
        g = ComparisonGraph(2, ((0, 1),))
        res = optimize_discrete(DesignProblem(g, "discrete"))
        assert res.weights.weights[0] == pytest.approx(1.0, abs=1e-9)
        assert res.gap == pytest.approx(2.0, abs=1e-8)

    def test_k4_closed_form(self):
        # uniform 1/3 per edge saturates every vertex and gives gap 4/3;
        # the optimizer starts there and must keep it as a fixed point
        res = optimize_discrete(DesignProblem(make_complete(4), "discrete"))
        assert res.gap == pytest.approx(4.0 / 3.0, abs=1e-3)
        loads = res.weights.vertex_loads()
        assert np.max(loads) <= 1.0 + 1e-12

    def test_dumbbell20_matches_mode_calculus(self):
        # exact optimum by symmetric mode analysis: maximize
        # min(2 * bridge, 20 * clique) under bridge + 19 * clique = 1,
        # giving 20/29; the scaled uniform weighting sits at 0.1
        g = make_dumbbell(20, 20)
        uniform = MatchupDistribution.uniform(g)
        scaled = MatchupDistribution(
            g, uniform.weights / np.max(uniform.vertex_loads())
        )
        assert gap_of(scaled) == pytest.approx(0.1, abs=1e-9)
        res = optimize_discrete(DesignProblem(g, "discrete"))
        assert res.gap == pytest.approx(20.0 / 29.0, rel=0.02)
        assert res.gap >= 6.0 * gap_of(scaled)
        assert res.weights.is_substochastic(1e-9)

    def test_feasibility_always_restored(self):
        rng = np.random.default_rng(3)
        g = make_complete(5)
        res = optimize_discrete(
            DesignProblem(g, "discrete", budget=300, stall_window=100)
        )
        assert np.max(res.weights.vertex_loads()) <= 1.0 + 1e-12
        assert np.min(res.weights.weights) >= -1e-15


class TestSubgradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        g = make_path(4)
        ii = np.array([e[0] for e in g.edges])
        jj = np.array([e[1] for e in g.edges])
        base = np.array([0.5, 0.2, 0.3])
        lam, u = _gap_and_fiedler(g.n, ii, jj, base)
        eigs = np.linalg.eigvalsh(
            build_laplacian(MatchupDistribution(g, base)).matrix
        )
        assert eigs[2] - eigs[1] > 1e-3  # simple gap eigenvalue
        grad = (u[ii] - u[jj]) ** 2
        h = 1e-6
        for _ in range(10):
            direction = rng.normal(size=3)
            lp, _ = _gap_and_fiedler(g.n, ii, jj, base + h * direction)
            lm, _ = _gap_and_fiedler(g.n, ii, jj, base - h * direction)
            fd = (lp - lm) / (2.0 * h)
            assert fd == pytest.approx(float(grad @ direction), abs=1e-5)


class TestStochasticCompletion:
    def test_single_edge(self):
        g = ComparisonGraph(2, ((0, 1),))
        mat = stochastic_completion(MatchupDistribution(g, np.array([1.0])))
        assert np.array_equal(mat, [[0.0, 1.0], [1.0, 0.0]])

    def test_triangle_half(self):
        g = make_complete(3)
        mat = stochastic_completion(MatchupDistribution(g, np.full(3, 0.5)))
        assert np.allclose(np.diag(mat), 0.0)
        assert np.allclose(mat[~np.eye(3, dtype=bool)], 0.5)

    def test_path_with_slack(self):
        g = make_path(3)
        mat = stochastic_completion(MatchupDistribution(g, np.array([0.3, 0.4])))
        assert np.allclose(np.diag(mat), [0.7, 0.3, 0.6])
        assert np.allclose(mat.sum(axis=0), 1.0)
        assert np.allclose(mat.sum(axis=1), 1.0)

    def test_same_gap_as_input(self):
        g = make_complete(4)
        rng = np.random.default_rng(5)
        w = rng.uniform(0.05, 0.3, g.num_edges)
        q = MatchupDistribution(g, w)
        mat = stochastic_completion(q)
        # off-diagonal part is q itself, so the Laplacian is unchanged
        lap = build_laplacian(q).matrix
        recon = np.diag(mat.sum(axis=1) - np.diag(mat)) - (mat - np.diag(np.diag(mat)))
        assert np.allclose(recon, lap, atol=1e-12)

    def test_overload_rejected(self):
        g = make_path(3)
        with pytest.raises(ValueError, match="load"):
            stochastic_completion(MatchupDistribution(g, np.array([0.8, 0.3])))


class TestBirkhoffVonNeumann:
    def test_identity(self):
        dec = birkhoff_von_neumann(np.eye(4))
        assert len(dec.permutations) == 1
        assert dec.permutations[0] == (0, 1, 2, 3)
        assert dec.coefficients[0] == pytest.approx(1.0)

    def test_two_by_two_mixture(self):
        dec = birkhoff_von_neumann(np.full((2, 2), 0.5))
        assert sorted(dec.permutations) == [(0, 1), (1, 0)]
        assert np.allclose(sorted(dec.coefficients), [0.5, 0.5])

    def test_round_trip_random_mixtures(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            n = int(rng.integers(3, 8))
            target = np.zeros((n, n))
            weights = rng.dirichlet(np.ones(10))
            for w in weights:
                perm = rng.permutation(n)
                target[np.arange(n), perm] += w
            dec = birkhoff_von_neumann(target)
            assert np.max(np.abs(dec.reconstruct() - target)) <= 1e-8
            assert len(dec.permutations) <= n * n
            assert dec.coefficients.sum() == pytest.approx(1.0, abs=1e-12)

    def test_support_preserved(self):
        rng = np.random.default_rng(7)
        n = 6
        target = np.zeros((n, n))
        for w in rng.dirichlet(np.ones(6)):
            perm = rng.permutation(n)
            target[np.arange(n), perm] += w
        dec = birkhoff_von_neumann(target)
        for sigma in dec.permutations:
            for i, j in enumerate(sigma):
                assert target[i, j] > 0.0

    def test_rejects_non_doubly_stochastic(self):
        with pytest.raises(ValueError, match="doubly stochastic"):
            birkhoff_von_neumann(np.array([[0.9, 0.0], [0.1, 1.0]]))
        with pytest.raises(ValueError, match="negative"):
            birkhoff_von_neumann(np.array([[1.1, -0.1], [-0.1, 1.1]]))


class TestPermutationToMatchings:
    def cycle_graph(self):
        return ComparisonGraph(4, ((0, 1), (1, 2), (2, 3), (0, 3)))

    def test_four_cycle_split(self):
        cms = permutation_to_matchings((1, 2, 3, 0), self.cycle_graph())
        assert len(cms) == 1
        odd, even, closing = cms[0].matchings
        assert odd == ((0, 1), (2, 3))
        assert even == ((1, 2),)
        assert closing == ((0, 3),)
        assert cms[0].selection == (1 / 3, 1 / 3, 1 / 3)

    def test_identity_has_no_matchings(self):
        assert permutation_to_matchings((0, 1, 2, 3), self.cycle_graph()) == []

    def test_transposition_plays_one_third(self):
        g = ComparisonGraph(2, ((0, 1),))
        cms = permutation_to_matchings((1, 0), g)
        assert len(cms) == 1
        assert cms[0].matchings == (((0, 1),), (), ())
        assert cms[0].selection == (1 / 3, 1 / 3, 1 / 3)

    def test_five_cycle_split(self):
        g = ComparisonGraph(5, ((0, 1), (1, 2), (2, 3), (3, 4), (0, 4)))
        cms = permutation_to_matchings((1, 2, 3, 4, 0), g)
        odd, even, closing = cms[0].matchings
        assert odd == ((0, 1), (2, 3))
        assert even == ((1, 2), (3, 4))
        assert closing == ((0, 4),)

    def test_edge_not_in_graph(self):
        g = make_path(3)
        with pytest.raises(ValueError, match="not a graph edge"):
            permutation_to_matchings((1, 2, 0), g)  # needs edge (0, 2)


class TestMatchingDistribution:
    def test_uniform_selection_four_cycle_mean_size(self):
        # one 4-cycle permutation at weight 1, uniform 1/3 slot choice:
        # every edge has marginal 1/3 and the mean matching size is 4/3
        g = ComparisonGraph(4, ((0, 1), (1, 2), (2, 3), (0, 3)))
        cycles = permutation_to_matchings((1, 2, 3, 0), g)
        dist = MatchingDistribution.from_permutations(g, [1.0], [cycles])
        assert np.allclose(dist.edge_marginals(), 1 / 3)
        assert dist.mean_size == pytest.approx(4.0 / 3.0)

    def test_atoms_match_marginals(self):
        g = make_complete(4)
        q = MatchupDistribution(g, np.full(6, 1.0 / 3.0))
        dist = build_matching_distribution(q)
        atoms = dist.atoms()
        total = sum(p for _, p in atoms)
        assert total == pytest.approx(1.0, abs=1e-12)
        index = g.edge_index()
        from_atoms = np.zeros(g.num_edges)
        for matching, p in atoms:
            played = [v for e in matching for v in e]
            assert len(set(played)) == len(played)
            for e in matching:
                from_atoms[index[e]] += p
        assert np.max(np.abs(from_atoms - dist.edge_marginals())) <= 1e-12

    def test_sample_reproducible(self):
        g = make_complete(4)
        q = MatchupDistribution(g, np.full(6, 0.25))
        dist = build_matching_distribution(q)
        a = [dist.sample(RngStream(3, 1)) for _ in range(1)]
        b = [dist.sample(RngStream(3, 1)) for _ in range(1)]
        assert a == b


class TestBuildMatchingDistribution:
    def check_exact_thirds(self, q: MatchupDistribution):
        dist = build_matching_distribution(q)
        assert np.max(np.abs(dist.edge_marginals() - q.weights / 3.0)) <= 1e-10
        assert dist.mean_size == pytest.approx(float(q.weights.sum()) / 3.0, abs=1e-10)
        marg_gap = gap_of(dist.marginals())
        assert marg_gap >= gap_of(q) / 3.0 - 1e-9

    def test_single_edge(self):
        g = ComparisonGraph(2, ((0, 1),))
        q = MatchupDistribution(g, np.array([1.0]))
        dist = build_matching_distribution(q)
        assert np.allclose(dist.edge_marginals(), [1.0 / 3.0])
        assert dist.mean_size == pytest.approx(1.0 / 3.0)
        self.check_exact_thirds(q)

    def test_triangle_forced_long_cycles(self):
        # q_e = 1/2 on a triangle cannot decompose into involutions, so the
        # three-matching split of genuine 3-cycles carries all the mass
        g = make_complete(3)
        self.check_exact_thirds(MatchupDistribution(g, np.full(3, 0.5)))

    def test_k4_discrete_optimum(self):
        g = make_complete(4)
        q = MatchupDistribution(g, np.full(6, 1.0 / 3.0))
        dist = build_matching_distribution(q)
        assert np.allclose(dist.edge_marginals(), 1.0 / 9.0, atol=1e-10)
        assert dist.mean_size == pytest.approx(2.0 / 3.0, abs=1e-10)
        self.check_exact_thirds(q)

    def test_random_substochastic_instances(self):
        rng = np.random.default_rng(8)
        for n in (5, 8):
            g = make_complete(n)
            raw = rng.uniform(0.0, 1.0, g.num_edges)
            q0 = MatchupDistribution(g, raw)
            scaled = raw / (np.max(q0.vertex_loads()) * 1.1)
            self.check_exact_thirds(MatchupDistribution(g, scaled))

    def test_sampled_matchings_valid_and_marginals(self):
        g = make_complete(4)
        q = MatchupDistribution(g, np.full(6, 1.0 / 3.0))
        dist = build_matching_distribution(q)
        rng = RngStream(17)
        draws = 100_000
        counts = np.zeros(g.num_edges)
        index = g.edge_index()
        for _ in range(draws):
            matching = dist.sample(rng)
            played = [v for e in matching for v in e]
            assert len(set(played)) == len(played)
            for e in matching:
                counts[index[e]] += 1
        freq = counts / draws
        target = q.weights / 3.0
        se = np.sqrt(target * (1 - target) / draws)
        assert np.all(np.abs(freq - target) <= 4.0 * se)

    def test_rejects_overloaded_input(self):
        g = make_path(3)
        with pytest.raises(ValueError, match="load"):
            build_matching_distribution(
                MatchupDistribution(g, np.array([0.9, 0.9]))
            )
