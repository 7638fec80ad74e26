"""Laplacian, spectral gap and time-scale formula tests."""

import math

import numpy as np
import pytest

from elochain import (
    ComparisonGraph,
    MatchupDistribution,
    build_laplacian,
    curvature_bound,
    dirichlet_form,
    mixing_time,
    spectral_gap,
)


def random_connected_graph(rng, n):
    """Random spanning tree plus extra edges; always connected."""
    order = rng.permutation(n)
    edges = set()
    for idx in range(1, n):
        a = int(order[idx])
        b = int(order[rng.integers(0, idx)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, n))):
        a, b = (int(v) for v in rng.integers(0, n, 2))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return ComparisonGraph(n, tuple(edges))


def triangle_uniform():
    g = ComparisonGraph(3, ((0, 1), (1, 2), (0, 2)))
    return MatchupDistribution.uniform(g)


class TestBuildLaplacian:
    def test_single_edge(self):
        g = ComparisonGraph(2, ((0, 1),))
        lap = build_laplacian(MatchupDistribution(g, np.array([1.0])))
        assert np.array_equal(lap.matrix, [[1.0, -1.0], [-1.0, 1.0]])

    def test_uniform_triangle(self):
        lap = build_laplacian(triangle_uniform())
        assert np.allclose(np.diag(lap.matrix), 2.0 / 3.0)
        off = lap.matrix[~np.eye(3, dtype=bool)]
        assert np.allclose(off, -1.0 / 3.0)

    def test_empty_edge_set(self):
        g = ComparisonGraph(3, ())
        lap = build_laplacian(MatchupDistribution(g, np.zeros(0)))
        assert np.array_equal(lap.matrix, np.zeros((3, 3)))

    def test_laplacian_invariants(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            g = random_connected_graph(rng, int(rng.integers(3, 15)))
            w = rng.uniform(0.0, 1.0, g.num_edges)
            lap = build_laplacian(MatchupDistribution(g, w)).matrix
            assert np.max(np.abs(lap @ np.ones(g.n))) <= 1e-10
            assert np.max(np.abs(lap - lap.T)) <= 1e-14
            eigs = np.linalg.eigvalsh(lap)
            assert eigs[0] >= -1e-9


class TestSpectralGap:
    def test_single_edge_gap(self):
        g = ComparisonGraph(2, ((0, 1),))
        s = spectral_gap(build_laplacian(MatchupDistribution(g, np.array([1.0]))))
        assert s.gap == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(s.eigenvalues, [0.0, 2.0], atol=1e-12)

    def test_k4_uniform_closed_form(self):
        # complete graph with uniform weight w per edge has gap n * w
        g = ComparisonGraph(4, tuple((i, j) for i in range(4) for j in range(i + 1, 4)))
        s = spectral_gap(build_laplacian(MatchupDistribution.uniform(g)))
        assert s.gap == pytest.approx(4.0 / 6.0, abs=1e-12)

    def test_disconnected_gap_zero(self):
        g = ComparisonGraph(4, ((0, 1), (2, 3)))
        q = MatchupDistribution(g, np.array([0.5, 0.5]))
        s = spectral_gap(build_laplacian(q))
        assert abs(s.gap) <= 1e-10

    def test_fiedler_unit_and_orthogonal(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            g = random_connected_graph(rng, int(rng.integers(3, 15)))
            w = rng.uniform(0.05, 1.0, g.num_edges)
            q = MatchupDistribution(g, w / w.sum())
            s = spectral_gap(build_laplacian(q))
            assert np.linalg.norm(s.fiedler) == pytest.approx(1.0, abs=1e-10)
            assert abs(s.fiedler @ np.ones(g.n)) <= 1e-8

    def test_fiedler_orthogonal_even_when_disconnected(self):
        g = ComparisonGraph(4, ((0, 1), (2, 3)))
        q = MatchupDistribution(g, np.array([0.5, 0.5]))
        s = spectral_gap(build_laplacian(q))
        assert abs(s.fiedler @ np.ones(4)) <= 1e-8

    def test_eigenpair_residuals(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            g = random_connected_graph(rng, 12)
            w = rng.uniform(0.0, 1.0, g.num_edges)
            lap = build_laplacian(MatchupDistribution(g, w))
            eigenvalues, vectors = np.linalg.eigh(lap.matrix)
            fro = np.linalg.norm(lap.matrix)
            for k in range(g.n):
                res = lap.matrix @ vectors[:, k] - eigenvalues[k] * vectors[:, k]
                assert np.linalg.norm(res) <= 1e-8 * max(fro, 1.0)

    def test_gap_bound_for_sequential_weights(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            g = random_connected_graph(rng, int(rng.integers(2, 20)))
            w = rng.uniform(0.0, 1.0, g.num_edges) + 1e-3
            q = MatchupDistribution(g, w / w.sum())
            s = spectral_gap(build_laplacian(q))
            assert s.gap <= 4.0 / g.n + 1e-10

    def test_gap_invariant_under_relabeling(self):
        rng = np.random.default_rng(9)
        g = random_connected_graph(rng, 10)
        w = rng.uniform(0.1, 1.0, g.num_edges)
        q = MatchupDistribution(g, w)
        gap = spectral_gap(build_laplacian(q)).gap
        perm = rng.permutation(10)
        mapping = {e: k for k, e in enumerate(g.edges)}
        new_edges = tuple(
            (min(int(perm[i]), int(perm[j])), max(int(perm[i]), int(perm[j])))
            for i, j in g.edges
        )
        g2 = ComparisonGraph(10, new_edges)
        w2 = np.empty(g2.num_edges)
        for (i, j), k_old in mapping.items():
            e_new = (min(int(perm[i]), int(perm[j])), max(int(perm[i]), int(perm[j])))
            w2[g2.edge_index()[e_new]] = w[k_old]
        gap2 = spectral_gap(build_laplacian(MatchupDistribution(g2, w2))).gap
        assert gap2 == pytest.approx(gap, abs=1e-10)


class TestDirichletForm:
    def test_constant_vector_vanishes(self):
        q = triangle_uniform()
        assert dirichlet_form(q, np.ones(3)) == 0.0

    def test_single_edge_double_count(self):
        g = ComparisonGraph(2, ((0, 1),))
        q = MatchupDistribution(g, np.array([1.0]))
        # ordered-pair convention counts the edge twice: 2 * 1 * (2)^2
        assert dirichlet_form(q, [1.0, -1.0]) == pytest.approx(8.0)

    def test_fiedler_identity(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            g = random_connected_graph(rng, 8)
            w = rng.uniform(0.05, 1.0, g.num_edges)
            q = MatchupDistribution(g, w)
            s = spectral_gap(build_laplacian(q))
            # double-count convention: form(fiedler) = 2 * gap * |fiedler|^2
            assert dirichlet_form(q, s.fiedler) == pytest.approx(
                2.0 * s.gap, abs=1e-8
            )

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            dirichlet_form(triangle_uniform(), [1.0, -1.0])

    def test_gap_inequality_random_vectors(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            g = random_connected_graph(rng, int(rng.integers(3, 20)))
            w = rng.uniform(0.0, 1.0, g.num_edges)
            q = MatchupDistribution(g, w / max(w.sum(), 1e-9))
            gap = spectral_gap(build_laplacian(q)).gap
            for _ in range(20):
                z = rng.normal(size=g.n)
                z -= z.mean()
                assert dirichlet_form(q, z) >= gap * float(z @ z) - 1e-8


class TestTimeScales:
    def test_mixing_time_flat(self):
        assert mixing_time(0.0, 0.1, 2.0, 2) == pytest.approx(
            5.0 * math.log(2.0), rel=1e-12
        )

    def test_mixing_time_cap_factor(self):
        assert mixing_time(1.0, 0.1, 2.0, 2) == pytest.approx(
            math.exp(2.0) * 5.0 * math.log(2.0), rel=1e-12
        )
        assert mixing_time(1.0, 0.1, 2.0, 2) == pytest.approx(25.609, abs=1e-3)

    def test_mixing_time_guards(self):
        with pytest.raises(ValueError, match="gap"):
            mixing_time(1.0, 0.1, 0.0, 2)
        with pytest.raises(ValueError, match="step size"):
            mixing_time(1.0, 0.5, 1.0, 2)

    def test_curvature_values(self):
        assert curvature_bound(0.0, 0.1, 2.0) == pytest.approx(0.025, rel=1e-12)
        assert curvature_bound(1.0, 0.1, 2.0) == pytest.approx(
            0.025 * math.exp(-2.0), rel=1e-12
        )
        assert curvature_bound(1.0, 0.1, 2.0) == pytest.approx(0.0033834, abs=1e-7)

    def test_curvature_zero_gap(self):
        assert curvature_bound(2.0, 0.1, 0.0) == 0.0
