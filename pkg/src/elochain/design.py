"""Tournament design: spectral-gap maximization and matching samplers.

Two regimes are optimized by projected supergradient ascent on the concave
map q -> lambda_2(Laplacian(q)): "continuous" (weights on the probability
simplex, one game per step) and "discrete" (substochastic vertex loads,
realizable as parallel matchings).  The substochastic optimum is turned
into a sampleable distribution over matchings by completing it to a doubly
stochastic matrix, decomposing via Birkhoff-von Neumann and splitting each
permutation cycle into three matchings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .core import ComparisonGraph, MatchupDistribution, RngStream

__all__ = [
    "DesignProblem",
    "DesignResult",
    "BvnDecomposition",
    "CycleMatchings",
    "MatchingDistribution",
    "optimize_sequential",
    "optimize_discrete",
    "stochastic_completion",
    "birkhoff_von_neumann",
    "permutation_to_matchings",
    "build_matching_distribution",
    "project_simplex",
]

_BVN_SUPPORT_EPS = 1e-10
_BVN_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class DesignProblem:
    """Gap-maximization instance on a connected comparison graph."""

    graph: ComparisonGraph
    regime: str  # "continuous" (sum q_e = 1) or "discrete" (loads q_k <= 1)
    budget: int = 5000
    tolerance: float = 1e-6
    stall_window: int = 500
    step_schedule: str = "1/(|g_t| sqrt(t))"

    def __post_init__(self) -> None:
        if self.regime not in ("continuous", "discrete"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if not self.graph.is_connected():
            raise ValueError("design requires a connected graph")


@dataclass(frozen=True)
class DesignResult:
    weights: MatchupDistribution
    gap: float
    iterations: int
    converged: bool  # False when the iteration budget ran out first


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} by sort and threshold."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = int(np.count_nonzero(cond))
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _gap_and_fiedler(
    n: int, ii: np.ndarray, jj: np.ndarray, w: np.ndarray
) -> tuple[float, np.ndarray]:
    lap = np.zeros((n, n))
    lap[ii, jj] = -w
    lap[jj, ii] = -w
    deg = np.bincount(ii, weights=w, minlength=n) + np.bincount(
        jj, weights=w, minlength=n
    )
    lap[np.arange(n), np.arange(n)] = deg
    eigenvalues, vectors = np.linalg.eigh(lap)
    return float(eigenvalues[1]), vectors[:, 1]


def _ascend(
    problem: DesignProblem,
    q0: np.ndarray,
    restore_feasible,
    evaluate_feasible,
) -> DesignResult:
    """Projected supergradient ascent tracking the best feasible iterate.

    The supergradient of lambda_2 at q for a unit gap eigenvector u is
    g_e = (u_i - u_j)^2 per edge; subgradient methods are not monotone,
    so the best iterate is returned rather than the last.
    """
    graph = problem.graph
    n = graph.n
    ii = np.fromiter((e[0] for e in graph.edges), dtype=int, count=graph.num_edges)
    jj = np.fromiter((e[1] for e in graph.edges), dtype=int, count=graph.num_edges)

    q = q0
    best_q = evaluate_feasible(q)
    best_gap, _ = _gap_and_fiedler(n, ii, jj, best_q)
    anchor_gap = best_gap
    anchor_iter = 0
    iteration = 0
    converged = False
    for iteration in range(1, problem.budget + 1):
        _, u = _gap_and_fiedler(n, ii, jj, q)
        g = (u[ii] - u[jj]) ** 2
        norm = float(np.linalg.norm(g))
        if norm < 1e-15:  # supergradient vanished: gap eigenvector is flat
            converged = True
            break
        q = restore_feasible(q + 1.0 / (norm * math.sqrt(iteration)) * g)
        q_eval = evaluate_feasible(q)
        gap_eval, _ = _gap_and_fiedler(n, ii, jj, q_eval)
        if gap_eval > best_gap:
            best_gap = gap_eval
            best_q = q_eval
        if best_gap > anchor_gap + problem.tolerance:
            anchor_gap = best_gap
            anchor_iter = iteration
        elif iteration - anchor_iter >= problem.stall_window:
            converged = True
            break
    return DesignResult(
        MatchupDistribution(graph, best_q), best_gap, iteration, converged
    )


def optimize_sequential(problem: DesignProblem) -> DesignResult:
    """Maximize the gap over edge weights summing to 1 (one game per step)."""
    if problem.regime != "continuous":
        raise ValueError("optimize_sequential needs the continuous regime")
    m = problem.graph.num_edges
    q0 = np.full(m, 1.0 / m)
    return _ascend(problem, q0, project_simplex, lambda q: q)


def optimize_discrete(problem: DesignProblem) -> DesignResult:
    """Maximize the gap over substochastic weights (vertex loads <= 1)."""
    if problem.regime != "discrete":
        raise ValueError("optimize_discrete needs the discrete regime")
    graph = problem.graph
    m = graph.num_edges
    vertex_edges = [[] for _ in range(graph.n)]
    for k, (i, j) in enumerate(graph.edges):
        vertex_edges[i].append(k)
        vertex_edges[j].append(k)
    vertex_edges = [np.array(ks, dtype=int) for ks in vertex_edges]
    max_deg = max(len(ks) for ks in vertex_edges)
    q0 = np.full(m, 1.0 / max_deg)

    def restore(v: np.ndarray) -> np.ndarray:
        return _dykstra_substochastic(v, vertex_edges)

    def scale_feasible(v: np.ndarray) -> np.ndarray:
        v = np.maximum(v, 0.0)
        load = max(float(v[ks].sum()) for ks in vertex_edges)
        return v / load if load > 1.0 else v

    return _ascend(problem, q0, restore, scale_feasible)


def _dykstra_substochastic(
    v: np.ndarray, vertex_edges: list[np.ndarray], sweeps: int = 50
) -> np.ndarray:
    """Dykstra's alternating projections onto {q >= 0} and the load half-spaces."""
    x = v.copy()
    num_sets = len(vertex_edges) + 1
    increments = [np.zeros_like(x) for _ in range(num_sets)]
    for _ in range(sweeps):
        x_before = x.copy()
        for s in range(num_sets):
            y = x + increments[s]
            if s == 0:
                x = np.maximum(y, 0.0)
            else:
                ks = vertex_edges[s - 1]
                load = float(y[ks].sum())
                if load > 1.0:
                    x = y.copy()
                    x[ks] -= (load - 1.0) / ks.size
                else:
                    x = y
            increments[s] = y - x
        if float(np.max(np.abs(x - x_before))) < 1e-14:
            break
    return x


def stochastic_completion(q: MatchupDistribution) -> np.ndarray:
    """Symmetric doubly stochastic matrix with off-diagonals q_e.

    The diagonal absorbs 1 - q_k per vertex; diagonal mass does not affect
    the Dirichlet form, so the completed matrix has the same gap as q.
    """
    loads = q.vertex_loads()
    overload = float(loads.max()) - 1.0
    if overload > 1e-9:
        raise ValueError(f"vertex load exceeds 1 by {overload:g}")
    n = q.graph.n
    mat = np.zeros((n, n))
    for k, (i, j) in enumerate(q.graph.edges):
        mat[i, j] = q.weights[k]
        mat[j, i] = q.weights[k]
    mat[np.arange(n), np.arange(n)] = np.maximum(1.0 - loads, 0.0)
    return mat


@dataclass(frozen=True)
class BvnDecomposition:
    """Convex combination of permutation matrices reproducing the input."""

    coefficients: np.ndarray
    permutations: tuple[tuple[int, ...], ...]

    def reconstruct(self) -> np.ndarray:
        n = len(self.permutations[0])
        out = np.zeros((n, n))
        for coeff, sigma in zip(self.coefficients, self.permutations):
            out[np.arange(n), list(sigma)] += coeff
        return out


def birkhoff_von_neumann(matrix: np.ndarray) -> BvnDecomposition:
    """Greedy Birkhoff decomposition of a doubly stochastic matrix.

    Repeatedly extracts a perfect matching on the positive support and
    subtracts the minimum entry along it, until the residual is negligible.
    Coefficients are re-normalized to sum to one.
    """
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("matrix must be square")
    n = mat.shape[0]
    if float(mat.min()) < -1e-12:
        raise ValueError("matrix has a negative entry")
    if np.max(np.abs(mat.sum(axis=0) - 1.0)) > 1e-8 or np.max(
        np.abs(mat.sum(axis=1) - 1.0)
    ) > 1e-8:
        raise ValueError("matrix is not doubly stochastic")

    residual = np.maximum(mat, 0.0)
    coefficients: list[float] = []
    permutations: list[tuple[int, ...]] = []
    for _ in range(n * n + n):
        if float(residual.max()) <= _BVN_RESIDUAL_TOL:
            break
        sigma = _perfect_matching(residual, _BVN_SUPPORT_EPS)
        if sigma is None:
            sigma = _perfect_matching(residual, _BVN_SUPPORT_EPS * 10.0)
        if sigma is None:
            if float(residual.max()) <= 1e-8:
                break
            raise ValueError(
                "no perfect matching on the residual support; input is "
                "numerically damaged"
            )
        rows = np.arange(n)
        coeff = float(residual[rows, sigma].min())
        if coeff <= 0.0:
            break
        residual[rows, sigma] -= coeff
        coefficients.append(coeff)
        permutations.append(tuple(int(v) for v in sigma))
    else:
        raise RuntimeError("Birkhoff decomposition did not terminate")
    if float(residual.max()) > 1e-8:
        raise RuntimeError("Birkhoff residual failed to vanish")
    coeffs = np.array(coefficients)
    return BvnDecomposition(coeffs / coeffs.sum(), tuple(permutations))


def _perfect_matching(residual: np.ndarray, threshold: float) -> np.ndarray | None:
    support = csr_matrix(residual > threshold)
    match = maximum_bipartite_matching(support, perm_type="column")
    if np.any(match < 0):
        return None
    return match


@dataclass(frozen=True)
class CycleMatchings:
    """The three matchings a permutation cycle splits into, with selection law.

    ``matchings`` holds the odd-position edges, the even-position edges and
    the closing edge; cycles of length two carry their single edge in the
    first slot with two empty alternatives.  ``selection`` gives the
    probability of each slot; any remainder idles the cycle.
    """

    vertices: tuple[int, ...]
    matchings: tuple[tuple[tuple[int, int], ...], ...]
    selection: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.matchings) != 3 or len(self.selection) != 3:
            raise ValueError("need exactly three matching slots")
        if min(self.selection) < 0.0 or sum(self.selection) > 1.0 + 1e-12:
            raise ValueError("selection probabilities must be a sub-distribution")


def _permutation_cycles(sigma: tuple[int, ...]) -> list[tuple[int, ...]]:
    n = len(sigma)
    if sorted(sigma) != list(range(n)):
        raise ValueError("not a permutation of 0..n-1")
    seen = [False] * n
    cycles: list[tuple[int, ...]] = []
    for start in range(n):
        if seen[start] or sigma[start] == start:
            seen[start] = True
            continue
        cycle = [start]
        seen[start] = True
        v = sigma[start]
        while v != start:
            cycle.append(v)
            seen[v] = True
            v = sigma[v]
        cycles.append(tuple(cycle))
    return cycles


def _edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def permutation_to_matchings(
    sigma, graph: ComparisonGraph
) -> list[CycleMatchings]:
    """Split every non-trivial cycle of a permutation into three matchings.

    Cycle v_1 .. v_k yields the odd-position pairs, the even-position pairs
    and the closing pair {v_k, v_1}, each selected with probability 1/3; a
    two-cycle is a single edge in the first slot (so it still plays with
    probability 1/3).  Every pair must be a graph edge.
    """
    sigma = tuple(int(v) for v in sigma)
    edge_set = set(graph.edges)
    out: list[CycleMatchings] = []
    for cycle in _permutation_cycles(sigma):
        k = len(cycle)
        if k == 2:
            e = _edge(cycle[0], cycle[1])
            if e not in edge_set:
                raise ValueError(f"pair {e} is not a graph edge")
            out.append(
                CycleMatchings(cycle, ((e,), (), ()), (1 / 3, 1 / 3, 1 / 3))
            )
            continue
        odd = tuple(_edge(cycle[t], cycle[t + 1]) for t in range(0, k - 1, 2))
        even = tuple(_edge(cycle[t], cycle[t + 1]) for t in range(1, k - 1, 2))
        closing = (_edge(cycle[-1], cycle[0]),)
        for matching in (odd, even, closing):
            for e in matching:
                if e not in edge_set:
                    raise ValueError(f"pair {e} is not a graph edge")
        out.append(
            CycleMatchings(cycle, (odd, even, closing), (1 / 3, 1 / 3, 1 / 3))
        )
    return out


@dataclass(frozen=True)
class MatchingDistribution:
    """Distribution over matchings of a graph, with derived edge marginals.

    Stored either as an explicit atom list or as a permutation-backed
    sampler (one permutation drawn by its Birkhoff coefficient, then one
    matching slot per cycle); atom enumeration is only feasible for small
    instances.
    """

    graph: ComparisonGraph
    explicit_atoms: tuple[tuple[tuple[tuple[int, int], ...], float], ...] | None
    permutation_atoms: (
        tuple[tuple[float, tuple[CycleMatchings, ...]], ...] | None
    )
    _cum: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_atoms(
        cls, graph: ComparisonGraph, atoms
    ) -> MatchingDistribution:
        edge_set = set(graph.edges)
        cleaned = []
        total = 0.0
        for matching, prob in atoms:
            canon = tuple(sorted(_edge(i, j) for i, j in matching))
            played = [v for e in canon for v in e]
            if len(set(played)) != len(played):
                raise ValueError(f"{canon} is not a matching")
            for e in canon:
                if e not in edge_set:
                    raise ValueError(f"pair {e} is not a graph edge")
            if prob < 0.0:
                raise ValueError("atom probabilities must be non-negative")
            cleaned.append((canon, float(prob)))
            total += prob
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {total!r}, not 1")
        probs = np.array([p for _, p in cleaned])
        return cls(graph, tuple(cleaned), None, np.cumsum(probs))

    @classmethod
    def from_permutations(
        cls,
        graph: ComparisonGraph,
        coefficients,
        cycle_structures,
    ) -> MatchingDistribution:
        coeffs = np.asarray(coefficients, dtype=float)
        atoms = tuple(
            (float(c), tuple(cycles))
            for c, cycles in zip(coeffs, cycle_structures)
        )
        return cls(graph, None, atoms, np.cumsum(coeffs))

    def sample(self, rng: RngStream) -> tuple[tuple[int, int], ...]:
        """One matching; consumes one uniform plus one per cycle."""
        cum = self._cum
        u = rng.random()
        idx = int(np.searchsorted(cum, u, side="right"))
        if idx >= cum.size:
            idx = cum.size - 1
        if self.explicit_atoms is not None:
            return self.explicit_atoms[idx][0]
        edges: list[tuple[int, int]] = []
        for cycle in self.permutation_atoms[idx][1]:
            v = rng.random()
            p0, p1, p2 = cycle.selection
            if v < p0:
                edges.extend(cycle.matchings[0])
            elif v < p0 + p1:
                edges.extend(cycle.matchings[1])
            elif v < p0 + p1 + p2:
                edges.extend(cycle.matchings[2])
        return tuple(sorted(edges))

    def edge_marginals(self) -> np.ndarray:
        """Analytic probability that each graph edge joins the matching."""
        index = self.graph.edge_index()
        marginals = np.zeros(self.graph.num_edges)
        if self.explicit_atoms is not None:
            for matching, prob in self.explicit_atoms:
                for e in matching:
                    marginals[index[e]] += prob
            return marginals
        for coeff, cycles in self.permutation_atoms:
            for cycle in cycles:
                for slot, matching in enumerate(cycle.matchings):
                    p = cycle.selection[slot]
                    for e in matching:
                        marginals[index[e]] += coeff * p
        return marginals

    def marginals(self) -> MatchupDistribution:
        return MatchupDistribution(self.graph, self.edge_marginals())

    @property
    def mean_size(self) -> float:
        """Expected number of games per round, N = sum of edge marginals."""
        return float(self.edge_marginals().sum())

    def atoms(self, limit: int = 200_000):
        """Enumerated (matching, probability) list; merges duplicate supports."""
        if self.explicit_atoms is not None:
            return list(self.explicit_atoms)
        table: dict[tuple[tuple[int, int], ...], float] = {}
        for coeff, cycles in self.permutation_atoms:
            combos: list[tuple[list[tuple[int, int]], float]] = [([], coeff)]
            for cycle in cycles:
                idle = 1.0 - sum(cycle.selection)
                options = [
                    (list(m), p)
                    for m, p in zip(cycle.matchings, cycle.selection)
                    if p > 0.0
                ]
                if idle > 1e-15:
                    options.append(([], idle))
                combos = [
                    (edges + opt_edges, p * opt_p)
                    for edges, p in combos
                    for opt_edges, opt_p in options
                ]
                if len(combos) > limit:
                    raise ValueError("atom enumeration too large")
            for edges, p in combos:
                key = tuple(sorted(edges))
                table[key] = table.get(key, 0.0) + p
        return sorted(table.items())


def build_matching_distribution(
    q: MatchupDistribution,
    graph: ComparisonGraph | None = None,
    marginal_fraction: float = 1.0 / 3.0,
) -> MatchingDistribution:
    """Realize substochastic weights as matchings with marginals c * q_e.

    Completion to a doubly stochastic matrix followed by Birkhoff-von
    Neumann yields permutations whose non-trivial cycles are split into
    three matchings.  An edge inside a long cycle carries its weight via
    both ordered occurrences, so each of the three slots is selected with
    probability c/2 while a two-cycle (a single ordered pair on each side)
    plays its edge with probability c; every edge then joins the matching
    with marginal exactly c * q_e and the marginal Laplacian gap is
    exactly c times the gap of q.

    The default c = 1/3 keeps a bare majority of rounds non-idle and
    retains at least a third of the gap; c = 2/3 is the largest uniform
    fraction the three-matching split supports and plays twice as many
    games per round.
    """
    if not (0.0 < marginal_fraction <= 2.0 / 3.0):
        raise ValueError("marginal fraction must lie in (0, 2/3]")
    if graph is None:
        graph = q.graph
    elif graph is not q.graph and graph.edges != q.graph.edges:
        raise ValueError("graph does not match the weight distribution")
    completed = stochastic_completion(q)
    decomposition = birkhoff_von_neumann(completed)
    half = marginal_fraction / 2.0
    structures = []
    for sigma in decomposition.permutations:
        cycles = permutation_to_matchings(sigma, graph)
        calibrated = []
        for cm in cycles:
            if len(cm.vertices) == 2:
                sel = (marginal_fraction, 0.0, 0.0)
            else:
                sel = (half, half, half)
            calibrated.append(CycleMatchings(cm.vertices, cm.matchings, sel))
        structures.append(tuple(calibrated))
    return MatchingDistribution.from_permutations(
        graph, decomposition.coefficients, structures
    )
