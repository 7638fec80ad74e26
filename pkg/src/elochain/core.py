"""Bradley-Terry-Luce primitives: ratings, comparison graphs, match-up weights, RNG.

Pure value types plus seeded sampling helpers.  Everything here is
re-entrant; an :class:`RngStream` is single-owner and must not be shared
across concurrent tasks (use distinct stream ids instead).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RatingVector",
    "ComparisonGraph",
    "MatchupDistribution",
    "StepSize",
    "RngStream",
    "sigmoid",
    "win_probability",
    "sample_pair",
    "sample_outcome",
    "load_edge_list",
    "save_edge_list",
]

# Zero-sum drift allowance: 1e-9 * n absorbs float accumulation over ~1e7
# chain steps (the chain re-centers every 1e5 steps as a safety valve).
ZERO_SUM_TOL = 1e-9
CAP_SLACK = 1e-12
_RNG_BUFFER = 8192


def sigmoid(z: float) -> float:
    """Logistic function 1 / (1 + exp(-z)), overflow-safe for any finite z."""
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass(frozen=True)
class StepSize:
    """Update scale of a single rating step; must lie in (0, 1/4)."""

    eta: float

    def __post_init__(self) -> None:
        validate_step_size(self.eta)

    def __float__(self) -> float:
        return self.eta


def validate_step_size(eta: float) -> float:
    if not (0.0 < eta < 0.25):
        raise ValueError(f"step size must lie in (0, 0.25), got {eta}")
    return float(eta)


@dataclass(frozen=True)
class RatingVector:
    """Zero-sum rating vector with an optional sup-norm cap.

    ``cap`` may be ``math.inf`` for the uncapped regime.
    """

    values: np.ndarray
    cap: float = math.inf

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("rating vector must be 1-d with at least 2 entries")
        if not np.all(np.isfinite(values)):
            raise ValueError("rating vector entries must be finite")
        if self.cap <= 0.0:
            raise ValueError(f"cap must be positive, got {self.cap}")
        total = float(values.sum())
        if abs(total) > ZERO_SUM_TOL * values.size:
            raise ValueError(f"rating vector must be zero-sum, got sum {total:g}")
        if math.isfinite(self.cap):
            overflow = float(np.max(np.abs(values))) - self.cap
            if overflow > CAP_SLACK:
                raise ValueError(
                    f"rating exceeds cap {self.cap} by {overflow:g}"
                )
        object.__setattr__(self, "values", values.copy())
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.size

    @classmethod
    def zeros(cls, n: int, cap: float = math.inf) -> RatingVector:
        return cls(np.zeros(n), cap)

    @classmethod
    def centered(cls, values, cap: float = math.inf) -> RatingVector:
        """Build a rating vector by subtracting the mean of ``values``."""
        arr = np.asarray(values, dtype=float)
        return cls(arr - arr.mean(), cap)


@dataclass(frozen=True)
class ComparisonGraph:
    """Undirected simple graph on vertices 0..n-1 given by its edge set."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        canon = []
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise IndexError(f"edge ({i}, {j}) outside vertex range [0, {self.n})")
            canon.append((i, j) if i < j else (j, i))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate edges")
        canon.sort()
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: k for k, e in enumerate(self.edges)}

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        adj = self.neighbors()
        seen = [False] * self.n
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    count += 1
                    stack.append(w)
        return count == self.n


@dataclass(frozen=True)
class MatchupDistribution:
    """Non-negative weights, one per edge of a comparison graph.

    Two normalizations are meaningful: "sequential" (weights sum to 1,
    a probability distribution over single games) and "substochastic"
    (every vertex load ``q_k = sum_{e owning k} q_e`` is at most 1,
    realizable as matching marginals).
    """

    graph: ComparisonGraph
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.graph.num_edges,):
            raise ValueError(
                f"expected {self.graph.num_edges} weights, got shape {w.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "weights", w.copy())
        self.weights.setflags(write=False)

    @classmethod
    def uniform(cls, graph: ComparisonGraph) -> MatchupDistribution:
        m = graph.num_edges
        if m == 0:
            raise ValueError("cannot build a distribution on an empty edge set")
        return cls(graph, np.full(m, 1.0 / m))

    def total(self) -> float:
        return float(self.weights.sum())

    def vertex_loads(self) -> np.ndarray:
        load = np.zeros(self.graph.n)
        for k, (i, j) in enumerate(self.graph.edges):
            load[i] += self.weights[k]
            load[j] += self.weights[k]
        return load

    def is_sequential(self, tol: float = 1e-12) -> bool:
        return abs(self.total() - 1.0) <= tol

    def is_substochastic(self, tol: float = 1e-12) -> bool:
        return bool(np.max(self.vertex_loads()) <= 1.0 + tol)

    def normalized(self) -> MatchupDistribution:
        total = self.total()
        if total <= 0.0:
            raise ValueError("cannot normalize all-zero weights")
        return MatchupDistribution(self.graph, self.weights / total)

    def cumulative(self) -> np.ndarray:
        """Cumulative weights used by inversion sampling (cached)."""
        cached = getattr(self, "_cum", None)
        if cached is None:
            cached = np.cumsum(self.weights)
            object.__setattr__(self, "_cum", cached)
        return cached


@dataclass
class RngStream:
    """Reproducible random stream keyed by (seed, stream id).

    Identical (seed, stream) pairs reproduce identical draws bit-for-bit.
    Uniform variates are served from an internal block buffer, so scalar
    and block consumption see the same sequence.  Single-owner: never
    share one stream across concurrent tasks.
    """

    seed: int
    stream: int = 0
    _path: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False)
    _buf: list[float] = field(init=False, repr=False, default_factory=list)
    _pos: int = field(init=False, repr=False, default=0)

    def __post_init__(self) -> None:
        seq = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream, *self._path)
        )
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def split(self, key: int) -> RngStream:
        """Independent child stream; deterministic function of (seed, stream, key)."""
        return RngStream(self.seed, self.stream, self._path + (key,))

    def _refill(self) -> None:
        self._buf = self._gen.random(_RNG_BUFFER).tolist()
        self._pos = 0

    def random(self) -> float:
        """Next uniform variate in [0, 1)."""
        if self._pos >= len(self._buf):
            self._refill()
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def random_block(self, size: int) -> list[float]:
        """Next ``size`` uniforms, identical to ``size`` calls of :meth:`random`."""
        out: list[float] = []
        while size > 0:
            if self._pos >= len(self._buf):
                self._refill()
            take = min(size, len(self._buf) - self._pos)
            out.extend(self._buf[self._pos : self._pos + take])
            self._pos += take
            size -= take
        return out

    # Non-uniform draws go straight to the generator (used by graph and
    # skill samplers whose call sequences are fixed).
    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)


def win_probability(ratings: RatingVector, i: int, j: int) -> float:
    """BTL probability that player ``i`` beats player ``j``."""
    n = ratings.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"player index out of range [0, {n})")
    if i == j:
        raise ValueError("players must be distinct")
    return sigmoid(float(ratings.values[i]) - float(ratings.values[j]))


def sample_pair(q: MatchupDistribution, rng: RngStream) -> tuple[int, int]:
    """Draw one unordered pair according to sequentially-normalized weights.

    Uses cumulative-sum inversion with strict ``<`` for tie resolution.
    """
    if not q.is_sequential():
        raise ValueError(
            f"weights must sum to 1 for pair sampling, got {q.total():.15g}"
        )
    cum = q.cumulative()
    k = int(np.searchsorted(cum, rng.random(), side="right"))
    if k >= len(cum):  # guard against u falling in trailing rounding slack
        k = len(cum) - 1
    return q.graph.edges[k]


def sample_outcome(
    true_skills: RatingVector, i: int, j: int, rng: RngStream
) -> int:
    """Winner of one game between ``i`` and ``j`` under the BTL model."""
    p = win_probability(true_skills, i, j)
    return i if rng.random() < p else j


def _sample_edge_index(cum: list[float], u: float) -> int:
    """Inversion on a cumulative list; shared by the chain kernels."""
    k = bisect_right(cum, u)
    return k if k < len(cum) else len(cum) - 1


def load_edge_list(
    path: str | Path,
) -> tuple[ComparisonGraph, MatchupDistribution | None]:
    """Read an edge-list file: ``i j [weight]`` per line, 0-indexed, # comments.

    Returns the graph and, when a third column is present on every edge
    line, the corresponding match-up distribution (else ``None``).
    """
    edges: list[tuple[int, int]] = []
    weights: list[float] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'i j [weight]'")
            i, j = int(parts[0]), int(parts[1])
            edges.append((i, j))
            if len(parts) == 3:
                weights.append(float(parts[2]))
    if not edges:
        raise ValueError(f"{path}: no edges")
    if weights and len(weights) != len(edges):
        raise ValueError(f"{path}: weight column present on only some lines")
    n = max(max(i, j) for i, j in edges) + 1
    graph = ComparisonGraph(n, tuple(edges))
    if not weights:
        return graph, None
    # re-order weights to match the canonical edge ordering
    index = {}
    for (i, j), w in zip(edges, weights):
        index[(i, j) if i < j else (j, i)] = w
    ordered = np.array([index[e] for e in graph.edges])
    return graph, MatchupDistribution(graph, ordered)


def save_edge_list(
    graph: ComparisonGraph,
    path: str | Path,
    weights: np.ndarray | None = None,
) -> None:
    with open(path, "w") as fh:
        for k, (i, j) in enumerate(graph.edges):
            if weights is None:
                fh.write(f"{i} {j}\n")
            else:
                fh.write(f"{i} {j} {weights[k]:.17g}\n")
