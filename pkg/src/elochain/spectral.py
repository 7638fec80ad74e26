"""Weighted graph Laplacians, spectral gaps and the derived time scales."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MatchupDistribution, validate_step_size

__all__ = [
    "Laplacian",
    "SpectrumSummary",
    "build_laplacian",
    "spectral_gap",
    "dirichlet_form",
    "mixing_time",
    "curvature_bound",
]

# Sequentially normalized weights satisfy gap <= 4/n; a violation means the
# eigensolve or the Laplacian assembly broke, so it is reported as a bug.
_GAP_BOUND_SLACK = 1e-10


@dataclass(frozen=True)
class Laplacian:
    """Symmetric PSD matrix with off-diagonals -q_e and diagonal vertex loads."""

    matrix: np.ndarray
    source: MatchupDistribution


@dataclass(frozen=True)
class SpectrumSummary:
    """Full ascending spectrum; ``gap`` is the second smallest eigenvalue."""

    eigenvalues: np.ndarray
    gap: float
    fiedler: np.ndarray


def build_laplacian(q: MatchupDistribution) -> Laplacian:
    if np.any(q.weights < 0.0):
        raise ValueError("negative match-up weight")
    n = q.graph.n
    mat = np.zeros((n, n))
    for k, (i, j) in enumerate(q.graph.edges):
        w = q.weights[k]
        mat[i, j] -= w
        mat[j, i] -= w
        mat[i, i] += w
        mat[j, j] += w
    return Laplacian(mat, q)


def spectral_gap(L: Laplacian) -> SpectrumSummary:
    """Ascending eigenvalues of the Laplacian plus the gap eigenvector.

    For sequentially normalized weights the gap is checked against the
    universal 4/n bound; a violation indicates an internal error.
    """
    try:
        eigenvalues, vectors = np.linalg.eigh(L.matrix)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("eigensolver failed to converge") from exc
    fiedler = _orthogonalize_to_ones(vectors[:, 1], fallback=vectors[:, 0])
    gap = float(eigenvalues[1])
    n = L.matrix.shape[0]
    if abs(L.source.total() - 1.0) <= 1e-9 and gap > 4.0 / n + _GAP_BOUND_SLACK:
        raise RuntimeError(
            f"internal error: gap {gap:.12g} exceeds 4/n = {4.0 / n:.12g} "
            "for sequentially normalized weights"
        )
    return SpectrumSummary(eigenvalues, gap, fiedler)


def _orthogonalize_to_ones(v: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """Remove the all-ones component; needed when the null space is degenerate."""
    n = v.size
    ones = np.ones(n) / math.sqrt(n)
    for candidate in (v, fallback):
        w = candidate - (candidate @ ones) * ones
        norm = float(np.linalg.norm(w))
        if norm > 1e-12:
            return w / norm
    raise RuntimeError("could not build a gap eigenvector orthogonal to ones")


def dirichlet_form(q: MatchupDistribution, z) -> float:
    """Quadratic form sum_{i,j} q_{i,j} (z_i - z_j)^2 over ordered pairs.

    Each unordered edge is counted twice, matching the convention in which
    the weights of a sequential distribution sum to 2 over ordered pairs.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (q.graph.n,):
        raise ValueError(f"expected vector of length {q.graph.n}, got {z.shape}")
    i_idx = np.fromiter((e[0] for e in q.graph.edges), dtype=int, count=q.graph.num_edges)
    j_idx = np.fromiter((e[1] for e in q.graph.edges), dtype=int, count=q.graph.num_edges)
    diffs = z[i_idx] - z[j_idx]
    return 2.0 * float(np.dot(q.weights, diffs * diffs))


def mixing_time(M: float, eta: float, gap: float, n: int) -> float:
    """Time scale e^{2M} / (eta * gap) * log n after which averaging works."""
    eta = validate_step_size(eta)
    if gap <= 0.0:
        raise ValueError("spectral gap must be positive for a finite mixing time")
    if n < 2:
        raise ValueError("need at least two players")
    return math.exp(2.0 * M) / (eta * gap) * math.log(n)


def curvature_bound(M: float, eta: float, gap: float) -> float:
    """Per-step contraction rate (1/8) e^{-2M} eta gap of coupled chains."""
    eta = validate_step_size(eta)
    if gap < 0.0:
        raise ValueError("spectral gap cannot be negative")
    return 0.125 * math.exp(-2.0 * M) * eta * gap
