"""Orthogonal projection onto the capped zero-sum polytope.

The feasible set is ``[-M, M]^n`` intersected with a fixed-sum hyperplane
(sum 0 for the rating chain).  The projection is the shifted clamp
``y_k = clamp(x_k - mu, -M, M)`` with the scalar ``mu`` chosen so the
clamped values attain the target sum; this is the KKT solution of the
underlying quadratic program and equivalent to freezing coordinates at
the caps while water-filling the displaced mass over the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RatingVector

__all__ = ["ProjectionResult", "project_capped_zero_sum"]


@dataclass(frozen=True)
class ProjectionResult:
    """Projected point, the optimal shift ``mu`` and how many caps bind."""

    projected: RatingVector
    shift: float
    frozen_count: int


def project_capped_zero_sum(x, M: float) -> ProjectionResult:
    """Project ``x`` onto ``[-M, M]^n ∩ {sum = 0}`` in Euclidean norm.

    ``M`` may be ``math.inf``, in which case the projection is plain
    re-centering.  Raises ``ValueError`` on non-finite input.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("input must be 1-d with at least 2 entries")
    if not np.all(np.isfinite(arr)):
        raise ValueError("input contains NaN or infinity")
    if M <= 0.0:
        raise ValueError(f"cap must be positive, got {M}")
    projected, mu = _project_capped_sum(arr, M, 0.0)
    if math.isfinite(M):
        frozen = int(np.count_nonzero(np.abs(projected) >= M))
    else:
        frozen = 0
    return ProjectionResult(RatingVector(projected, cap=M), mu, frozen)


def _project_capped_sum(
    arr: np.ndarray, M: float, target: float
) -> tuple[np.ndarray, float]:
    """Shifted-clamp projection onto ``[-M, M]^n ∩ {sum = target}``.

    Returns the projected array and the shift ``mu``; assumes finite input.
    """
    n = arr.size
    if not math.isfinite(M):
        mu = (float(arr.sum()) - target) / n
        return arr - mu, mu
    if abs(target) > n * M * (1.0 + 1e-12):
        raise ValueError(f"target sum {target:g} infeasible for cap {M}")

    total = float(arr.sum())
    if total == target and float(np.max(np.abs(arr))) <= M:
        return arr.copy(), 0.0

    mu = _solve_shift(arr, M, target)
    if mu is None or abs(float(np.clip(arr - mu, -M, M).sum()) - target) > 1e-9 * n:
        mu = _bisect_shift(arr, M, target)  # scan defeated by pathological floats
    return np.clip(arr - mu, -M, M), mu


def _solve_shift(arr: np.ndarray, M: float, target: float) -> float | None:
    """Exact breakpoint scan for mu with sum(clamp(x - mu)) = target.

    The clamped sum is non-increasing and piecewise linear in mu with
    breakpoints at x_k -/+ M; between breakpoints the slope is minus the
    number of un-frozen coordinates.  The solution set is an interval
    (a single point unless every coordinate is frozen); its midpoint is
    returned so ties resolve deterministically.
    """
    n = arr.size
    xs = np.sort(arr)
    if target >= n * M:
        return float(xs[0] - M)
    if target <= -n * M:
        return float(xs[-1] + M)

    scale = float(max(np.max(np.abs(xs)) + M, 1.0))
    tol = 1e-12 * n * scale
    # events: coordinate k joins the active (linear) band at xs[k] - M and
    # freezes at -M past xs[k] + M
    high = n  # coordinates clamped at +M
    low = 0  # coordinates clamped at -M
    active = 0
    active_sum = 0.0
    prev: float | None = None
    p_lo = 0
    p_hi = 0
    solutions: list[float] = []
    while p_lo < n or p_hi < n:
        if p_hi >= n or (p_lo < n and xs[p_lo] - M <= xs[p_hi] + M):
            b = float(xs[p_lo] - M)
            kind = 0
        else:
            b = float(xs[p_hi] + M)
            kind = 1
        # segment (prev, b) with the current freeze pattern
        intercept = (high - low) * M + active_sum
        g_b = intercept - active * b
        if active > 0:
            g_prev = intercept - active * prev if prev is not None else math.inf
            if g_prev >= target - tol and g_b <= target + tol:
                mu = (intercept - target) / active
                if prev is not None and mu < prev:
                    mu = prev
                if mu > b:
                    mu = b
                solutions.append(mu)
        elif prev is not None and abs(intercept - target) <= tol and b > prev:
            solutions.extend((prev, b))
        if kind == 0:
            high -= 1
            active += 1
            active_sum += float(xs[p_lo])
            p_lo += 1
        else:
            active -= 1
            active_sum -= float(xs[p_hi])
            low += 1
            p_hi += 1
        prev = b
    if not solutions:
        return None
    return 0.5 * (min(solutions) + max(solutions))


def _bisect_shift(arr: np.ndarray, M: float, target: float) -> float:
    lo = float(arr.min()) - M
    hi = float(arr.max()) + M

    def clamped_sum(mu: float) -> float:
        return float(np.clip(arr - mu, -M, M).sum())

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if clamped_sum(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
