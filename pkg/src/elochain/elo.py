"""The Elo Markov chain: sequential, parallel, noisy and coupled variants.

The public single-step operations are the readable reference
implementation; the run/collect kernels below replicate them with lazy
time-average accumulation so that long trajectories stay cheap.  Both
paths consume the same uniform stream in the same order, so a kernel run
is draw-for-draw identical to iterating the single-step operation.

A :class:`ChainState` is single-owner and advanced by one task at a time;
replications run concurrently on distinct RngStreams.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .core import (
    MatchupDistribution,
    RatingVector,
    RngStream,
    sample_outcome,
    sample_pair,
    sigmoid,
    validate_step_size,
)
from .project import _project_capped_sum
from .spectral import build_laplacian, mixing_time, spectral_gap

__all__ = [
    "EloConfig",
    "ChainState",
    "RunResult",
    "EquilibriumEstimate",
    "CouplingState",
    "CouplingTrace",
    "WinProbabilityCheck",
    "apply_elo_update",
    "elo_step",
    "parallel_elo_step",
    "run_chain",
    "estimate_equilibrium",
    "coupled_run",
    "check_win_probability_unbiasedness",
]

# Re-center (subtract the mean) this often so float drift in the zero-sum
# invariant stays below 1e-9 * n over 1e7-step runs.
_RECENTER_EVERY = 100_000


class MatchingSampler(Protocol):
    """Distribution over matchings; implemented by design.MatchingDistribution."""

    graph: object

    def sample(self, rng: RngStream) -> tuple[tuple[int, int], ...]: ...


@dataclass(frozen=True)
class EloConfig:
    """Parameters of one chain: cap, step size, schedule mode and noise.

    ``noise_delta`` > 0 adds independent Uniform[-sqrt(delta), +sqrt(delta)]
    noise to the two played coordinates after the update and before the
    projection; the noisy projection preserves the (no longer zero) sum.
    """

    eta: float
    cap: float = math.inf
    mode: str = "sequential"
    matchups: MatchupDistribution | None = None
    matchings: MatchingSampler | None = None
    noise_delta: float = 0.0

    def __post_init__(self) -> None:
        validate_step_size(self.eta)
        if self.cap <= 0.0:
            raise ValueError(f"cap must be positive, got {self.cap}")
        if self.noise_delta < 0.0:
            raise ValueError("noise_delta must be non-negative")
        if self.mode == "sequential":
            if self.matchups is None:
                raise ValueError("sequential mode needs a MatchupDistribution")
        elif self.mode == "parallel":
            if self.matchings is None:
                raise ValueError("parallel mode needs a matching distribution")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def sequential(
        cls,
        matchups: MatchupDistribution,
        eta: float,
        cap: float = math.inf,
        noise_delta: float = 0.0,
    ) -> EloConfig:
        return cls(eta, cap, "sequential", matchups, None, noise_delta)

    @classmethod
    def parallel(
        cls,
        matchings: MatchingSampler,
        eta: float,
        cap: float = math.inf,
        noise_delta: float = 0.0,
    ) -> EloConfig:
        return cls(eta, cap, "parallel", None, matchings, noise_delta)

    @property
    def n(self) -> int:
        if self.mode == "sequential":
            return self.matchups.graph.n
        return self.matchings.graph.n

    def require_feasible_skills(self, true_skills: RatingVector) -> None:
        if true_skills.n != self.n:
            raise ValueError("skills dimension does not match the graph")
        if math.isfinite(self.cap):
            if float(np.max(np.abs(true_skills.values))) > self.cap + 1e-12:
                raise ValueError("true skills exceed the rating cap")


@dataclass
class ChainState:
    """Mutable chain state: current ratings plus time-average bookkeeping.

    ``running_sum`` accumulates the states X^s for s >= burn_in, i.e. the
    state at the start of each averaged step.
    """

    ratings: np.ndarray
    step_count: int = 0
    running_sum: np.ndarray = field(default=None)  # type: ignore[assignment]
    burn_in: int = 0
    games: int = 0

    def __post_init__(self) -> None:
        self.ratings = np.asarray(self.ratings, dtype=float).copy()
        if self.running_sum is None:
            self.running_sum = np.zeros_like(self.ratings)
        else:
            self.running_sum = np.asarray(self.running_sum, dtype=float).copy()

    @classmethod
    def initial(cls, n: int, burn_in: int = 0) -> ChainState:
        """Fresh chain started from the all-zero rating vector."""
        return cls(np.zeros(n), burn_in=burn_in)

    def averaged_steps(self) -> int:
        return max(0, self.step_count - self.burn_in)


@dataclass(frozen=True)
class RunResult:
    """Aggregates of one trajectory."""

    time_average: np.ndarray
    final_ratings: np.ndarray
    total_steps: int
    total_games: int
    max_abs: float


@dataclass(frozen=True)
class EquilibriumEstimate:
    """Empirical stationary mean/variance from thinned post-burn-in samples."""

    mean: np.ndarray
    variance: np.ndarray
    samples: int
    thinning: int
    batch_means: np.ndarray | None = None
    batch_variances: np.ndarray | None = None


@dataclass(frozen=True)
class CouplingState:
    chain_a: ChainState
    chain_b: ChainState
    distance_l2: float
    distance_l1: float


@dataclass(frozen=True)
class CouplingTrace:
    """Per-step distances of a coupled pair; index 0 is the initial pair."""

    distance_l2: np.ndarray
    distance_l1: np.ndarray
    initial: CouplingState
    final: CouplingState

    def __len__(self) -> int:
        return self.distance_l2.size


@dataclass(frozen=True)
class WinProbabilityCheck:
    """Empirical vs exact per-player next-game win probabilities."""

    discrepancy: np.ndarray
    standard_error: np.ndarray
    empirical: np.ndarray
    exact: np.ndarray


class Observer(Protocol):
    def on_checkpoint(
        self,
        step: int,
        games: int,
        ratings: np.ndarray,
        average: np.ndarray | None,
        interval_max_abs: float,
    ) -> None: ...


def apply_elo_update(
    ratings: np.ndarray, winner: int, loser: int, eta: float
) -> np.ndarray:
    """Zero-sum update: winner gains eta * sigmoid(loser - winner), loser loses it."""
    if winner == loser:
        raise ValueError("players must be distinct")
    out = np.asarray(ratings, dtype=float).copy()
    d = eta * sigmoid(float(out[loser]) - float(out[winner]))
    out[winner] += d
    out[loser] -= d
    return out


def _sum_target(total: float, n: int, cap: float) -> float:
    """Sum preserved by the noisy projection, clamped into the feasible range."""
    bound = n * cap
    return max(-bound, min(bound, total))


def _maybe_project(x: np.ndarray, cap: float, preserve_sum: bool) -> np.ndarray:
    """Project only when a coordinate escaped the box; identity otherwise."""
    if not math.isfinite(cap) or float(np.max(np.abs(x))) <= cap:
        return x
    target = _sum_target(float(x.sum()), x.size, cap) if preserve_sum else 0.0
    projected, _ = _project_capped_sum(x, cap, target)
    return projected


def elo_step(
    state: ChainState,
    config: EloConfig,
    true_skills: RatingVector,
    rng: RngStream,
) -> ChainState:
    """One sequential step: sample pair and winner, update, (noise,) project."""
    if config.mode != "sequential":
        raise ValueError("elo_step requires a sequential config")
    config.require_feasible_skills(true_skills)
    i, j = sample_pair(config.matchups, rng)
    winner = sample_outcome(true_skills, i, j, rng)
    loser = j if winner == i else i
    new_running = state.running_sum
    if state.step_count >= state.burn_in:
        new_running = new_running + state.ratings
    x = apply_elo_update(state.ratings, winner, loser, eta=config.eta)
    if config.noise_delta > 0.0:
        amp = math.sqrt(config.noise_delta)
        x[i] += (2.0 * rng.random() - 1.0) * amp
        x[j] += (2.0 * rng.random() - 1.0) * amp
    x = _maybe_project(x, config.cap, preserve_sum=config.noise_delta > 0.0)
    return ChainState(
        x, state.step_count + 1, new_running, state.burn_in, state.games + 1
    )


def parallel_elo_step(
    state: ChainState,
    config: EloConfig,
    true_skills: RatingVector,
    rng: RngStream,
) -> ChainState:
    """One round: sample a matching, update every pair, project once."""
    if config.mode != "parallel":
        raise ValueError("parallel_elo_step requires a parallel config")
    config.require_feasible_skills(true_skills)
    matching = config.matchings.sample(rng)
    played = [v for e in matching for v in e]
    if len(set(played)) != len(played):
        raise RuntimeError("sampled edge set is not a matching")
    new_running = state.running_sum
    if state.step_count >= state.burn_in:
        new_running = new_running + state.ratings
    x = state.ratings.copy()
    amp = math.sqrt(config.noise_delta) if config.noise_delta > 0.0 else 0.0
    for i, j in matching:
        winner = sample_outcome(true_skills, i, j, rng)
        loser = j if winner == i else i
        d = config.eta * sigmoid(float(x[loser]) - float(x[winner]))
        x[winner] += d
        x[loser] -= d
        if amp:
            x[i] += (2.0 * rng.random() - 1.0) * amp
            x[j] += (2.0 * rng.random() - 1.0) * amp
    x = _maybe_project(x, config.cap, preserve_sum=config.noise_delta > 0.0)
    return ChainState(
        x,
        state.step_count + 1,
        new_running,
        state.burn_in,
        state.games + len(matching),
    )


def run_chain(
    config: EloConfig,
    true_skills: RatingVector,
    burn_in: int,
    steps: int,
    rng: RngStream,
    observers: Sequence[Observer] = (),
    checkpoints: Sequence[int] | None = None,
    x0: np.ndarray | None = None,
) -> RunResult:
    """Run burn_in + steps states from X^0 = 0 and time-average the last ``steps``.

    The average covers the states X^s for s in [burn_in, burn_in+steps-1].
    ``checkpoints`` are state indices at which every observer receives the
    current ratings, the partial time average so far (None during burn-in)
    and the max absolute rating seen since the previous checkpoint.
    """
    if steps < 1:
        raise ValueError("need at least one averaged step")
    if burn_in < 0:
        raise ValueError("burn-in cannot be negative")
    config.require_feasible_skills(true_skills)
    if observers and checkpoints is None:
        checkpoints = [burn_in + steps - 1]
    return _run_kernel(
        config, true_skills, burn_in, steps, rng, tuple(observers), checkpoints, x0
    )


def _edge_arrays(q: MatchupDistribution):
    edges = q.graph.edges
    cum = np.cumsum(q.weights).tolist()
    return edges, cum


def _win_probs(skills: np.ndarray, edges) -> list[float]:
    return [sigmoid(float(skills[i]) - float(skills[j])) for i, j in edges]


def _run_kernel(
    config: EloConfig,
    true_skills: RatingVector,
    burn_in: int,
    steps: int,
    rng: RngStream,
    observers: tuple[Observer, ...],
    checkpoints: Sequence[int] | None,
    x0: np.ndarray | None,
) -> RunResult:
    n = config.n
    num_states = burn_in + steps
    window_lo = burn_in
    window_hi = burn_in + steps - 1
    sequential = config.mode == "sequential"
    rho = true_skills.values
    eta = config.eta
    cap = config.cap
    capped = math.isfinite(cap)
    noise = config.noise_delta
    amp = math.sqrt(noise) if noise > 0.0 else 0.0

    if sequential:
        if not config.matchups.is_sequential():
            raise ValueError("sequential chain needs weights summing to 1")
        edges, cum = _edge_arrays(config.matchups)
        pwin = _win_probs(rho, edges)
        m = len(edges)
        sampler = None
    else:
        sampler = config.matchings
        edges = cum = pwin = None
        m = 0

    x = [0.0] * n if x0 is None else [float(v) for v in np.asarray(x0, dtype=float)]
    acc = [0.0] * n
    last = [0] * n
    games = 0

    cps = sorted(set(int(c) for c in checkpoints)) if checkpoints else []
    for c in cps:
        if not (0 <= c < num_states):
            raise ValueError(f"checkpoint {c} outside state range [0, {num_states})")
    cp_pos = 0
    interval_max = max(abs(v) for v in x)
    global_max = interval_max

    def flush(k: int, s: int) -> None:
        lo = last[k]
        if lo < window_lo:
            lo = window_lo
        hi = s if s <= window_hi else window_hi
        if hi >= lo:
            acc[k] += x[k] * (hi - lo + 1)
        last[k] = s + 1

    def flush_all(s: int) -> None:
        for k in range(n):
            flush(k, s)

    def partial_average(s: int) -> np.ndarray | None:
        if s < window_lo:
            return None
        out = np.empty(n)
        for k in range(n):
            lo = max(last[k], window_lo)
            extra = x[k] * (s - lo + 1) if s >= lo else 0.0
            out[k] = acc[k] + extra
        return out / (s - window_lo + 1)

    def report(s: int) -> float:
        nonlocal interval_max
        xa = np.array(x)
        avg = partial_average(s)
        for obs in observers:
            obs.on_checkpoint(s, games, xa, avg, interval_max)
        current = float(np.max(np.abs(xa)))
        interval_max = current
        return current

    if cp_pos < len(cps) and cps[cp_pos] == 0:
        report(0)
        cp_pos += 1

    rnd = rng.random
    exp = math.exp
    for s in range(num_states - 1):
        if sequential:
            u = rnd()
            e = bisect_right(cum, u)
            if e >= m:
                e = m - 1
            i, j = edges[e]
            if rnd() < pwin[e]:
                w, l = i, j
            else:
                w, l = j, i
            z = x[l] - x[w]
            if z >= 0.0:
                d = eta * (1.0 / (1.0 + exp(-z)))
            else:
                ez = exp(z)
                d = eta * (ez / (1.0 + ez))
            flush(w, s)
            flush(l, s)
            nw = x[w] + d
            nl = x[l] - d
            if amp:
                ni = (2.0 * rnd() - 1.0) * amp
                nj = (2.0 * rnd() - 1.0) * amp
                if w == i:
                    nw += ni
                    nl += nj
                else:
                    nl += ni
                    nw += nj
            x[w] = nw
            x[l] = nl
            a = nw if nw >= 0.0 else -nw
            b = nl if nl >= 0.0 else -nl
            if a < b:
                a = b
            if a > interval_max:
                interval_max = a
            games += 1
            if capped and a > cap:
                flush_all(s)
                arr, _ = _project_capped_sum(
                    np.array(x), cap, _sum_target(sum(x), n, cap) if amp else 0.0
                )
                x = arr.tolist()
                cur = max(abs(v) for v in x)
                if cur > interval_max:
                    interval_max = cur
        else:
            matching = sampler.sample(rng)
            over = False
            for i, j in matching:
                if rnd() < sigmoid(float(rho[i]) - float(rho[j])):
                    w, l = i, j
                else:
                    w, l = j, i
                z = x[l] - x[w]
                if z >= 0.0:
                    d = eta * (1.0 / (1.0 + exp(-z)))
                else:
                    ez = exp(z)
                    d = eta * (ez / (1.0 + ez))
                flush(w, s)
                flush(l, s)
                x[w] += d
                x[l] -= d
                if amp:
                    x[i] += (2.0 * rnd() - 1.0) * amp
                    x[j] += (2.0 * rnd() - 1.0) * amp
                a = max(abs(x[i]), abs(x[j]))
                if a > interval_max:
                    interval_max = a
                if capped and a > cap:
                    over = True
            games += len(matching)
            if over and max(abs(v) for v in x) > cap:
                flush_all(s)
                arr, _ = _project_capped_sum(
                    np.array(x), cap, _sum_target(sum(x), n, cap) if amp else 0.0
                )
                x = arr.tolist()
                cur = max(abs(v) for v in x)
                if cur > interval_max:
                    interval_max = cur

        s1 = s + 1
        if s1 % _RECENTER_EVERY == 0 and not amp:
            flush_all(s)
            mean = sum(x) / n
            x = [v - mean for v in x]
        if cp_pos < len(cps) and cps[cp_pos] == s1:
            current = report(s1)
            cp_pos += 1
            if interval_max > global_max:
                global_max = interval_max
            interval_max = current
        elif interval_max > global_max:
            global_max = interval_max

    flush_all(num_states - 1)
    if interval_max > global_max:
        global_max = interval_max
    average = np.array(acc) / steps
    return RunResult(
        time_average=average,
        final_ratings=np.array(x),
        total_steps=num_states - 1,
        total_games=games,
        max_abs=global_max,
    )


def _visit_states(
    config: EloConfig,
    true_skills: RatingVector,
    burn_in: int,
    samples: int,
    thinning: int,
    rng: RngStream,
    visit: Callable[[list[float]], None],
) -> None:
    """Advance the chain and call ``visit`` on each retained state.

    Retains the states reached after burn_in + thinning, burn_in +
    2*thinning, ... steps; draw-for-draw identical to the step operations.
    """
    config.require_feasible_skills(true_skills)
    n = config.n
    sequential = config.mode == "sequential"
    rho = true_skills.values
    eta = config.eta
    cap = config.cap
    capped = math.isfinite(cap)
    amp = math.sqrt(config.noise_delta) if config.noise_delta > 0.0 else 0.0
    if sequential:
        if not config.matchups.is_sequential():
            raise ValueError("sequential chain needs weights summing to 1")
        edges, cum = _edge_arrays(config.matchups)
        pwin = _win_probs(rho, edges)
        m = len(edges)
    else:
        sampler = config.matchings

    x = [0.0] * n
    rnd = rng.random
    exp = math.exp
    taken = 0
    next_keep = burn_in + thinning
    kept = 0
    while kept < samples:
        if sequential:
            u = rnd()
            e = bisect_right(cum, u)
            if e >= m:
                e = m - 1
            i, j = edges[e]
            if rnd() < pwin[e]:
                w, l = i, j
            else:
                w, l = j, i
            z = x[l] - x[w]
            if z >= 0.0:
                d = eta * (1.0 / (1.0 + exp(-z)))
            else:
                ez = exp(z)
                d = eta * (ez / (1.0 + ez))
            nw = x[w] + d
            nl = x[l] - d
            if amp:
                ni = (2.0 * rnd() - 1.0) * amp
                nj = (2.0 * rnd() - 1.0) * amp
                if w == i:
                    nw += ni
                    nl += nj
                else:
                    nl += ni
                    nw += nj
            x[w] = nw
            x[l] = nl
            if capped and max(abs(nw), abs(nl)) > cap:
                arr, _ = _project_capped_sum(np.array(x), cap, _sum_target(sum(x), n, cap) if amp else 0.0)
                x = arr.tolist()
        else:
            matching = sampler.sample(rng)
            over = False
            for i, j in matching:
                if rnd() < sigmoid(float(rho[i]) - float(rho[j])):
                    w, l = i, j
                else:
                    w, l = j, i
                z = x[l] - x[w]
                if z >= 0.0:
                    d = eta * (1.0 / (1.0 + exp(-z)))
                else:
                    ez = exp(z)
                    d = eta * (ez / (1.0 + ez))
                x[w] += d
                x[l] -= d
                if amp:
                    x[i] += (2.0 * rnd() - 1.0) * amp
                    x[j] += (2.0 * rnd() - 1.0) * amp
                if capped and max(abs(x[i]), abs(x[j])) > cap:
                    over = True
            if over and max(abs(v) for v in x) > cap:
                arr, _ = _project_capped_sum(np.array(x), cap, _sum_target(sum(x), n, cap) if amp else 0.0)
                x = arr.tolist()
        taken += 1
        if taken % _RECENTER_EVERY == 0 and not amp:
            mean = sum(x) / n
            x = [v - mean for v in x]
        if taken == next_keep:
            visit(x)
            kept += 1
            next_keep += thinning


def default_thinning(config: EloConfig) -> int:
    """ceil(t_mix) when the cap is finite; 1 in the uncapped regime."""
    if not math.isfinite(config.cap):
        return 1
    q = config.matchups
    if q is None:
        q = config.matchings.marginals()  # type: ignore[union-attr]
    gap = spectral_gap(build_laplacian(q)).gap
    return max(1, math.ceil(mixing_time(config.cap, config.eta, gap, config.n)))


def estimate_equilibrium(
    config: EloConfig,
    true_skills: RatingVector,
    burn_in: int,
    samples: int,
    thinning: int | None = None,
    rng: RngStream | None = None,
    batches: int = 0,
) -> EquilibriumEstimate:
    """Empirical stationary mean and variance from thinned samples.

    ``thinning=None`` uses ceil(t_mix) to de-correlate samples.  With
    ``batches`` > 0 the estimate also carries per-batch means and
    variances (computed around the global mean), from which Monte Carlo
    standard errors that respect autocorrelation can be formed.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    if rng is None:
        raise ValueError("an RngStream is required")
    if thinning is None:
        thinning = default_thinning(config)
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    n = config.n
    sum_x = np.zeros(n)
    sum_x2 = np.zeros(n)
    batch_size = samples // batches if batches > 0 else 0
    batch_m1 = np.zeros((batches, n)) if batches > 0 else None
    batch_m2 = np.zeros((batches, n)) if batches > 0 else None
    count = 0

    def visit(x: list[float]) -> None:
        nonlocal count
        xa = np.array(x)
        sum_x[:] += xa
        sum_x2[:] += xa * xa
        if batches > 0:
            b = count // batch_size
            if b < batches:
                batch_m1[b] += xa
                batch_m2[b] += xa * xa
        count += 1

    _visit_states(config, true_skills, burn_in, samples, thinning, rng, visit)
    mean = sum_x / samples
    variance = np.maximum(sum_x2 / samples - mean * mean, 0.0)
    batch_means = batch_variances = None
    if batches > 0:
        batch_means = batch_m1 / batch_size
        batch_variances = (
            batch_m2 / batch_size - 2.0 * mean * batch_means + mean * mean
        )
    return EquilibriumEstimate(
        mean, variance, samples, thinning, batch_means, batch_variances
    )


def coupled_run(
    config: EloConfig,
    true_skills: RatingVector,
    x0,
    y0,
    steps: int,
    rng: RngStream,
) -> CouplingTrace:
    """Advance two chains under the trivial coupling, recording distances.

    Both chains see the same pair, the same winner and (when noisy) the
    same noise each step; distances are recorded after every step.
    """
    if config.mode != "sequential":
        raise ValueError("coupled runs are defined for sequential chains")
    config.require_feasible_skills(true_skills)
    if not config.matchups.is_sequential():
        raise ValueError("sequential chain needs weights summing to 1")
    n = config.n
    xa = [float(v) for v in np.asarray(x0, dtype=float)]
    xb = [float(v) for v in np.asarray(y0, dtype=float)]
    if len(xa) != n or len(xb) != n:
        raise ValueError("initial states must match the graph size")
    _check_feasible_start(xa, config.cap)
    _check_feasible_start(xb, config.cap)

    edges, cum = _edge_arrays(config.matchups)
    pwin = _win_probs(true_skills.values, edges)
    m = len(edges)
    eta = config.eta
    cap = config.cap
    capped = math.isfinite(cap)
    amp = math.sqrt(config.noise_delta) if config.noise_delta > 0.0 else 0.0

    l1 = np.empty(steps + 1)
    l2 = np.empty(steps + 1)

    def distances(k: int) -> None:
        s1 = 0.0
        s2 = 0.0
        for t in range(n):
            d = xa[t] - xb[t]
            s1 += abs(d)
            s2 += d * d
        l1[k] = s1
        l2[k] = math.sqrt(s2)

    distances(0)
    initial = _coupling_snapshot(xa, xb, l2[0], l1[0])
    rnd = rng.random
    exp = math.exp
    for s in range(steps):
        u = rnd()
        e = bisect_right(cum, u)
        if e >= m:
            e = m - 1
        i, j = edges[e]
        win_i = rnd() < pwin[e]
        ni = nj = 0.0
        if amp:
            ni = (2.0 * rnd() - 1.0) * amp
            nj = (2.0 * rnd() - 1.0) * amp
        for x in (xa, xb):
            if win_i:
                w, l = i, j
            else:
                w, l = j, i
            z = x[l] - x[w]
            if z >= 0.0:
                d = eta * (1.0 / (1.0 + exp(-z)))
            else:
                ez = exp(z)
                d = eta * (ez / (1.0 + ez))
            x[w] += d
            x[l] -= d
            if amp:
                x[i] += ni
                x[j] += nj
            if capped and max(abs(x[i]), abs(x[j])) > cap:
                arr, _ = _project_capped_sum(
                    np.array(x), cap, _sum_target(sum(x), n, cap) if amp else 0.0
                )
                x[:] = arr.tolist()
        distances(s + 1)
    final = _coupling_snapshot(xa, xb, l2[steps], l1[steps])
    return CouplingTrace(l2, l1, initial, final)


def _check_feasible_start(x: list[float], cap: float) -> None:
    if math.isfinite(cap) and max(abs(v) for v in x) > cap + 1e-12:
        raise ValueError("initial state violates the cap")


def _coupling_snapshot(xa, xb, d2: float, d1: float) -> CouplingState:
    return CouplingState(
        ChainState(np.array(xa)), ChainState(np.array(xb)), d2, d1
    )


def check_win_probability_unbiasedness(
    config: EloConfig,
    true_skills: RatingVector,
    samples: int,
    rng: RngStream,
    burn_in: int | None = None,
    batches: int = 50,
) -> WinProbabilityCheck:
    """Per-player gap between equilibrium-estimated and true win probabilities.

    The identity sum_j q_{ij} E_pi[sigmoid(X_i - X_j)] = sum_j q_{ij}
    sigmoid(rho_i - rho_j) holds only without the projection step, so the
    config must be uncapped.
    """
    if math.isfinite(config.cap):
        raise ValueError("the win-probability identity requires an infinite cap")
    if config.mode != "sequential":
        raise ValueError("defined for sequential chains")
    if burn_in is None:
        burn_in = max(1000, samples // 10)
    n = config.n
    q = config.matchups
    rho = true_skills.values
    exact = np.zeros(n)
    for k, (i, j) in enumerate(q.graph.edges):
        p = sigmoid(float(rho[i]) - float(rho[j]))
        exact[i] += q.weights[k] * p
        exact[j] += q.weights[k] * (1.0 - p)

    edge_list = list(q.graph.edges)
    w_list = q.weights.tolist()
    acc = np.zeros(n)
    batch_acc = np.zeros((batches, n))
    batch_size = max(1, samples // batches)
    count = 0

    def visit(x: list[float]) -> None:
        nonlocal count
        row = np.zeros(n)
        for (i, j), w in zip(edge_list, w_list):
            p = sigmoid(x[i] - x[j])
            row[i] += w * p
            row[j] += w * (1.0 - p)
        acc[:] += row
        b = count // batch_size
        if b < batches:
            batch_acc[b] += row
        count += 1

    _visit_states(config, true_skills, burn_in, samples, 1, rng, visit)
    empirical = acc / samples
    bm = batch_acc / batch_size
    se = bm.std(axis=0, ddof=1) / math.sqrt(batches)
    return WinProbabilityCheck(
        discrepancy=np.abs(empirical - exact),
        standard_error=se,
        empirical=empirical,
        exact=exact,
    )
