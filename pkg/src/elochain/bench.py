"""Benchmark graphs, skill samplers and experiment orchestration.

Runs repeated rating chains on dumbbell / pyramidal / random graphs under
uniform, gap-optimized sequential and parallel match-up schedules, with
per-checkpoint error and max-rating traces emitted as deterministic CSV.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ComparisonGraph,
    MatchupDistribution,
    RatingVector,
    RngStream,
    save_edge_list,
)
from .design import (
    DesignProblem,
    MatchingDistribution,
    build_matching_distribution,
    optimize_discrete,
    optimize_sequential,
)
from .elo import EloConfig, run_chain
from .spectral import build_laplacian, spectral_gap

__all__ = [
    "ExperimentSpec",
    "TrajectoryRecord",
    "ScheduleComparison",
    "make_dumbbell",
    "make_pyramidal",
    "make_erdos_renyi_giant",
    "make_path",
    "make_star",
    "make_complete",
    "build_graph",
    "sample_skills",
    "log_checkpoints",
    "run_experiment",
    "compare_schedules",
]

_SCHEDULES = ("uniform", "design_seq", "design_par")


def make_dumbbell(clique_size: int, k: int) -> ComparisonGraph:
    """Two disjoint cliques joined by a k-edge matching (vertex i to c+i)."""
    if clique_size < 2:
        raise ValueError("cliques need at least 2 vertices")
    if not (1 <= k <= clique_size):
        raise ValueError(f"bridge size must lie in [1, {clique_size}], got {k}")
    c = clique_size
    edges = []
    for block in (0, c):
        for i in range(c):
            for j in range(i + 1, c):
                edges.append((block + i, block + j))
    for i in range(k):
        edges.append((i, c + i))
    return ComparisonGraph(2 * c, tuple(edges))


def make_path(n: int) -> ComparisonGraph:
    if n < 2:
        raise ValueError("path needs at least 2 vertices")
    return ComparisonGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def make_star(n: int) -> ComparisonGraph:
    if n < 2:
        raise ValueError("star needs at least 2 vertices")
    return ComparisonGraph(n, tuple((0, i) for i in range(1, n)))


def make_complete(n: int) -> ComparisonGraph:
    if n < 2:
        raise ValueError("complete graph needs at least 2 vertices")
    return ComparisonGraph(
        n, tuple((i, j) for i in range(n) for j in range(i + 1, n))
    )


def _erdos_renyi_edges(n: int, p: float, rng: RngStream, offset: int = 0):
    mask = rng.uniform(0.0, 1.0, size=(n, n)) < p
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if mask[i, j]:
                edges.append((offset + i, offset + j))
    return edges


def make_erdos_renyi_giant(n: int, p: float, seed: int) -> ComparisonGraph:
    """Largest connected component of G(n, p), relabeled to 0..m-1."""
    if not (0.0 < p <= 1.0):
        raise ValueError("edge density must lie in (0, 1]")
    rng = RngStream(seed, 900)
    edges = _erdos_renyi_edges(n, p, rng)
    if not edges:
        raise ValueError("sampled graph has no edges")
    full = ComparisonGraph(n, tuple(edges))
    adj = full.neighbors()
    seen = [-1] * n
    components: list[list[int]] = []
    for start in range(n):
        if seen[start] >= 0:
            continue
        comp = [start]
        seen[start] = len(components)
        stack = [start]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if seen[w] < 0:
                    seen[w] = len(components)
                    comp.append(w)
                    stack.append(w)
        components.append(comp)
    giant = max(components, key=len)
    relabel = {v: idx for idx, v in enumerate(sorted(giant))}
    kept = tuple(
        (relabel[i], relabel[j])
        for i, j in full.edges
        if i in relabel and j in relabel
    )
    return ComparisonGraph(len(giant), kept)


def make_pyramidal(
    n1: int, n2: int, n3: int, p: float, seed: int
) -> ComparisonGraph:
    """Three Erdos-Renyi blocks chained by two sparse random cuts.

    Cut sizes default to ceil(sqrt(n_i * n_{i+1}) / 4); the construction
    resamples (budget 100) until the result is connected.
    """
    if not (0.0 < p <= 1.0):
        raise ValueError("edge density must lie in (0, 1]")
    sizes = (n1, n2, n3)
    offsets = (0, n1, n1 + n2)
    n = sum(sizes)
    rng = RngStream(seed, 901)
    for _ in range(100):
        edges: list[tuple[int, int]] = []
        for size, offset in zip(sizes, offsets):
            edges.extend(_erdos_renyi_edges(size, p, rng, offset))
        for a in (0, 1):
            cut = math.ceil(math.sqrt(sizes[a] * sizes[a + 1]) / 4.0)
            pairs = set()
            while len(pairs) < cut:
                i = int(rng.integers(0, sizes[a]))
                j = int(rng.integers(0, sizes[a + 1]))
                pairs.add((offsets[a] + i, offsets[a + 1] + j))
            edges.extend(pairs)
        graph = ComparisonGraph(n, tuple(set(edges)))
        if graph.is_connected():
            return graph
    raise RuntimeError("could not sample a connected pyramidal graph")


def build_graph(spec: dict, default_seed: int = 0) -> ComparisonGraph:
    """Dispatch a JSON-style graph spec to the matching generator."""
    kind = spec["kind"]
    if kind == "dumbbell":
        return make_dumbbell(spec["clique_size"], spec["k"])
    if kind == "pyramidal":
        return make_pyramidal(
            spec["n1"], spec["n2"], spec["n3"], spec["p"],
            spec.get("seed", default_seed),
        )
    if kind == "erdos_renyi_giant":
        return make_erdos_renyi_giant(
            spec["n"], spec["p"], spec.get("seed", default_seed)
        )
    if kind == "path":
        return make_path(spec["n"])
    if kind == "star":
        return make_star(spec["n"])
    if kind == "complete":
        return make_complete(spec["n"])
    raise ValueError(f"unknown graph kind {kind!r}")


def sample_skills(
    spec: dict, n: int, M: float, rng: RngStream
) -> RatingVector:
    """Sample true skills per spec and center them to zero-sum.

    Resamples (budget 100) when the centered vector violates the cap.
    """
    kind = spec["kind"]
    for _ in range(100):
        if kind == "gaussian_blocks":
            means = list(spec["means"])
            sd = float(spec["sd"])
            sizes = spec.get("sizes")
            if sizes is None:
                if n % len(means) != 0:
                    raise ValueError("blocks do not divide n; pass explicit sizes")
                sizes = [n // len(means)] * len(means)
            if sum(sizes) != n:
                raise ValueError(f"block sizes {sizes} do not sum to {n}")
            values = np.concatenate(
                [rng.normal(m, sd, size) for m, size in zip(means, sizes)]
            )
        elif kind == "uniform":
            values = rng.uniform(spec["lo"], spec["hi"], n)
        elif kind == "file":
            values = load_skills_file(spec["path"])
            if values.size != n:
                raise ValueError(
                    f"skills file has {values.size} entries, expected {n}"
                )
        else:
            raise ValueError(f"unknown skills kind {kind!r}")
        values = values - values.mean()
        if not math.isfinite(M) or float(np.max(np.abs(values))) <= M:
            return RatingVector(values, cap=M)
        if kind == "file":
            break
    raise ValueError("could not sample skills within the cap")


def load_skills_file(path: str | Path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                values.append(float(line))
    arr = np.array(values)
    if abs(float(arr.sum())) > 1e-9:
        warnings.warn(
            f"skills in {path} sum to {arr.sum():g}; re-centering to zero-sum",
            stacklevel=2,
        )
    return arr


def log_checkpoints(last_state: int, per_decade: int = 40) -> list[int]:
    """State indices 0..last_state, log-spaced at ``per_decade`` points per decade."""
    if last_state < 1:
        return [0]
    points = {0, 1, last_state}
    steps = int(math.log10(last_state) * per_decade) + 1
    for k in range(steps + 1):
        v = round(10.0 ** (k / per_decade))
        if 1 <= v <= last_state:
            points.add(int(v))
    return sorted(points)


@dataclass
class TrajectoryRecord:
    """Rows of (replication, time, unit, metric, value), deterministic order."""

    rows: list[tuple[int, float, str, str, float]] = field(default_factory=list)

    def add(
        self, replication: int, time: float, unit: str, metric: str, value: float
    ) -> None:
        self.rows.append((replication, time, unit, metric, value))

    def sorted_rows(self) -> list[tuple[int, float, str, str, float]]:
        return sorted(self.rows, key=lambda r: (r[0], r[3], r[2], r[1]))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("replication,time,unit,metric,value\n")
            for rep, time, unit, metric, value in self.sorted_rows():
                fh.write(f"{rep},{time:.17g},{unit},{metric},{value:.17g}\n")


class _CheckpointCollector:
    """Observer turning run_chain checkpoints into trajectory rows."""

    def __init__(self, skills: np.ndarray):
        self.skills = skills
        self.steps: list[int] = []
        self.games: list[int] = []
        self.errors: list[float] = []
        self.interval_max: list[float] = []

    def on_checkpoint(self, step, games, ratings, average, interval_max_abs):
        self.steps.append(step)
        self.games.append(games)
        if average is None:
            self.errors.append(math.nan)
        else:
            diff = average - self.skills
            self.errors.append(float(diff @ diff) / self.skills.size)
        self.interval_max.append(interval_max_abs)


@dataclass(frozen=True)
class ExperimentSpec:
    """Field-for-field mirror of the bench JSON spec."""

    graph: dict
    skills: dict
    schedule: tuple[str, ...] = ("uniform",)
    eta: float = 0.1
    cap: float = math.inf
    burn_in: int = 0
    steps: int = 10_000  # total games budget per replication
    replications: int = 10
    seed: int = 0
    metrics: tuple[str, ...] = ("error",)
    checkpoints_per_decade: int = 40
    # fraction of q_e realized as the matching marginal of each edge; 2/3 is
    # the largest the cycle split supports, 1/3 the conservative choice
    parallel_marginal_fraction: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.steps < 1:
            raise ValueError("need at least one step")
        schedule = self.schedule
        if isinstance(schedule, str):
            schedule = (schedule,)
        for s in schedule:
            if s not in _SCHEDULES:
                raise ValueError(f"unknown schedule {s!r}")
        object.__setattr__(self, "schedule", tuple(schedule))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        for metric in self.metrics:
            if metric not in ("error", "maxabs", "games_vs_rounds"):
                raise ValueError(f"unknown metric {metric!r}")

    @classmethod
    def from_json(cls, payload: str | dict) -> ExperimentSpec:
        data = json.loads(payload) if isinstance(payload, str) else dict(payload)
        cap = data.get("cap", None)
        data["cap"] = math.inf if cap in (None, "inf") else float(cap)
        if isinstance(data.get("schedule"), list):
            data["schedule"] = tuple(data["schedule"])
        if isinstance(data.get("metrics"), list):
            data["metrics"] = tuple(data["metrics"])
        return cls(**data)

    def to_json(self) -> str:
        data = {
            "graph": self.graph,
            "skills": self.skills,
            "schedule": list(self.schedule),
            "eta": self.eta,
            "cap": None if math.isinf(self.cap) else self.cap,
            "burn_in": self.burn_in,
            "steps": self.steps,
            "replications": self.replications,
            "seed": self.seed,
            "metrics": list(self.metrics),
            "checkpoints_per_decade": self.checkpoints_per_decade,
            "parallel_marginal_fraction": self.parallel_marginal_fraction,
        }
        return json.dumps(data, sort_keys=True, indent=2)


@dataclass(frozen=True)
class _Schedules:
    """Match-up machinery shared by every replication of an experiment."""

    uniform: MatchupDistribution
    sequential: MatchupDistribution | None
    matchings: MatchingDistribution | None
    gaps: dict
    mean_matching_size: float | None


def _prepare_schedules(
    graph: ComparisonGraph,
    wanted: tuple[str, ...],
    budget: int = 5000,
    marginal_fraction: float = 2.0 / 3.0,
) -> _Schedules:
    """Match-up machinery per schedule.

    Parallel rounds default to the largest uniform marginal fraction (2/3)
    the three-matching construction supports, which is what the round-count
    comparisons assume.
    """
    uniform = MatchupDistribution.uniform(graph)
    gaps = {"uniform": spectral_gap(build_laplacian(uniform)).gap}
    sequential = None
    matchings = None
    mean_size = None
    if "design_seq" in wanted:
        res = optimize_sequential(DesignProblem(graph, "continuous", budget=budget))
        sequential = res.weights
        gaps["design_seq"] = res.gap
    if "design_par" in wanted:
        res = optimize_discrete(DesignProblem(graph, "discrete", budget=budget))
        gaps["design_disc"] = res.gap
        matchings = build_matching_distribution(
            res.weights, marginal_fraction=marginal_fraction
        )
        marg = matchings.marginals()
        gaps["design_par_marginals"] = spectral_gap(build_laplacian(marg)).gap
        mean_size = matchings.mean_size
    return _Schedules(uniform, sequential, matchings, gaps, mean_size)


def _config_for(
    schedule: str, schedules: _Schedules, eta: float, cap: float
) -> tuple[EloConfig, bool]:
    if schedule == "uniform":
        return EloConfig.sequential(schedules.uniform, eta, cap), False
    if schedule == "design_seq":
        return EloConfig.sequential(schedules.sequential, eta, cap), False
    return EloConfig.parallel(schedules.matchings, eta, cap), True


def run_experiment(
    spec: ExperimentSpec, out_dir: str | Path | None = None
) -> TrajectoryRecord:
    """Run every (replication, schedule) pair and collect trajectory rows.

    With ``out_dir`` set, writes ``trajectory.csv``, ``summary.json`` and
    ``graph.edgelist``.  Identical specs produce byte-identical output;
    partial results are flushed if a replication fails.
    """
    root = RngStream(spec.seed)
    graph = build_graph(spec.graph, default_seed=spec.seed)
    schedules = _prepare_schedules(
        graph, spec.schedule, marginal_fraction=spec.parallel_marginal_fraction
    )
    record = TrajectoryRecord()
    final_errors: dict[str, list[float]] = {s: [] for s in spec.schedule}
    max_abs: dict[str, list[float]] = {s: [] for s in spec.schedule}
    failure: Exception | None = None
    try:
        for rep in range(spec.replications):
            skills = sample_skills(
                spec.skills, graph.n, spec.cap, root.split(rep).split(0)
            )
            for sched_idx, schedule in enumerate(spec.schedule):
                config, parallel = _config_for(
                    schedule, schedules, spec.eta, spec.cap
                )
                if parallel:
                    rounds = max(
                        1, math.ceil(spec.steps / schedules.mean_matching_size)
                    )
                    averaged = rounds + 1 - spec.burn_in
                else:
                    averaged = spec.steps + 1 - spec.burn_in
                if averaged < 1:
                    raise ValueError("burn-in leaves no averaged steps")
                last_state = spec.burn_in + averaged - 1
                cps = [
                    c
                    for c in log_checkpoints(last_state, spec.checkpoints_per_decade)
                    if c >= spec.burn_in
                ]
                collector = _CheckpointCollector(skills.values)
                result = run_chain(
                    config,
                    skills,
                    spec.burn_in,
                    averaged,
                    root.split(rep).split(1 + sched_idx),
                    observers=[collector],
                    checkpoints=cps,
                )
                _emit_rows(record, rep, schedule, parallel, spec.metrics, collector)
                final_errors[schedule].append(
                    _final_error(result.time_average, skills.values)
                )
                max_abs[schedule].append(result.max_abs)
    except Exception as exc:  # flush partial rows before re-raising
        failure = exc
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        record.to_csv(out / "trajectory.csv")
        save_edge_list(graph, out / "graph.edgelist")
        summary = {
            "n": graph.n,
            "num_edges": graph.num_edges,
            "gaps": schedules.gaps,
            "mean_matching_size": schedules.mean_matching_size,
            "final_errors": final_errors,
            "max_abs": max_abs,
            "schedules": list(spec.schedule),
            "failed": repr(failure) if failure is not None else None,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    if failure is not None:
        raise failure
    return record


def _final_error(average: np.ndarray, skills: np.ndarray) -> float:
    diff = average - skills
    return float(diff @ diff) / skills.size


def _emit_rows(
    record: TrajectoryRecord,
    rep: int,
    schedule: str,
    parallel: bool,
    metrics: tuple[str, ...],
    collector: _CheckpointCollector,
) -> None:
    err_name = f"error:{schedule}"
    max_name = f"maxabs:{schedule}"
    # rounds with empty matchings do not advance the games axis; keep the
    # last error seen at each games count so times stay strictly increasing
    games_axis: dict[int, float] = {}
    for step, games, err, imax in zip(
        collector.steps, collector.games, collector.errors, collector.interval_max
    ):
        if "error" in metrics and not math.isnan(err):
            if parallel:
                record.add(rep, step, "rounds", err_name, err)
                games_axis[games] = err
            else:
                record.add(rep, step, "games", err_name, err)
        if "maxabs" in metrics:
            unit = "rounds" if parallel else "games"
            record.add(rep, step, unit, max_name, imax)
        if "games_vs_rounds" in metrics and parallel:
            record.add(rep, step, "rounds", f"games:{schedule}", games)
    for games, err in games_axis.items():
        record.add(rep, games, "games", err_name, err)


@dataclass(frozen=True)
class ScheduleComparison:
    """Final errors of the three schedules at matched budgets."""

    budget_games: int
    rounds_parallel: int
    gaps: dict
    mean_matching_size: float
    errors_at_games: dict[str, list[float]]
    errors_at_rounds: dict[str, list[float]]

    def summary(self) -> dict:
        return {
            "budget_games": self.budget_games,
            "rounds_parallel": self.rounds_parallel,
            "gaps": self.gaps,
            "mean_matching_size": self.mean_matching_size,
            "errors_at_games": {
                k: float(np.mean(v)) for k, v in self.errors_at_games.items()
            },
            "errors_at_rounds": {
                k: float(np.mean(v)) for k, v in self.errors_at_rounds.items()
            },
        }


def compare_schedules(
    graph: ComparisonGraph,
    skills_spec: dict,
    budget_games: int,
    seed: int,
    replications: int = 10,
    eta: float = 0.1,
    cap: float = math.inf,
) -> ScheduleComparison:
    """Run uniform / optimized-sequential / parallel at matched budgets.

    Games-matched errors evaluate every schedule after ``budget_games``
    games; rounds-matched errors evaluate the sequential schedules after
    as many games as the parallel run used rounds.
    """
    if budget_games < 1000:
        raise ValueError("budget too small to compare schedules")
    schedules = _prepare_schedules(graph, _SCHEDULES)
    n_mean = schedules.mean_matching_size
    rounds = max(1, math.ceil(budget_games / n_mean))
    root = RngStream(seed)
    errors_games: dict[str, list[float]] = {s: [] for s in _SCHEDULES}
    errors_rounds: dict[str, list[float]] = {s: [] for s in _SCHEDULES}
    for rep in range(replications):
        skills = sample_skills(skills_spec, graph.n, cap, root.split(rep).split(0))
        for sched_idx, schedule in enumerate(_SCHEDULES):
            config, parallel = _config_for(schedule, schedules, eta, cap)
            steps = rounds if parallel else budget_games
            cps = sorted({min(rounds, steps), steps})
            collector = _CheckpointCollector(skills.values)
            run_chain(
                config,
                skills,
                0,
                steps + 1,
                root.split(rep).split(1 + sched_idx),
                observers=[collector],
                checkpoints=cps,
            )
            by_step = dict(zip(collector.steps, collector.errors))
            errors_games[schedule].append(by_step[steps])
            errors_rounds[schedule].append(by_step[min(rounds, steps)])
    return ScheduleComparison(
        budget_games,
        rounds,
        schedules.gaps,
        n_mean,
        errors_games,
        errors_rounds,
    )
