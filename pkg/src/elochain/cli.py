"""Command line front end: gap inspection, simulation, design and benchmarks."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentSpec,
    load_skills_file,
    log_checkpoints,
    run_experiment,
)
from .core import (
    MatchupDistribution,
    RatingVector,
    RngStream,
    load_edge_list,
)
from .design import (
    DesignProblem,
    build_matching_distribution,
    optimize_discrete,
    optimize_sequential,
)
from .elo import EloConfig, run_chain
from .spectral import build_laplacian, spectral_gap


def _load_weighted_graph(graph_path: str, weights: str):
    graph, file_weights = load_edge_list(graph_path)
    if weights == "uniform":
        return graph, MatchupDistribution.uniform(graph)
    if weights == "embedded":
        if file_weights is None:
            raise SystemExit("graph file carries no weight column")
        return graph, file_weights
    wgraph, wdist = load_edge_list(weights)
    if wdist is None:
        raise SystemExit(f"{weights} has no weight column")
    if wgraph.edges != graph.edges:
        raise SystemExit("weight file edges do not match the graph")
    return graph, wdist


def _cmd_gap(args: argparse.Namespace) -> int:
    graph, q = _load_weighted_graph(args.graph, args.weights)
    summary = spectral_gap(build_laplacian(q))
    n = graph.n
    payload = {
        "n": n,
        "num_edges": graph.num_edges,
        "eigenvalues": [float(v) for v in summary.eigenvalues[:4]],
        "gap": summary.gap,
        "four_over_n": 4.0 / n,
        "sequentially_normalized": q.is_sequential(1e-9),
        "within_four_over_n": summary.gap <= 4.0 / n + 1e-10,
    }
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    graph, q = _load_weighted_graph(args.graph, args.weights)
    values = load_skills_file(args.skills)
    cap = math.inf if args.cap is None else args.cap
    skills = RatingVector(values - values.mean(), cap=cap)
    config = EloConfig.sequential(q.normalized(), args.eta, cap)
    root = RngStream(args.seed)
    record = args.record
    lines = ["replication,step,metric,value"]
    for rep in range(args.replications):
        rows: list[tuple[int, str, float]] = []

        class Collector:
            def on_checkpoint(self, step, games, ratings, average, interval_max):
                if "maxabs" in record:
                    rows.append((step, "maxabs", interval_max))
                if average is not None and "error" in record:
                    diff = average - skills.values
                    rows.append(
                        (step, "error", float(diff @ diff) / graph.n)
                    )
                if "trace" in record:
                    for k, v in enumerate(ratings):
                        rows.append((step, f"rating_{k}", float(v)))

        last = args.burn_in + args.steps - 1
        cps = [c for c in log_checkpoints(last) if c >= args.burn_in]
        run_chain(
            config,
            skills,
            args.burn_in,
            args.steps,
            root.split(rep),
            observers=[Collector()],
            checkpoints=cps,
        )
        for step, metric, value in rows:
            lines.append(f"{rep},{step},{metric},{value:.17g}")
    out = Path(args.out)
    out.write_text("\n".join(lines) + "\n")
    return 0


def _cmd_design(args: argparse.Namespace) -> int:
    graph, _ = load_edge_list(args.graph)
    regime = "continuous" if args.regime == "seq" else "discrete"
    problem = DesignProblem(graph, regime, budget=args.budget, tolerance=args.tol)
    result = (
        optimize_sequential(problem)
        if regime == "continuous"
        else optimize_discrete(problem)
    )
    with open(args.out, "w") as fh:
        fh.write("i,j,q\n")
        for (i, j), w in zip(graph.edges, result.weights.weights):
            fh.write(f"{i},{j},{w:.17g}\n")
    if args.matchings:
        if regime != "discrete":
            raise SystemExit("--matchings requires --regime par")
        dist = build_matching_distribution(result.weights)
        payload = {
            "mean_matching_size": dist.mean_size,
            "permutations": [
                {
                    "coefficient": coeff,
                    "cycles": [
                        {
                            "vertices": list(cm.vertices),
                            "matchings": [
                                [list(e) for e in m] for m in cm.matchings
                            ],
                            "selection": list(cm.selection),
                        }
                        for cm in cycles
                    ],
                }
                for coeff, cycles in dist.permutation_atoms
            ],
        }
        Path(args.matchings).write_text(json.dumps(payload, indent=2))
    print(
        json.dumps(
            {
                "gap": result.gap,
                "iterations": result.iterations,
                "converged": result.converged,
            }
        )
    )
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    spec = ExperimentSpec.from_json(Path(args.spec).read_text())
    run_experiment(spec, out_dir=args.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="elochain",
        description="Elo-as-Markov-chain simulation and tournament design",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gap = sub.add_parser("gap", help="spectral gap of a weighted graph")
    p_gap.add_argument("--graph", required=True)
    p_gap.add_argument("--weights", default="uniform",
                       help="'uniform', 'embedded' or a weighted edge-list file")
    p_gap.set_defaults(func=_cmd_gap)

    p_sim = sub.add_parser("simulate", help="run rating chains to CSV")
    p_sim.add_argument("--graph", required=True)
    p_sim.add_argument("--weights", default="uniform")
    p_sim.add_argument("--skills", required=True)
    p_sim.add_argument("--eta", type=float, default=0.1)
    p_sim.add_argument("--cap", type=float, default=None)
    p_sim.add_argument("--burn-in", type=int, default=0)
    p_sim.add_argument("--steps", type=int, default=10_000)
    p_sim.add_argument("--replications", type=int, default=1)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--record", nargs="+", default=["error"],
                       choices=["error", "maxabs", "trace"])
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_design = sub.add_parser("design", help="optimize match-up weights")
    p_design.add_argument("--graph", required=True)
    p_design.add_argument("--regime", choices=["seq", "par"], required=True)
    p_design.add_argument("--budget", type=int, default=5000)
    p_design.add_argument("--tol", type=float, default=1e-6)
    p_design.add_argument("--out", required=True)
    p_design.add_argument("--matchings", default=None)
    p_design.set_defaults(func=_cmd_design)

    p_bench = sub.add_parser("bench", help="run an experiment spec")
    p_bench.add_argument("--spec", required=True)
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
