"""Elo rating dynamics as a Markov chain, plus spectral tournament design."""

from .core import (
    ComparisonGraph,
    MatchupDistribution,
    RatingVector,
    RngStream,
    StepSize,
    load_edge_list,
    sample_outcome,
    sample_pair,
    save_edge_list,
    sigmoid,
    win_probability,
)
from .project import ProjectionResult, project_capped_zero_sum
from .spectral import (
    Laplacian,
    SpectrumSummary,
    build_laplacian,
    curvature_bound,
    dirichlet_form,
    mixing_time,
    spectral_gap,
)
from .elo import (
    ChainState,
    CouplingState,
    CouplingTrace,
    EloConfig,
    EquilibriumEstimate,
    RunResult,
    WinProbabilityCheck,
    apply_elo_update,
    check_win_probability_unbiasedness,
    coupled_run,
    elo_step,
    estimate_equilibrium,
    parallel_elo_step,
    run_chain,
)
from .design import (
    BvnDecomposition,
    CycleMatchings,
    DesignProblem,
    DesignResult,
    MatchingDistribution,
    birkhoff_von_neumann,
    build_matching_distribution,
    optimize_discrete,
    optimize_sequential,
    permutation_to_matchings,
    stochastic_completion,
)
from .bench import (
    ExperimentSpec,
    ScheduleComparison,
    TrajectoryRecord,
    build_graph,
    compare_schedules,
    log_checkpoints,
    make_complete,
    make_dumbbell,
    make_erdos_renyi_giant,
    make_path,
    make_pyramidal,
    make_star,
    run_experiment,
    sample_skills,
)

__version__ = "0.1.0"
