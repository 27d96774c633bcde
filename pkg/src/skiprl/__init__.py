"""Desk-scale laboratory for offline RL in stage-structured MDPs with skipping."""

from .design import (
    DesignResult,
    Guess,
    approx_optimal_design,
    build_true_guess,
    epsilon_net,
    guess_from_doc,
    guess_grid,
    guess_to_doc,
    panel_size,
)
from .envs import FeatureMap, PolicyParams, estimate_misspecification, fit_policy_params, random_linear_mdp, state_range
from .harness import ExperimentConfig, emit_plots, load_dataset, run, save_dataset, sweep, verify
from .learner import (
    ConfidenceSets,
    DerivedConstants,
    LearnerConfig,
    SolveOutcome,
    build_confidence_sets,
    calibrate,
    clipped_q,
    clipped_v,
    derived_constants,
    lstsq_anchor,
    skip_optimal_policy,
    solve,
    stage_covariance,
    tightness,
)
from .mdp import (
    Dataset,
    OccupancyMeasure,
    Policy,
    StagedMdp,
    Trajectory,
    ValueTables,
    evaluate_policy,
    occupancy,
    optimal_policy,
    sample_trajectory,
)
from .oracles import (
    ConcReport,
    check_elliptical_potential,
    check_lsq_decomposition,
    check_perf_diff,
    check_projection_bound,
    check_range_bound,
    check_skip_realizability,
    concentrability,
    suboptimality,
)
from .skipping import SkipParams, StopDistribution, guess_range, skip_probability, skip_target, stop_distribution

__version__ = "0.1.0"
