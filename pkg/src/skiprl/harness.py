"""Experiment orchestration: configs, persistence, runs, sweeps, verification.

A run builds the environment from its seed, computes the exact optimal value,
concentrability, and the design-based guess, collects trajectories with the
behavior policy, optionally calibrates the confidence radius and tightness
threshold on held-out replicates, solves, and evaluates the returned policy
by exact dynamic programming.  Replicates are pure functions of (config, n,
replicate index), so sweeps can fan out over processes and still produce
byte-identical output; rows are sorted before writing and wall time is the
only nondeterministic field.
"""
from __future__ import annotations

import concurrent.futures
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import learner, oracles
from .design import Guess, build_true_guess, guess_grid
from .envs import FeatureMap, estimate_misspecification, random_linear_mdp, sample_policies
from .learner import LearnerConfig, calibrate, solve
from .mdp import (
    Dataset,
    Policy,
    StagedMdp,
    Trajectory,
    ValidationError,
    mix_policies,
    optimal_policy,
    sample_trajectories,
    uniform_policy,
)
from .skipping import SkipParams

WORKERS_ENV = "SKIPRL_WORKERS"

ROW_COLUMNS = ("n", "seed", "gap", "chosen_guess", "feasible_count", "tightness_max", "wall_ms")


class HarnessError(RuntimeError):
    """Wraps a module failure with the pipeline stage that raised it."""

    def __init__(self, stage, original):
        super().__init__(f"stage {stage!r} failed: {original}")
        self.stage = stage
        self.original = original


# ---------------------------------------------------------------------------
# configuration


@dataclass
class EnvSpec:
    d: int = 2
    horizon: int = 3
    stage_sizes: tuple = (1, 4, 4, 1)
    num_actions: int = 2
    reward_kind: str = "deterministic-mean"
    reward_scale: float = 1.0
    seed: int = 7


@dataclass
class DataSpec:
    n: int = 1000
    behavior: str = "uniform"        # "uniform" or "eps-greedy"
    mix: float = 0.5                 # uniform weight for eps-greedy
    seed: int = 101


@dataclass
class LearnSpec:
    lam: float = 1.0
    beta: float = 10.0
    eps_bar: float = 1.0
    theta_radius: float = 1e6
    alpha: float = 0.2
    grid_per_stage: int = 8
    combo_cap: int = 64
    net_spacing: float | None = None
    seed: int = 0


@dataclass
class CalibrationSpec:
    enabled: bool = True
    replicates: int = 10
    delta: float = 0.05
    seed_offset: int = 1_000_000


@dataclass
class GuessGridSpec:
    count: int = 16
    spread: float = 0.3
    seed: int = 11


@dataclass
class SweepSpec:
    n_values: tuple = (100, 1000, 10000)
    replicates: int = 20


@dataclass
class ExperimentConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    data: DataSpec = field(default_factory=DataSpec)
    learn: LearnSpec = field(default_factory=LearnSpec)
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    guesses: GuessGridSpec = field(default_factory=GuessGridSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    policy_sample: int = 200
    policy_sample_seed: int = 5
    output_dir: str = "results"

    def __post_init__(self):
        if self.sweep.replicates < 1:
            raise ValidationError("replicate count must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        def build(spec_cls, key):
            sub = dict(doc.get(key, {}))
            if "stage_sizes" in sub:
                sub["stage_sizes"] = tuple(sub["stage_sizes"])
            if "n_values" in sub:
                sub["n_values"] = tuple(sub["n_values"])
            return spec_cls(**sub)

        return cls(
            env=build(EnvSpec, "env"),
            data=build(DataSpec, "data"),
            learn=build(LearnSpec, "learn"),
            calibration=build(CalibrationSpec, "calibration"),
            guesses=build(GuessGridSpec, "guesses"),
            sweep=build(SweepSpec, "sweep"),
            policy_sample=doc.get("policy_sample", 200),
            policy_sample_seed=doc.get("policy_sample_seed", 5),
            output_dir=doc.get("output_dir", "results"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_json(fh.read())


# ---------------------------------------------------------------------------
# environment assembly


@dataclass
class Instance:
    """Everything derived deterministically from the environment part of a config."""

    mdp: StagedMdp
    featmap: FeatureMap
    behavior: Policy
    pistar: Policy
    vstar: float
    c_conc: float
    true_guess: Guess
    guesses: list
    skip: SkipParams
    eta_hat: float


def learner_config(cfg: ExperimentConfig, d: int) -> LearnerConfig:
    ls = cfg.learn
    return LearnerConfig(
        lam=ls.lam,
        beta=ls.beta,
        eps_bar=ls.eps_bar,
        theta_radius=ls.theta_radius,
        skip=SkipParams(alpha=ls.alpha, d=d),
        grid_per_stage=ls.grid_per_stage,
        combo_cap=ls.combo_cap,
        net_spacing=ls.net_spacing,
        seed=ls.seed,
    )


def build_instance(cfg: ExperimentConfig) -> Instance:
    env = cfg.env
    try:
        mdp, featmap = random_linear_mdp(
            env.d,
            env.horizon,
            env.stage_sizes,
            env.num_actions,
            env.seed,
            env.reward_kind,
            env.reward_scale,
        )
    except Exception as err:
        raise HarnessError("gen-env", err) from err
    try:
        pistar, star_vals = optimal_policy(mdp)
        if cfg.data.behavior == "uniform":
            behavior = uniform_policy(mdp)
        elif cfg.data.behavior == "eps-greedy":
            behavior = mix_policies(pistar, uniform_policy(mdp), cfg.data.mix)
        else:
            raise ValidationError(f"unknown behavior kind {cfg.data.behavior!r}")
        conc = oracles.concentrability(mdp, behavior)
        policies = sample_policies(mdp, cfg.policy_sample, cfg.policy_sample_seed)
        true_guess = build_true_guess(mdp, featmap, policies)
        guesses = guess_grid(true_guess, cfg.guesses.spread, cfg.guesses.count, cfg.guesses.seed)
        eta_hat = estimate_misspecification(mdp, featmap, cfg.policy_sample, cfg.policy_sample_seed)
    except HarnessError:
        raise
    except Exception as err:
        raise HarnessError("prepare", err) from err
    return Instance(
        mdp=mdp,
        featmap=featmap,
        behavior=behavior,
        pistar=pistar,
        vstar=float(star_vals.v[0][0]),
        c_conc=conc.c_conc,
        true_guess=true_guess,
        guesses=guesses,
        skip=SkipParams(alpha=cfg.learn.alpha, d=env.d),
        eta_hat=eta_hat,
    )


def collect(inst: Instance, n: int, seed) -> Dataset:
    trajs = sample_trajectories(inst.mdp, inst.behavior, n, seed, inst.featmap)
    return Dataset.from_trajectories(trajs)


# ---------------------------------------------------------------------------
# runs and sweeps


@dataclass
class ReplicateRecord:
    n: int
    seed: int
    gap: float
    chosen_guess: int
    feasible_count: int
    tightness_max: float
    wall_ms: float

    def row(self) -> dict:
        return {k: getattr(self, k) for k in ROW_COLUMNS}


@dataclass
class ExperimentResult:
    rows: list
    summary: list          # per n: dict(n, median_gap, iqr_low, iqr_high)
    config_echo: str
    calibrations: dict     # n -> {"beta": ..., "eps_bar": ...}
    vstar: float


def calibrated_config(cfg: ExperimentConfig, inst: Instance, n: int) -> tuple:
    base = learner_config(cfg, cfg.env.d)
    if not cfg.calibration.enabled:
        return base, {"beta": base.beta, "eps_bar": base.eps_bar}
    cal = calibrate(
        inst.mdp,
        inst.featmap,
        inst.behavior,
        inst.true_guess,
        n,
        base,
        cfg.calibration.replicates,
        cfg.calibration.delta,
        [cfg.data.seed, cfg.calibration.seed_offset],
    )
    tuned = replace(base, beta=cal.beta, eps_bar=cal.eps_bar)
    return tuned, {"beta": cal.beta, "eps_bar": cal.eps_bar}


def run_replicate(cfg: ExperimentConfig, inst: Instance, lc: LearnerConfig, n: int, replicate: int):
    start = time.perf_counter()
    try:
        ds = collect(inst, n, [cfg.data.seed, replicate])
    except Exception as err:
        raise HarnessError("collect", err) from err
    try:
        outcome = solve(ds, inst.guesses, lc, inst.featmap)
    except Exception as err:
        raise HarnessError("learn", err) from err
    try:
        gap = oracles.suboptimality(inst.mdp, outcome.policy)
    except Exception as err:
        raise HarnessError("eval", err) from err
    wall_ms = (time.perf_counter() - start) * 1000.0
    record = ReplicateRecord(
        n=n,
        seed=replicate,
        gap=gap,
        chosen_guess=outcome.chosen_guess,
        feasible_count=outcome.feasible_count,
        tightness_max=outcome.tightness_max,
        wall_ms=wall_ms,
    )
    return record, outcome


_INSTANCE_CACHE: dict = {}


def _cached_instance(cfg_json: str):
    if cfg_json not in _INSTANCE_CACHE:
        _INSTANCE_CACHE.clear()  # one instance per worker is enough
        _INSTANCE_CACHE[cfg_json] = build_instance(ExperimentConfig.from_json(cfg_json))
    return _INSTANCE_CACHE[cfg_json]


def _worker_cell(payload):
    cfg_json, n, replicate, beta, eps_bar = payload
    cfg = ExperimentConfig.from_json(cfg_json)
    inst = _cached_instance(cfg_json)
    lc = replace(learner_config(cfg, cfg.env.d), beta=beta, eps_bar=eps_bar)
    record, _ = run_replicate(cfg, inst, lc, n, replicate)
    return record


def worker_count() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def summarize(rows) -> list:
    out = []
    for n in sorted({r.n for r in rows}):
        gaps = np.array([r.gap for r in rows if r.n == n])
        out.append(
            {
                "n": int(n),
                "median_gap": float(np.median(gaps)),
                "iqr_low": float(np.quantile(gaps, 0.25)),
                "iqr_high": float(np.quantile(gaps, 0.75)),
            }
        )
    return out


def _run_cells(cfg: ExperimentConfig, n_values) -> ExperimentResult:
    inst = build_instance(cfg)
    calibrations = {}
    tuned = {}
    for n in n_values:
        lc, cal = calibrated_config(cfg, inst, n)
        tuned[n] = lc
        calibrations[int(n)] = cal
    cells = [(n, r) for n in n_values for r in range(cfg.sweep.replicates)]
    workers = worker_count()
    if workers > 1 and len(cells) > 1:
        cfg_json = cfg.to_json()
        payloads = [(cfg_json, n, r, tuned[n].beta, tuned[n].eps_bar) for n, r in cells]
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_worker_cell, payloads))
    else:
        rows = [run_replicate(cfg, inst, tuned[n], n, r)[0] for n, r in cells]
    rows.sort(key=lambda r: (r.n, r.seed))
    return ExperimentResult(
        rows=rows,
        summary=summarize(rows),
        config_echo=cfg.to_json(),
        calibrations=calibrations,
        vstar=inst.vstar,
    )


def run(cfg: ExperimentConfig) -> ExperimentResult:
    """Full pipeline at the config's single data size."""
    return _run_cells(cfg, [cfg.data.n])


def sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """The run pipeline across the config's n grid."""
    return _run_cells(cfg, list(cfg.sweep.n_values))


# ---------------------------------------------------------------------------
# dataset persistence


def save_dataset(dataset, path) -> None:
    """One trajectory per line: {"steps": [[s,a,r]...], "features": [...]}. Lossless.

    Accepts a Dataset or a (possibly empty) list of trajectories; an empty
    dataset produces an empty file.
    """
    trajectories = (
        [dataset.trajectory(j) for j in range(dataset.n)] if isinstance(dataset, Dataset) else dataset
    )
    with open(path, "w") as fh:
        for traj in trajectories:
            steps = [
                [int(s), int(a), float(r)]
                for s, a, r in zip(traj.states, traj.actions, traj.rewards)
            ]
            doc = {"steps": steps, "features": traj.features.tolist()}
            fh.write(json.dumps(doc) + "\n")


def load_dataset(path) -> list:
    """Trajectory list from a line-oriented file; an empty file loads to []."""
    trajectories = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                states = np.array([s[0] for s in doc["steps"]], dtype=int)
                actions = np.array([s[1] for s in doc["steps"]], dtype=int)
                rewards = np.array([s[2] for s in doc["steps"]], dtype=float)
                feats = np.asarray(doc["features"], dtype=float)
                trajectories.append(Trajectory(states, actions, rewards, feats))
            except Exception as err:
                raise ValidationError(f"{path}: malformed trajectory on line {lineno}: {err}") from err
    return trajectories


# ---------------------------------------------------------------------------
# CSV + SVG emission


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(ROW_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r.row()[c]) for c in ROW_COLUMNS) + "\n")


def write_summary_csv(summary, path) -> None:
    cols = ("n", "median_gap", "iqr_low", "iqr_high")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in summary:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _svg_plot(rows, summary, width=640, height=420) -> str:
    """Self-contained gap-versus-n plot: markers, median line, IQR band."""
    margin = 60
    ns = sorted({r.n for r in rows})
    gaps = [r.gap for r in rows]
    lo_n, hi_n = min(ns), max(ns)
    span_x = max(np.log10(hi_n) - np.log10(lo_n), 1e-9)
    hi_g = max(max(gaps), 1e-9)

    def sx(n):
        return margin + (np.log10(n) - np.log10(lo_n)) / span_x * (width - 2 * margin)

    def sy(g):
        return height - margin - (g / (hi_g * 1.05)) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 15}" text-anchor="middle" font-size="13">trajectories n (log scale)</text>',
        f'<text x="18" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {height / 2:.1f})">suboptimality gap</text>',
    ]
    if len(summary) > 1:
        upper = " ".join(f"{sx(s['n']):.2f},{sy(s['iqr_high']):.2f}" for s in summary)
        lower = " ".join(f"{sx(s['n']):.2f},{sy(s['iqr_low']):.2f}" for s in reversed(summary))
        parts.append(f'<polygon points="{upper} {lower}" fill="#9ecae1" fill-opacity="0.45" stroke="none"/>')
        med = " ".join(f"{sx(s['n']):.2f},{sy(s['median_gap']):.2f}" for s in summary)
        parts.append(f'<polyline points="{med}" fill="none" stroke="#08519c" stroke-width="2"/>')
    for s in summary:
        parts.append(
            f'<circle cx="{sx(s["n"]):.2f}" cy="{sy(s["median_gap"]):.2f}" r="4" fill="#08519c"/>'
        )
    for r in rows:
        parts.append(f'<circle cx="{sx(r.n):.2f}" cy="{sy(r.gap):.2f}" r="1.8" fill="#444" fill-opacity="0.6"/>')
    for n in ns:
        parts.append(
            f'<text x="{sx(n):.2f}" y="{height - margin + 18}" text-anchor="middle" font-size="11">{n}</text>'
        )
    for frac in (0.0, 0.5, 1.0):
        g = frac * hi_g
        parts.append(f'<text x="{margin - 8}" y="{sy(g) + 4:.1f}" text-anchor="end" font-size="11">{g:.3g}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def emit_plots(result: ExperimentResult, out_dir) -> dict:
    """Write rows.csv, summary.csv, and gap_vs_n.svg; no-op warning when empty."""
    os.makedirs(out_dir, exist_ok=True)
    if not result.rows:
        return {"warning": "empty result table; nothing emitted"}
    rows_path = os.path.join(out_dir, "rows.csv")
    summary_path = os.path.join(out_dir, "summary.csv")
    svg_path = os.path.join(out_dir, "gap_vs_n.svg")
    write_rows_csv(result.rows, rows_path)
    write_summary_csv(result.summary, summary_path)
    with open(svg_path, "w") as fh:
        fh.write(_svg_plot(result.rows, result.summary))
    meta_path = os.path.join(out_dir, "run_meta.json")
    with open(meta_path, "w") as fh:
        json.dump(
            {
                "config": json.loads(result.config_echo),
                "calibrations": result.calibrations,
                "vstar": result.vstar,
            },
            fh,
            sort_keys=True,
        )
    return {"rows": rows_path, "summary": summary_path, "plot": svg_path, "meta": meta_path}


# ---------------------------------------------------------------------------
# lemma verification suites


def _random_mdp(rng) -> StagedMdp:
    from .envs import random_linear_mdp as _gen

    d = int(rng.integers(1, 4))
    H = int(rng.integers(2, 5))
    sizes = [1] + [int(rng.integers(2, 6)) for _ in range(H - 1)] + [1]
    A = int(rng.integers(2, 4))
    mdp, _ = _gen(d, H, sizes, A, int(rng.integers(0, 2**31)))
    return mdp


def _suite_lsq(seed):
    return oracles.check_lsq_decomposition(seed), -1e-9, "100 random regression instances, d<=5, n<=50"


def _suite_elliptical(seed):
    return oracles.check_elliptical_potential(seed), -1e-9, "100 random vector streams, d<=5, n<=59"


def _suite_projection(seed):
    return oracles.check_projection_bound(seed), -1e-9, "100 random weighted sums, d<=5, n<=59"


def _suite_perf_diff(seed, triples=50):
    from .mdp import random_policy

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(triples):
        mdp = _random_mdp(rng)
        pa, pb = random_policy(mdp, rng), random_policy(mdp, rng)
        worst = max(worst, oracles.check_perf_diff(mdp, pa, pb))
    return 1e-10 - worst, 0.0, f"{triples} random (MDP, policy, policy) triples"


def _suite_range_bound(seed, instances=5, policy_count=60):
    rng = np.random.default_rng(seed)
    worst = float("inf")
    for _ in range(instances):
        d = int(rng.integers(1, 4))
        H = int(rng.integers(2, 5))
        sizes = [1] + [int(rng.integers(2, 5)) for _ in range(H - 1)] + [1]
        mdp, featmap = random_linear_mdp(d, H, sizes, int(rng.integers(2, 4)), int(rng.integers(0, 2**31)))
        policies = sample_policies(mdp, policy_count, int(rng.integers(0, 2**31)))
        guess = build_true_guess(mdp, featmap, policies)
        worst = min(worst, oracles.check_range_bound(mdp, featmap, guess, policies))
    return worst, -1e-6, f"{instances} exact-linear instances, {policy_count} sampled policies each"


def _suite_skip_realizability(seed, instances=4, thetas=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        d = int(rng.integers(1, 4))
        H = int(rng.integers(2, 5))
        sizes = [1] + [int(rng.integers(2, 5)) for _ in range(H - 1)] + [1]
        mdp, featmap = random_linear_mdp(d, H, sizes, int(rng.integers(2, 4)), int(rng.integers(0, 2**31)))
        behavior = uniform_policy(mdp)
        policies = sample_policies(mdp, 40, int(rng.integers(0, 2**31)))
        guess = build_true_guess(mdp, featmap, policies)
        params = SkipParams(alpha=float(rng.uniform(0.05, 0.9)), d=d)
        for _ in range(thetas):
            theta = rng.normal(size=d)

            def f(stage, state, _theta=theta):
                return learner.clipped_v(_theta, featmap, stage, state)

            for h in range(H):
                worst = max(
                    worst,
                    oracles.check_skip_realizability(mdp, featmap, guess, behavior, f, h, params),
                )
    return 1e-6 - worst, 0.0, f"{instances} exact-linear instances, {thetas} clipped value functions each"


def _suite_concentrability(seed, instances=6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        d = int(rng.integers(1, 3))
        H = int(rng.integers(2, 4))
        sizes = [1] + [int(rng.integers(2, 4)) for _ in range(H - 1)] + [1]
        mdp, _ = random_linear_mdp(d, H, sizes, 2, int(rng.integers(0, 2**31)))
        behavior = uniform_policy(mdp)
        dp = oracles.concentrability(mdp, behavior).c_conc
        brute = oracles.concentrability_by_enumeration(mdp, behavior)
        worst = max(worst, abs(dp - brute))
    return 1e-10 - worst, 0.0, f"{instances} instances small enough for exhaustive policy enumeration"


VERIFY_SUITES = {
    "lsq-decomposition": _suite_lsq,
    "elliptical-potential": _suite_elliptical,
    "projection-bound": _suite_projection,
    "perf-diff": _suite_perf_diff,
    "range-bound": _suite_range_bound,
    "skip-realizability": _suite_skip_realizability,
    "concentrability": _suite_concentrability,
}


def verify(suites=None, seed: int = 0) -> dict:
    """Run the selected lemma suites; report worst slack and pass/fail each."""
    names = list(VERIFY_SUITES) if suites is None else list(suites)
    report = {"seed": seed, "suites": [], "all_pass": True}
    for name in names:
        if name not in VERIFY_SUITES:
            raise ValidationError(f"unknown verification suite {name!r}")
        t0 = time.perf_counter()
        slack, tolerance, instances = VERIFY_SUITES[name](seed)
        passed = bool(slack >= tolerance)
        report["suites"].append(
            {
                "name": name,
                "worst_slack": float(slack),
                "tolerance": tolerance,
                "instances": instances,
                "pass": passed,
                "elapsed_s": round(time.perf_counter() - t0, 3),
            }
        )
        report["all_pass"] = report["all_pass"] and passed
    return report
