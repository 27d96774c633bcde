"""Optimistic offline learner over skip guesses.

For every candidate guess the learner builds, backwards over stages, a finite
approximation of the parameter confidence sets: least-squares anchors are
computed for combinations of later-stage candidates, and a candidate pool
(anchors, optional diagnostics, optional net points) is filtered by the
ellipsoid test.  Guesses whose q-estimates spread too much on the data are
rejected; among the survivors the guess and stage-0 parameter maximising the
clipped start-state value win, and the output policy is greedy with respect
to the chosen parameters.

Everything here works from the recorded dataset only; the feature map is
needed just to materialise the greedy policy over the full state space.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .design import Guess, epsilon_net, panel_size
from .envs import FeatureMap, fit_policy_params
from .mdp import (
    Dataset,
    Policy,
    StagedMdp,
    ValidationError,
    ValueTables,
    sample_trajectories,
)
from .skipping import SkipParams, batch_skip_targets, dataset_omega, omega_tables

MEMBER_TOL = 1e-12
RADIUS_TOL = 1e-9


@dataclass
class LearnerConfig:
    """Knobs of the optimistic solver.

    ``beta`` is the ellipsoid radius, ``eps_bar`` the tightness threshold,
    ``theta_radius`` the candidate-norm ball, ``grid_per_stage`` the candidate
    pool budget and ``combo_cap`` the number of tail combinations enumerated
    per stage (full enumeration below the cap, seeded uniform subsample
    above).  ``net_spacing`` optionally adds epsilon-net points to the pool.
    """

    lam: float
    beta: float
    eps_bar: float
    theta_radius: float
    skip: SkipParams
    grid_per_stage: int = 8
    combo_cap: int = 64
    net_spacing: float | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.lam, self.beta, self.eps_bar, self.theta_radius) <= 0:
            raise ValidationError("lam, beta, eps_bar, theta_radius must be positive")
        if self.grid_per_stage < 1 or self.combo_cap < 1:
            raise ValidationError("grid_per_stage and combo_cap must be >= 1")


# ---------------------------------------------------------------------------
# clipped value estimators


def clipped_q(theta: np.ndarray, featmap: FeatureMap, stage: int, state: int, action: int) -> float:
    """clip_[0,H] of the linear action-value estimate."""
    H = featmap.horizon
    return float(np.clip(featmap.phi[stage][state, action] @ theta, 0.0, H))


def clipped_v(theta: np.ndarray, featmap: FeatureMap, stage: int, state: int) -> float:
    """clip_[0,H] of the best linear action-value; the clip is applied after the max."""
    H = featmap.horizon
    return float(np.clip((featmap.phi[stage][state] @ theta).max(), 0.0, H))


def start_value(theta: np.ndarray, featmap: FeatureMap) -> float:
    return clipped_v(theta, featmap, 0, 0)


def greedy_policy(featmap: FeatureMap, thetas: np.ndarray) -> Policy:
    """Deterministic greedy policy w.r.t. the clipped per-stage estimates.

    Ties after clipping break toward the lowest action index.
    """
    H = featmap.horizon
    tables = []
    for h in range(H + 1):
        scores = np.clip(featmap.phi[h] @ thetas[h], 0.0, H)
        table = np.zeros(scores.shape)
        table[np.arange(scores.shape[0]), np.argmax(scores, axis=1)] = 1.0
        tables.append(table)
    return Policy(tables)


# ---------------------------------------------------------------------------
# covariances and anchors


@dataclass
class StageCovariance:
    """Ridge covariance X_h = lam I + sum_j phi_h^j (phi_h^j)^T with cached inverse."""

    matrix: np.ndarray
    lam: float

    def __post_init__(self):
        self.inv = np.linalg.inv(self.matrix)
        if np.linalg.eigvalsh(self.matrix).min() < self.lam - 1e-9:
            raise ValidationError("stage covariance lost positive definiteness")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.inv @ b

    def norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ self.matrix @ v, 0.0)))

    def inv_norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ self.inv @ v, 0.0)))


def stage_features(dataset: Dataset, h: int) -> np.ndarray:
    """Features of the actions actually taken at stage h, shape (n, d)."""
    return dataset.features[np.arange(dataset.n), h, dataset.actions[:, h]]


def stage_covariance(dataset: Dataset, h: int, lam: float) -> StageCovariance:
    phi = stage_features(dataset, h)
    return StageCovariance(matrix=lam * np.eye(dataset.dim) + phi.T @ phi, lam=lam)


def _clipped_vbar_rows(stage_feats: np.ndarray, thetas: np.ndarray, horizon: int) -> np.ndarray:
    """v-bar of each theta at the visited states of one stage, shape (k, n)."""
    scores = np.einsum("nad,kd->kna", stage_feats, thetas)
    return np.clip(scores.max(axis=2), 0.0, horizon)


def lstsq_anchor(dataset: Dataset, h: int, guess: Guess, theta_tail, config: LearnerConfig) -> np.ndarray:
    """Ridge solution X_h^{-1} sum_j phi_h^j * target_j for one tail choice.

    ``theta_tail`` holds one parameter per stage h+1..H; the terminal entry
    is ignored because the terminal value estimate is identically zero.
    """
    tail = np.asarray(theta_tail, dtype=float)
    H = dataset.horizon
    if tail.shape != (H - h, dataset.dim):
        raise ValidationError(f"tail must supply one parameter for each of stages {h + 1}..{H}")
    omega = dataset_omega(dataset, guess, config.skip)
    fvals = np.zeros((dataset.n, H - h))
    for i, u in enumerate(range(h + 1, H)):
        fvals[:, i] = np.clip((dataset.features[:, u] @ tail[i]).max(axis=1), 0.0, H)
    targets = batch_skip_targets(dataset.rewards, omega, fvals, h)
    cov = stage_covariance(dataset, h, config.lam)
    return cov.solve(stage_features(dataset, h).T @ targets)


# ---------------------------------------------------------------------------
# confidence sets


@dataclass
class StageSets:
    anchors: np.ndarray        # (m, d)
    members: np.ndarray        # (k, d) candidates that passed the ellipsoid test
    member_stats: np.ndarray   # (k,) min anchor distance in the X_h norm


@dataclass
class ConfidenceSets:
    """Finite approximation of the per-stage parameter confidence sets.

    Stage H is pinned to the singleton {0}.  ``empty_stage`` records the
    first stage (from the top of the backward pass) where no candidate
    survived, which signals infeasibility of the guess.
    """

    horizon: int
    dim: int
    stage_sets: list                    # index h in 0..H-1; None below an empty stage
    covariances: list
    empty_stage: int | None = None

    def members_at(self, h: int) -> np.ndarray:
        if h == self.horizon:
            return np.zeros((1, self.dim))
        sets = self.stage_sets[h]
        if sets is None:
            raise ValidationError(f"stage {h} has no sets (guess infeasible at stage {self.empty_stage})")
        return sets.members

    def ellipsoid_statistic(self, h: int, theta: np.ndarray) -> float:
        """min over anchors of the X_h-distance to theta."""
        sets = self.stage_sets[h]
        if sets is None:
            return float("inf")
        diffs = sets.anchors - np.asarray(theta)[None, :]
        quad = np.einsum("md,de,me->m", diffs, self.covariances[h].matrix, diffs)
        return float(np.sqrt(max(quad.min(), 0.0)))

    def is_member(self, h: int, theta: np.ndarray, config: LearnerConfig) -> bool:
        if h == self.horizon:
            return bool(np.all(np.asarray(theta) == 0.0))
        if np.linalg.norm(theta) > config.theta_radius + RADIUS_TOL:
            return False
        return self.ellipsoid_statistic(h, theta) <= config.beta + MEMBER_TOL


def _dedupe_rows(arr: np.ndarray) -> np.ndarray:
    _, idx = np.unique(arr, axis=0, return_index=True)
    return arr[np.sort(idx)]


def _tail_combos(counts, cap: int, rng_seed) -> list:
    total = 1
    for k in counts:
        total *= k
        if total > cap:
            break
    if total <= cap:
        return list(itertools.product(*[range(k) for k in counts]))
    rng = np.random.default_rng(rng_seed)
    draws = np.stack([rng.integers(0, k, size=cap) for k in counts], axis=1)
    return [tuple(row) for row in _dedupe_rows(draws)]


def build_confidence_sets(
    dataset: Dataset,
    guess: Guess,
    config: LearnerConfig,
    extra_candidates: dict | None = None,
    membership_filter: bool = True,
) -> ConfidenceSets:
    """Backward construction of anchors and filtered candidate sets.

    ``extra_candidates`` maps a stage to extra vectors to include in that
    stage's candidate pool (used by the diagnostic lemma checks, which track
    specific parameters through the construction).  With
    ``membership_filter=False`` the ellipsoid/radius filter is skipped, which
    is only used to produce a deterministic fallback when every guess was
    rejected.
    """
    n, H, d = dataset.n, dataset.horizon, dataset.dim
    omega = dataset_omega(dataset, guess, config.skip)
    covs = [stage_covariance(dataset, h, config.lam) for h in range(H)]

    net = None
    if config.net_spacing is not None:
        net = epsilon_net(config.theta_radius, d, config.net_spacing)

    stage_sets: list = [None] * H
    vbar_rows: list = [None] * (H + 1)
    vbar_rows[H] = np.zeros((1, n))
    member_lists: list = [None] * (H + 1)
    member_lists[H] = np.zeros((1, d))
    empty_stage = None

    for h in range(H - 1, -1, -1):
        counts = [member_lists[u].shape[0] for u in range(h + 1, H + 1)]
        combos = _tail_combos(counts, config.combo_cap, [config.seed, h])
        phi_h = stage_features(dataset, h)
        anchors = np.empty((len(combos), d))
        for ci, combo in enumerate(combos):
            fvals = np.empty((n, H - h))
            for i, u in enumerate(range(h + 1, H + 1)):
                fvals[:, i] = vbar_rows[u][combo[i]]
            targets = batch_skip_targets(dataset.rewards, omega, fvals, h)
            anchors[ci] = covs[h].solve(phi_h.T @ targets)
        anchors = _dedupe_rows(anchors)

        pool = [anchors]
        if extra_candidates and h in extra_candidates:
            pool.append(np.asarray(extra_candidates[h], dtype=float).reshape(-1, d))
        if net is not None:
            pool.append(net)
        pool = _dedupe_rows(np.vstack(pool))

        diffs = pool[:, None, :] - anchors[None, :, :]
        quad = np.einsum("pmd,de,pme->pm", diffs, covs[h].matrix, diffs)
        stats = np.sqrt(np.maximum(quad.min(axis=1), 0.0))
        order = np.lexsort((np.arange(pool.shape[0]), stats))[: config.grid_per_stage]
        pool, stats = pool[order], stats[order]

        if membership_filter:
            ok = (np.linalg.norm(pool, axis=1) <= config.theta_radius + RADIUS_TOL) & (
                stats <= config.beta + MEMBER_TOL
            )
            members, member_stats = pool[ok], stats[ok]
        else:
            members, member_stats = pool, stats
        stage_sets[h] = StageSets(anchors=anchors, members=members, member_stats=member_stats)
        if members.shape[0] == 0:
            empty_stage = h
            for t in range(h):
                stage_sets[t] = None
            break
        member_lists[h] = members
        vbar_rows[h] = _clipped_vbar_rows(dataset.features[:, h], members, H)

    return ConfidenceSets(
        horizon=H, dim=d, stage_sets=stage_sets, covariances=covs, empty_stage=empty_stage
    )


def tightness(dataset: Dataset, h: int, thetas) -> float:
    """Average on-data spread of the clipped q-estimates over a parameter set."""
    thetas = np.asarray(thetas, dtype=float).reshape(-1, dataset.dim)
    if thetas.shape[0] == 0:
        raise ValidationError("tightness needs a nonempty parameter set")
    scores = np.clip(stage_features(dataset, h) @ thetas.T, 0.0, dataset.horizon)
    return float(np.mean(scores.max(axis=1) - scores.min(axis=1)))


# ---------------------------------------------------------------------------
# the optimistic solve


@dataclass
class GuessReport:
    index: int
    feasible: bool
    tightness: list
    empty_stage: int | None = None
    sets: ConfidenceSets | None = field(default=None, repr=False)

    @property
    def max_tightness(self) -> float:
        return max(self.tightness) if self.tightness else float("inf")


@dataclass
class SolveOutcome:
    """Result of the optimistic solve; also the all-guesses-rejected report.

    When no guess passes the tightness filter, ``all_rejected`` is True and a
    deterministic fallback chain (least-infeasible guess) still populates the
    policy so downstream evaluation stays total.
    """

    chosen_guess: int
    thetas: np.ndarray
    vbar_start: float
    reports: list
    policy: Policy
    all_rejected: bool = False
    fallback_used: bool = False

    @property
    def feasible_count(self) -> int:
        return sum(1 for r in self.reports if r.feasible)

    @property
    def tightness_max(self) -> float:
        vals = [r.max_tightness for r in self.reports if r.empty_stage is None]
        return max(vals) if vals else float("inf")


def _chain_from(sets: ConfidenceSets, featmap: FeatureMap):
    """Optimistic stage-0 member plus first members at later stages."""
    H, d = sets.horizon, sets.dim
    members = sets.members_at(0)
    vals = [start_value(theta, featmap) for theta in members]
    best = int(np.argmax(vals))
    thetas = np.zeros((H + 1, d))
    thetas[0] = members[best]
    for h in range(1, H):
        thetas[h] = sets.members_at(h)[0]
    return thetas, vals[best]


def solve(dataset: Dataset, guesses, config: LearnerConfig, featmap: FeatureMap) -> SolveOutcome:
    """Optimistic argmax over guesses and stage-0 candidates.

    Every guess gets confidence sets and a per-stage tightness value; guesses
    exceeding ``eps_bar`` at any stage (or with an empty stage) are rejected.
    Among feasible guesses the largest clipped start-state estimate wins,
    with ties broken by guess order then member order.  Parameters at stages
    past the first are the first member of their set, and the output policy
    is greedy w.r.t. the chosen chain.
    """
    if not guesses:
        raise ValidationError("at least one guess candidate is required")
    H = dataset.horizon
    reports = []
    for gi, guess in enumerate(guesses):
        sets = build_confidence_sets(dataset, guess, config)
        if sets.empty_stage is not None:
            reports.append(
                GuessReport(index=gi, feasible=False, tightness=[], empty_stage=sets.empty_stage, sets=sets)
            )
            continue
        tight = [tightness(dataset, h, sets.members_at(h)) for h in range(H)]
        feasible = max(tight) <= config.eps_bar + MEMBER_TOL
        reports.append(GuessReport(index=gi, feasible=feasible, tightness=tight, sets=sets))

    candidates = [r for r in reports if r.feasible]
    all_rejected = not candidates
    fallback_used = False
    if all_rejected:
        fallback_used = True
        whole = [r for r in reports if r.empty_stage is None]
        if whole:
            pick = min(whole, key=lambda r: (r.max_tightness, r.index))
            chosen, sets = pick.index, pick.sets
        else:
            chosen = 0
            sets = build_confidence_sets(dataset, guesses[0], config, membership_filter=False)
    else:
        best = None
        for r in candidates:
            thetas, val = _chain_from(r.sets, featmap)
            if best is None or val > best[0]:
                best = (val, r.index, r.sets)
        _, chosen, sets = best

    thetas, vbar = _chain_from(sets, featmap)
    return SolveOutcome(
        chosen_guess=chosen,
        thetas=thetas,
        vbar_start=vbar,
        reports=reports,
        policy=greedy_policy(featmap, thetas),
        all_rejected=all_rejected,
        fallback_used=fallback_used,
    )


def serialize_outcome(outcome: SolveOutcome) -> str:
    doc = {
        "chosen_guess": outcome.chosen_guess,
        "all_rejected": outcome.all_rejected,
        "fallback_used": outcome.fallback_used,
        "vbar_start": outcome.vbar_start,
        "thetas": outcome.thetas.tolist(),
        "per_guess": [
            {
                "index": r.index,
                "feasible": r.feasible,
                "empty_stage": r.empty_stage,
                "tightness": list(r.tightness),
            }
            for r in outcome.reports
        ],
        "policy": [t.tolist() for t in outcome.policy.tables],
    }
    return json.dumps(doc, sort_keys=True)


# ---------------------------------------------------------------------------
# skip-optimal policy (oracle side)


def skip_optimal_policy(
    mdp: StagedMdp, featmap: FeatureMap, guess: Guess, behavior: Policy, params: SkipParams
):
    """Backward evaluation of the optimal policy of the guess-skipped MDP.

    At each state the policy follows the behavior policy with the skip
    probability and otherwise acts greedily w.r.t. its own action values; the
    recursion resolves stage by stage from the terminal end.
    """
    H = mdp.horizon
    omega = omega_tables(guess, featmap, params)
    q = [None] * (H + 1)
    v = [None] * (H + 1)
    tables = [None] * (H + 1)
    q[H] = np.zeros((1, mdp.num_actions))
    v[H] = np.zeros(1)
    terminal = np.zeros((1, mdp.num_actions))
    terminal[0, 0] = 1.0
    tables[H] = terminal
    for h in range(H - 1, -1, -1):
        q[h] = mdp.reward_means[h] + mdp.transitions[h] @ v[h + 1]
        greedy = np.zeros_like(q[h])
        greedy[np.arange(q[h].shape[0]), np.argmax(q[h], axis=1)] = 1.0
        w = omega[h][:, None]
        tables[h] = w * behavior.tables[h] + (1.0 - w) * greedy
        v[h] = np.sum(tables[h] * q[h], axis=1)
    return Policy(tables), ValueTables(q=q, v=v)


# ---------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationResult:
    beta: float
    eps_bar: float
    anchor_stats: np.ndarray     # per-replicate max over stages of ||anchor - psi||_{X_h}
    tightness_values: np.ndarray


def calibrate(
    mdp: StagedMdp,
    featmap: FeatureMap,
    behavior: Policy,
    guess: Guess,
    n: int,
    config: LearnerConfig,
    replicates: int,
    delta: float,
    seed,
    include_psi_extras: bool = True,
) -> CalibrationResult:
    """Data-driven confidence radius and tightness threshold.

    ``beta`` is the (1 - delta)-quantile, over held-out replicates, of the
    per-replicate worst-stage distance between the skip-optimal parameter and
    its own-tail anchor; ``eps_bar`` is twice the worst observed true-guess
    tightness under that beta (floored away from zero so exact-singleton sets
    stay feasible).
    """
    pistar, _ = skip_optimal_policy(mdp, featmap, guess, behavior, config.skip)
    psi = fit_policy_params(mdp, featmap, pistar).theta
    H = mdp.horizon
    datasets = []
    stats = np.zeros(replicates)
    for c in range(replicates):
        ds = Dataset.from_trajectories(sample_trajectories(mdp, behavior, n, [seed, c], featmap))
        datasets.append(ds)
        worst = 0.0
        for h in range(H):
            anchor = lstsq_anchor(ds, h, guess, psi[h + 1 :], config)
            cov = stage_covariance(ds, h, config.lam)
            worst = max(worst, cov.norm(anchor - psi[h]))
        stats[c] = worst
    beta = max(float(np.quantile(stats, 1.0 - delta, method="higher")), 1e-9)

    extras = {h: psi[h][None, :] for h in range(H)} if include_psi_extras else None
    cfg = replace(config, beta=beta)
    tight = np.zeros(replicates)
    for c, ds in enumerate(datasets):
        sets = build_confidence_sets(ds, guess, cfg, extra_candidates=extras)
        if sets.empty_stage is not None:
            tight[c] = float("inf")
        else:
            tight[c] = max(tightness(ds, h, sets.members_at(h)) for h in range(H))
    eps_bar = max(2.0 * float(tight.max()), 1e-9)
    return CalibrationResult(beta=beta, eps_bar=eps_bar, anchor_stats=stats, tightness_values=tight)


# ---------------------------------------------------------------------------
# theoretical constants


def lambda_from_bound(horizon: int, d: int, l2_bar: float) -> float:
    """Ridge weight lambda from sqrt(lambda) = H^{3/2} d / l2_bar."""
    return (horizon ** 1.5 * d / l2_bar) ** 2


def _softplus_log(log_x: float) -> float:
    """log(1 + exp(log_x)) without overflow."""
    return log_x if log_x > 34.0 else math.log1p(math.exp(log_x))


@dataclass
class DerivedConstants:
    """The theoretical parameter table evaluated literally (report only)."""

    d0: int
    alpha: float
    l2_bar: float
    sqrt_lam: float
    lam: float
    eta_bar: float
    eps_check: float
    beta_bar: float
    beta: float
    eps_bar: float
    eps_tilde: float
    xi: float
    xi_bar: float
    log_guess_cover: float

    def __post_init__(self):
        for name in ("alpha", "l2_bar", "sqrt_lam", "lam", "eta_bar", "eps_check", "beta_bar", "beta"):
            if getattr(self, name) < 0:
                raise ValidationError(f"derived constant {name} must be nonnegative")


def derived_constants(
    d: int,
    horizon: int,
    eps: float,
    delta: float,
    l1: float,
    l2: float,
    eta: float,
    c_conc: float,
    n: int,
    xi: float | None = None,
) -> DerivedConstants:
    """Evaluate the full constants table for a given problem size.

    These grow far beyond anything a desk-scale run can meet; they exist so
    the theoretical regime is inspectable next to the calibrated one.  The
    guess-ball radius is taken to be l2 (the fitted parameters always lie in
    that ball), and the cover cardinality is reported in log form.
    """
    H = horizon
    d0 = panel_size(d)
    alpha = eps / (12.0 * (H + 1))
    l2_bar = l2 * (8.0 * H * H * d0 / alpha + 1.0)
    sqrt_lam = H ** 1.5 * d / l2_bar
    lam = sqrt_lam ** 2
    eta_bar = eta * (10.0 * H * H * d0 / alpha + 1.0)
    lg = l2  # guess-ball radius stand-in

    eps_check = (
        math.sqrt(d / n)
        + math.sqrt((d * d * math.log1p(16.0 * n * l1 * l1 * l2_bar ** 3) + math.log(3.0 * H / delta)) / n)
        + math.sqrt(2.0 * d / n * math.log((d * lam + n * l1 * l1) / (d * lam)))
    )
    beta_bar = (
        H
        * math.sqrt(
            2.0 * d * H * (d0 + 1) * math.log1p(28.0 * math.sqrt(2.0 * d) * H * H * lg * l2_bar * l1 / alpha)
            + d * math.log(lam + n * l1 * l1 / d)
            - d * math.log(lam)
            + math.log(3.0 * H / delta)
        )
        + 1.0
    )
    beta = H ** 1.5 * d + eta_bar * math.sqrt(n) + beta_bar

    log_base = (
        math.log(96.0)
        + 0.5 * math.log(2.0 * d)
        + 2.0 * math.log(H)
        + 2.0 * math.log(l1)
        + math.log(lg)
        - math.log(alpha)
        + math.log(l2_bar)
        - 1.5 * math.log(H)
        - math.log(d)
    )
    inner_bar = _softplus_log(log_base + math.log(n))
    inner_tilde = _softplus_log(log_base + 0.5 * math.log(n))
    eps_bar_v = (
        H * math.sqrt((d * H * H * d0 * inner_bar + math.log(6.0 * H / delta)) / n)
        + 1.0 / math.sqrt(n)
        + H * eta_bar
        + 4.0 * H * c_conc * eps_check * beta
    )
    eps_tilde = c_conc * (
        H * math.sqrt((d * H * H * d0 * inner_tilde + math.log(6.0 * H / delta)) / n)
        + 1.0 / math.sqrt(n)
        + eps_bar_v
    )

    growth = math.log(2.0 * math.sqrt(n) * l1 * l2_bar / (H ** 1.5 * d))
    if xi is None:
        log_xi = -(
            math.log(24.0)
            + 0.5 * math.log(n)
            + 0.5 * math.log(2.0 * d)
            + 2.0 * math.log(H)
            + math.log(l1)
            - math.log(alpha)
            + H * growth
        )
        xi_val = math.exp(log_xi) if log_xi > -700 else 0.0
        xi_bar = 0.5 / math.sqrt(n)  # analytic value at the default xi
    else:
        log_xi = math.log(xi)
        xi_val = xi
        log_xi_bar = (
            math.log(12.0)
            + 0.5 * math.log(2.0 * d)
            + 2.0 * math.log(H)
            + math.log(l1)
            + log_xi
            - math.log(alpha)
            + H * growth
        )
        xi_bar = math.exp(log_xi_bar) if log_xi_bar < 700 else float("inf")
    log_cover = d * H * d0 * _softplus_log(math.log(2.0 * lg) - log_xi)

    return DerivedConstants(
        d0=d0,
        alpha=alpha,
        l2_bar=l2_bar,
        sqrt_lam=sqrt_lam,
        lam=lam,
        eta_bar=eta_bar,
        eps_check=eps_check,
        beta_bar=beta_bar,
        beta=beta,
        eps_bar=eps_bar_v,
        eps_tilde=eps_tilde,
        xi=xi_val,
        xi_bar=xi_bar,
        log_guess_cover=log_cover,
    )
