"""Independent brute-force and algebraic verifiers.

Every inequality check here reports slack (bound minus achieved value), never
a bare boolean, so tolerance regressions stay visible.  The concentrability
coefficient is computed exactly by a per-target reachability DP, and the
skip-realizability check evaluates its expectation by exhaustively
enumerating the trajectory space, so none of these paths share code with the
estimators they validate.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .design import Guess
from .envs import FeatureMap, fit_policy_params, state_range
from .mdp import (
    Policy,
    StagedMdp,
    ValidationError,
    enumerate_deterministic_policies,
    evaluate_policy,
    occupancy,
    optimal_policy,
)
from .skipping import SkipParams, omega_tables


@dataclass
class ConcReport:
    """Exact concentrability coefficient with its witnessing state-action."""

    c_conc: float
    witness: tuple          # (stage, state, action)
    stage_max: np.ndarray   # per-stage maximum ratio
    max_reach: list         # max_reach[h][s] = sup over policies of P(S_h = s)
    mu: list                # behavior occupancy tables

    def __post_init__(self):
        if np.isfinite(self.c_conc):
            h, s, a = self.witness
            again = self.max_reach[h][s] / self.mu[h][s, a]
            if abs(again - self.c_conc) > 1e-10:
                raise ValidationError("concentrability witness does not reproduce the coefficient")
            if self.c_conc < 1.0 - 1e-10:
                raise ValidationError("concentrability coefficient must be >= 1")


def _max_reach(mdp: StagedMdp, stage: int) -> np.ndarray:
    """sup over policies of P(S_stage = s) for every s, via backward control DP."""
    out = np.zeros(mdp.stage_sizes[stage])
    for target in range(mdp.stage_sizes[stage]):
        u = np.zeros(mdp.stage_sizes[stage])
        u[target] = 1.0
        for h in range(stage - 1, -1, -1):
            u = (mdp.transitions[h] @ u).max(axis=1)
        out[target] = u[0]
    return out


def concentrability(mdp: StagedMdp, behavior: Policy) -> ConcReport:
    """Worst ratio of any admissible occupancy to the behavior occupancy.

    The supremum over admissible distributions decomposes per state-action:
    the numerator is maximised by deterministically reaching the state and
    then playing the action, which the reachability DP computes exactly.  A
    reachable pair with zero behavior mass yields an infinite coefficient
    (reported, not raised).
    """
    mu = occupancy(mdp, behavior).nu
    H = mdp.horizon
    reach = [_max_reach(mdp, h) for h in range(H)]
    best = 0.0
    witness = (0, 0, 0)
    stage_max = np.zeros(H)
    for h in range(H):
        for s in range(mdp.stage_sizes[h]):
            if reach[h][s] <= 0.0:
                continue
            for a in range(mdp.num_actions):
                denom = mu[h][s, a]
                ratio = float("inf") if denom <= 0.0 else reach[h][s] / denom
                if ratio > stage_max[h]:
                    stage_max[h] = ratio
                if ratio > best:
                    best = ratio
                    witness = (h, s, a)
    return ConcReport(c_conc=best, witness=witness, stage_max=stage_max, max_reach=reach, mu=mu)


def concentrability_by_enumeration(mdp: StagedMdp, behavior: Policy) -> float:
    """Same coefficient by brute force over every deterministic policy."""
    mu = occupancy(mdp, behavior).nu
    best = 0.0
    for pi in enumerate_deterministic_policies(mdp):
        nu = occupancy(mdp, pi).nu
        for h in range(mdp.horizon):
            for s in range(mdp.stage_sizes[h]):
                for a in range(mdp.num_actions):
                    num = nu[h][s, a]
                    if num <= 0.0:
                        continue
                    den = mu[h][s, a]
                    best = max(best, float("inf") if den <= 0.0 else num / den)
    return best


# ---------------------------------------------------------------------------
# algebraic lemma skeletons


def check_lsq_decomposition(seed, draws: int = 100) -> float:
    """Worst slack of the ridge error decomposition over random instances.

    Verifies ||theta_hat - theta*||_V <= sqrt(lam) ||theta*|| + ||Delta||_inf sqrt(n)
    + ||iota||_{V^{-1}} by direct matrix evaluation; a negative return means a
    violation.
    """
    rng = np.random.default_rng(seed)
    worst = float("inf")
    for _ in range(draws):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(1, 51))
        lam = float(rng.uniform(0.01, 2.0))
        A = rng.normal(size=(n, d))
        theta_star = rng.normal(size=d)
        gamma = rng.normal(scale=rng.uniform(0.0, 1.0), size=n)
        delta = rng.normal(scale=rng.uniform(0.0, 1.0), size=n)
        y = A @ theta_star + gamma + delta
        V = lam * np.eye(d) + A.T @ A
        V_inv = np.linalg.inv(V)
        theta_hat = V_inv @ (A.T @ y)
        iota = A.T @ gamma
        lhs = np.sqrt((theta_hat - theta_star) @ V @ (theta_hat - theta_star))
        rhs = (
            np.sqrt(lam) * np.linalg.norm(theta_star)
            + np.abs(delta).max() * np.sqrt(n)
            + np.sqrt(iota @ V_inv @ iota)
        )
        worst = min(worst, float(rhs - lhs))
    return worst


def check_elliptical_potential(seed, draws: int = 100) -> float:
    """Worst slack of sum min(1, ||a_t||^2_{V_{t-1}^{-1}}) <= 2d log((d lam + n L^2)/(d lam))."""
    rng = np.random.default_rng(seed)
    worst = float("inf")
    for _ in range(draws):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(1, 60))
        lam = float(rng.uniform(0.05, 2.0))
        L = float(rng.uniform(0.2, 3.0))
        raw = rng.normal(size=(n, d))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        scale = rng.uniform(0.0, L, size=(n, 1))
        vecs = np.where(norms > 0, raw / np.maximum(norms, 1e-300) * scale, 0.0)
        V = lam * np.eye(d)
        lhs = 0.0
        for t in range(n):
            a = vecs[t]
            lhs += min(1.0, float(a @ np.linalg.solve(V, a)))
            V = V + np.outer(a, a)
        rhs = 2.0 * d * np.log((d * lam + n * L * L) / (d * lam))
        worst = min(worst, float(rhs - lhs))
    return worst


def check_projection_bound(seed, draws: int = 100) -> float:
    """Worst slack of ||sum a_i b_i||^2_{(sum a_i a_i^T + lam I)^{-1}} <= n c^2."""
    rng = np.random.default_rng(seed)
    worst = float("inf")
    for _ in range(draws):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(1, 60))
        lam = float(rng.uniform(0.0, 2.0))
        c = float(rng.uniform(0.1, 3.0))
        A = rng.normal(size=(n, d)) * rng.uniform(0.1, 3.0)
        b = rng.uniform(-c, c, size=n)
        M = lam * np.eye(d) + A.T @ A
        v = A.T @ b
        lhs = float(v @ np.linalg.solve(M, v))
        worst = min(worst, n * c * c - lhs)
    return worst


# ---------------------------------------------------------------------------
# exact MDP identities


def check_perf_diff(mdp: StagedMdp, policy_a: Policy, policy_b: Policy) -> float:
    """Residual of the performance-difference identity, computed by exact DP."""
    vals_a = evaluate_policy(mdp, policy_a)
    vals_b = evaluate_policy(mdp, policy_b)
    nu_a = occupancy(mdp, policy_a).nu
    total = 0.0
    for h in range(mdp.horizon):
        adv = vals_b.q[h] - vals_b.v[h][:, None]
        total += float(np.sum(nu_a[h] * adv))
    return abs(float(vals_a.v[0][0] - vals_b.v[0][0]) - total)


def suboptimality(mdp: StagedMdp, policy: Policy) -> float:
    """v*(s1) - v^pi(s1) by exact DP; nonnegative up to rounding."""
    _, star = optimal_policy(mdp)
    vals = evaluate_policy(mdp, policy)
    return float(star.v[0][0] - vals.v[0][0])


def check_range_bound(mdp: StagedMdp, featmap: FeatureMap, guess: Guess, policies) -> float:
    """Worst slack of sampled_range(s) <= sqrt(2d) * guess_range(s) over all states.

    Sound because the left side is a lower bound of the true range; the guess
    must have been built from (a superset of) the same policy sample.
    """
    from .skipping import guess_range

    params = [fit_policy_params(mdp, featmap, pi) for pi in policies]
    factor = np.sqrt(2.0 * featmap.d)
    worst = float("inf")
    for stage in range(1, mdp.horizon):
        for state in range(mdp.stage_sizes[stage]):
            lhs = state_range(mdp, featmap, None, stage, state, params=params)
            rhs = factor * guess_range(guess, featmap, stage, state)
            worst = min(worst, float(rhs - lhs))
    return worst


# ---------------------------------------------------------------------------
# skip-target realizability by exhaustive expectation


def _suffix_paths(mdp: StagedMdp, h: int):
    """All (states, actions) suffixes over stages h+1..H, as index tuples.

    A path fixes the visited state at every stage h+1..H and the action at
    stages h+1..H-1 (the terminal action is irrelevant).
    """
    H = mdp.horizon
    state_choices = [range(mdp.stage_sizes[t]) for t in range(h + 1, H + 1)]
    action_choices = [range(mdp.num_actions) for _ in range(h + 1, H)]
    for states in itertools.product(*state_choices):
        for acts in itertools.product(*action_choices):
            yield states, acts


def expected_skip_target(
    mdp: StagedMdp,
    featmap: FeatureMap,
    guess: Guess,
    behavior: Policy,
    f,
    h: int,
    params: SkipParams,
    path_cap: int = 500_000,
) -> np.ndarray:
    """E over trajectories from (s, a) of the skip target, for all (s, a) at stage h.

    Enumerates the full trajectory space (states and actions after stage h)
    and weights each path by behavior-policy and transition probabilities;
    mean rewards stand in for sampled rewards, which is exact because the
    target is linear in the rewards.
    """
    H = mdp.horizon
    if h < 0 or h >= H:
        raise ValidationError(f"stage {h} outside 0..{H - 1}")
    count = 1
    for t in range(h + 1, H + 1):
        count *= mdp.stage_sizes[t]
        if t < H:
            count *= mdp.num_actions
    if count > path_cap:
        raise ValidationError(
            f"trajectory space of {count} paths exceeds the cap {path_cap}; instance too large"
        )
    if abs(float(f(H, 0))) > 1e-12:
        raise ValidationError("value function must vanish at the terminal state")
    omega = omega_tables(guess, featmap, params)

    # group paths by their entry state at stage h+1
    group = np.zeros(mdp.stage_sizes[h + 1])
    for states, acts in _suffix_paths(mdp, h):
        weight = 1.0
        rewards = []
        for i, t in enumerate(range(h + 1, H)):
            s_t, a_t = states[i], acts[i]
            weight *= behavior.tables[t][s_t, a_t]
            weight *= mdp.transitions[t][s_t, a_t, states[i + 1]]
            rewards.append(mdp.reward_means[t][s_t, a_t])
        if weight == 0.0:
            continue
        stop_w = np.array([omega[t][states[i]] for i, t in enumerate(range(h + 1, H + 1))])
        prefix = np.concatenate([[1.0], np.cumprod(stop_w[:-1])])
        stop_probs = prefix * (1.0 - stop_w)
        cum = np.concatenate([[0.0], np.cumsum(rewards)])
        fvals = np.array([f(t, states[i]) for i, t in enumerate(range(h + 1, H + 1))])
        group[states[0]] += weight * float(np.sum(stop_probs * (cum + fvals)))

    out = np.zeros((mdp.stage_sizes[h], mdp.num_actions))
    for s in range(mdp.stage_sizes[h]):
        for a in range(mdp.num_actions):
            out[s, a] = mdp.reward_means[h][s, a] + float(mdp.transitions[h][s, a] @ group)
    return out


def check_skip_realizability(
    mdp: StagedMdp,
    featmap: FeatureMap,
    guess: Guess,
    behavior: Policy,
    f,
    h: int,
    params: SkipParams,
    path_cap: int = 500_000,
) -> float:
    """Sup-norm residual of the best linear fit to the expected skip target.

    On exactly linear instances the expectation is exactly linear in the
    stage-h features, so the residual vanishes up to numerics for any guess
    and any bounded value function.
    """
    targets = expected_skip_target(mdp, featmap, guess, behavior, f, h, params, path_cap)
    design = featmap.phi[h].reshape(-1, featmap.d)
    sol, _, _, _ = np.linalg.lstsq(design, targets.ravel(), rcond=None)
    return float(np.abs(design @ sol - targets.ravel()).max())
