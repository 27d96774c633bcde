"""Stage-structured finite-horizon MDPs with exact dynamic programming.

States are dense integer indices within each stage.  Stage 0 holds the single
start state and stage ``horizon`` the single terminal state; transitions
advance the stage by exactly one, rewards live in [0, 1], and the terminal
stage pays zero reward for every action.  All containers are treated as
immutable after construction, so every operation here is pure given its seed
and safe to call concurrently.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

PROB_TOL = 1e-12
OCC_TOL = 1e-10

REWARD_KINDS = ("deterministic-mean", "bernoulli-mean")


class ValidationError(ValueError):
    """A structural invariant of an MDP, policy, or table is violated."""


def _check_rows(name: str, arr: np.ndarray, tol: float = PROB_TOL) -> None:
    if np.any(arr < 0):
        raise ValidationError(f"{name}: negative entries present")
    worst = np.abs(arr.sum(axis=-1) - 1.0).max()
    if worst > tol:
        raise ValidationError(f"{name}: rows must sum to 1 (worst deviation {worst:.3e})")


@dataclass
class StagedMdp:
    """Finite-horizon MDP whose state space is partitioned by stage.

    Attributes
    ----------
    horizon : int
        Number of acting stages H; the trajectory visits stages 0..H where
        stage H is terminal.
    stage_sizes : tuple of int
        Length H+1; ``stage_sizes[0] == stage_sizes[H] == 1``.
    num_actions : int
    transitions : list of ndarray
        ``transitions[h]`` has shape (S_h, A, S_{h+1}) for h in 0..H-1.
    reward_means : list of ndarray
        ``reward_means[h]`` has shape (S_h, A) with entries in [0, 1];
        the terminal table must be all zero.
    reward_kind : str
        "deterministic-mean" pays the mean exactly; "bernoulli-mean" pays
        Bernoulli(mean) in {0, 1}.
    """

    horizon: int
    stage_sizes: tuple
    num_actions: int
    transitions: list
    reward_means: list
    reward_kind: str = "deterministic-mean"

    def __post_init__(self):
        H = self.horizon
        if H < 1:
            raise ValidationError("horizon must be >= 1")
        self.stage_sizes = tuple(int(k) for k in self.stage_sizes)
        if len(self.stage_sizes) != H + 1:
            raise ValidationError("stage_sizes must have length horizon + 1")
        if self.stage_sizes[0] != 1 or self.stage_sizes[H] != 1:
            raise ValidationError("stages 0 and H must each contain exactly one state")
        if any(k < 1 for k in self.stage_sizes):
            raise ValidationError("every stage needs at least one state")
        if self.num_actions < 1:
            raise ValidationError("num_actions must be >= 1")
        if self.reward_kind not in REWARD_KINDS:
            raise ValidationError(f"unknown reward_kind {self.reward_kind!r}")
        if len(self.transitions) != H or len(self.reward_means) != H + 1:
            raise ValidationError("transition/reward table count does not match horizon")
        self.transitions = [np.asarray(t, dtype=float) for t in self.transitions]
        self.reward_means = [np.asarray(r, dtype=float) for r in self.reward_means]
        A = self.num_actions
        for h in range(H):
            want = (self.stage_sizes[h], A, self.stage_sizes[h + 1])
            if self.transitions[h].shape != want:
                raise ValidationError(f"transitions[{h}]: expected shape {want}")
            _check_rows(f"transitions[{h}]", self.transitions[h])
        for h in range(H + 1):
            want = (self.stage_sizes[h], A)
            if self.reward_means[h].shape != want:
                raise ValidationError(f"reward_means[{h}]: expected shape {want}")
            if np.any(self.reward_means[h] < 0) or np.any(self.reward_means[h] > 1):
                raise ValidationError(f"reward_means[{h}]: entries outside [0, 1]")
        if np.any(self.reward_means[H] != 0):
            raise ValidationError("terminal stage must pay zero reward")


@dataclass
class Policy:
    """Memoryless policy: one action distribution per (stage, state)."""

    tables: list  # tables[h]: (S_h, A)

    def __post_init__(self):
        self.tables = [np.asarray(t, dtype=float) for t in self.tables]
        for h, t in enumerate(self.tables):
            if t.ndim != 2:
                raise ValidationError(f"policy stage {h}: table must be 2-D")
            _check_rows(f"policy stage {h}", t)

    @property
    def horizon(self) -> int:
        return len(self.tables) - 1


@dataclass
class ValueTables:
    """State- and action-value tables from exact backward induction."""

    q: list  # q[h]: (S_h, A)
    v: list  # v[h]: (S_h,)


@dataclass
class OccupancyMeasure:
    """Stage-indexed state-action distributions induced by a policy."""

    nu: list  # nu[h]: (S_h, A), h in 0..H-1

    def __post_init__(self):
        for h, table in enumerate(self.nu):
            total = float(np.sum(table))
            if abs(total - 1.0) > OCC_TOL or np.any(table < -OCC_TOL):
                raise ValidationError(f"occupancy stage {h} is not a distribution")


@dataclass
class Trajectory:
    """One full-length rollout with per-step features for all actions.

    ``features[t]`` holds the feature vectors of every action at the visited
    state ``states[t]`` for t in 0..H-1 (the terminal stage records none).
    """

    states: np.ndarray   # (H+1,) int
    actions: np.ndarray  # (H+1,) int
    rewards: np.ndarray  # (H+1,) float
    features: np.ndarray | None = None  # (H, A, d) float

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=int)
        self.actions = np.asarray(self.actions, dtype=int)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if self.states[0] != 0 or self.states[-1] != 0:
            raise ValidationError("trajectory must start at the start state and end at the terminal state")
        if self.rewards[-1] != 0.0:
            raise ValidationError("terminal reward must be zero")
        if np.any(self.rewards < 0) or np.any(self.rewards > 1):
            raise ValidationError("rewards must lie in [0, 1]")

    @property
    def horizon(self) -> int:
        return len(self.states) - 1


@dataclass
class Dataset:
    """A batch of full-length trajectories stacked into arrays."""

    states: np.ndarray    # (n, H+1) int
    actions: np.ndarray   # (n, H+1) int
    rewards: np.ndarray   # (n, H+1) float
    features: np.ndarray  # (n, H, A, d) float

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def num_actions(self) -> int:
        return self.features.shape[2]

    @property
    def dim(self) -> int:
        return self.features.shape[3]

    @classmethod
    def from_trajectories(cls, trajectories) -> "Dataset":
        if not trajectories:
            raise ValidationError("cannot build a dataset from zero trajectories")
        if any(t.features is None for t in trajectories):
            raise ValidationError("dataset trajectories must carry features")
        return cls(
            states=np.stack([t.states for t in trajectories]),
            actions=np.stack([t.actions for t in trajectories]),
            rewards=np.stack([t.rewards for t in trajectories]),
            features=np.stack([t.features for t in trajectories]),
        )

    def trajectory(self, j: int) -> Trajectory:
        return Trajectory(self.states[j], self.actions[j], self.rewards[j], self.features[j])


# ---------------------------------------------------------------------------
# policy constructors


def uniform_policy(mdp: StagedMdp) -> Policy:
    A = mdp.num_actions
    return Policy([np.full((k, A), 1.0 / A) for k in mdp.stage_sizes])


def random_policy(mdp: StagedMdp, rng: np.random.Generator) -> Policy:
    """Uniformly random mixture policy (Dirichlet(1,...,1) rows)."""
    A = mdp.num_actions
    return Policy([rng.dirichlet(np.ones(A), size=k) for k in mdp.stage_sizes])


def deterministic_policy(mdp: StagedMdp, actions: list) -> Policy:
    """Policy placing unit mass on ``actions[h][s]`` at each state."""
    tables = []
    for h, k in enumerate(mdp.stage_sizes):
        t = np.zeros((k, mdp.num_actions))
        t[np.arange(k), np.asarray(actions[h], dtype=int)] = 1.0
        tables.append(t)
    return Policy(tables)


def mix_policies(primary: Policy, other: Policy, eps: float) -> Policy:
    """Pointwise mixture (1 - eps) * primary + eps * other."""
    return Policy([(1.0 - eps) * p + eps * o for p, o in zip(primary.tables, other.tables)])


def count_deterministic_policies(mdp: StagedMdp) -> int:
    """Number of deterministic policies over non-terminal states."""
    n_states = sum(mdp.stage_sizes[:-1])
    return mdp.num_actions ** n_states


def enumerate_deterministic_policies(mdp: StagedMdp):
    """Yield every deterministic policy (terminal action fixed to 0)."""
    H, A = mdp.horizon, mdp.num_actions
    slots = sum(mdp.stage_sizes[:-1])
    for combo in itertools.product(range(A), repeat=slots):
        actions, i = [], 0
        for h in range(H):
            k = mdp.stage_sizes[h]
            actions.append(list(combo[i:i + k]))
            i += k
        actions.append([0])
        yield deterministic_policy(mdp, actions)


# ---------------------------------------------------------------------------
# exact dynamic programming


def _check_policy_shape(mdp: StagedMdp, policy: Policy) -> None:
    if policy.horizon != mdp.horizon:
        raise ValidationError("policy horizon does not match MDP")
    for h, t in enumerate(policy.tables):
        if t.shape != (mdp.stage_sizes[h], mdp.num_actions):
            raise ValidationError(f"policy stage {h}: shape {t.shape} does not match MDP")


def evaluate_policy(mdp: StagedMdp, policy: Policy) -> ValueTables:
    """Exact backward induction: q_h = r_h + P_h v_{h+1}, v_h = sum_a pi q_h."""
    _check_policy_shape(mdp, policy)
    H = mdp.horizon
    q = [None] * (H + 1)
    v = [None] * (H + 1)
    q[H] = np.zeros((1, mdp.num_actions))
    v[H] = np.zeros(1)
    for h in range(H - 1, -1, -1):
        q[h] = mdp.reward_means[h] + mdp.transitions[h] @ v[h + 1]
        v[h] = np.sum(policy.tables[h] * q[h], axis=1)
    return ValueTables(q=q, v=v)


def optimal_policy(mdp: StagedMdp):
    """Greedy-by-backward-induction optimal policy.

    Ties are broken by the lowest action index everywhere, so the result is
    reproducible.  Returns ``(policy, values)`` where the values are the
    pointwise optimal q and v tables.
    """
    H = mdp.horizon
    q = [None] * (H + 1)
    v = [None] * (H + 1)
    q[H] = np.zeros((1, mdp.num_actions))
    v[H] = np.zeros(1)
    actions = [None] * (H + 1)
    actions[H] = [0]
    for h in range(H - 1, -1, -1):
        q[h] = mdp.reward_means[h] + mdp.transitions[h] @ v[h + 1]
        actions[h] = np.argmax(q[h], axis=1)
        v[h] = q[h][np.arange(mdp.stage_sizes[h]), actions[h]]
    return deterministic_policy(mdp, actions), ValueTables(q=q, v=v)


def occupancy(mdp: StagedMdp, policy: Policy) -> OccupancyMeasure:
    """Forward DP for the state-action distribution at every stage."""
    _check_policy_shape(mdp, policy)
    H = mdp.horizon
    state_dist = np.ones(1)
    nu = []
    for h in range(H):
        table = state_dist[:, None] * policy.tables[h]
        nu.append(table)
        state_dist = np.einsum("sa,sat->t", table, mdp.transitions[h])
    return OccupancyMeasure(nu=nu)


# ---------------------------------------------------------------------------
# trajectory sampling

def flatten_seed(seed) -> list:
    """Arbitrarily nested seed parts flattened to a list of ints."""
    if isinstance(seed, (list, tuple)):
        out = []
        for part in seed:
            out.extend(flatten_seed(part))
        return out
    return [int(seed)]


def _cumulative(tables):
    return [np.cumsum(t, axis=-1) for t in tables]


def _draw(cum_row: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(cum_row, u, side="right"))
    return min(idx, len(cum_row) - 1)


def _rollout(mdp, policy, cum_p, cum_pi, rng, featmap):
    H, A = mdp.horizon, mdp.num_actions
    states = np.zeros(H + 1, dtype=int)
    actions = np.zeros(H + 1, dtype=int)
    rewards = np.zeros(H + 1)
    feats = None if featmap is None else np.zeros((H, A, featmap.d))
    bernoulli = mdp.reward_kind == "bernoulli-mean"
    s = 0
    for h in range(H + 1):
        states[h] = s
        if feats is not None and h < H:
            feats[h] = featmap.phi[h][s]
        a = _draw(cum_pi[h][s], rng.random())
        actions[h] = a
        if h < H:
            mean = mdp.reward_means[h][s, a]
            rewards[h] = float(rng.random() < mean) if bernoulli else mean
            s = _draw(cum_p[h][s, a], rng.random())
    return Trajectory(states, actions, rewards, feats)


def sample_trajectory(mdp: StagedMdp, policy: Policy, seed, featmap=None) -> Trajectory:
    """Roll out one full trajectory; identical seed gives identical output."""
    _check_policy_shape(mdp, policy)
    rng = np.random.default_rng(flatten_seed(seed))
    return _rollout(mdp, policy, _cumulative(mdp.transitions), _cumulative(policy.tables), rng, featmap)


def sample_trajectories(mdp: StagedMdp, policy: Policy, n: int, seed, featmap=None):
    """Sample n trajectories; trajectory j is drawn from generator seed [seed, j].

    The per-trajectory counter seeding makes every trajectory independently
    reproducible: ``sample_trajectories(...)[j] == sample_trajectory(..., seed=[seed, j])``.
    """
    _check_policy_shape(mdp, policy)
    cum_p = _cumulative(mdp.transitions)
    cum_pi = _cumulative(policy.tables)
    base = flatten_seed(seed)
    return [
        _rollout(mdp, policy, cum_p, cum_pi, np.random.default_rng(base + [j]), featmap)
        for j in range(n)
    ]


# ---------------------------------------------------------------------------
# serialization

def mdp_to_doc(mdp: StagedMdp, featmap=None) -> dict:
    """Structured document for on-disk exchange; floats round-trip exactly."""
    doc = {
        "H": mdp.horizon,
        "stage_sizes": list(mdp.stage_sizes),
        "num_actions": mdp.num_actions,
        "transitions": [t.tolist() for t in mdp.transitions],
        "reward_means": [r.tolist() for r in mdp.reward_means],
        "reward_kind": mdp.reward_kind,
    }
    if featmap is not None:
        doc["features"] = {
            "d": featmap.d,
            "l1_bound": featmap.l1_bound,
            "phi": [p.tolist() for p in featmap.phi],
        }
    return doc


def mdp_from_doc(doc: dict):
    from .envs import FeatureMap

    mdp = StagedMdp(
        horizon=doc["H"],
        stage_sizes=tuple(doc["stage_sizes"]),
        num_actions=doc["num_actions"],
        transitions=[np.asarray(t) for t in doc["transitions"]],
        reward_means=[np.asarray(r) for r in doc["reward_means"]],
        reward_kind=doc["reward_kind"],
    )
    featmap = None
    if "features" in doc:
        f = doc["features"]
        featmap = FeatureMap(d=f["d"], phi=[np.asarray(p) for p in f["phi"]], l1_bound=f["l1_bound"])
    return mdp, featmap


def save_mdp(path, mdp: StagedMdp, featmap=None) -> None:
    with open(path, "w") as fh:
        json.dump(mdp_to_doc(mdp, featmap), fh)


def load_mdp(path):
    with open(path) as fh:
        return mdp_from_doc(json.load(fh))
