import numpy as np
import pytest

from skiprl.design import build_true_guess
from skiprl.envs import random_linear_mdp, sample_policies
from skiprl.mdp import StagedMdp


def random_tabular_mdp(rng, horizon=None, max_states=6, max_actions=4, reward_kind="deterministic-mean"):
    """Arbitrary (not necessarily linear) stage-structured MDP for property tests."""
    H = horizon or int(rng.integers(1, 6))
    sizes = [1] + [int(rng.integers(1, max_states + 1)) for _ in range(H - 1)] + [1]
    A = int(rng.integers(1, max_actions + 1))
    transitions = [rng.dirichlet(np.ones(sizes[h + 1]), size=(sizes[h], A)) for h in range(H)]
    rewards = [rng.uniform(0, 1, size=(sizes[h], A)) for h in range(H)] + [np.zeros((1, A))]
    return StagedMdp(H, sizes, A, transitions, rewards, reward_kind)


def one_step_bandit(r0=0.3, r1=0.7):
    """H=1 MDP: one decision between two arms, then terminal."""
    return StagedMdp(
        horizon=1,
        stage_sizes=(1, 1),
        num_actions=2,
        transitions=[np.ones((1, 2, 1))],
        reward_means=[np.array([[r0, r1]]), np.zeros((1, 2))],
    )


def zero_reward_mdp(rng, horizon=3):
    mdp = random_tabular_mdp(rng, horizon=horizon)
    rewards = [np.zeros_like(r) for r in mdp.reward_means]
    return StagedMdp(mdp.horizon, mdp.stage_sizes, mdp.num_actions, mdp.transitions, rewards)


@pytest.fixture(scope="session")
def fixed_instance():
    """The fixed d=2, H=3, |S_h|=4, |A|=2 environment used by the calibrated checks."""
    return random_linear_mdp(2, 3, (1, 4, 4, 1), 2, seed=10)


@pytest.fixture(scope="session")
def small_linear_batch():
    """20 exact-linear instances (d<=3, H<=4, |S_h|<=5, |A|<=3) with fitted guesses.

    Shared by the realizability and range-bound suites, which the contract
    requires to run on the same instances and policy samples.
    """
    rng = np.random.default_rng(2024)
    batch = []
    for _ in range(20):
        d = int(rng.integers(1, 4))
        H = int(rng.integers(2, 5))
        sizes = [1] + [int(rng.integers(2, 6)) for _ in range(H - 1)] + [1]
        A = int(rng.integers(2, 4))
        mdp, featmap = random_linear_mdp(d, H, sizes, A, int(rng.integers(0, 2**31)))
        policies = sample_policies(mdp, 200, int(rng.integers(0, 2**31)))
        guess = build_true_guess(mdp, featmap, policies)
        batch.append((mdp, featmap, policies, guess))
    return batch
