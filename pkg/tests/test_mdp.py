import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import one_step_bandit, random_tabular_mdp, zero_reward_mdp
from skiprl.mdp import (
    Dataset,
    StagedMdp,
    Trajectory,
    ValidationError,
    deterministic_policy,
    enumerate_deterministic_policies,
    evaluate_policy,
    mdp_from_doc,
    mdp_to_doc,
    occupancy,
    optimal_policy,
    random_policy,
    sample_trajectories,
    sample_trajectory,
    uniform_policy,
)


def chain_mdp():
    """2-stage chain: action 0 at s1 leads to a state whose best reward is 1,
    action 1 to a state whose best reward is 0.2."""
    transitions = [
        np.array([[[1.0, 0.0], [0.0, 1.0]]]),          # stage 0: a0 -> state 0, a1 -> state 1
        np.array([[[1.0], [1.0]], [[1.0], [1.0]]]),    # stage 1: both states -> terminal
    ]
    rewards = [
        np.array([[0.4, 0.9]]),
        np.array([[1.0, 0.3], [0.2, 0.1]]),
        np.zeros((1, 2)),
    ]
    return StagedMdp(2, (1, 2, 1), 2, transitions, rewards)


class TestEvaluatePolicy:
    def test_zero_rewards_zero_values(self):
        mdp = zero_reward_mdp(np.random.default_rng(0))
        vals = evaluate_policy(mdp, uniform_policy(mdp))
        assert all(np.all(q == 0) for q in vals.q)
        assert all(np.all(v == 0) for v in vals.v)

    def test_one_step_uniform_value(self):
        # hand evaluation: 0.5 * 0.3 + 0.5 * 0.7
        vals = evaluate_policy(one_step_bandit(), uniform_policy(one_step_bandit()))
        assert vals.v[0][0] == pytest.approx(0.5, abs=1e-15)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_values_bounded_by_remaining_horizon(self, seed):
        rng = np.random.default_rng(seed)
        mdp = random_tabular_mdp(rng, max_states=6, max_actions=4)
        vals = evaluate_policy(mdp, random_policy(mdp, rng))
        for h, v in enumerate(vals.v):
            assert np.all(v >= -1e-12)
            assert np.all(v <= mdp.horizon - h + 1e-12)

    def test_policy_shape_mismatch(self):
        mdp = chain_mdp()
        other = uniform_policy(one_step_bandit())
        with pytest.raises(ValidationError):
            evaluate_policy(mdp, other)

    def test_monte_carlo_returns(self):
        # backward induction against Monte-Carlo return estimates, 3 standard errors
        rng = np.random.default_rng(42)
        for _ in range(3):
            mdp = random_tabular_mdp(rng, max_states=6, max_actions=4)
            pi = random_policy(mdp, rng)
            exact = evaluate_policy(mdp, pi).v[0][0]
            trajs = sample_trajectories(mdp, pi, 4000, int(rng.integers(1 << 30)))
            returns = np.array([t.rewards.sum() for t in trajs])
            se = returns.std(ddof=1) / np.sqrt(len(returns))
            assert abs(returns.mean() - exact) <= 3 * se + 1e-9


class TestOptimalPolicy:
    def test_zero_rewards(self):
        mdp = zero_reward_mdp(np.random.default_rng(1))
        _, star = optimal_policy(mdp)
        assert star.v[0][0] == 0.0

    def test_chain_against_enumeration(self):
        mdp = chain_mdp()
        pi, star = optimal_policy(mdp)
        # brute-force oracle over every deterministic policy
        best = max(evaluate_policy(mdp, p).v[0][0] for p in enumerate_deterministic_policies(mdp))
        assert star.v[0][0] == pytest.approx(best, abs=1e-12)
        assert star.v[0][0] == pytest.approx(0.4 + 1.0, abs=1e-12)  # r(s1, a0) + 1
        assert np.argmax(pi.tables[0][0]) == 0

    def test_dominates_random_policies(self):
        rng = np.random.default_rng(7)
        mdp = random_tabular_mdp(rng)
        _, star = optimal_policy(mdp)
        for _ in range(100):
            vals = evaluate_policy(mdp, random_policy(mdp, rng))
            assert star.v[0][0] >= vals.v[0][0] - 1e-12

    def test_fixed_point(self):
        rng = np.random.default_rng(3)
        mdp = random_tabular_mdp(rng)
        pi, star = optimal_policy(mdp)
        again = evaluate_policy(mdp, pi)
        for h in range(mdp.horizon + 1):
            np.testing.assert_allclose(again.v[h], star.v[h], atol=1e-12)

    def test_ties_break_low(self):
        mdp = one_step_bandit(0.5, 0.5)
        pi, _ = optimal_policy(mdp)
        assert pi.tables[0][0, 0] == 1.0


class TestOccupancy:
    def test_start_stage_is_policy_row(self):
        rng = np.random.default_rng(11)
        mdp = random_tabular_mdp(rng)
        pi = random_policy(mdp, rng)
        nu = occupancy(mdp, pi).nu
        np.testing.assert_allclose(nu[0][0], pi.tables[0][0], atol=1e-15)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_each_stage_sums_to_one(self, seed):
        rng = np.random.default_rng(seed)
        mdp = random_tabular_mdp(rng)
        nu = occupancy(mdp, random_policy(mdp, rng)).nu
        for table in nu:
            assert abs(table.sum() - 1.0) <= 1e-10

    def test_matches_monte_carlo_frequencies(self):
        rng = np.random.default_rng(5)
        mdp = random_tabular_mdp(rng, horizon=2, max_states=3, max_actions=2)
        pi = random_policy(mdp, rng)
        nu = occupancy(mdp, pi).nu
        n = 100_000
        trajs = sample_trajectories(mdp, pi, n, 909)
        for h in range(mdp.horizon):
            counts = np.zeros_like(nu[h])
            for t in trajs:
                counts[t.states[h], t.actions[h]] += 1
            freq = counts / n
            sigma = np.sqrt(np.maximum(nu[h] * (1 - nu[h]), 1e-12) / n)
            assert np.all(np.abs(freq - nu[h]) <= 3 * sigma + 1e-9)


class TestSampling:
    def test_deterministic_instance_ignores_seed(self):
        # one-hot transitions + deterministic policy: rollout has no randomness
        transitions = [np.array([[[1.0, 0.0], [1.0, 0.0]]]), np.array([[[1.0], [1.0]], [[1.0], [1.0]]])]
        rewards = [np.array([[0.2, 0.8]]), np.array([[0.5, 0.1], [0.0, 0.0]]), np.zeros((1, 2))]
        mdp = StagedMdp(2, (1, 2, 1), 2, transitions, rewards)
        pi = deterministic_policy(mdp, [[1], [0, 0], [0]])
        t1, t2 = sample_trajectory(mdp, pi, 1), sample_trajectory(mdp, pi, 999)
        np.testing.assert_array_equal(t1.states, t2.states)
        np.testing.assert_array_equal(t1.actions, t2.actions)
        np.testing.assert_array_equal(t1.rewards, t2.rewards)

    def test_deterministic_mean_rewards_exact(self):
        rng = np.random.default_rng(21)
        mdp = random_tabular_mdp(rng, reward_kind="deterministic-mean")
        pi = random_policy(mdp, rng)
        traj = sample_trajectory(mdp, pi, 17)
        for h in range(mdp.horizon):
            assert traj.rewards[h] == mdp.reward_means[h][traj.states[h], traj.actions[h]]

    def test_bernoulli_rewards_binary(self):
        rng = np.random.default_rng(22)
        mdp = random_tabular_mdp(rng, reward_kind="bernoulli-mean")
        traj = sample_trajectory(mdp, random_policy(mdp, rng), 3)
        assert set(np.unique(traj.rewards)).issubset({0.0, 1.0})

    def test_seed_reproducibility(self):
        rng = np.random.default_rng(23)
        mdp = random_tabular_mdp(rng)
        pi = random_policy(mdp, rng)
        a = sample_trajectory(mdp, pi, [77, 4])
        batch = sample_trajectories(mdp, pi, 6, 77)
        np.testing.assert_array_equal(a.states, batch[4].states)
        np.testing.assert_array_equal(a.actions, batch[4].actions)
        np.testing.assert_array_equal(a.rewards, batch[4].rewards)

    def test_visit_frequencies_match_occupancy(self):
        rng = np.random.default_rng(31)
        mdp = random_tabular_mdp(rng, horizon=3, max_states=3, max_actions=2)
        pi = random_policy(mdp, rng)
        nu = occupancy(mdp, pi).nu
        n = 100_000
        trajs = sample_trajectories(mdp, pi, n, 4242)
        h = mdp.horizon - 1
        counts = np.zeros_like(nu[h])
        for t in trajs:
            counts[t.states[h], t.actions[h]] += 1
        sigma = np.sqrt(np.maximum(nu[h] * (1 - nu[h]), 1e-12) / n)
        assert np.all(np.abs(counts / n - nu[h]) <= 3 * sigma + 1e-9)


class TestValidation:
    def test_bad_transition_rows(self):
        with pytest.raises(ValidationError):
            StagedMdp(1, (1, 1), 2, [np.full((1, 2, 1), 0.5)], [np.zeros((1, 2)), np.zeros((1, 2))])

    def test_nonzero_terminal_reward(self):
        with pytest.raises(ValidationError):
            StagedMdp(1, (1, 1), 2, [np.ones((1, 2, 1))], [np.zeros((1, 2)), np.full((1, 2), 0.1)])

    def test_trajectory_invariants(self):
        with pytest.raises(ValidationError):
            Trajectory(np.array([0, 0]), np.array([0, 0]), np.array([0.5, 0.2]))

    def test_rewards_outside_unit_interval(self):
        with pytest.raises(ValidationError):
            StagedMdp(1, (1, 1), 1, [np.ones((1, 1, 1))], [np.array([[1.2]]), np.zeros((1, 1))])


class TestSerialization:
    def test_roundtrip_bit_exact(self):
        rng = np.random.default_rng(13)
        mdp = random_tabular_mdp(rng)
        doc = json.loads(json.dumps(mdp_to_doc(mdp)))
        back, featmap = mdp_from_doc(doc)
        assert featmap is None
        assert back.horizon == mdp.horizon and back.stage_sizes == mdp.stage_sizes
        for h in range(mdp.horizon):
            np.testing.assert_array_equal(back.transitions[h], mdp.transitions[h])
        for h in range(mdp.horizon + 1):
            np.testing.assert_array_equal(back.reward_means[h], mdp.reward_means[h])

    def test_roundtrip_with_features(self, fixed_instance):
        mdp, featmap = fixed_instance
        doc = json.loads(json.dumps(mdp_to_doc(mdp, featmap)))
        back_mdp, back_fm = mdp_from_doc(doc)
        assert back_fm.d == featmap.d
        for h in range(mdp.horizon + 1):
            np.testing.assert_array_equal(back_fm.phi[h], featmap.phi[h])


class TestDataset:
    def test_from_trajectories_and_indexing(self, fixed_instance):
        mdp, featmap = fixed_instance
        trajs = sample_trajectories(mdp, uniform_policy(mdp), 5, 3, featmap)
        ds = Dataset.from_trajectories(trajs)
        assert ds.n == 5 and ds.horizon == 3 and ds.dim == 2
        back = ds.trajectory(2)
        np.testing.assert_array_equal(back.states, trajs[2].states)
        np.testing.assert_array_equal(back.features, trajs[2].features)

    def test_requires_features(self, fixed_instance):
        mdp, _ = fixed_instance
        trajs = sample_trajectories(mdp, uniform_policy(mdp), 2, 3)
        with pytest.raises(ValidationError):
            Dataset.from_trajectories(trajs)
