"""
Tests for the simulation environments.
"""

import numpy as np
import pytest

from avgreward_opl.environments import (
    ENVIRONMENTS,
    Scenario1,
    Scenario2,
    TabularEnv,
    VLearningEnv,
    make_env,
)
from avgreward_opl.models import EnvSpec
from avgreward_opl.tabular import reference_mdp


@pytest.mark.unit
class TestScenarios:
    """Test cases for the three-dimensional benchmarks."""

    def test_default_constants(self):
        """Test the pinned dynamics and reward constants."""
        c = Scenario1().params
        assert (c["s1_decay"], c["s2_decay"], c["s3_decay"]) == (0.5, 0.25, 0.9)
        assert (c["reward_base"], c["reward_fatigue"], c["reward_effect"]) == (10.0, 0.4, 0.25)
        assert Scenario2().params["reward_noise"] == 0.0

    def test_decaying_coefficients(self):
        """Test beta_t and tau_t of the time-varying reward."""
        env = Scenario2()
        assert env.coefficients(1) == pytest.approx((0.25, 0.4))
        assert env.coefficients(21) == pytest.approx((0.25 * np.exp(-1.0), 0.4 * np.exp(-1.0)))

    def test_noiseless_transition(self):
        """Test one transition with all noise terms at zero."""
        env = Scenario1()
        states = np.array([[1.0, 2.0, 3.0]])
        nxt = env.transition(states, np.array([1]), np.zeros((1, 4)))
        np.testing.assert_allclose(nxt, [[0.5, 0.625, 2.7 + 0.15 + 0.5]])

    def test_reward_effect(self):
        """Test the action effect S_1 A (c0 + c1 S_1 + c2 S_2)."""
        env = Scenario1()
        states = np.array([[2.0, 1.0, 0.0]])
        assert env.effect(states, np.array([0]))[0] == 0.0
        assert env.effect(states, np.array([1]))[0] == pytest.approx(2.0 * (0.04 + 0.04 + 0.02))
        reward = env.reward(states, np.array([1]), np.zeros((1, 4)), 1)
        assert reward[0] == pytest.approx(10.0 + 0.25 * 0.2)

    @pytest.mark.slow
    def test_untreated_chain(self):
        """Test the fatigue autocorrelation and mean reward without treatment."""
        env = Scenario1()
        rng = np.random.default_rng(3)
        n, steps, burn = 20, 5000, 100
        s = env.initial_states(n, rng)
        zeros = np.zeros(n, dtype=np.int64)
        s3, rewards = [], []
        for t in range(steps):
            xi = rng.standard_normal((n, 4))
            r = env.reward(s, zeros, xi, t + 1)
            s = env.transition(s, zeros, xi)
            if t >= burn:
                s3.append(s[:, 2])
                rewards.append(r)
        s3 = np.array(s3)
        lag1 = np.mean([np.corrcoef(s3[:-1, i], s3[1:, i])[0, 1] for i in range(n)])
        assert lag1 == pytest.approx(0.9, abs=0.02)
        assert np.mean(rewards) == pytest.approx(10.0, abs=0.1)


@pytest.mark.unit
class TestVLearning:
    """Test cases for the bilinear benchmark."""

    def test_noiseless_step(self):
        """Test both actions from one state with zero noise."""
        env = VLearningEnv(noise_sd=0.0)
        states = np.array([[1.0, 2.0], [1.0, 2.0]])
        nxt, reward = env.step(states, np.array([1, 0]), 1, np.random.default_rng(0))
        np.testing.assert_allclose(nxt, [[1.25, -2.0], [-0.25, 1.0]])
        np.testing.assert_allclose(reward, [0.25, 0.75])

    def test_rollout_shapes(self):
        """Test the stacked dataset shapes and binary actions."""
        data = VLearningEnv().rollout(None, 3, 7, np.random.default_rng(1))
        assert (data.n, data.T, data.d) == (3, 7, 2)
        assert set(np.unique(data.actions)) <= {0, 1}

    def test_seeded_rollouts_agree(self, params):
        """Test that rollout and rollout_rewards share the random stream."""
        env = VLearningEnv()
        data = env.rollout(params, 4, 6, np.random.default_rng(2))
        again = env.rollout(params, 4, 6, np.random.default_rng(2))
        rewards = env.rollout_rewards(params, 4, 6, np.random.default_rng(2))
        np.testing.assert_array_equal(data.states, again.states)
        np.testing.assert_array_equal(data.rewards, rewards)


@pytest.mark.unit
class TestTabularEnv:
    """Test cases for the one-hot rendering of a finite MDP."""

    def test_defaults_to_reference(self):
        """Test that the reference MDP is used when none is given."""
        env = TabularEnv()
        assert env.d == 4
        np.testing.assert_array_equal(env.mdp.P, reference_mdp().P)

    def test_one_hot_states(self):
        """Test that every state row is a unit vector."""
        data = TabularEnv().rollout(None, 5, 8, np.random.default_rng(4))
        np.testing.assert_array_equal(data.states.sum(axis=2), 1.0)

    def test_mdp_from_document(self):
        """Test that the MDP can be passed as a plain document."""
        env = TabularEnv(mdp=reference_mdp().model_dump(mode="json"))
        np.testing.assert_allclose(env.mdp.r, reference_mdp().r)


@pytest.mark.unit
class TestMakeEnv:
    """Test cases for make_env."""

    def test_registry(self):
        """Test that every kind is registered."""
        assert set(ENVIRONMENTS) == {"scenario1", "scenario2", "vlearning", "tabular"}
        assert isinstance(make_env(EnvSpec(kind="scenario2")), Scenario2)

    def test_overrides(self):
        """Test that params override the defaults."""
        env = make_env(EnvSpec(kind="vlearning", params={"decay": 0.5}))
        assert env.params["decay"] == 0.5
        assert env.params["noise_sd"] == 0.5

    def test_unknown_parameter(self):
        """Test that unknown constants are refused."""
        with pytest.raises(ValueError, match="unknown"):
            make_env(EnvSpec(kind="scenario1", params={"gamma": 0.9}))
