"""
Simulation environments for avgreward-opl.

Three continuous-state benchmark MDPs with binary actions plus a tabular
environment that renders a :class:`TabularMDP` through one-hot states:

- ``scenario1``: three-dimensional linear-Gaussian dynamics with a
  stationary reward.
- ``scenario2``: the same dynamics with a reward whose action effect and
  fatigue penalty decay over time.
- ``vlearning``: two-dimensional bilinear dynamics whose reward depends on
  the next state.

Every environment draws its randomness in a fixed order per step (action
uniforms first, then the noise vector), so two rollouts with the same seed
share their random numbers regardless of the policy.
"""

import logging
from typing import Any, ClassVar, Dict, Optional, Tuple

import numpy as np

from .models.data import Dataset
from .models.experiment import EnvSpec
from .models.mdp import TabularMDP
from .models.policy import PolicyParams
from .policy import policy_prob
from .tabular import one_hot, reference_mdp

logger = logging.getLogger(__name__)

BEHAVIOR_PROB = 0.5


class Environment:
    """Base class: initial-state law, one-step dynamics and rollouts."""

    name: ClassVar[str] = "environment"
    d: int = 1
    DEFAULT_PARAMS: ClassVar[Dict[str, Any]] = {}

    def __init__(self, **params: Any) -> None:
        unknown = set(params) - set(self.DEFAULT_PARAMS)
        if unknown:
            raise ValueError(f"unknown {self.name} parameters: {sorted(unknown)}")
        self.params: Dict[str, Any] = {**self.DEFAULT_PARAMS, **params}

    def initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """S_1 ~ N(0, I_d)."""
        return rng.standard_normal((n, self.d))

    def step(
        self, states: np.ndarray, actions: np.ndarray, t: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Advance every row one step.

        Args:
            states: Current states, shape (n, d)
            actions: Binary actions, shape (n,)
            t: 1-based decision time
            rng: Random stream

        Returns:
            (next_states (n, d), rewards (n,))
        """
        raise NotImplementedError

    def _actions(
        self, policy: Optional[PolicyParams], states: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        u = rng.random(states.shape[0])
        p = BEHAVIOR_PROB if policy is None else policy_prob(policy, states)
        return (u < p).astype(np.int64)

    def rollout(
        self,
        policy: Optional[PolicyParams],
        n: int,
        T: int,
        rng: np.random.Generator,
    ) -> Dataset:
        """n trajectories of length T under ``policy`` (uniform behavior when None)."""
        states = np.empty((n, T + 1, self.d))
        actions = np.empty((n, T), dtype=np.int64)
        rewards = np.empty((n, T))
        states[:, 0] = self.initial_states(n, rng)
        for t in range(T):
            a = self._actions(policy, states[:, t], rng)
            states[:, t + 1], rewards[:, t] = self.step(states[:, t], a, t + 1, rng)
            actions[:, t] = a
        return Dataset(states=states, actions=actions, rewards=rewards)

    def rollout_rewards(
        self,
        policy: Optional[PolicyParams],
        n: int,
        T: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Rewards of :meth:`rollout` without storing states, shape (n, T)."""
        rewards = np.empty((n, T))
        s = self.initial_states(n, rng)
        for t in range(T):
            a = self._actions(policy, s, rng)
            s, rewards[:, t] = self.step(s, a, t + 1, rng)
        return rewards


class Scenario1(Environment):
    """Stationary three-dimensional benchmark; S_3 acts as treatment fatigue."""

    name = "scenario1"
    d = 3
    DEFAULT_PARAMS = {
        "s1_decay": 0.5,
        "s1_noise": 2.0,
        "s2_decay": 0.25,
        "s2_action": 0.125,
        "s2_noise": 2.0,
        "s3_decay": 0.9,
        "s3_interaction": 0.05,
        "s3_action": 0.5,
        "s3_noise": 1.0,
        "reward_base": 10.0,
        "reward_fatigue": 0.4,
        "reward_effect": 0.25,
        "effect_c0": 0.04,
        "effect_c1": 0.02,
        "effect_c2": 0.02,
        "reward_noise": 0.16,
    }

    def transition(self, states: np.ndarray, actions: np.ndarray, xi: np.ndarray) -> np.ndarray:
        c = self.params
        s1, s2, s3 = states[:, 0], states[:, 1], states[:, 2]
        return np.column_stack(
            [
                c["s1_decay"] * s1 + c["s1_noise"] * xi[:, 0],
                c["s2_decay"] * s2 + c["s2_action"] * actions + c["s2_noise"] * xi[:, 1],
                c["s3_decay"] * s3 + c["s3_interaction"] * s3 * actions + c["s3_action"] * actions
                + c["s3_noise"] * xi[:, 2],
            ]
        )

    def effect(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """S_1 A (c0 + c1 S_1 + c2 S_2)."""
        c = self.params
        s1, s2 = states[:, 0], states[:, 1]
        return s1 * actions * (c["effect_c0"] + c["effect_c1"] * s1 + c["effect_c2"] * s2)

    def reward(self, states, actions, xi, t: int) -> np.ndarray:
        c = self.params
        return (
            c["reward_base"]
            - c["reward_fatigue"] * states[:, 2]
            + c["reward_effect"] * self.effect(states, actions)
            + c["reward_noise"] * xi[:, 3]
        )

    def step(self, states, actions, t, rng):
        xi = rng.standard_normal((states.shape[0], 4))
        return self.transition(states, actions, xi), self.reward(states, actions, xi, t)


class Scenario2(Scenario1):
    """Scenario 1 dynamics with time-decaying reward coefficients and no reward noise."""

    name = "scenario2"
    DEFAULT_PARAMS = {**Scenario1.DEFAULT_PARAMS, "decay_rate": 0.05, "reward_noise": 0.0}

    def coefficients(self, t: int) -> Tuple[float, float]:
        """(beta_t, tau_t) at 1-based time t."""
        c = self.params
        shrink = float(np.exp(-c["decay_rate"] * (t - 1)))
        return c["reward_effect"] * shrink, c["reward_fatigue"] * shrink

    def reward(self, states, actions, xi, t: int) -> np.ndarray:
        beta, tau = self.coefficients(t)
        c = self.params
        return (
            c["reward_base"]
            - tau * states[:, 2]
            + beta * self.effect(states, actions)
            + c["reward_noise"] * xi[:, 3]
        )


class VLearningEnv(Environment):
    """Two-dimensional bilinear benchmark; the action flips the sign of each coordinate's decay."""

    name = "vlearning"
    d = 2
    DEFAULT_PARAMS = {
        "decay": 0.75,
        "interaction": 0.25,
        "noise_sd": 0.5,
        "reward_w1": 2.0,
        "reward_w2": 1.0,
        "action_cost": 0.25,
    }

    def step(self, states, actions, t, rng):
        c = self.params
        eps = c["noise_sd"] * rng.standard_normal((states.shape[0], 2))
        s1, s2 = states[:, 0], states[:, 1]
        sign = 2.0 * actions - 1.0
        cross = c["interaction"] * s1 * s2
        nxt = np.column_stack(
            [
                c["decay"] * sign * s1 + cross + eps[:, 0],
                -c["decay"] * sign * s2 - cross + eps[:, 1],
            ]
        )
        reward = c["reward_w1"] * nxt[:, 0] + c["reward_w2"] * nxt[:, 1] - c["action_cost"] * sign
        return nxt, reward


class TabularEnv(Environment):
    """A finite MDP with one-hot states; params ``{"mdp": TabularMDP | dict}``."""

    name = "tabular"
    DEFAULT_PARAMS = {"mdp": None}

    def __init__(self, **params: Any) -> None:
        super().__init__(**params)
        mdp = self.params["mdp"]
        if mdp is None:
            mdp = reference_mdp()
        elif not isinstance(mdp, TabularMDP):
            mdp = TabularMDP.model_validate(mdp)
        self.mdp = mdp
        self.d = mdp.n_states
        self._cum_P = np.cumsum(mdp.P, axis=2)
        self._cum_P[..., -1] = 1.0

    def initial_states(self, n, rng):
        return one_hot(rng.choice(self.mdp.n_states, size=n, p=self.mdp.init), self.mdp.n_states)

    def _actions(self, policy, states, rng):
        if policy is not None:
            return super()._actions(policy, states, rng)
        u = rng.random(states.shape[0])
        return (u < self.mdp.behavior[np.argmax(states, axis=1), 1]).astype(np.int64)

    def step(self, states, actions, t, rng):
        s = np.argmax(states, axis=1)
        u = rng.random(states.shape[0])
        s_next = (u[:, None] > self._cum_P[s, actions]).sum(axis=1)
        reward = self.mdp.r[s, actions] + self.mdp.reward_noise * rng.standard_normal(states.shape[0])
        return one_hot(s_next, self.mdp.n_states), reward


ENVIRONMENTS = {
    cls.name: cls for cls in (Scenario1, Scenario2, VLearningEnv, TabularEnv)
}


def make_env(spec: EnvSpec) -> Environment:
    """
    Build the environment named by ``spec``.

    Raises:
        ValueError: If ``spec.params`` names a constant the environment lacks
    """
    env = ENVIRONMENTS[spec.kind](**spec.params)
    logger.debug("Built %s environment (d=%d)", env.name, env.d)
    return env
