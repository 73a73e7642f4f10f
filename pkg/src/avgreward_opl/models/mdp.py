"""
Finite MDP models for avgreward-opl.

This module contains the pydantic models for small tabular MDPs and
tabular policies used by the exact oracles.
"""

import numpy as np
from pydantic import Field, model_validator

from .base import FloatArray, JsonFileMixin, OPLModel

_SUM_TOL = 1e-12


class TabularPolicy(OPLModel):
    """A Markovian policy given by its action probabilities per state."""

    probs: FloatArray = Field(..., description="pi(a|s), shape (n_states, n_actions)")

    @model_validator(mode="after")
    def _check_rows(self) -> "TabularPolicy":
        if self.probs.ndim != 2:
            raise ValueError("probs must be (n_states, n_actions)")
        if np.any(self.probs < 0) or np.any(self.probs > 1):
            raise ValueError("policy probabilities must lie in [0, 1]")
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-10):
            raise ValueError("policy rows must sum to 1")
        return self

    @classmethod
    def deterministic(cls, actions, n_actions: int = 2) -> "TabularPolicy":
        """One-hot policy choosing ``actions[s]`` in state ``s``."""
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.shape[0], n_actions))
        probs[np.arange(actions.shape[0]), actions] = 1.0
        return cls(probs=probs)

    @property
    def n_states(self) -> int:
        return int(self.probs.shape[0])


class TabularMDP(JsonFileMixin, OPLModel):
    """
    A finite MDP with a Markovian behavior policy and initial distribution.

    ``P[s, a, s']`` is the transition kernel, ``r[s, a]`` the mean reward,
    ``behavior[s, a]`` the data-generating policy and ``init[s]`` the law of
    the first state. Rewards in simulated data are ``r[s, a]`` plus optional
    Gaussian noise of scale ``reward_noise``.
    """

    P: FloatArray = Field(..., description="Transition tensor, shape (S, A, S)")
    r: FloatArray = Field(..., description="Mean reward, shape (S, A)")
    behavior: FloatArray = Field(..., description="Behavior policy, shape (S, A)")
    init: FloatArray = Field(..., description="Initial state distribution, shape (S,)")
    reward_noise: float = Field(0.0, ge=0.0, description="Std of additive reward noise")

    @model_validator(mode="after")
    def _check_stochastic(self) -> "TabularMDP":
        S, A = self.r.shape
        if self.P.shape != (S, A, S):
            raise ValueError(f"P must have shape ({S}, {A}, {S})")
        if self.behavior.shape != (S, A) or self.init.shape != (S,):
            raise ValueError("behavior must be (S, A) and init (S,)")
        if np.any(self.P < 0) or np.any(np.abs(self.P.sum(axis=2) - 1.0) > _SUM_TOL * S):
            raise ValueError("each P[s, a, :] must be a probability vector")
        if np.any(np.abs(self.behavior.sum(axis=1) - 1.0) > 1e-10):
            raise ValueError("behavior rows must sum to 1")
        if np.any(self.behavior <= 0):
            raise ValueError("behavior must give every action positive probability")
        if np.any(self.init < 0) or abs(self.init.sum() - 1.0) > 1e-10:
            raise ValueError("init must be a probability vector")
        return self

    @property
    def n_states(self) -> int:
        return int(self.r.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.r.shape[1])

    @property
    def p_min(self) -> float:
        """Smallest behavior action probability."""
        return float(self.behavior.min())
