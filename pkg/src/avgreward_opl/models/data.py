"""
Trajectory data models for avgreward-opl.

This module contains the models for batch trajectory data: single
trajectories, the dataset they form, the flattened transition table every
estimator consumes, and the validation report.
"""

from typing import List, Literal, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import Field, model_validator

from .base import FloatArray, IntArray, OPLModel


class Transition(NamedTuple):
    """One tuple Z = (S, A, R, S')."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


class Trajectory(OPLModel):
    """One trajectory: T+1 states, T binary actions and T rewards."""

    states: FloatArray = Field(..., description="States S_1..S_{T+1}, shape (T+1, d)")
    actions: IntArray = Field(..., description="Actions A_1..A_T in {0, 1}, shape (T,)")
    rewards: FloatArray = Field(..., description="Rewards R_2..R_{T+1}, shape (T,)")

    @model_validator(mode="after")
    def _check_lengths(self) -> "Trajectory":
        if self.states.ndim != 2:
            raise ValueError("states must be a (T+1, d) array")
        if self.actions.ndim != 1 or self.rewards.ndim != 1:
            raise ValueError("actions and rewards must be one-dimensional")
        T = self.actions.shape[0]
        if self.states.shape[0] != T + 1 or self.rewards.shape[0] != T:
            raise ValueError(
                f"expected {T + 1} states and {T} rewards, got "
                f"{self.states.shape[0]} and {self.rewards.shape[0]}"
            )
        return self

    @property
    def T(self) -> int:
        return int(self.actions.shape[0])

    @property
    def d(self) -> int:
        return int(self.states.shape[1])


class Dataset(OPLModel):
    """
    n trajectories sharing the same length T and state dimension d.

    Stored as stacked arrays; :attr:`trajectories` rebuilds the per-trajectory
    view on demand.
    """

    states: FloatArray = Field(..., description="Stacked states, shape (n, T+1, d)")
    actions: IntArray = Field(..., description="Stacked actions, shape (n, T)")
    rewards: FloatArray = Field(..., description="Stacked rewards, shape (n, T)")

    @model_validator(mode="after")
    def _check_stack(self) -> "Dataset":
        if self.states.ndim != 3 or self.actions.ndim != 2 or self.rewards.ndim != 2:
            raise ValueError("dataset arrays must be (n, T+1, d), (n, T), (n, T)")
        n, T = self.actions.shape
        if n < 1 or T < 1:
            raise ValueError("dataset needs n >= 1 and T >= 1")
        if self.states.shape[:2] != (n, T + 1) or self.rewards.shape != (n, T):
            raise ValueError("stacked arrays disagree on n or T")
        return self

    @classmethod
    def from_trajectories(cls, trajectories: List[Trajectory]) -> "Dataset":
        """Stack trajectories that already agree on T and d."""
        return cls(
            states=np.stack([tr.states for tr in trajectories]),
            actions=np.stack([tr.actions for tr in trajectories]),
            rewards=np.stack([tr.rewards for tr in trajectories]),
        )

    @property
    def n(self) -> int:
        return int(self.actions.shape[0])

    @property
    def T(self) -> int:
        return int(self.actions.shape[1])

    @property
    def d(self) -> int:
        return int(self.states.shape[2])

    @property
    def trajectories(self) -> List[Trajectory]:
        return [self.trajectory(i) for i in range(self.n)]

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(states=self.states[i], actions=self.actions[i], rewards=self.rewards[i])

    def subset(self, indices) -> "Dataset":
        """Dataset restricted to the given trajectory indices, in that order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            states=self.states[idx], actions=self.actions[idx], rewards=self.rewards[idx]
        )


class TupleTable(OPLModel):
    """
    The N = nT transition tuples Z_h = (W_h, R_h, S'_h), trajectory-major.

    Tuple ``h = i*T + t`` holds ``W = (S_t, A_t)``, ``R = R_{t+1}`` and
    ``S' = S_{t+1}`` of trajectory ``i``.
    """

    states: FloatArray = Field(..., description="S_h, shape (N, d)")
    actions: IntArray = Field(..., description="A_h, shape (N,)")
    rewards: FloatArray = Field(..., description="R_h, shape (N,)")
    next_states: FloatArray = Field(..., description="S'_h, shape (N, d)")
    owner_trajectory: IntArray = Field(..., description="Source trajectory of each tuple")
    n: int = Field(..., ge=1, description="Number of trajectories")
    T: int = Field(..., ge=1, description="Trajectory length")

    @model_validator(mode="after")
    def _check_blocks(self) -> "TupleTable":
        N = self.n * self.T
        if self.actions.shape != (N,) or self.rewards.shape != (N,):
            raise ValueError(f"expected N = n*T = {N} tuples")
        if self.states.shape != self.next_states.shape or self.states.shape[0] != N:
            raise ValueError("states and next_states must both be (N, d)")
        expected = np.repeat(np.arange(self.n), self.T)
        if not np.array_equal(self.owner_trajectory, expected):
            raise ValueError("owner_trajectory must form n contiguous blocks of size T")
        return self

    @property
    def N(self) -> int:
        return int(self.actions.shape[0])

    @property
    def d(self) -> int:
        return int(self.states.shape[1])

    @property
    def W(self) -> Tuple[np.ndarray, np.ndarray]:
        """State-action pairs as ``(states, actions)``."""
        return self.states, self.actions

    def transition(self, h: int) -> Transition:
        return Transition(
            state=self.states[h],
            action=int(self.actions[h]),
            reward=float(self.rewards[h]),
            next_state=self.next_states[h],
        )

    def trajectory_means(self, values: np.ndarray) -> np.ndarray:
        """Average a per-tuple vector within each trajectory (length n)."""
        return np.asarray(values, dtype=float).reshape(self.n, self.T).mean(axis=1)


class Violation(OPLModel):
    """One validation finding."""

    kind: Literal["reward_bound", "action_domain", "non_finite"] = Field(
        ..., description="Violated constraint"
    )
    trajectory: int = Field(..., description="Trajectory index")
    time: Optional[int] = Field(None, description="Time index within the trajectory")
    field: str = Field(..., description="Offending field: states, actions or rewards")
    value: Optional[float] = Field(None, description="Offending value (NaN shown as None)")


class ValidationReport(OPLModel):
    """Report-only validation result; empty when the dataset is clean."""

    r_max: float = Field(..., description="Reward bound checked against")
    violations: Tuple[Violation, ...] = Field(default=(), description="Findings")

    @property
    def ok(self) -> bool:
        return not self.violations

    def of_kind(self, kind: str) -> List[Violation]:
        return [v for v in self.violations if v.kind == kind]
