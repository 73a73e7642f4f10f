"""
Policy and optimizer models for avgreward-opl.

This module contains the logistic policy parameters, the optimizer
configuration, and the optimizer result with its per-start log.
"""

from typing import ClassVar, List, Optional, Tuple

import numpy as np
from pydantic import Field, model_validator

from .base import FloatArray, JsonFileMixin, OPLModel
from .fits import TuningPair


class FeatureMap(OPLModel):
    """
    Map from a state to the policy features phi(s).

    phi(s) is the state itself, optionally preceded by a constant 1.
    Tabular states encoded one-hot therefore get one logit per state.
    """

    intercept: bool = Field(False, description="Prepend a constant feature")

    def dim(self, d: int) -> int:
        return d + int(self.intercept)

    def transform(self, states: np.ndarray) -> np.ndarray:
        """Features for a (m, d) array of states, shape (m, p)."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if not self.intercept:
            return states
        return np.hstack([np.ones((states.shape[0], 1)), states])


class PolicyParams(JsonFileMixin, OPLModel):
    """Parameters of pi(1|s) = expit(phi(s)' theta) with ||theta||_inf <= box."""

    DEFAULT_BOX: ClassVar[float] = 10.0

    theta: FloatArray = Field(..., description="Policy parameters, shape (p,)")
    box: float = Field(DEFAULT_BOX, gt=0, description="Sup-norm bound c")
    features: FeatureMap = Field(default_factory=FeatureMap, description="Feature map")

    @model_validator(mode="after")
    def _inside_box(self) -> "PolicyParams":
        if self.theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if np.any(np.abs(self.theta) > self.box):
            raise ValueError(f"theta must satisfy ||theta||_inf <= {self.box}")
        return self

    @property
    def p(self) -> int:
        return int(self.theta.shape[0])

    def with_theta(self, theta: np.ndarray) -> "PolicyParams":
        return PolicyParams(theta=theta, box=self.box, features=self.features)


class OptimizeConfig(JsonFileMixin, OPLModel):
    """Contract of the multi-start box-constrained quasi-Newton search."""

    DEFAULT_STARTS: ClassVar[int] = 5
    DEFAULT_MAX_ITERS: ClassVar[int] = 200
    DEFAULT_GRAD_TOL: ClassVar[float] = 1e-6
    DEFAULT_FD_STEP: ClassVar[float] = 1e-5

    n_starts: int = Field(DEFAULT_STARTS, ge=1, description="Number of random starts")
    max_iters: int = Field(DEFAULT_MAX_ITERS, ge=1, description="Iterations per start")
    grad_tol: float = Field(DEFAULT_GRAD_TOL, gt=0, description="Projected-gradient tolerance")
    tuning_value: TuningPair = Field(
        default_factory=lambda: TuningPair(lam=1e-2, mu=1e-2),
        description="Penalties of the value fit",
    )
    tuning_ratio: TuningPair = Field(
        default_factory=lambda: TuningPair(lam=1e-2, mu=1e-2),
        description="Penalties of the ratio fit",
    )
    use_analytic_gradient: bool = Field(True, description="Implicit-function gradient")
    fd_step: float = Field(DEFAULT_FD_STEP, gt=0, description="Finite-difference step")
    box: float = Field(PolicyParams.DEFAULT_BOX, gt=0, description="Sup-norm bound c")
    features: FeatureMap = Field(default_factory=FeatureMap, description="Policy features")
    check_gradient: bool = Field(False, description="Validate the gradient at each start")
    gradient_rtol: float = Field(1e-4, gt=0, description="Gradient-check tolerance")
    seed: int = Field(0, description="Seed for the random starts")


class StartLog(OPLModel):
    """Outcome of one optimizer start."""

    index: int
    theta0: FloatArray
    theta: Optional[FloatArray] = None
    value: Optional[float] = None
    path: Optional[FloatArray] = Field(None, description="Accepted iterates from theta0 to theta, one row each")
    n_iters: int = 0
    n_evals: int = 0
    converged: bool = False
    message: str = ""
    gradient_check: Optional[float] = Field(None, description="Max relative gradient error")
    error: Optional[str] = None


class OptimizeResult(JsonFileMixin, OPLModel):
    """Best policy over all starts plus diagnostics."""

    theta_hat: FloatArray
    objective_value: float
    best_start: int
    starts: Tuple[StartLog, ...]
    config: OptimizeConfig
    seed: int
    config_hash: Optional[str] = None

    @property
    def succeeded(self) -> List[StartLog]:
        return [s for s in self.starts if s.error is None]

    def policy(self) -> PolicyParams:
        return PolicyParams(theta=self.theta_hat, box=self.config.box, features=self.config.features)
