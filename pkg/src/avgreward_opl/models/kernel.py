"""
Kernel configuration model for avgreward-opl.
"""

from typing import Literal

import numpy as np
from pydantic import Field, field_validator

from .base import FloatArray, JsonFileMixin, OPLModel


class KernelConfig(JsonFileMixin, OPLModel):
    """
    State kernel, action-indicator lift and anchor point.

    ``kind="gaussian"`` uses k_0(s1, s2) = exp(-||s1 - s2||^2 / bandwidth^2);
    ``kind="delta"`` uses the Kronecker kernel k_0(s1, s2) = 1{s1 == s2},
    which renders tabular MDPs exactly.
    """

    bandwidth: float = Field(1.0, gt=0, description="Gaussian bandwidth sigma")
    anchor_state: FloatArray = Field(..., description="Anchor state s*, shape (d,)")
    anchor_action: Literal[0, 1] = Field(0, description="Anchor action a*")
    n_actions: Literal[2] = Field(2, description="Number of actions (binary)")
    kind: Literal["gaussian", "delta"] = Field("gaussian", description="State kernel family")

    @field_validator("anchor_state")
    @classmethod
    def _one_dimensional(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 1:
            raise ValueError("anchor_state must be a vector")
        return v

    @classmethod
    def default_for(cls, d: int, bandwidth: float = 1.0, **kwargs) -> "KernelConfig":
        """Config anchored at (zero vector, action 0)."""
        return cls(bandwidth=bandwidth, anchor_state=np.zeros(d), **kwargs)

    @property
    def d(self) -> int:
        return int(self.anchor_state.shape[0])
