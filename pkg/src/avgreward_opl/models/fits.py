"""
Nuisance-fit and estimate models for avgreward-opl.

This module contains the models produced by the two coupled kernel
estimators (relative value and ratio) and by the doubly robust evaluator.
"""

from pathlib import Path
from typing import Dict, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import Field, model_validator

from .base import FloatArray, JsonFileMixin, OPLModel
from .kernel import KernelConfig


class TuningPair(OPLModel):
    """
    Per-sample penalties (lambda_n, mu_n) of one coupled estimator.

    The solved systems use the matrix-scale penalties ``lam * N`` and
    ``mu * N``.
    """

    lam: float = Field(..., gt=0, alias="lambda", description="Outer penalty lambda_n")
    mu: float = Field(..., gt=0, description="Inner penalty mu_n")

    def scaled(self, N: int) -> "tuple[float, float]":
        """Matrix-scale penalties (lambda_n * N, mu_n * N)."""
        return self.lam * N, self.mu * N

    def sort_key(self) -> "tuple[float, float]":
        return (self.lam, self.mu)


class ValueFit(JsonFileMixin, OPLModel):
    """Coupled relative-value fit: plug-in average reward and coefficients."""

    eta_tilde: float = Field(..., description="Plug-in average reward of the value fit")
    alpha: FloatArray = Field(..., description="Coefficients on f_{W'_h}, shape (N,)")
    U_at_data: FloatArray = Field(..., description="U at the data tuples, -F alpha")
    tuning: TuningPair
    theta: FloatArray = Field(..., description="Policy parameters the fit was made at")
    kernel: Optional[KernelConfig] = Field(None, description="Kernel used for the fit")


class RatioFit(JsonFileMixin, OPLModel):
    """Coupled ratio fit: intermediate and final coefficients, ratio at data."""

    phi: FloatArray = Field(..., description="Coefficients of H on f_{W'_h}")
    nu: FloatArray = Field(..., description="Coefficients of e on l(W_h, .)")
    e_at_data: FloatArray = Field(..., description="Scaled ratio at data, L nu")
    omega_at_data: FloatArray = Field(..., description="Normalized ratio at data")
    normalizer: float = Field(..., description="Mean of e_at_data")
    tuning: TuningPair
    theta: FloatArray = Field(..., description="Policy parameters the fit was made at")
    kernel: Optional[KernelConfig] = Field(None, description="Kernel used for the fit")


class DREstimate(JsonFileMixin, OPLModel):
    """Doubly robust average-reward estimate with its EIF summary."""

    eta_hat: float = Field(..., description="Doubly robust estimate")
    numerator: float = Field(..., description="Mean weighted (R + U)")
    denominator: float = Field(..., description="Mean weight")
    eif_per_trajectory: Optional[FloatArray] = Field(
        None, description="EIF value of each trajectory at eta_hat"
    )
    eta_tilde: Optional[float] = Field(None, description="Plug-in estimate of the value fit")

    @model_validator(mode="after")
    def _ratio_consistent(self) -> "DREstimate":
        if self.denominator != 0 and not np.isclose(
            self.eta_hat, self.numerator / self.denominator, rtol=1e-12, atol=1e-12
        ):
            raise ValueError("eta_hat must equal numerator / denominator")
        return self

    @property
    def n(self) -> Optional[int]:
        if self.eif_per_trajectory is None:
            return None
        return int(self.eif_per_trajectory.shape[0])

    @property
    def variance(self) -> Optional[float]:
        """Plug-in variance of eta_hat: sample variance of the EIF over n."""
        if self.eif_per_trajectory is None or self.eif_per_trajectory.shape[0] < 2:
            return None
        return float(np.var(self.eif_per_trajectory, ddof=1) / self.eif_per_trajectory.shape[0])

    @property
    def std_error(self) -> Optional[float]:
        var = self.variance
        return None if var is None else float(np.sqrt(var))

    def confidence_interval(self, z: float = 1.959963984540054) -> Optional["tuple[float, float]"]:
        """Normal interval eta_hat +- z * se (informational)."""
        se = self.std_error
        if se is None:
            return None
        return (self.eta_hat - z * se, self.eta_hat + z * se)


Corruption = Literal["wrong_omega", "wrong_U", "both", "none"]


class ProbeRow(OPLModel):
    """One simulated run of the crossed-nuisance probe."""

    n: int
    seed: int
    corruption: Corruption
    eta_hat: float
    eta_true: float
    abs_error: float


class ProbeReport(JsonFileMixin, OPLModel):
    """Errors of the doubly robust estimate with one or both nuisances corrupted."""

    corruption: Corruption
    band: float = Field(..., gt=0, description="Pass threshold for the largest n")
    rows: Tuple[ProbeRow, ...]
    median_error: Dict[int, float] = Field(..., description="Median |eta^ - eta| per n")
    passed: bool

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows])

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path
