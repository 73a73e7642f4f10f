"""
Experiment, replication and manifest models for avgreward-opl.
"""

from datetime import datetime, timezone
from typing import Any, ClassVar, Dict, Literal, Optional

from pydantic import Field, model_validator

from .base import JsonFileMixin, OPLModel
from .kernel import KernelConfig
from .policy import OptimizeConfig
from .tuning import TuningGrid

EnvKind = Literal["scenario1", "scenario2", "vlearning", "tabular"]


class EnvSpec(OPLModel):
    """Simulation environment selector with optional constant overrides."""

    kind: EnvKind = Field(..., description="Environment family")
    params: Dict[str, Any] = Field(default_factory=dict, description="Environment constants")
    seed_root: int = Field(0, description="Root of every derived seed")


class ExperimentConfig(JsonFileMixin, OPLModel):
    """One replication protocol: data size, evaluation protocol and learners."""

    env: EnvSpec
    n: int = Field(..., ge=1, description="Training trajectories")
    T: int = Field(..., ge=1, description="Training trajectory length")
    n_reps: int = Field(20, ge=1, description="Independent replications")
    eval_n: int = Field(100, ge=1, description="Test trajectories for the learned policy")
    eval_T: int = Field(1000, ge=1, description="Test trajectory length")
    burn_in: int = Field(0, ge=0, description="Steps discarded before averaging")
    regret_T: Optional[int] = Field(
        None, ge=1, description="Single long trajectory length for regret evaluation"
    )
    regret_burn_in: int = Field(0, ge=0, description="Burn-in of the regret evaluation")
    optimizer: OptimizeConfig = Field(default_factory=OptimizeConfig)
    kernel: Optional[KernelConfig] = Field(
        None, description="Kernel; bandwidth from the median heuristic when omitted"
    )
    tuning: Optional[TuningGrid] = Field(
        None, description="Run cross-validation with this grid; fixed penalties when omitted"
    )
    oracle_value: Optional[float] = Field(None, description="Known in-class optimum")

    @model_validator(mode="after")
    def _burn_in_fits(self) -> "ExperimentConfig":
        if self.burn_in >= self.eval_T:
            raise ValueError("burn_in must be smaller than eval_T")
        if self.regret_T is not None and self.regret_burn_in >= self.regret_T:
            raise ValueError("regret_burn_in must be smaller than regret_T")
        return self


class ReplicationRow(OPLModel):
    """One replication outcome (a CSV row)."""

    env: str
    n: int
    T: int
    rep: int
    seed: int
    learned_value: Optional[float] = None
    learned_sd: Optional[float] = None
    oracle_value: Optional[float] = None
    regret: Optional[float] = None
    regret_value: Optional[float] = None
    error: Optional[str] = None


class RunManifest(JsonFileMixin, OPLModel):
    """Provenance of one CLI invocation; exactly one per output directory."""

    FILENAME: ClassVar[str] = "manifest.json"

    command: str
    config: Dict[str, Any] = Field(default_factory=dict, description="Merged run config")
    config_hash: str
    seed_root: Optional[int] = None
    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    finished_at: Optional[datetime] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    toolkit_version: str
    tuning: Optional[Literal["explicit", "cv", "default"]] = None
    exit_status: Optional[int] = None
