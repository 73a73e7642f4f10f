"""
Domain models for avgreward-opl.

Every value object of the toolkit is a frozen pydantic model; models that
are persisted between runs also mix in :class:`JsonFileMixin`.
"""

from .base import FloatArray, IntArray, JsonFileMixin, OPLModel, canonical_hash, canonical_json
from .data import Dataset, Trajectory, Transition, TupleTable, ValidationReport, Violation
from .experiment import EnvSpec, ExperimentConfig, ReplicationRow, RunManifest
from .fits import Corruption, DREstimate, ProbeReport, ProbeRow, RatioFit, TuningPair, ValueFit
from .kernel import KernelConfig
from .mdp import TabularMDP, TabularPolicy
from .policy import FeatureMap, OptimizeConfig, OptimizeResult, PolicyParams, StartLog
from .tuning import DEFAULT_PENALTIES, CVResult, TuningGrid, coupled_grid

__all__ = [
    # Base
    "OPLModel",
    "JsonFileMixin",
    "FloatArray",
    "IntArray",
    "canonical_json",
    "canonical_hash",
    # Data
    "Trajectory",
    "Dataset",
    "Transition",
    "TupleTable",
    "Violation",
    "ValidationReport",
    # Tabular
    "TabularMDP",
    "TabularPolicy",
    # Kernel and fits
    "KernelConfig",
    "TuningPair",
    "ValueFit",
    "RatioFit",
    "DREstimate",
    "Corruption",
    "ProbeRow",
    "ProbeReport",
    # Policy and optimizer
    "FeatureMap",
    "PolicyParams",
    "OptimizeConfig",
    "StartLog",
    "OptimizeResult",
    # Tuning
    "DEFAULT_PENALTIES",
    "coupled_grid",
    "TuningGrid",
    "CVResult",
    # Experiments
    "EnvSpec",
    "ExperimentConfig",
    "ReplicationRow",
    "RunManifest",
]
