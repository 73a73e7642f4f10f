"""
avgreward-opl

Doubly robust off-policy evaluation and policy learning for average-reward
Markov decision processes from batch trajectories.

The toolkit provides:
- Coupled kernel estimators of the relative value function and the
  stationary-to-data density ratio
- A doubly robust average-reward estimate with its influence function
- Policy learning over a box-constrained logistic class with analytic
  gradients and multi-start L-BFGS-B
- Min-max cross-validation of the penalties
- Simulation benchmarks, Monte Carlo oracles and exact tabular checks

Example:
    >>> from avgreward_opl import create_toolkit, load_dataset, OptimizeConfig
    >>> toolkit = create_toolkit(load_dataset("data.jsonl"))
    >>> result = toolkit.optimizer.optimize(OptimizeConfig(seed=7))
    >>> print(result.theta_hat, result.objective_value)
"""

__version__ = "0.3.0"

from .client import AverageRewardToolkit, create_toolkit
from .dataio import flatten, load_dataset, regroup, validate, write_dataset
from .exceptions import (
    ActionDomainError,
    AllStartsFailed,
    DataError,
    DegenerateData,
    DegenerateRatio,
    FoldTooSmall,
    GradientMismatch,
    NotIrreducible,
    NumericalError,
    ObjectiveUndefined,
    OPLError,
    ParseError,
    ShapeError,
    SingularSystem,
    ZeroCoverage,
    ZeroDenominator,
)
from .models import (
    CVResult,
    Dataset,
    DREstimate,
    EnvSpec,
    ExperimentConfig,
    FeatureMap,
    KernelConfig,
    OptimizeConfig,
    OptimizeResult,
    PolicyParams,
    RatioFit,
    TuningGrid,
    TuningPair,
    TupleTable,
    ValueFit,
)
from .modules.evaluator import double_robustness_probe, dr_average_reward
from .modules.nuisance import fit_ratio, fit_value
from .modules.optimizer import objective, objective_gradient, optimize
from .modules.tuner import cv_select

__all__ = [
    "__version__",
    "AverageRewardToolkit",
    "create_toolkit",
    # Data
    "load_dataset",
    "write_dataset",
    "validate",
    "flatten",
    "regroup",
    # Operations
    "fit_value",
    "fit_ratio",
    "dr_average_reward",
    "double_robustness_probe",
    "objective",
    "objective_gradient",
    "optimize",
    "cv_select",
    # Models
    "Dataset",
    "TupleTable",
    "KernelConfig",
    "TuningPair",
    "ValueFit",
    "RatioFit",
    "DREstimate",
    "FeatureMap",
    "PolicyParams",
    "OptimizeConfig",
    "OptimizeResult",
    "TuningGrid",
    "CVResult",
    "EnvSpec",
    "ExperimentConfig",
    # Exceptions
    "OPLError",
    "DataError",
    "ParseError",
    "ShapeError",
    "ActionDomainError",
    "NotIrreducible",
    "ZeroCoverage",
    "NumericalError",
    "SingularSystem",
    "DegenerateData",
    "DegenerateRatio",
    "ZeroDenominator",
    "ObjectiveUndefined",
    "GradientMismatch",
    "AllStartsFailed",
    "FoldTooSmall",
]
