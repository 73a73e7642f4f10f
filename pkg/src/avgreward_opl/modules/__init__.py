"""
Operation modules for avgreward-opl.

Each module groups the operations of one estimation stage and is built
around a shared :class:`~avgreward_opl.workspace.KernelWorkspace`.
"""

from .evaluator import EvaluatorModule
from .nuisance import NuisanceModule
from .optimizer import OptimizerModule
from .tuner import TunerModule

__all__ = [
    "NuisanceModule",
    "EvaluatorModule",
    "OptimizerModule",
    "TunerModule",
]
