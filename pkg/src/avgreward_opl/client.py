"""
Main toolkit for avgreward-opl.

This module provides the AverageRewardToolkit class that serves as the entry
point for evaluating and learning policies from one batch dataset.
"""

import logging
from typing import Any, Dict, Optional

import numpy as np

from .dataio import flatten
from .kernels import median_bandwidth
from .models.data import Dataset
from .models.kernel import KernelConfig
from .modules import EvaluatorModule, NuisanceModule, OptimizerModule, TunerModule
from .parallel import WorkerPool
from .workspace import KernelWorkspace

logger = logging.getLogger(__name__)


def default_kernel(dataset: Dataset) -> KernelConfig:
    """Gaussian kernel anchored at the origin with the median-heuristic bandwidth."""
    sigma = median_bandwidth(np.asarray(dataset.states).reshape(-1, dataset.d))
    logger.info("Median-heuristic bandwidth %.4g over %d states", sigma, dataset.n * (dataset.T + 1))
    return KernelConfig.default_for(dataset.d, bandwidth=sigma)


class AverageRewardToolkit:
    """
    Evaluation and learning on one dataset.

    The toolkit owns one :class:`KernelWorkspace` (Gram matrices and cached
    factorizations) and one :class:`WorkerPool`, shared by its modules.

    Example:
        >>> toolkit = AverageRewardToolkit(load_dataset("data.jsonl"))
        >>>
        >>> # Select penalties by cross-validation
        >>> cv = toolkit.tuner.cv_select(TuningGrid(), seed=7)
        >>>
        >>> # Learn a policy with the selected penalties
        >>> cfg = OptimizeConfig(seed=7, tuning_value=cv.chosen_value,
        ...                      tuning_ratio=cv.chosen_ratio)
        >>> result = toolkit.optimizer.optimize(cfg)
        >>>
        >>> # Evaluate it
        >>> est = toolkit.evaluator.estimate(result.policy(), cv.chosen_value, cv.chosen_ratio)
        >>> print(est.eta_hat, est.eta_tilde)
    """

    def __init__(
        self,
        dataset: Dataset,
        kernel: Optional[KernelConfig] = None,
        max_workers: Optional[int] = None,
        jitter: float = KernelWorkspace.DEFAULT_JITTER,
        max_retries: int = KernelWorkspace.MAX_RETRIES,
    ) -> None:
        """
        Initialize the toolkit.

        Args:
            dataset: Batch trajectories
            kernel: Kernel configuration (median heuristic when omitted)
            max_workers: Worker cap (``OPL_THREADS`` or CPU count when omitted)
            jitter: Relative diagonal jitter of retried factorizations
            max_retries: Retries after a failed factorization

        Raises:
            DataError: If the dataset carries non-finite values
            ValueError: If the kernel dimension does not match the states
        """
        kernel = kernel or default_kernel(dataset)
        if kernel.d != dataset.d:
            raise ValueError(f"kernel anchor has dimension {kernel.d}, states have {dataset.d}")

        self.dataset = dataset
        self._workspace = KernelWorkspace(flatten(dataset), kernel, jitter=jitter, max_retries=max_retries)
        self._pool = WorkerPool(max_workers)

        self.nuisance = NuisanceModule(self._workspace)
        self.evaluator = EvaluatorModule(self._workspace, self.nuisance)
        self.optimizer = OptimizerModule(self._workspace, self.nuisance, self._pool)
        self.tuner = TunerModule(self._workspace, self._pool)

    @property
    def kernel(self) -> KernelConfig:
        return self._workspace.cfg

    @property
    def workspace(self) -> KernelWorkspace:
        return self._workspace

    def clear_cache(self) -> None:
        """Drop cached factorizations and policy terms."""
        self._workspace.clear_cache()

    def get_stats(self) -> Dict[str, Any]:
        """
        Get solve and worker statistics.

        Returns:
            dict: Workspace counters plus ``pool`` (worker pool counters)
        """
        stats = self._workspace.get_stats()
        stats["pool"] = self._pool.get_stats()
        return stats

    def __repr__(self) -> str:
        return (
            f"AverageRewardToolkit(n={self.dataset.n}, T={self.dataset.T}, "
            f"d={self.dataset.d}, bandwidth={self.kernel.bandwidth:g})"
        )


def create_toolkit(
    dataset: Dataset, kernel: Optional[KernelConfig] = None, **kwargs: Any
) -> AverageRewardToolkit:
    """
    Create a toolkit for ``dataset``.

    Args:
        dataset: Batch trajectories
        kernel: Kernel configuration (median heuristic when omitted)
        **kwargs: Additional :class:`AverageRewardToolkit` options

    Returns:
        AverageRewardToolkit: Configured toolkit
    """
    return AverageRewardToolkit(dataset, kernel=kernel, **kwargs)
