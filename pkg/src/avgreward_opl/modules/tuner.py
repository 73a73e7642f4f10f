"""
Tuning module for avgreward-opl.

This module selects the penalties of the value and ratio fits by K-fold
cross-validation over trajectories with a min-max criterion across random
candidate policies. Validation error is the projected Bellman error of the
fitted TD residuals (value) and of the inner-fit residuals (ratio).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.kernel_ridge import KernelRidge
from sklearn.model_selection import KFold

from ..dataio import flatten, regroup
from ..exceptions import FoldTooSmall, OPLError
from ..kernels import contract, extended_points, left_contract, sa_kernel_matrix, shaped_kernel_matrix
from ..models.data import Dataset, TupleTable
from ..models.kernel import KernelConfig
from ..models.policy import FeatureMap, PolicyParams
from ..models.tuning import CVResult, TuningGrid
from ..parallel import WorkerPool
from ..policy import policy_prob
from ..workspace import KernelWorkspace
from .nuisance import NuisanceModule

logger = logging.getLogger(__name__)

PROJECTION_RIDGE = 1e-3


def sample_candidate_policies(
    M: int, p: int, c: float, seed: int, features: Optional[FeatureMap] = None
) -> List[PolicyParams]:
    """M policies with theta drawn uniformly on [-c, c]^p."""
    if M < 1:
        raise ValueError("M must be at least 1")
    thetas = np.random.default_rng(seed).uniform(-c, c, size=(M, p))
    features = features or FeatureMap()
    return [PolicyParams(theta=np.clip(t, -c, c), box=c, features=features) for t in thetas]


def _projected_mse(L_val: np.ndarray, residuals: np.ndarray) -> float:
    ridge = KernelRidge(alpha=PROJECTION_RIDGE * L_val.shape[0], kernel="precomputed")
    fitted = ridge.fit(L_val, residuals).predict(L_val)
    return float(np.mean(fitted**2))


def projected_bellman_mse(
    validation_tuples: TupleTable, residuals: np.ndarray, cfg: KernelConfig
) -> float:
    """
    Mean square of the kernel ridge projection of ``residuals`` onto (S, A).

    The regression uses the action-lifted kernel over the validation pairs
    with ridge 1e-3 times the validation size.
    """
    residuals = np.asarray(residuals, dtype=float)
    if residuals.shape != (validation_tuples.N,):
        raise ValueError(f"expected {validation_tuples.N} residuals, got {residuals.shape}")
    S, A = validation_tuples.states, validation_tuples.actions
    return _projected_mse(sa_kernel_matrix(cfg, S, A, S, A), residuals)


@dataclass(frozen=True)
class _Fold:
    index: int
    train: Dataset
    validation: Dataset


class TunerModule:
    """Cross-validated penalty selection for the data of one workspace."""

    def __init__(self, workspace: KernelWorkspace, pool: Optional[WorkerPool] = None) -> None:
        """
        Initialize tuner module.

        Args:
            workspace: Kernel workspace of the full training tuples
            pool: Worker pool that runs the folds
        """
        self.workspace = workspace
        self.pool = pool or WorkerPool()

    def _fold_errors(
        self, fold: _Fold, grid: TuningGrid, candidates: Sequence[PolicyParams]
    ) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.workspace.cfg
        train = flatten(fold.train)
        val = flatten(fold.validation)
        ws = KernelWorkspace(train, cfg)
        nuisance = NuisanceModule(ws)

        S_tr, A_tr = extended_points(train)
        S_val, A_val = extended_points(val)
        K_cross = shaped_kernel_matrix(cfg, S_tr, A_tr, S_val, A_val)
        L_cross = sa_kernel_matrix(cfg, train.states, train.actions, val.states, val.actions)
        L_val = sa_kernel_matrix(cfg, val.states, val.actions, val.states, val.actions)

        e1 = np.zeros((len(candidates), len(grid.value_grid)))
        e2 = np.zeros((len(candidates), len(grid.ratio_grid)))
        for m, params in enumerate(candidates):
            p_train = ws.policy_terms(params).p
            p_val = policy_prob(params, val.next_states)
            F_cross = left_contract(contract(K_cross, p_val, val.N), p_train)

            for j, pair in enumerate(grid.value_grid):
                try:
                    fit = nuisance.fit_value(params, pair)
                    delta = val.rewards - fit.eta_tilde - F_cross.T @ fit.alpha
                    e1[m, j] = _projected_mse(L_val, delta)
                except OPLError as e:
                    logger.warning("Value fit failed (fold %d, policy %d, %s): %s", fold.index, m, pair, e)
                    e1[m, j] = np.inf

            for j, pair in enumerate(grid.ratio_grid):
                try:
                    fit = nuisance.fit_ratio(params, pair)
                    eps = (1.0 - F_cross.T @ fit.phi) - L_cross.T @ fit.nu
                    e2[m, j] = _projected_mse(L_val, eps)
                except OPLError as e:
                    logger.warning("Ratio fit failed (fold %d, policy %d, %s): %s", fold.index, m, pair, e)
                    e2[m, j] = np.inf

        logger.debug("Fold %d done (%d train / %d validation trajectories)", fold.index, fold.train.n, fold.validation.n)
        return e1, e2

    def cv_select(
        self,
        grid: TuningGrid,
        seed: int,
        candidates: Optional[Sequence[PolicyParams]] = None,
        features: Optional[FeatureMap] = None,
        box: float = PolicyParams.DEFAULT_BOX,
    ) -> CVResult:
        """
        Select value and ratio penalties by min-max cross-validation.

        Args:
            grid: Candidate penalties, number of folds and candidate policies
            seed: Seed of the fold split and the candidate policies
            candidates: Explicit candidate policies (sampled when omitted)
            features: Policy feature map of sampled candidates
            box: Sup-norm bound of sampled candidates

        Returns:
            CVResult: Chosen pairs and the error tables summed over folds

        Raises:
            FoldTooSmall: If some fold would hold fewer than two trajectories
        """
        grid = grid.canonical()
        dataset = regroup(self.workspace.tuples)
        K = grid.n_folds
        if dataset.n < 2 * K:
            raise FoldTooSmall(details={"n_trajectories": dataset.n, "n_folds": K})

        if candidates is None:
            features = features or FeatureMap()
            candidates = sample_candidate_policies(
                grid.n_candidates, features.dim(dataset.d), box, seed, features
            )

        splitter = KFold(n_splits=K, shuffle=True, random_state=seed)
        folds = [
            _Fold(index=k, train=dataset.subset(train_idx), validation=dataset.subset(val_idx))
            for k, (train_idx, val_idx) in enumerate(splitter.split(np.arange(dataset.n)))
        ]

        outcomes = self.pool.map(lambda fold: self._fold_errors(fold, grid, candidates), folds)
        e1 = np.zeros((len(candidates), len(grid.value_grid)))
        e2 = np.zeros((len(candidates), len(grid.ratio_grid)))
        for outcome in outcomes:
            if not outcome.ok:
                raise outcome.error
            fold_e1, fold_e2 = outcome.value
            e1 += fold_e1
            e2 += fold_e2

        chosen_value = grid.value_grid[CVResult.select(e1)]
        chosen_ratio = grid.ratio_grid[CVResult.select(e2)]
        logger.info(
            "CV selected value penalties (lambda=%g, mu=%g) and ratio penalties (lambda=%g, mu=%g)",
            chosen_value.lam, chosen_value.mu, chosen_ratio.lam, chosen_ratio.mu,
        )
        return CVResult(
            chosen_value=chosen_value,
            chosen_ratio=chosen_ratio,
            value_grid=grid.value_grid,
            ratio_grid=grid.ratio_grid,
            error_table_value=e1,
            error_table_ratio=e2,
        )


def cv_select(
    dataset: Dataset,
    grid: TuningGrid,
    kernel: KernelConfig,
    seed: int,
    candidates: Optional[Sequence[PolicyParams]] = None,
    features: Optional[FeatureMap] = None,
    box: float = PolicyParams.DEFAULT_BOX,
    pool: Optional[WorkerPool] = None,
) -> CVResult:
    """
    Cross-validated penalty selection on ``dataset``.

    Example:
        >>> result = cv_select(dataset, TuningGrid(), kernel, seed=0)
        >>> result.chosen_value, result.chosen_ratio
    """
    workspace = KernelWorkspace(flatten(dataset), kernel)
    return TunerModule(workspace, pool).cv_select(grid, seed, candidates, features, box)
