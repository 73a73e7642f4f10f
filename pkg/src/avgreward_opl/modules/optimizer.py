"""
Policy optimization module for avgreward-opl.

This module provides the doubly robust objective of a logistic policy, its
gradient through the implicit first-order systems of the two nuisance fits,
and the multi-start box-constrained L-BFGS-B search.
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..dataio import flatten
from ..exceptions import AllStartsFailed, GradientMismatch, ObjectiveUndefined, OPLError
from ..kernels import apply_feature_gram_grad
from ..models.base import canonical_hash
from ..models.data import Dataset, TupleTable
from ..models.fits import TuningPair
from ..models.kernel import KernelConfig
from ..models.policy import OptimizeConfig, OptimizeResult, PolicyParams, StartLog
from ..parallel import WorkerPool
from ..workspace import KernelWorkspace
from .nuisance import NuisanceModule

logger = logging.getLogger(__name__)

Tunings = Tuple[TuningPair, TuningPair]
FunAndGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]

# Value returned to the minimizer where the objective is undefined.
UNDEFINED_PENALTY = 1e12


def relative_gradient_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """max |a - f| / max(max |f|, 1e-8)."""
    scale = max(float(np.max(np.abs(reference))), 1e-8)
    return float(np.max(np.abs(np.asarray(analytic) - np.asarray(reference)))) / scale


class OptimizerModule:
    """Objective, gradient and policy search on one workspace."""

    def __init__(
        self,
        workspace: KernelWorkspace,
        nuisance: Optional[NuisanceModule] = None,
        pool: Optional[WorkerPool] = None,
    ) -> None:
        """
        Initialize optimizer module.

        Args:
            workspace: Kernel workspace of the training tuples
            nuisance: Nuisance module sharing ``workspace`` (created when omitted)
            pool: Worker pool for the multi-start search
        """
        self.workspace = workspace
        self.nuisance = nuisance or NuisanceModule(workspace)
        self.pool = pool or WorkerPool()

    def _value_and_gradient(
        self, params: PolicyParams, tunings: Tunings, with_gradient: bool
    ) -> Tuple[float, Optional[np.ndarray]]:
        try:
            vs = self.nuisance.solve_value(params, tunings[0])
            rs = self.nuisance.solve_ratio(params, tunings[1])
        except OPLError as e:
            raise ObjectiveUndefined(
                f"objective undefined: {e.message}", details={"theta": params.theta.tolist()}
            ) from e

        e, y = rs.e, vs.y
        den = float(e.sum())
        num = float(e @ y)
        value = num / den
        if not with_gradient:
            return value, None

        ws = self.workspace
        terms = vs.terms
        F, Delta, G = terms.F, terms.Delta, terms.G

        D_alpha = apply_feature_gram_grad(Delta, G, vs.alpha)
        d_alpha = -ws.lu_solve(vs.A_factor, vs.B @ D_alpha, context="value derivative")
        d_U = -D_alpha - F @ d_alpha

        D_phi = apply_feature_gram_grad(Delta, G, rs.phi)
        d_phi = -ws.lu_solve(rs.A_factor, rs.M @ D_phi, context="ratio derivative")
        d_nu = -ws.solve_ridge(rs.mu, D_phi + F @ d_phi)
        d_e = ws.L @ d_nu

        d_num = d_e.T @ y + d_U.T @ e
        d_den = d_e.sum(axis=0)
        grad = (d_num * den - num * d_den) / den**2
        return value, grad

    def objective(self, params: PolicyParams, tunings: Tunings) -> float:
        """
        Doubly robust estimate at ``params``.

        Computed as nu' L (R - F~ alpha) / nu' L 1, which equals the doubly
        robust estimate over the fitted nuisances.

        Raises:
            ObjectiveUndefined: If either nuisance fit fails at ``params``
        """
        return self._value_and_gradient(params, tunings, with_gradient=False)[0]

    def objective_and_gradient(self, params: PolicyParams, tunings: Tunings) -> Tuple[float, np.ndarray]:
        """Objective and its analytic theta-gradient, sharing one pair of fits."""
        value, grad = self._value_and_gradient(params, tunings, with_gradient=True)
        assert grad is not None
        return value, grad

    def finite_difference_gradient(
        self, params: PolicyParams, tunings: Tunings, step: float = OptimizeConfig.DEFAULT_FD_STEP
    ) -> np.ndarray:
        """Central differences; off-box points are evaluated without validation."""
        theta = np.asarray(params.theta, dtype=float)
        grad = np.empty_like(theta)
        for k in range(theta.shape[0]):
            shift = np.zeros_like(theta)
            shift[k] = step
            up = self.objective(params.model_copy(update={"theta": theta + shift}), tunings)
            down = self.objective(params.model_copy(update={"theta": theta - shift}), tunings)
            grad[k] = (up - down) / (2.0 * step)
        return grad

    def objective_gradient(
        self,
        params: PolicyParams,
        tunings: Tunings,
        analytic: bool = True,
        fd_step: float = OptimizeConfig.DEFAULT_FD_STEP,
    ) -> np.ndarray:
        """Theta-gradient of :meth:`objective`, analytic or by finite differences."""
        if analytic:
            return self.objective_and_gradient(params, tunings)[1]
        return self.finite_difference_gradient(params, tunings, fd_step)

    def check_gradient(
        self,
        params: PolicyParams,
        tunings: Tunings,
        rtol: float = 1e-4,
        fd_step: float = OptimizeConfig.DEFAULT_FD_STEP,
    ) -> float:
        """
        Compare the analytic gradient with central finite differences.

        Returns:
            float: Max relative error

        Raises:
            GradientMismatch: If the error exceeds ``rtol``
        """
        analytic = self.objective_gradient(params, tunings, analytic=True)
        reference = self.finite_difference_gradient(params, tunings, fd_step)
        err = relative_gradient_error(analytic, reference)
        logger.info("Gradient check at |theta|=%.3g: max relative error %.3g", np.linalg.norm(params.theta), err)
        if err > rtol:
            raise GradientMismatch(
                max_rel_error=err,
                details={"max_rel_error": err, "rtol": rtol, "theta": params.theta.tolist()},
            )
        return err

    def fun_and_grad(self, template: PolicyParams, tunings: Tunings, analytic: bool, fd_step: float) -> FunAndGrad:
        """Objective-gradient callable in raw theta, for :func:`maximize_box`."""

        def evaluate(theta: np.ndarray) -> Tuple[float, np.ndarray]:
            params = template.model_copy(update={"theta": np.asarray(theta, dtype=float)})
            if analytic:
                return self.objective_and_gradient(params, tunings)
            return self.objective(params, tunings), self.finite_difference_gradient(params, tunings, fd_step)

        return evaluate

    def optimize(self, cfg: OptimizeConfig, theta0s: Optional[np.ndarray] = None) -> OptimizeResult:
        """
        Multi-start maximization of the objective over the box.

        Args:
            cfg: Optimizer configuration (penalties, starts, box, features)
            theta0s: Starting points, shape (n_starts, p); drawn uniformly in
                the box from ``cfg.seed`` when omitted

        Returns:
            OptimizeResult: Best theta over all starts with per-start logs

        Raises:
            GradientMismatch: If ``cfg.check_gradient`` and a start fails the check
            AllStartsFailed: If no start produced a finite objective
        """
        p = cfg.features.dim(self.workspace.tuples.d)
        if theta0s is None:
            rng = np.random.default_rng(cfg.seed)
            theta0s = rng.uniform(-cfg.box, cfg.box, size=(cfg.n_starts, p))
        theta0s = np.atleast_2d(np.asarray(theta0s, dtype=float))
        tunings = (cfg.tuning_value, cfg.tuning_ratio)
        template = PolicyParams(theta=np.zeros(p), box=cfg.box, features=cfg.features)

        checks: List[Optional[float]] = [None] * theta0s.shape[0]
        if cfg.check_gradient:
            for i, theta0 in enumerate(theta0s):
                checks[i] = self.check_gradient(
                    template.with_theta(theta0), tunings, rtol=cfg.gradient_rtol, fd_step=cfg.fd_step
                )

        fun = self.fun_and_grad(template, tunings, cfg.use_analytic_gradient, cfg.fd_step)
        logs = maximize_box(fun, theta0s, cfg.box, cfg, self.pool)
        logs = [log.model_copy(update={"gradient_check": checks[log.index]}) for log in logs]
        return _best_of(logs, cfg, self.workspace.cfg)


def maximize_box(
    fun_and_grad: FunAndGrad,
    theta0s: np.ndarray,
    box: float,
    cfg: OptimizeConfig,
    pool: Optional[WorkerPool] = None,
) -> List[StartLog]:
    """
    Run L-BFGS-B from each start on the box [-box, box]^p, maximizing.

    Points where ``fun_and_grad`` raises an :class:`OPLError` get a
    large finite penalty so the line search backs off. Returned parameters
    are clipped to the box.
    """
    theta0s = np.atleast_2d(np.asarray(theta0s, dtype=float))
    p = theta0s.shape[1]
    bounds = [(-box, box)] * p

    def negated(theta: np.ndarray) -> Tuple[float, np.ndarray]:
        try:
            value, grad = fun_and_grad(theta)
        except OPLError:
            return UNDEFINED_PENALTY, np.zeros(p)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return UNDEFINED_PENALTY, np.zeros(p)
        return -value, -np.asarray(grad, dtype=float)

    def run(index: int) -> StartLog:
        theta0 = np.clip(theta0s[index], -box, box)
        logger.info("Optimizer start %d from |theta0|_inf=%.3g", index, np.max(np.abs(theta0)))
        path = [theta0.copy()]
        res = minimize(
            negated,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            callback=lambda xk: path.append(np.clip(xk, -box, box)),
            options={"maxiter": cfg.max_iters, "gtol": cfg.grad_tol},
        )
        theta = np.clip(res.x, -box, box)
        if not np.array_equal(path[-1], theta):
            path.append(theta)
        value, _ = fun_and_grad(theta)
        if not np.isfinite(value):
            raise ObjectiveUndefined("non-finite objective at the final iterate")
        logger.info("Optimizer start %d finished: value %.6g after %d iterations", index, value, res.nit)
        return StartLog(
            index=index,
            theta0=theta0,
            theta=theta,
            value=float(value),
            path=np.vstack(path),
            n_iters=int(res.nit),
            n_evals=int(res.nfev),
            converged=bool(res.success),
            message=str(res.message),
        )

    logs = []
    outcomes = (pool or WorkerPool(max_workers=1)).map(run, range(theta0s.shape[0]))
    for outcome in outcomes:
        if outcome.ok:
            logs.append(outcome.value)
        else:
            logger.warning("Optimizer start %d failed: %s", outcome.index, outcome.error)
            logs.append(
                StartLog(index=outcome.index, theta0=theta0s[outcome.index], error=str(outcome.error))
            )
    return logs


def _best_of(logs: Sequence[StartLog], cfg: OptimizeConfig, kernel: Optional[KernelConfig] = None) -> OptimizeResult:
    ok = [log for log in logs if log.error is None]
    if not ok:
        raise AllStartsFailed(details={"n_starts": len(logs)})
    best = ok[0]
    for log in ok[1:]:
        if log.value > best.value:
            best = log
    document = {"optimizer": cfg.model_dump(mode="json", by_alias=True)}
    if kernel is not None:
        document["kernel"] = kernel.model_dump(mode="json")
    return OptimizeResult(
        theta_hat=best.theta,
        objective_value=best.value,
        best_start=best.index,
        starts=tuple(logs),
        config=cfg,
        seed=cfg.seed,
        config_hash=canonical_hash(document),
    )


def objective(theta: PolicyParams, tuples: TupleTable, cfg: KernelConfig, tunings: Tunings) -> float:
    """Doubly robust objective at ``theta``; builds a workspace for ``tuples``."""
    return OptimizerModule(KernelWorkspace(tuples, cfg), pool=WorkerPool(1)).objective(theta, tunings)


def objective_gradient(theta: PolicyParams, tuples: TupleTable, cfg: KernelConfig, tunings: Tunings) -> np.ndarray:
    """Analytic theta-gradient of :func:`objective`."""
    return OptimizerModule(KernelWorkspace(tuples, cfg), pool=WorkerPool(1)).objective_gradient(theta, tunings)


def optimize(
    dataset: Dataset,
    cfg: OptimizeConfig,
    kernel: KernelConfig,
    pool: Optional[WorkerPool] = None,
) -> OptimizeResult:
    """
    Learn a policy from ``dataset`` with the penalties fixed in ``cfg``.

    Example:
        >>> result = optimize(dataset, OptimizeConfig(seed=7), kernel)
        >>> print(result.theta_hat, result.objective_value)
    """
    module = OptimizerModule(KernelWorkspace(flatten(dataset), kernel), pool=pool)
    result = module.optimize(cfg)
    logger.info(
        "Best start %d of %d: objective %.6g", result.best_start, len(result.starts), result.objective_value
    )
    return result
