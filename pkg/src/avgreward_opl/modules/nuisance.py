"""
Nuisance estimation module for avgreward-opl.

This module provides the two coupled kernel estimators of a target policy:
the relative value fit (eta~, Q^) and the ratio fit (H^, e^, omega^). Both
are closed-form linear solves on the policy-dependent feature Gram F~ of a
:class:`~avgreward_opl.workspace.KernelWorkspace`.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..exceptions import DegenerateRatio
from ..kernels import feature_sections, sa_kernel_matrix
from ..models.data import Transition, TupleTable
from ..models.fits import RatioFit, TuningPair, ValueFit
from ..models.kernel import KernelConfig
from ..models.policy import PolicyParams
from ..policy import policy_prob
from ..workspace import KernelWorkspace, LuFactor, PolicyTerms

logger = logging.getLogger(__name__)

# Q(states (m, d), actions (m,)) -> values (m,)
QFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

RATIO_DEGENERACY_RTOL = 1e-8


@dataclass(frozen=True)
class ValueSystem:
    """A value fit together with the factors its derivative reuses."""

    fit: ValueFit
    terms: PolicyTerms
    B: np.ndarray
    A_factor: LuFactor
    alpha: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class RatioSystem:
    """A ratio fit together with the factors its derivative reuses."""

    fit: RatioFit
    terms: PolicyTerms
    M: np.ndarray
    A_factor: LuFactor
    mu: float
    phi: np.ndarray
    e: np.ndarray


def td_error(theta: PolicyParams, tuple: Transition, eta: float, Q_eval: QFunction) -> float:
    """
    Temporal-difference error of one transition.

    delta = R + sum_a' pi(a'|S') Q(S', a') - Q(S, A) - eta

    Example:
        >>> z = Transition(np.zeros(1), 0, 2.5, np.zeros(1))
        >>> td_error(PolicyParams(theta=np.zeros(1)), z, 0.0, lambda s, a: np.zeros(len(a)))
        2.5
    """
    s = np.atleast_2d(tuple.state)
    s_next = np.atleast_2d(tuple.next_state)
    p1 = float(policy_prob(theta, s_next)[0])
    q_next = np.asarray(Q_eval(np.vstack([s_next, s_next]), np.array([0, 1])), dtype=float)
    q_now = float(np.asarray(Q_eval(s, np.array([tuple.action])), dtype=float)[0])
    return float(tuple.reward + (1.0 - p1) * q_next[0] + p1 * q_next[1] - q_now - eta)


def td_errors(theta: PolicyParams, tuples: TupleTable, eta: float, Q_eval: QFunction) -> np.ndarray:
    """Vectorized :func:`td_error` over every tuple of a table."""
    p1 = policy_prob(theta, tuples.next_states)
    N = tuples.N
    q0 = np.asarray(Q_eval(tuples.next_states, np.zeros(N, dtype=np.int64)), dtype=float)
    q1 = np.asarray(Q_eval(tuples.next_states, np.ones(N, dtype=np.int64)), dtype=float)
    q = np.asarray(Q_eval(tuples.states, tuples.actions), dtype=float)
    return tuples.rewards + (1.0 - p1) * q0 + p1 * q1 - q - eta


def u_from_q(theta: PolicyParams, Q_eval: QFunction, states, actions, next_states) -> np.ndarray:
    """U(S, A, S') = sum_a' pi(a'|S') Q(S', a') - Q(S, A), row-wise."""
    S = np.atleast_2d(np.asarray(states, dtype=float))
    S_next = np.atleast_2d(np.asarray(next_states, dtype=float))
    m = S.shape[0]
    p1 = policy_prob(theta, S_next)
    q0 = np.asarray(Q_eval(S_next, np.zeros(m, dtype=np.int64)), dtype=float)
    q1 = np.asarray(Q_eval(S_next, np.ones(m, dtype=np.int64)), dtype=float)
    return (1.0 - p1) * q0 + p1 * q1 - np.asarray(Q_eval(S, np.asarray(actions)), dtype=float)


def predict_g(
    coefficients: np.ndarray,
    cfg: KernelConfig,
    tuples: TupleTable,
    query_states: np.ndarray,
    query_actions: np.ndarray,
) -> np.ndarray:
    """
    Evaluate sum_h coefficients_h l(W_h, q) at each query pair.

    Returns an array with one value per query row.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (tuples.N,):
        raise ValueError(f"expected {tuples.N} coefficients, got shape {coefficients.shape}")
    L_q = sa_kernel_matrix(
        cfg, tuples.states, tuples.actions, np.atleast_2d(query_states), np.atleast_1d(query_actions)
    )
    return L_q.T @ coefficients


class NuisanceModule:
    """Coupled value and ratio estimators on one workspace."""

    def __init__(self, workspace: KernelWorkspace) -> None:
        """
        Initialize nuisance module.

        Args:
            workspace: Kernel workspace of the training tuples
        """
        self.workspace = workspace

    @property
    def tuples(self) -> TupleTable:
        return self.workspace.tuples

    def solve_value(self, params: PolicyParams, tuning: TuningPair) -> ValueSystem:
        """
        Solve the value first-order system and keep its factors.

        With B = M - M1 (1'M1)^{-1} 1'M the coefficients solve
        (B F~ + lambda I) alpha = B R, and eta~ = 1'M(R - F~ alpha) / 1'M1.
        """
        ws = self.workspace
        N = ws.N
        lam, mu = tuning.scaled(N)
        terms = ws.policy_terms(params)
        R = self.tuples.rewards

        M = ws.projection(mu)
        m1 = M.sum(axis=1)
        c = float(m1.sum())
        B = M - np.outer(m1, m1) / c

        A = B @ terms.F
        A[np.diag_indices_from(A)] += lam
        factor = ws.lu(A, context="value system")
        alpha = ws.lu_solve(factor, B @ R, context="value coefficients")

        F_alpha = terms.F @ alpha
        y = R - F_alpha
        eta_tilde = float(m1 @ y / c)
        fit = ValueFit(
            eta_tilde=eta_tilde,
            alpha=alpha,
            U_at_data=-F_alpha,
            tuning=tuning,
            theta=params.theta,
            kernel=ws.cfg,
        )
        logger.debug("Value fit: eta~=%.6g, |alpha|=%.3g", eta_tilde, np.linalg.norm(alpha))
        return ValueSystem(fit=fit, terms=terms, B=B, A_factor=factor, alpha=alpha, y=y)

    def solve_ratio(self, params: PolicyParams, tuning: TuningPair) -> RatioSystem:
        """
        Solve the ratio systems and keep their factors.

        (M F~ + lambda I) phi = M 1, then (L + mu I) nu = 1 - F~ phi,
        e = L nu and omega = e / mean(e).

        Raises:
            DegenerateRatio: If mean(e) is numerically zero
        """
        ws = self.workspace
        N = ws.N
        lam, mu = tuning.scaled(N)
        terms = ws.policy_terms(params)

        M = ws.projection(mu)
        A = M @ terms.F
        A[np.diag_indices_from(A)] += lam
        factor = ws.lu(A, context="ratio system")
        phi = ws.lu_solve(factor, M.sum(axis=1), context="ratio coefficients")

        nu = ws.solve_ridge(mu, 1.0 - terms.F @ phi)
        e = ws.L @ nu
        normalizer = float(e.mean())
        if abs(normalizer) <= RATIO_DEGENERACY_RTOL * (float(np.max(np.abs(e))) + 1e-12):
            raise DegenerateRatio(
                details={"normalizer": normalizer, "max_abs_e": float(np.max(np.abs(e)))}
            )

        fit = RatioFit(
            phi=phi,
            nu=nu,
            e_at_data=e,
            omega_at_data=e / normalizer,
            normalizer=normalizer,
            tuning=tuning,
            theta=params.theta,
            kernel=ws.cfg,
        )
        logger.debug("Ratio fit: mean(e)=%.6g, min(omega)=%.3g", normalizer, fit.omega_at_data.min())
        return RatioSystem(fit=fit, terms=terms, M=M, A_factor=factor, mu=mu, phi=phi, e=e)

    def fit_value(self, params: PolicyParams, tuning: TuningPair) -> ValueFit:
        """
        Fit the relative value function of ``params``.

        Args:
            params: Target policy
            tuning: Per-sample penalties (lambda_n, mu_n)

        Returns:
            ValueFit: eta~, alpha and U at the data tuples

        Raises:
            SingularSystem: If a system stays singular after jitter
            NumericalError: If a solve returns non-finite values
        """
        return self.solve_value(params, tuning).fit

    def fit_ratio(self, params: PolicyParams, tuning: TuningPair) -> RatioFit:
        """
        Fit the ratio function of ``params``.

        Raises:
            SingularSystem: If a system stays singular after jitter
            DegenerateRatio: If the normalizer mean(e) is numerically zero
        """
        return self.solve_ratio(params, tuning).fit

    def _check_policy(self, params: PolicyParams, theta: np.ndarray) -> None:
        if not np.array_equal(np.asarray(params.theta), np.asarray(theta)):
            raise ValueError("params do not match the policy the fit was made at")

    def _sections(self, params: PolicyParams, states, actions) -> np.ndarray:
        terms = self.workspace.policy_terms(params)
        return feature_sections(
            self.workspace.pack, terms.p, np.atleast_2d(states), np.atleast_1d(actions)
        )

    def predict_q(self, params: PolicyParams, fit: ValueFit, states, actions) -> np.ndarray:
        """Q^(s, a) = sum_h alpha_h f_h(s, a); vanishes at the anchor."""
        self._check_policy(params, fit.theta)
        return self._sections(params, states, actions).T @ fit.alpha

    def predict_h(self, params: PolicyParams, fit: RatioFit, states, actions) -> np.ndarray:
        """H^(s, a) = sum_h phi_h f_h(s, a)."""
        self._check_policy(params, fit.theta)
        return self._sections(params, states, actions).T @ fit.phi

    def predict_ratio(self, fit: RatioFit, states, actions) -> np.ndarray:
        """omega^(s, a) = sum_h nu_h l(W_h, (s, a)) / mean(e)."""
        return predict_g(fit.nu, self.workspace.cfg, self.tuples, states, actions) / fit.normalizer

    def q_function(self, params: PolicyParams, fit: ValueFit) -> QFunction:
        """Q^ as a callable for :func:`td_error` and :func:`u_from_q`."""
        return lambda states, actions: self.predict_q(params, fit, states, actions)

    def ratio_function(self, fit: RatioFit) -> QFunction:
        return lambda states, actions: self.predict_ratio(fit, states, actions)


def _module(tuples: TupleTable, cfg: KernelConfig, workspace: Optional[KernelWorkspace]) -> NuisanceModule:
    return NuisanceModule(workspace if workspace is not None else KernelWorkspace(tuples, cfg))


def fit_value(
    theta: PolicyParams,
    tuples: TupleTable,
    cfg: KernelConfig,
    tuning: TuningPair,
    workspace: Optional[KernelWorkspace] = None,
) -> ValueFit:
    """Relative value fit; builds a workspace for ``tuples`` when none is given."""
    return _module(tuples, cfg, workspace).fit_value(theta, tuning)


def fit_ratio(
    theta: PolicyParams,
    tuples: TupleTable,
    cfg: KernelConfig,
    tuning: TuningPair,
    workspace: Optional[KernelWorkspace] = None,
) -> RatioFit:
    """Ratio fit; builds a workspace for ``tuples`` when none is given."""
    return _module(tuples, cfg, workspace).fit_ratio(theta, tuning)
