"""
Numerical workspace for avgreward-opl.

A :class:`KernelWorkspace` owns the Gram matrices of one TupleTable and runs
every linear solve the estimators need. Factorizations are cached per
penalty, failed factorizations are retried with diagonal jitter, and solve
statistics are tracked the way a network client tracks requests.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from threading import Lock
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .exceptions import DataError, NumericalError, SingularSystem
from .kernels import GramPack, build_gram_pack, feature_gram_parts
from .models.data import TupleTable
from .models.kernel import KernelConfig
from .models.policy import PolicyParams
from .policy import policy_prob_grad

logger = logging.getLogger(__name__)

ChoFactor = Tuple[np.ndarray, bool]
LuFactor = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class PolicyTerms:
    """Policy-dependent quantities of one theta on one TupleTable."""

    p: np.ndarray
    G: np.ndarray
    F: np.ndarray
    Delta: np.ndarray


def _require_finite(arr: np.ndarray, context: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {context}", details={"context": context})
    return arr


class KernelWorkspace:
    """Gram pack plus cached factorizations for one TupleTable."""

    DEFAULT_JITTER = 1e-10
    MAX_RETRIES = 1
    CACHE_SIZE = 8

    def __init__(
        self,
        tuples: TupleTable,
        cfg: KernelConfig,
        jitter: float = DEFAULT_JITTER,
        max_retries: int = MAX_RETRIES,
        cache_size: int = CACHE_SIZE,
        pack: Optional[GramPack] = None,
    ) -> None:
        """
        Initialize the workspace.

        Args:
            tuples: Flattened transitions
            cfg: Kernel configuration
            jitter: Relative diagonal jitter used on retry (times trace/N)
            max_retries: Retries after a failed factorization
            cache_size: Number of policies whose F~ is kept in memory
            pack: Prebuilt Gram pack for ``tuples``

        Raises:
            DataError: If the tuples carry NaN or Inf
        """
        for name in ("states", "next_states", "rewards"):
            if not np.all(np.isfinite(getattr(tuples, name))):
                raise DataError(f"non-finite {name} cannot enter a Gram matrix")

        self.tuples = tuples
        self.cfg = cfg
        self.jitter = jitter
        self.max_retries = max_retries
        self.cache_size = cache_size
        self._pack = pack

        self._lock = Lock()
        self._build_lock = Lock()
        self._ridge: Dict[float, ChoFactor] = {}
        self._projection: Dict[float, np.ndarray] = {}
        self._policies: "OrderedDict[Tuple[bytes, bool], PolicyTerms]" = OrderedDict()

        self.stats = {
            "total_solves": 0,
            "cholesky": 0,
            "lu": 0,
            "jittered_solves": 0,
            "failed_solves": 0,
            "policy_evaluations": 0,
            "cache_hits": 0,
        }

    @property
    def pack(self) -> GramPack:
        """Gram pack of the tuples, built on first use."""
        if self._pack is None:
            with self._build_lock:
                if self._pack is None:
                    self._pack = build_gram_pack(self.cfg, self.tuples)
        return self._pack

    @property
    def N(self) -> int:
        return self.tuples.N

    @property
    def L(self) -> np.ndarray:
        return self.pack.L

    def _bump(self, key: str, by: int = 1) -> None:
        with self._lock:
            self.stats[key] += by

    def _jitter_for(self, A: np.ndarray) -> float:
        scale = abs(float(np.trace(A))) / A.shape[0]
        return self.jitter * (scale if scale > 0 else 1.0)

    def _factor_with_retries(self, kind: str, A: np.ndarray, context: str):
        """Factor ``A`` (Cholesky or LU), adding diagonal jitter on retry."""
        work = np.array(A, dtype=float, copy=True)
        last_error: Optional[BaseException] = None

        for attempt in range(self.max_retries + 1):
            self._bump(kind)
            if attempt > 0:
                self._bump("jittered_solves")
            try:
                if kind == "cholesky":
                    factor = scipy.linalg.cho_factor(work, lower=True)
                else:
                    factor = scipy.linalg.lu_factor(work)
                    diag = np.diag(factor[0])
                    # lu_factor only warns on an exactly singular pivot
                    if np.any(diag == 0.0) or not np.all(np.isfinite(diag)):
                        raise np.linalg.LinAlgError("zero or non-finite pivot")
                return factor
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
                last_error = e
                if attempt < self.max_retries:
                    eps = self._jitter_for(work)
                    logger.warning(
                        "%s factorization of %s failed (%s); retrying with jitter %.3g",
                        kind, context, e, eps,
                    )
                    work[np.diag_indices_from(work)] += eps

        self._bump("failed_solves")
        raise SingularSystem(
            f"{kind} factorization of {context} failed after {self.max_retries} retries",
            details={"context": context, "reason": str(last_error)},
        ) from last_error

    def cholesky(self, A: np.ndarray, context: str = "matrix") -> ChoFactor:
        return self._factor_with_retries("cholesky", A, context)

    def lu(self, A: np.ndarray, context: str = "matrix") -> LuFactor:
        return self._factor_with_retries("lu", A, context)

    def cho_solve(self, factor: ChoFactor, b: np.ndarray, context: str = "solve") -> np.ndarray:
        self._bump("total_solves")
        return _require_finite(scipy.linalg.cho_solve(factor, b), context)

    def lu_solve(self, factor: LuFactor, b: np.ndarray, context: str = "solve") -> np.ndarray:
        self._bump("total_solves")
        return _require_finite(scipy.linalg.lu_solve(factor, b), context)

    def ridge_factor(self, mu: float) -> ChoFactor:
        """Cholesky factor of L + mu I (``mu`` at matrix scale), cached."""
        key = float(mu)
        with self._lock:
            cached = self._ridge.get(key)
        if cached is not None:
            self._bump("cache_hits")
            return cached
        A = np.array(self.L, copy=True)
        A[np.diag_indices_from(A)] += key
        factor = self.cholesky(A, context=f"L + {key:g} I")
        with self._lock:
            self._ridge[key] = factor
        return factor

    def solve_ridge(self, mu: float, b: np.ndarray) -> np.ndarray:
        """(L + mu I)^{-1} b."""
        return self.cho_solve(self.ridge_factor(mu), b, context="ridge solve")

    def projection(self, mu: float) -> np.ndarray:
        """
        M = (L + mu I)^{-1} L^2 (L + mu I)^{-1}, cached per ``mu``.

        Written as X X' with X = (L + mu I)^{-1} L, which keeps M symmetric
        positive semi-definite in floating point.
        """
        key = float(mu)
        with self._lock:
            cached = self._projection.get(key)
        if cached is not None:
            self._bump("cache_hits")
            return cached
        X = self.solve_ridge(key, self.L)
        M = X @ X.T
        M = 0.5 * (M + M.T)
        M.flags.writeable = False
        with self._lock:
            self._projection[key] = M
        return M

    def policy_terms(self, params: PolicyParams) -> PolicyTerms:
        """p, dp/dtheta, F~ and Delta at ``params``; LRU-cached by theta."""
        key = (np.asarray(params.theta, dtype=float).tobytes(), params.features.intercept)
        with self._lock:
            cached = self._policies.get(key)
            if cached is not None:
                self._policies.move_to_end(key)
                self.stats["cache_hits"] += 1
                return cached

        p, G = policy_prob_grad(params, self.tuples.next_states)
        F, Delta = feature_gram_parts(self.pack, p)
        terms = PolicyTerms(p=p, G=G, F=F, Delta=Delta)
        with self._lock:
            self.stats["policy_evaluations"] += 1
            self._policies[key] = terms
            while len(self._policies) > self.cache_size:
                self._policies.popitem(last=False)
        return terms

    def clear_cache(self) -> None:
        with self._lock:
            self._ridge.clear()
            self._projection.clear()
            self._policies.clear()

    def get_stats(self) -> Dict[str, Any]:
        """
        Solve statistics.

        Returns:
            dict: Counters plus ``N`` and the number of cached policies
        """
        with self._lock:
            stats = self.stats.copy()
            stats["cached_policies"] = len(self._policies)
        stats["N"] = self.N
        return stats
