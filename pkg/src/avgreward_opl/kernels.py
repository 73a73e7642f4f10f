"""
Kernel engine: state kernels, the action-indicator lift, anchor shaping,
and the policy-dependent feature Gram with its theta-derivative.

Two kernels are in play. The unshaped ``l((s1, a1), (s2, a2)) =
1{a1 = a2} k0(s1, s2)`` spans the projection class; the shaped kernel

    k~(x, y) = k(x, y) - k(z, x) - k(z, y) + k(z, z),   z = (s*, a*)

spans the value class, whose members vanish at the anchor ``z``.

Every tuple h defines the section ``f_h = k~(W_h, .) - sum_a pi(a|S'_h)
k~((S'_h, a), .)``. Over the extended point set ``X = [W; (S', 0); (S', 1)]``
of size 3N this is ``f_h = C_h K~(X, .)`` with the contraction row

    C_h = e_h - q_h e_{N+h} - p_h e_{2N+h},   p_h = pi(1|S'_h), q_h = 1 - p_h,

so ``F~ = C K~ C'`` and only ``C`` depends on the policy.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .exceptions import DegenerateData
from .models.data import TupleTable
from .models.kernel import KernelConfig
from .models.policy import PolicyParams
from .policy import policy_prob, policy_prob_grad

logger = logging.getLogger(__name__)

MEDIAN_MAX_POINTS = 1000
_BLOCK = 2048


def median_bandwidth(states: np.ndarray, max_points: int = MEDIAN_MAX_POINTS, seed: int = 0) -> float:
    """
    Median pairwise Euclidean distance (the median heuristic).

    At most ``max_points`` points enter the computation; larger sets are
    subsampled with a fixed seed, so the result is deterministic.

    Raises:
        DegenerateData: If fewer than two distinct points are available
    """
    X = np.asarray(states, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] > max_points:
        idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], max_points, replace=False))
        X = X[idx]
    if X.shape[0] < 2:
        raise DegenerateData("median heuristic needs at least two points")
    dists = pdist(X)
    if not np.any(dists > 0):
        raise DegenerateData("all states are identical", details={"n_points": X.shape[0]})
    sigma = float(np.median(dists))
    if sigma == 0.0:
        sigma = float(np.median(dists[dists > 0]))
        logger.warning("Median distance is zero (duplicated states); using positive-distance median")
    logger.info("Median-heuristic bandwidth %.6g from %d points", sigma, X.shape[0])
    return sigma


def state_kernel(cfg: KernelConfig, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """k0 between every row of X and every row of Y."""
    sq = cdist(np.atleast_2d(X), np.atleast_2d(Y), "sqeuclidean")
    if cfg.kind == "delta":
        return (sq == 0.0).astype(float)
    np.divide(sq, -(cfg.bandwidth**2), out=sq)
    return np.exp(sq, out=sq)


def sa_kernel_matrix(
    cfg: KernelConfig, S1: np.ndarray, A1: np.ndarray, S2: np.ndarray, A2: np.ndarray
) -> np.ndarray:
    """Unshaped l over two sets of state-action pairs."""
    K = state_kernel(cfg, S1, S2)
    K *= np.asarray(A1)[:, None] == np.asarray(A2)[None, :]
    return K


def kernel_sa(cfg: KernelConfig, w1: Tuple[np.ndarray, int], w2: Tuple[np.ndarray, int]) -> float:
    """l(w1, w2) = 1{a1 = a2} k0(s1, s2)."""
    (s1, a1), (s2, a2) = w1, w2
    return float(sa_kernel_matrix(cfg, np.atleast_2d(s1), [a1], np.atleast_2d(s2), [a2])[0, 0])


def _anchor_mask(cfg: KernelConfig, S: np.ndarray, A: np.ndarray) -> np.ndarray:
    return (np.asarray(A) == cfg.anchor_action) & np.all(
        np.atleast_2d(S) == cfg.anchor_state[None, :], axis=1
    )


def shaped_kernel_matrix(
    cfg: KernelConfig, S1: np.ndarray, A1: np.ndarray, S2: np.ndarray, A2: np.ndarray
) -> np.ndarray:
    """Shaped k~ over two sets of state-action pairs; anchor rows and columns are exactly 0."""
    z_s = cfg.anchor_state[None, :]
    z_a = [cfg.anchor_action]
    k_z1 = sa_kernel_matrix(cfg, z_s, z_a, S1, A1)[0]
    k_z2 = sa_kernel_matrix(cfg, z_s, z_a, S2, A2)[0]
    k_zz = sa_kernel_matrix(cfg, z_s, z_a, z_s, z_a)[0, 0]

    K = sa_kernel_matrix(cfg, S1, A1, S2, A2)
    K -= k_z1[:, None] + k_z2[None, :]
    K += k_zz
    K[_anchor_mask(cfg, S1, A1), :] = 0.0
    K[:, _anchor_mask(cfg, S2, A2)] = 0.0
    return K


def shaped_kernel(cfg: KernelConfig, w1: Tuple[np.ndarray, int], w2: Tuple[np.ndarray, int]) -> float:
    """k~(w1, w2); zero whenever either argument is the anchor."""
    (s1, a1), (s2, a2) = w1, w2
    return float(shaped_kernel_matrix(cfg, np.atleast_2d(s1), [a1], np.atleast_2d(s2), [a2])[0, 0])


def extended_points(table: TupleTable) -> Tuple[np.ndarray, np.ndarray]:
    """Extended point set [W; (S', 0); (S', 1)] as (states (3N, d), actions (3N,))."""
    N = table.N
    S = np.concatenate([table.states, table.next_states, table.next_states])
    A = np.concatenate([table.actions, np.zeros(N, dtype=np.int64), np.ones(N, dtype=np.int64)])
    return S, A


def _shaped_gram_blocked(cfg: KernelConfig, S: np.ndarray, A: np.ndarray) -> np.ndarray:
    m = S.shape[0]
    out = np.empty((m, m))
    for start in range(0, m, _BLOCK):
        stop = min(start + _BLOCK, m)
        out[start:stop] = shaped_kernel_matrix(cfg, S[start:stop], A[start:stop], S, A)
    return out


@dataclass(frozen=True)
class GramPack:
    """Policy-independent Gram matrices of one TupleTable."""

    cfg: KernelConfig
    L: np.ndarray
    K: np.ndarray
    points: Tuple[np.ndarray, np.ndarray]

    @property
    def N(self) -> int:
        return int(self.L.shape[0])

    def min_eigenvalues(self) -> Tuple[float, float]:
        """Smallest eigenvalues of L and of the extended shaped Gram."""
        return (
            float(np.linalg.eigvalsh(self.L)[0]),
            float(np.linalg.eigvalsh(self.K)[0]),
        )

    def is_psd(self, rtol: float = 1e-8) -> bool:
        """PSD up to round-off: min eigenvalue >= -rtol * trace / size."""
        lam_L, lam_K = self.min_eigenvalues()
        return bool(
            lam_L >= -rtol * np.trace(self.L) / self.N
            and lam_K >= -rtol * np.trace(self.K) / self.K.shape[0]
        )


def build_gram_pack(cfg: KernelConfig, table: TupleTable) -> GramPack:
    """
    Materialize L (N x N) and the shaped extended Gram (3N x 3N).

    The extended Gram is built once per dataset; every policy evaluation
    afterwards is a contraction of it.
    """
    if cfg.d != table.d:
        raise ValueError(f"kernel anchor has dimension {cfg.d}, data has {table.d}")
    L = sa_kernel_matrix(cfg, table.states, table.actions, table.states, table.actions)
    L = 0.5 * (L + L.T)
    S_ext, A_ext = extended_points(table)
    K = _shaped_gram_blocked(cfg, S_ext, A_ext)
    L.flags.writeable = False
    K.flags.writeable = False
    logger.debug("Built Gram pack: N=%d, extended size %d", table.N, K.shape[0])
    return GramPack(cfg=cfg, L=L, K=K, points=(S_ext, A_ext))


def contract(K_rows: np.ndarray, p_cols: np.ndarray, N_cols: int) -> np.ndarray:
    """Right contraction K C' for a column block structure [W; (S',0); (S',1)]."""
    q_cols = 1.0 - p_cols
    return (
        K_rows[:, :N_cols]
        - K_rows[:, N_cols : 2 * N_cols] * q_cols[None, :]
        - K_rows[:, 2 * N_cols :] * p_cols[None, :]
    )


def left_contract(E: np.ndarray, p_rows: np.ndarray) -> np.ndarray:
    """Left contraction C E for a row block structure [W; (S',0); (S',1)]."""
    N = p_rows.shape[0]
    q_rows = 1.0 - p_rows
    return E[:N] - q_rows[:, None] * E[N : 2 * N] - p_rows[:, None] * E[2 * N :]


def feature_gram_parts(pack: GramPack, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    F~ and the direction matrix Delta for next-state probabilities ``p``.

    ``Delta[h, j] = <k~((S'_h, 0), .) - k~((S'_h, 1), .), f_j>``, so that
    ``dF~/dtheta_k = diag(g_k) Delta + Delta' diag(g_k)`` with
    ``g_k = dp/dtheta_k``.
    """
    N = pack.N
    E = contract(pack.K, p, N)
    F = left_contract(E, p)
    F = 0.5 * (F + F.T)
    Delta = E[N : 2 * N] - E[2 * N :]
    return F, Delta


def feature_gram(
    cfg: KernelConfig,
    tuples: TupleTable,
    theta: PolicyParams,
    pack: Optional[GramPack] = None,
) -> np.ndarray:
    """
    Policy-dependent Gram F~(pi)[h, j] = <f_h, f_j> in the shaped RKHS.

    Args:
        cfg: Kernel configuration
        tuples: Flattened transitions
        theta: Policy parameters
        pack: Precomputed Gram pack for ``tuples`` (built when omitted)

    Returns:
        np.ndarray: Symmetric (N, N) matrix
    """
    pack = pack or build_gram_pack(cfg, tuples)
    F, _ = feature_gram_parts(pack, policy_prob(theta, tuples.next_states))
    return F


def feature_gram_grad(
    cfg: KernelConfig,
    tuples: TupleTable,
    theta: PolicyParams,
    pack: Optional[GramPack] = None,
) -> np.ndarray:
    """
    Derivative tensor dF~/dtheta of shape (N, N, p).

    Uses dpi(1|s)/dtheta = pi(1|s) (1 - pi(1|s)) phi(s). Prefer
    :func:`apply_feature_gram_grad` when only products with a vector are
    needed; this materializes N*N*p entries.
    """
    pack = pack or build_gram_pack(cfg, tuples)
    p, G = policy_prob_grad(theta, tuples.next_states)
    _, Delta = feature_gram_parts(pack, p)
    half = G.T[:, :, None] * Delta[None, :, :]
    return np.transpose(half + np.transpose(half, (0, 2, 1)), (1, 2, 0))


def apply_feature_gram_grad(Delta: np.ndarray, G: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Columns (dF~/dtheta_k) v for every k, shape (N, p)."""
    return G * (Delta @ v)[:, None] + Delta.T @ (G * v[:, None])


def feature_sections(
    pack: GramPack, p: np.ndarray, S_query: np.ndarray, A_query: np.ndarray
) -> np.ndarray:
    """
    Section values f_h(q) for every tuple h and query pair q, shape (N, m).

    A function Q = sum_h c_h f_h evaluates as ``feature_sections(...).T @ c``.
    """
    S_ext, A_ext = pack.points
    K_xq = shaped_kernel_matrix(pack.cfg, S_ext, A_ext, np.atleast_2d(S_query), A_query)
    return left_contract(K_xq, p)


def cross_feature_gram(
    cfg: KernelConfig,
    table_a: TupleTable,
    p_a: np.ndarray,
    table_b: TupleTable,
    p_b: np.ndarray,
) -> np.ndarray:
    """<f_h^a, f_j^b> between the sections of two tuple tables, shape (N_a, N_b)."""
    S_a, A_a = extended_points(table_a)
    S_b, A_b = extended_points(table_b)
    K_ab = shaped_kernel_matrix(cfg, S_a, A_a, S_b, A_b)
    return left_contract(contract(K_ab, p_b, table_b.N), p_a)
