"""
Exact oracles for small finite MDPs.

Every function here is pure and works on dense numpy tables, so the results
serve as ground truth for the kernel estimators when a tabular MDP is
rendered through one-hot states and the Kronecker-delta state kernel.
"""

import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .exceptions import NotIrreducible, SingularSystem, ZeroCoverage
from .models.data import Dataset
from .models.kernel import KernelConfig
from .models.mdp import TabularMDP, TabularPolicy
from .models.policy import PolicyParams
from .policy import policy_prob

logger = logging.getLogger(__name__)

Anchor = Tuple[int, int]


def induced_chain(mdp: TabularMDP, pi: TabularPolicy) -> np.ndarray:
    """State transition matrix P^pi(s'|s) = sum_a pi(a|s) P(s'|s, a)."""
    return np.einsum("sa,sat->st", pi.probs, mdp.P)


def state_action_chain(mdp: TabularMDP, pi: TabularPolicy) -> np.ndarray:
    """Transition matrix over (s, a) pairs, flattened row-major."""
    S, A = mdp.n_states, mdp.n_actions
    return np.einsum("sat,tb->satb", mdp.P, pi.probs).reshape(S * A, S * A)


def is_irreducible(P_pi: np.ndarray) -> bool:
    """Strong connectivity of the positive-probability transition graph."""
    n_components, _ = connected_components(P_pi > 0, directed=True, connection="strong")
    return n_components == 1


def _require_irreducible(mdp: TabularMDP, pi: TabularPolicy) -> np.ndarray:
    P_pi = induced_chain(mdp, pi)
    if not is_irreducible(P_pi):
        raise NotIrreducible(details={"n_states": mdp.n_states})
    return P_pi


def stationary_distribution(mdp: TabularMDP, pi: TabularPolicy) -> np.ndarray:
    """
    Stationary distribution d^pi of the chain induced by ``pi``.

    Solves (P^pi' - I) d = 0 with the last equation replaced by sum(d) = 1.

    Raises:
        NotIrreducible: If some state is unreachable under ``pi``
    """
    P_pi = _require_irreducible(mdp, pi)
    S = mdp.n_states
    A = P_pi.T - np.eye(S)
    A[-1, :] = 1.0
    b = np.zeros(S)
    b[-1] = 1.0
    d = scipy.linalg.solve(A, b)
    return d / d.sum()


def stationary_distribution_power(
    mdp: TabularMDP, pi: TabularPolicy, tol: float = 1e-14, max_iter: int = 1_000_000
) -> np.ndarray:
    """Power iteration on the lazy chain (I + P^pi) / 2; used as a test oracle."""
    P_pi = induced_chain(mdp, pi)
    lazy = 0.5 * (np.eye(mdp.n_states) + P_pi)
    d = np.full(mdp.n_states, 1.0 / mdp.n_states)
    for _ in range(max_iter):
        nxt = d @ lazy
        if np.max(np.abs(nxt - d)) < tol:
            return nxt / nxt.sum()
        d = nxt
    return d / d.sum()


def average_reward_exact(mdp: TabularMDP, pi: TabularPolicy) -> float:
    """eta^pi = sum_{s,a} r(s, a) pi(a|s) d^pi(s)."""
    d = stationary_distribution(mdp, pi)
    return float(np.sum(d[:, None] * pi.probs * mdp.r))


def relative_value_exact(
    mdp: TabularMDP, pi: TabularPolicy, anchor: Anchor = (0, 0)
) -> np.ndarray:
    """
    Relative value function Q~^pi with Q~^pi(anchor) = 0.

    Solves the Bellman system r + P_sa Q - Q - eta 1 = 0 jointly in
    (Q, eta) together with the anchor equation.

    Raises:
        NotIrreducible: If the induced chain is reducible
        SingularSystem: If the joint system cannot be solved
    """
    _require_irreducible(mdp, pi)
    S, A = mdp.n_states, mdp.n_actions
    m = S * A
    P_sa = state_action_chain(mdp, pi)

    system = np.zeros((m + 1, m + 1))
    system[:m, :m] = P_sa - np.eye(m)
    system[:m, m] = -1.0
    system[m, anchor[0] * A + anchor[1]] = 1.0
    rhs = np.zeros(m + 1)
    rhs[:m] = -mdp.r.reshape(m)

    try:
        sol = scipy.linalg.solve(system, rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SingularSystem("Bellman system is singular", details={"anchor": anchor}) from e
    Q = sol[:m].reshape(S, A)
    Q[anchor] = 0.0
    return Q


def bellman_residual(mdp: TabularMDP, pi: TabularPolicy, Q: np.ndarray, eta: float) -> np.ndarray:
    """r + E_pi[Q(S', A') | s, a] - Q(s, a) - eta for every (s, a)."""
    next_value = mdp.P @ np.sum(pi.probs * Q, axis=1)
    return mdp.r + next_value - Q - eta


def u_exact(mdp: TabularMDP, pi: TabularPolicy, anchor: Anchor = (0, 0)) -> np.ndarray:
    """U^pi(s, a, s') = sum_a' pi(a'|s') Q(s', a') - Q(s, a), shape (S, A, S)."""
    Q = relative_value_exact(mdp, pi, anchor)
    V = np.sum(pi.probs * Q, axis=1)
    return V[None, None, :] - Q[:, :, None]


def time_marginals(mdp: TabularMDP, T: int) -> np.ndarray:
    """Exact data marginals d_t(s, a) for t = 1..T, shape (T, S, A)."""
    out = np.empty((T, mdp.n_states, mdp.n_actions))
    rho = mdp.init.copy()
    for t in range(T):
        out[t] = rho[:, None] * mdp.behavior
        rho = np.einsum("sa,sat->t", out[t], mdp.P)
    return out


def marginal_average_distribution(mdp: TabularMDP, T: int) -> np.ndarray:
    """d_D(s, a) = (1/T) sum_t d_t(s, a) under init, behavior and P."""
    if T < 1:
        raise ValueError("T must be at least 1")
    return time_marginals(mdp, T).mean(axis=0)


def ratio_exact(mdp: TabularMDP, pi: TabularPolicy, T: int) -> np.ndarray:
    """
    omega^pi(s, a) = d^pi(s) pi(a|s) / d_D(s, a).

    Raises:
        ZeroCoverage: If d_D vanishes on some (s, a)
    """
    d_D = marginal_average_distribution(mdp, T)
    if np.any(d_D <= 0):
        s, a = np.argwhere(d_D <= 0)[0]
        raise ZeroCoverage(details={"state": int(s), "action": int(a), "T": T})
    d = stationary_distribution(mdp, pi)
    return d[:, None] * pi.probs / d_D


def orthogonality_residual(
    mdp: TabularMDP, pi: TabularPolicy, T: int, f: np.ndarray
) -> float:
    """
    Exact (1/T) sum_t E_{d_t}[omega (f - E_pi f(S', A'))]; zero for any table f.
    """
    omega = ratio_exact(mdp, pi, T)
    shifted = f - mdp.P @ np.sum(pi.probs * f, axis=1)
    return float(np.sum(marginal_average_distribution(mdp, T) * omega * shifted))


def dr_numerator_exact(
    mdp: TabularMDP,
    pi: TabularPolicy,
    T: int,
    omega: Optional[np.ndarray] = None,
    U: Optional[np.ndarray] = None,
) -> float:
    """
    Exact expectation of (1/T) sum_t omega(S_t, A_t) (R_{t+1} + U(S_t, A_t, S_{t+1})).

    Defaults to the true nuisances, in which case the value equals eta^pi.
    """
    omega = ratio_exact(mdp, pi, T) if omega is None else omega
    U = u_exact(mdp, pi) if U is None else U
    expected_u = np.einsum("sat,sat->sa", mdp.P, U)
    return float(np.sum(marginal_average_distribution(mdp, T) * omega * (mdp.r + expected_u)))


def simulate_tabular(
    mdp: TabularMDP,
    n: int,
    T: int,
    rng: np.random.Generator,
    policy: Optional[TabularPolicy] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Simulate integer-state trajectories.

    Returns:
        (states (n, T+1), actions (n, T), rewards (n, T))
    """
    probs = mdp.behavior if policy is None else policy.probs
    S = mdp.n_states
    states = np.empty((n, T + 1), dtype=np.int64)
    actions = np.empty((n, T), dtype=np.int64)
    rewards = np.empty((n, T))
    cum_P = np.cumsum(mdp.P, axis=2)
    cum_P[..., -1] = 1.0

    states[:, 0] = rng.choice(S, size=n, p=mdp.init)
    for t in range(T):
        s = states[:, t]
        a = (rng.random(n) < probs[s, 1]).astype(np.int64)
        u = rng.random(n)
        s_next = (u[:, None] > cum_P[s, a]).sum(axis=1)
        actions[:, t] = a
        states[:, t + 1] = s_next
        rewards[:, t] = mdp.r[s, a]
    if mdp.reward_noise > 0:
        rewards += mdp.reward_noise * rng.standard_normal((n, T))
    return states, actions, rewards


def one_hot(states: np.ndarray, n_states: int) -> np.ndarray:
    """Encode integer states as one-hot rows (last axis of size n_states)."""
    return np.eye(n_states)[np.asarray(states, dtype=np.int64)]


def decode_one_hot(states: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(states), axis=-1)


def simulate_dataset(
    mdp: TabularMDP,
    n: int,
    T: int,
    rng: np.random.Generator,
    policy: Optional[TabularPolicy] = None,
) -> Dataset:
    """Tabular trajectories rendered as a Dataset with one-hot states."""
    states, actions, rewards = simulate_tabular(mdp, n, T, rng, policy)
    return Dataset(states=one_hot(states, mdp.n_states), actions=actions, rewards=rewards)


def delta_kernel(n_states: int, anchor: Anchor = (0, 0)) -> KernelConfig:
    """Kronecker-delta kernel config anchored at one-hot ``anchor``."""
    return KernelConfig(
        kind="delta",
        bandwidth=1.0,
        anchor_state=one_hot(np.array(anchor[0]), n_states),
        anchor_action=anchor[1],
    )


def tabular_policy(params: PolicyParams, n_states: int) -> TabularPolicy:
    """Evaluate a logistic policy on one-hot states as a TabularPolicy."""
    p1 = policy_prob(params, np.eye(n_states))
    return TabularPolicy(probs=np.column_stack([1.0 - p1, p1]))


def reference_mdp(reward_noise: float = 0.1) -> TabularMDP:
    """
    Reference 4-state, 2-action MDP on a ring.

    Action 1 tends to move forward, action 0 tends to stay or step back.
    Rewards grow along the ring and action 1 earns an extra bonus, so a
    target policy favouring action 1 has a visibly different average reward
    from the uniform behavior policy.
    """
    S, A = 4, 2
    P = np.zeros((S, A, S))
    for s in range(S):
        P[s, 0, s] = 0.7
        P[s, 0, (s - 1) % S] = 0.3
        P[s, 1, (s + 1) % S] = 0.8
        P[s, 1, s] = 0.2
    r = np.array([[0.0, 0.5], [0.2, 0.8], [0.5, 1.2], [1.0, 1.5]])
    return TabularMDP(
        P=P,
        r=r,
        behavior=np.full((S, A), 0.5),
        init=np.full(S, 1.0 / S),
        reward_noise=reward_noise,
    )


def reference_target_policy() -> TabularPolicy:
    """Target policy of the reference MDP: action 1 with probability 0.8."""
    return TabularPolicy(probs=np.tile([0.2, 0.8], (4, 1)))
