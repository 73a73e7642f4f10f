"""
Logistic policy class pi_theta(1|s) = expit(phi(s)' theta).
"""

from typing import Tuple

import numpy as np
from scipy.special import expit

from .models.policy import PolicyParams


def logits(params: PolicyParams, states: np.ndarray) -> np.ndarray:
    return params.features.transform(states) @ params.theta


def policy_prob(params: PolicyParams, states: np.ndarray) -> np.ndarray:
    """
    Probability of action 1 for each row of ``states``.

    ``expit`` keeps the result strictly inside (0, 1) for |logit| up to ~700.

    Example:
        >>> params = PolicyParams(theta=np.array([np.log(3.0)]))
        >>> float(policy_prob(params, np.array([[1.0]]))[0])
        0.75
    """
    return expit(logits(params, states))


def policy_prob_grad(params: PolicyParams, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Probabilities and their theta-gradient.

    Returns:
        (p, G) with p of shape (m,) and G[h, k] = p_h (1 - p_h) phi_k(s_h).
        The variance term is computed as expit(x) * expit(-x) so it does not
        round to zero for large positive logits.
    """
    phi = params.features.transform(states)
    z = phi @ params.theta
    p = expit(z)
    return p, (p * expit(-z))[:, None] * phi


def sample_actions(params: PolicyParams, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw binary actions from pi_theta, one per state row."""
    return (rng.random(np.atleast_2d(states).shape[0]) < policy_prob(params, states)).astype(np.int64)
