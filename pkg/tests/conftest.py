"""
Shared fixtures for the avgreward-opl test suite.
"""

import numpy as np
import pytest

from avgreward_opl.dataio import flatten
from avgreward_opl.environments import VLearningEnv
from avgreward_opl.models import KernelConfig, PolicyParams, TuningPair
from avgreward_opl.tabular import delta_kernel, reference_mdp, reference_target_policy
from avgreward_opl.workspace import KernelWorkspace


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dataset():
    """Four V-learning trajectories of length five (N = 20, d = 2)."""
    return VLearningEnv().rollout(None, 4, 5, np.random.default_rng(7))


@pytest.fixture
def small_tuples(small_dataset):
    return flatten(small_dataset)


@pytest.fixture
def kernel():
    return KernelConfig.default_for(2, bandwidth=1.0)


@pytest.fixture
def workspace(small_tuples, kernel):
    return KernelWorkspace(small_tuples, kernel)


@pytest.fixture
def params():
    return PolicyParams(theta=np.array([0.3, -0.2]))


@pytest.fixture
def tuning():
    return TuningPair(lam=1e-2, mu=1e-2)


@pytest.fixture
def tabular_mdp():
    return reference_mdp()


@pytest.fixture
def target_policy():
    return reference_target_policy()


@pytest.fixture
def tabular_kernel(tabular_mdp):
    return delta_kernel(tabular_mdp.n_states)
