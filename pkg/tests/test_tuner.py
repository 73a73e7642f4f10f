"""
Tests for cross-validated penalty selection.
"""

import numpy as np
import pytest

from avgreward_opl.dataio import flatten
from avgreward_opl.environments import VLearningEnv
from avgreward_opl.exceptions import FoldTooSmall, SingularSystem
from avgreward_opl.models import CVResult, TuningGrid, TuningPair
from avgreward_opl.modules.nuisance import NuisanceModule
from avgreward_opl.modules.tuner import (
    TunerModule,
    cv_select,
    projected_bellman_mse,
    sample_candidate_policies,
)
from avgreward_opl.parallel import WorkerPool
from avgreward_opl.workspace import KernelWorkspace


def _tuner(dataset, kernel):
    return TunerModule(KernelWorkspace(flatten(dataset), kernel), WorkerPool(1))


@pytest.fixture
def cv_dataset():
    """Six V-learning trajectories of length three."""
    return VLearningEnv().rollout(None, 6, 3, np.random.default_rng(21))


@pytest.fixture
def validation_tuples():
    """Two hundred V-learning tuples."""
    return flatten(VLearningEnv().rollout(None, 20, 10, np.random.default_rng(17)))


@pytest.fixture
def grid():
    return TuningGrid(
        value_grid=(TuningPair(lam=1e-1, mu=1e-1), TuningPair(lam=1e-3, mu=1e-3)),
        ratio_grid=(TuningPair(lam=1e-2, mu=1e-2), TuningPair(lam=1e-3, mu=1e-1)),
        n_candidates=2,
        n_folds=3,
    )


@pytest.mark.unit
class TestCandidatePolicies:
    """Test cases for sample_candidate_policies."""

    def test_shapes_and_box(self):
        """Test that candidates have the requested dimension and stay in the box."""
        candidates = sample_candidate_policies(3, 2, 1.5, seed=4)
        assert len(candidates) == 3
        for params in candidates:
            assert params.p == 2
            assert params.box == 1.5
            assert np.max(np.abs(params.theta)) <= 1.5

    def test_seeded(self):
        """Test that the same seed draws the same candidates."""
        a = sample_candidate_policies(2, 2, 1.0, seed=9)
        b = sample_candidate_policies(2, 2, 1.0, seed=9)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.theta, y.theta)

    def test_rejects_empty(self):
        """Test that M must be positive."""
        with pytest.raises(ValueError):
            sample_candidate_policies(0, 2, 1.0, seed=0)


@pytest.mark.unit
class TestProjectedBellmanMSE:
    """Test cases for the projected validation error."""

    def test_zero_residuals(self, small_tuples, kernel):
        """Test that zero residuals have zero projected error."""
        assert projected_bellman_mse(small_tuples, np.zeros(small_tuples.N), kernel) == 0.0

    def test_non_negative_and_bounded(self, small_tuples, kernel, rng):
        """Test that the projection does not inflate the residuals."""
        residuals = rng.normal(size=small_tuples.N)
        value = projected_bellman_mse(small_tuples, residuals, kernel)
        assert 0.0 < value <= np.mean(residuals**2)

    def test_length_check(self, small_tuples, kernel):
        """Test that the residual vector must match the validation tuples."""
        with pytest.raises(ValueError):
            projected_bellman_mse(small_tuples, np.zeros(3), kernel)

    def test_pure_noise_is_shrunk(self, validation_tuples, kernel):
        """Test that noise independent of (S, A) projects below its raw variance."""
        noise = np.random.default_rng(13).normal(size=validation_tuples.N)
        assert projected_bellman_mse(validation_tuples, noise, kernel) < np.var(noise)

    def test_smooth_residual_is_kept(self, validation_tuples, kernel):
        """Test that a kernel-smooth residual keeps at least 90% of its mean square."""
        from avgreward_opl.kernels import sa_kernel_matrix

        S, A = validation_tuples.states, validation_tuples.actions
        centers = np.random.default_rng(2).choice(validation_tuples.N, size=5, replace=False)
        smooth = sa_kernel_matrix(kernel, S, A, S[centers], A[centers]) @ np.array([1.0, -0.5, 0.8, -1.2, 0.6])
        target = np.mean(smooth**2)
        assert projected_bellman_mse(validation_tuples, smooth, kernel) == pytest.approx(target, rel=0.1)


@pytest.mark.unit
class TestSelect:
    """Test cases for the min-max selection rule."""

    def test_min_of_worst_case(self):
        """Test that the column with the smallest maximum is chosen."""
        assert CVResult.select(np.array([[1.0, 2.0], [3.0, 1.0]])) == 1

    def test_ties_go_to_the_first_column(self):
        """Test that ties pick the smallest index."""
        assert CVResult.select(np.array([[1.0, 1.0], [0.5, 0.5]])) == 0

    def test_all_infinite(self):
        """Test that a table of failures still selects the first column."""
        assert CVResult.select(np.full((2, 3), np.inf)) == 0

    def test_canonical_order(self, grid):
        """Test that grids are sorted by lambda, then mu."""
        canonical = grid.canonical()
        assert [p.lam for p in canonical.value_grid] == [1e-3, 1e-1]
        assert [(p.lam, p.mu) for p in canonical.ratio_grid] == [(1e-3, 1e-1), (1e-2, 1e-2)]


@pytest.mark.unit
class TestCVSelect:
    """Test cases for cross-validated selection."""

    def test_tables_and_choice(self, cv_dataset, kernel, grid):
        """Test the table shapes and that the choice comes from the grid."""
        result = _tuner(cv_dataset, kernel).cv_select(grid, seed=5)
        assert result.error_table_value.shape == (2, 2)
        assert result.error_table_ratio.shape == (2, 2)
        assert np.all(np.isfinite(result.error_table_value))
        assert np.all(result.error_table_value >= 0)
        assert result.chosen_value in result.value_grid
        assert result.chosen_ratio in result.ratio_grid
        j = CVResult.select(result.error_table_value)
        assert result.chosen_value == result.value_grid[j]

    def test_deterministic(self, cv_dataset, kernel, grid):
        """Test that a fixed seed reproduces the error tables."""
        a = _tuner(cv_dataset, kernel).cv_select(grid, seed=5)
        b = _tuner(cv_dataset, kernel).cv_select(grid, seed=5)
        np.testing.assert_array_equal(a.error_table_value, b.error_table_value)
        np.testing.assert_array_equal(a.error_table_ratio, b.error_table_ratio)
        assert a.chosen_value == b.chosen_value

    def test_fold_too_small(self, kernel, grid):
        """Test that fewer than two trajectories per fold is refused."""
        dataset = VLearningEnv().rollout(None, 5, 3, np.random.default_rng(0))
        with pytest.raises(FoldTooSmall):
            _tuner(dataset, kernel).cv_select(grid, seed=0)

    def test_failed_fits_become_infinite(self, mocker, cv_dataset, kernel, grid):
        """Test that singular fits score infinity instead of aborting."""
        mocker.patch.object(NuisanceModule, "fit_ratio", side_effect=SingularSystem())
        result = _tuner(cv_dataset, kernel).cv_select(grid, seed=5)
        assert np.all(np.isinf(result.error_table_ratio))
        assert np.all(np.isfinite(result.error_table_value))
        assert result.chosen_ratio == grid.canonical().ratio_grid[0]

    def test_explicit_candidates(self, cv_dataset, kernel, grid, params):
        """Test that given candidate policies replace the sampled ones."""
        result = cv_select(cv_dataset, grid, kernel, seed=5, candidates=[params], pool=WorkerPool(1))
        assert result.error_table_value.shape == (1, 2)

    def test_single_grid_entry(self, cv_dataset, kernel, mocker):
        """Test that J = 1 returns the only pair even when every fit fails."""
        only = TuningPair(lam=1e-2, mu=1e-2)
        grid = TuningGrid(value_grid=(only,), ratio_grid=(only,), n_candidates=2, n_folds=3)
        mocker.patch.object(NuisanceModule, "fit_value", side_effect=SingularSystem())
        result = _tuner(cv_dataset, kernel).cv_select(grid, seed=1)
        assert result.error_table_value.shape == (2, 1)
        assert result.chosen_value == only
        assert result.chosen_ratio == only

    def test_candidate_order_does_not_matter(self, cv_dataset, kernel, grid):
        """Test that shuffling the candidate policies keeps the chosen pairs."""
        candidates = sample_candidate_policies(4, 2, 2.0, seed=6)
        shuffled = [candidates[i] for i in (2, 0, 3, 1)]
        a = _tuner(cv_dataset, kernel).cv_select(grid, seed=5, candidates=candidates)
        b = _tuner(cv_dataset, kernel).cv_select(grid, seed=5, candidates=shuffled)
        assert a.chosen_value == b.chosen_value
        assert a.chosen_ratio == b.chosen_ratio
        np.testing.assert_allclose(b.error_table_value, a.error_table_value[[2, 0, 3, 1]])


@pytest.mark.integration
class TestCVSelectScenario:
    """Test cross-validation on Scenario 1 data."""

    def test_moderate_penalty_beats_extreme(self):
        """Test that lambda = mu = 1e6 loses to a moderate pair on both tables."""
        from avgreward_opl.environments import Scenario1
        from avgreward_opl.kernels import median_bandwidth
        from avgreward_opl.models import KernelConfig

        data = Scenario1().rollout(None, 9, 10, np.random.default_rng(31))
        kernel = KernelConfig.default_for(3, bandwidth=median_bandwidth(data.states.reshape(-1, 3)))
        moderate, extreme = TuningPair(lam=1e-2, mu=1e-2), TuningPair(lam=1e6, mu=1e6)
        grid = TuningGrid(value_grid=(extreme, moderate), ratio_grid=(extreme, moderate), n_candidates=3, n_folds=3)

        result = _tuner(data, kernel).cv_select(grid, seed=2, box=2.0)
        assert result.chosen_value == moderate
        assert result.chosen_ratio == moderate
        # canonical order puts the moderate pair first
        assert result.error_table_value[:, 0].max() < result.error_table_value[:, 1].max()
        assert result.error_table_ratio[:, 0].max() < result.error_table_ratio[:, 1].max()
