"""
Tests for the pydantic value objects.
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from avgreward_opl.models import (
    DREstimate,
    ExperimentConfig,
    EnvSpec,
    FeatureMap,
    OptimizeConfig,
    PolicyParams,
    TuningGrid,
    TuningPair,
    canonical_hash,
    coupled_grid,
)


@pytest.mark.unit
class TestTuningPair:
    """Test cases for TuningPair."""

    def test_lambda_alias(self):
        """Test that the pair accepts and emits the 'lambda' key."""
        pair = TuningPair.model_validate({"lambda": 0.1, "mu": 0.2})
        assert pair.lam == 0.1
        assert pair.model_dump(by_alias=True) == {"lambda": 0.1, "mu": 0.2}
        assert TuningPair(lam=0.1, mu=0.2) == pair

    def test_scaled(self):
        """Test the matrix-scale penalties."""
        assert TuningPair(lam=0.01, mu=0.1).scaled(200) == pytest.approx((2.0, 20.0))

    def test_positive(self):
        """Test that penalties must be positive."""
        with pytest.raises(ValidationError):
            TuningPair(lam=0.0, mu=0.1)

    def test_coupled_grid(self):
        """Test that coupled grids set lambda = mu."""
        assert [(p.lam, p.mu) for p in coupled_grid([1e-3, 1e-1])] == [(1e-3, 1e-3), (1e-1, 1e-1)]


@pytest.mark.unit
class TestPolicyParams:
    """Test cases for PolicyParams."""

    def test_box_enforced(self):
        """Test that theta must lie in the sup-norm box."""
        with pytest.raises(ValidationError):
            PolicyParams(theta=np.array([0.5, 2.5]), box=2.0)

    def test_vector_required(self):
        """Test that theta must be one-dimensional."""
        with pytest.raises(ValidationError):
            PolicyParams(theta=np.zeros((2, 2)))

    def test_with_theta_keeps_settings(self):
        """Test that with_theta keeps the box and features."""
        params = PolicyParams(theta=np.zeros(3), box=1.5, features=FeatureMap(intercept=True))
        moved = params.with_theta(np.array([1.0, -1.0, 0.5]))
        assert moved.box == 1.5
        assert moved.features.intercept
        assert moved.p == 3

    def test_theta_is_read_only(self):
        """Test that validated arrays cannot be mutated in place."""
        params = PolicyParams(theta=np.zeros(2))
        with pytest.raises(ValueError):
            params.theta[0] = 1.0

    def test_json_round_trip(self, tmp_path):
        """Test that a policy survives a JSON file."""
        params = PolicyParams(theta=np.array([0.25, -0.75]), box=3.0, features=FeatureMap(intercept=True))
        loaded = PolicyParams.load_json(params.save_json(tmp_path / "policy.json"))
        np.testing.assert_array_equal(loaded.theta, params.theta)
        assert loaded.box == 3.0
        assert loaded.features == params.features

    def test_feature_map(self):
        """Test the intercept feature."""
        features = FeatureMap(intercept=True)
        assert features.dim(2) == 3
        np.testing.assert_array_equal(features.transform(np.array([[2.0, 3.0]])), [[1.0, 2.0, 3.0]])


@pytest.mark.unit
class TestDREstimate:
    """Test cases for DREstimate."""

    def test_ratio_consistency(self):
        """Test that eta_hat must equal numerator / denominator."""
        with pytest.raises(ValidationError):
            DREstimate(eta_hat=1.0, numerator=3.0, denominator=2.0)

    def test_standard_error(self):
        """Test the EIF-based standard error and interval."""
        eif = np.array([1.0, -1.0, 2.0, -2.0])
        est = DREstimate(eta_hat=1.5, numerator=3.0, denominator=2.0, eif_per_trajectory=eif)
        assert est.n == 4
        assert est.variance == pytest.approx(np.var(eif, ddof=1) / 4)
        low, high = est.confidence_interval(z=2.0)
        assert high - low == pytest.approx(4.0 * est.std_error)

    def test_without_eif(self):
        """Test that the spread is unknown without EIF values."""
        est = DREstimate(eta_hat=1.5, numerator=3.0, denominator=2.0)
        assert est.std_error is None
        assert est.confidence_interval() is None


@pytest.mark.unit
class TestConfigs:
    """Test cases for configuration documents."""

    @given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers(), max_size=6))
    def test_hash_ignores_key_order(self, document):
        """Test that the canonical hash does not depend on insertion order."""
        reordered = dict(reversed(list(document.items())))
        assert canonical_hash(document) == canonical_hash(reordered)

    def test_hash_changes_with_content(self):
        """Test that different documents hash differently."""
        assert canonical_hash({"seed": 1}) != canonical_hash({"seed": 2})

    def test_optimize_config_round_trip(self, tmp_path):
        """Test that optimizer settings survive a JSON file with aliased penalties."""
        cfg = OptimizeConfig(tuning_value=TuningPair(lam=1e-3, mu=1e-2), box=2.0, seed=9)
        path = cfg.save_json(tmp_path / "opt.json")
        assert '"lambda"' in path.read_text()
        assert OptimizeConfig.load_json(path) == cfg
        assert cfg.digest() == OptimizeConfig.load_json(path).digest()

    def test_grid_needs_entries(self):
        """Test that empty grids are refused."""
        with pytest.raises(ValidationError):
            TuningGrid(value_grid=())

    def test_experiment_burn_in(self):
        """Test that the burn-in must be shorter than the test trajectory."""
        with pytest.raises(ValidationError):
            ExperimentConfig(env=EnvSpec(kind="scenario1"), n=10, T=10, eval_T=100, burn_in=100)

    def test_unknown_fields_rejected(self):
        """Test that typos in config documents are caught."""
        with pytest.raises(ValidationError):
            OptimizeConfig.model_validate({"n_start": 3})
