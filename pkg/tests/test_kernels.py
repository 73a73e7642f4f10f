"""
Tests for the kernel engine.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avgreward_opl.exceptions import DegenerateData
from avgreward_opl.kernels import (
    apply_feature_gram_grad,
    build_gram_pack,
    cross_feature_gram,
    feature_gram,
    feature_gram_grad,
    feature_gram_parts,
    feature_sections,
    kernel_sa,
    median_bandwidth,
    shaped_kernel,
    state_kernel,
)
from avgreward_opl.models import KernelConfig, PolicyParams
from avgreward_opl.policy import policy_prob

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
states2 = arrays(np.float64, (2,), elements=finite)
actions = st.integers(0, 1)


def _brute_force_gram(cfg, tuples, params):
    """<f_h, f_j> expanded term by term from the shaped kernel."""
    p = policy_prob(params, tuples.next_states)
    N = tuples.N

    def section_pairs(h):
        return [
            (tuples.states[h], int(tuples.actions[h]), 1.0),
            (tuples.next_states[h], 0, -(1.0 - p[h])),
            (tuples.next_states[h], 1, -p[h]),
        ]

    F = np.zeros((N, N))
    for h in range(N):
        for j in range(N):
            F[h, j] = sum(
                wa * wb * shaped_kernel(cfg, (sa, aa), (sb, ab))
                for sa, aa, wa in section_pairs(h)
                for sb, ab, wb in section_pairs(j)
            )
    return F


@pytest.mark.unit
class TestBaseKernels:
    """Test cases for the state and state-action kernels."""

    def test_gaussian_values(self, kernel):
        """Test k0 = exp(-||x - y||^2 / sigma^2)."""
        K = state_kernel(kernel, np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]))
        assert K[0, 0] == pytest.approx(np.exp(-2.0))

    def test_delta_kernel(self):
        """Test that the delta kernel is the indicator of equal states."""
        cfg = KernelConfig(kind="delta", anchor_state=np.zeros(2))
        K = state_kernel(cfg, np.eye(2), np.eye(2))
        np.testing.assert_array_equal(K, np.eye(2))

    def test_actions_must_agree(self, kernel):
        """Test that l vanishes across different actions."""
        s = np.array([0.5, -0.5])
        assert kernel_sa(kernel, (s, 0), (s, 1)) == 0.0
        assert kernel_sa(kernel, (s, 1), (s, 1)) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(s1=states2, a1=actions, s2=states2, a2=actions)
    def test_shaped_kernel_symmetry(self, s1, a1, s2, a2):
        """Test that k~ is symmetric."""
        cfg = KernelConfig.default_for(2, bandwidth=1.5)
        assert shaped_kernel(cfg, (s1, a1), (s2, a2)) == pytest.approx(
            shaped_kernel(cfg, (s2, a2), (s1, a1)), abs=1e-12
        )

    @settings(max_examples=50, deadline=None)
    @given(s=states2, a=actions)
    def test_shaped_kernel_vanishes_at_anchor(self, s, a):
        """Test that k~(z, w) = 0 exactly for the anchor z."""
        cfg = KernelConfig.default_for(2, bandwidth=0.7, anchor_action=1)
        z = (cfg.anchor_state, cfg.anchor_action)
        assert shaped_kernel(cfg, z, (s, a)) == 0.0
        assert shaped_kernel(cfg, (s, a), z) == 0.0


@pytest.mark.unit
class TestMedianBandwidth:
    """Test cases for the median heuristic."""

    def test_known_points(self):
        """Test the median of the pairwise distances {1, 2, 3}."""
        assert median_bandwidth(np.array([[0.0], [1.0], [3.0]])) == pytest.approx(2.0)

    def test_accepts_flat_input(self):
        """Test that a one-dimensional array is read as scalar states."""
        assert median_bandwidth(np.array([0.0, 1.0, 3.0])) == pytest.approx(2.0)

    def test_deterministic_subsample(self, rng):
        """Test that subsampling is seeded."""
        X = rng.normal(size=(1500, 2))
        assert median_bandwidth(X) == median_bandwidth(X)

    def test_identical_points(self):
        """Test that identical states raise DegenerateData."""
        with pytest.raises(DegenerateData):
            median_bandwidth(np.ones((5, 2)))

    def test_mostly_duplicated_points(self, caplog):
        """Test that a zero median falls back to the median positive distance, with a warning."""
        X = np.array([[0.0], [0.0], [0.0], [0.0], [1.0]])
        with caplog.at_level("WARNING", logger="avgreward_opl.kernels"):
            assert median_bandwidth(X) == 1.0
        assert "positive-distance median" in caplog.text


@pytest.mark.unit
class TestFeatureGram:
    """Test cases for the policy-dependent feature Gram."""

    def test_gram_pack_shapes_and_psd(self, kernel, small_tuples):
        """Test the sizes of L and the extended Gram and their definiteness."""
        pack = build_gram_pack(kernel, small_tuples)
        assert pack.L.shape == (20, 20)
        assert pack.K.shape == (60, 60)
        assert pack.is_psd()
        assert not pack.L.flags.writeable

    def test_dimension_mismatch(self, small_tuples):
        """Test that a kernel of the wrong dimension is refused."""
        with pytest.raises(ValueError):
            build_gram_pack(KernelConfig.default_for(3), small_tuples)

    def test_matches_brute_force(self, kernel, small_tuples, params):
        """Test F~ against the term-by-term expansion of <f_h, f_j>."""
        F = feature_gram(kernel, small_tuples, params)
        np.testing.assert_allclose(F, _brute_force_gram(kernel, small_tuples, params), atol=1e-10)

    def test_symmetric(self, kernel, small_tuples, params):
        """Test that F~ is symmetric."""
        F = feature_gram(kernel, small_tuples, params)
        np.testing.assert_array_equal(F, F.T)

    def test_cross_gram_on_itself(self, kernel, small_tuples, params):
        """Test that the cross Gram of a table with itself is F~."""
        p = policy_prob(params, small_tuples.next_states)
        np.testing.assert_allclose(
            cross_feature_gram(kernel, small_tuples, p, small_tuples, p),
            feature_gram(kernel, small_tuples, params),
            atol=1e-12,
        )

    def test_sections_at_data(self, kernel, small_tuples, params):
        """Test that <f_h, f_j> = f_h(W_j) - sum_a pi(a|S'_j) f_h(S'_j, a)."""
        pack = build_gram_pack(kernel, small_tuples)
        p = policy_prob(params, small_tuples.next_states)
        N = small_tuples.N
        at_w = feature_sections(pack, p, small_tuples.states, small_tuples.actions)
        at_0 = feature_sections(pack, p, small_tuples.next_states, np.zeros(N, dtype=int))
        at_1 = feature_sections(pack, p, small_tuples.next_states, np.ones(N, dtype=int))
        F, _ = feature_gram_parts(pack, p)
        np.testing.assert_allclose(at_w - at_0 * (1 - p) - at_1 * p, F, atol=1e-10)


@pytest.mark.unit
class TestFeatureGramGradient:
    """Test cases for the theta-derivative of F~."""

    def test_matches_finite_differences(self, kernel, small_tuples, params):
        """Test dF~/dtheta against central differences."""
        pack = build_gram_pack(kernel, small_tuples)
        D = feature_gram_grad(kernel, small_tuples, params, pack)
        step = 1e-6
        for k in range(params.p):
            shift = np.zeros(params.p)
            shift[k] = step
            up = feature_gram(kernel, small_tuples, params.with_theta(params.theta + shift), pack)
            down = feature_gram(kernel, small_tuples, params.with_theta(params.theta - shift), pack)
            np.testing.assert_allclose(D[:, :, k], (up - down) / (2 * step), atol=1e-7)

    def test_zero_when_policy_is_flat(self, mocker, kernel, small_tuples, params):
        """Test that the derivative vanishes when dpi/dtheta does."""
        N = small_tuples.N
        mocker.patch(
            "avgreward_opl.kernels.policy_prob_grad",
            return_value=(np.full(N, 0.5), np.zeros((N, params.p))),
        )
        D = feature_gram_grad(kernel, small_tuples, params)
        assert D.shape == (N, N, params.p)
        np.testing.assert_array_equal(D, 0.0)

    def test_apply_matches_tensor(self, kernel, small_tuples, params, rng):
        """Test that the matrix-free product equals the materialized tensor."""
        from avgreward_opl.policy import policy_prob_grad

        pack = build_gram_pack(kernel, small_tuples)
        p, G = policy_prob_grad(params, small_tuples.next_states)
        _, Delta = feature_gram_parts(pack, p)
        v = rng.normal(size=small_tuples.N)
        D = feature_gram_grad(kernel, small_tuples, params, pack)
        np.testing.assert_allclose(
            apply_feature_gram_grad(Delta, G, v), np.einsum("hjk,j->hk", D, v), atol=1e-12
        )

    def test_with_intercept(self, kernel, small_tuples):
        """Test the gradient shape with an intercept feature."""
        from avgreward_opl.models import FeatureMap

        params = PolicyParams(theta=np.array([0.1, 0.3, -0.2]), features=FeatureMap(intercept=True))
        D = feature_gram_grad(kernel, small_tuples, params)
        assert D.shape == (small_tuples.N, small_tuples.N, 3)
