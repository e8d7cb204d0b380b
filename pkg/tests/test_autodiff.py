"""
Tests for the reverse-mode autodiff engine
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cirlab import autodiff as ad
from cirlab.autodiff import (
    AdamState,
    ContractError,
    DimensionError,
    NonFiniteGradientError,
    TensorNode,
)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_linear_identity_map():
    """Identity weights and zero bias return the input."""
    x = TensorNode(np.array([1.0, 0.0]))
    w = TensorNode.parameter(np.eye(2))
    b = TensorNode.parameter(np.zeros(2))
    assert_allclose(ad.linear(x, w, b).value, [1.0, 0.0])


def test_linear_hand_evaluation():
    """x=[1,2], W=[[1,1]], b=[0.5] gives 3.5."""
    out = ad.linear(
        np.array([1.0, 2.0]),
        TensorNode.parameter(np.array([[1.0, 1.0]])),
        TensorNode.parameter(np.array([0.5])),
    )
    assert_allclose(out.value, [3.5])


def test_linear_shape_mismatch_names_both_shapes():
    """A non-conforming input raises a dimension error with both shapes."""
    with pytest.raises(DimensionError) as excinfo:
        ad.linear(np.ones(3), TensorNode.parameter(np.ones((2, 2))))
    assert "(3,)" in str(excinfo.value)
    assert "(2, 2)" in str(excinfo.value)


def test_linear_gradient_matches_finite_differences(rng):
    """Gradients of sum(Wx + b) agree with central differences."""
    x = TensorNode.parameter(rng.normal(size=(5, 3)))
    w = TensorNode.parameter(rng.normal(size=(4, 3)))
    b = TensorNode.parameter(rng.normal(size=4))
    error = ad.grad_check(
        lambda: ad.sum_all(ad.linear(x, w, b)), {"x": x, "weight": w, "bias": b}
    )
    assert error < 1e-6


def test_linear_batched_bias_gradient():
    """The bias gradient of a batch sums over rows."""
    x = np.ones((3, 2))
    w = TensorNode.parameter(np.zeros((2, 2)))
    b = TensorNode.parameter(np.zeros(2))
    ad.backward(ad.sum_all(ad.linear(x, w, b)))
    assert_allclose(b.grad, [3.0, 3.0])
    assert_allclose(w.grad, np.full((2, 2), 3.0))


class TestActivations:
    """Elementwise activations and their ranges."""

    def test_tanh_zero(self):
        assert_allclose(ad.tanh_act(TensorNode(np.zeros(3))).value, np.zeros(3))

    def test_tanh_is_odd_and_bounded(self, rng):
        x = rng.uniform(-5.0, 5.0, size=(4, 6))
        y = ad.tanh_act(TensorNode(x)).value
        assert_allclose(ad.tanh_act(TensorNode(-x)).value, -y)
        assert np.all(np.abs(y) < 1.0)

    def test_elu_definition(self):
        x = np.array([-1.0, 0.0, 0.5, 3.0])
        y = ad.elu_act(TensorNode(x)).value
        assert y[1] == 0.0
        assert_allclose(y[2:], x[2:])
        assert_allclose(y[0], np.exp(-1.0) - 1.0)

    def test_sigmoid_at_zero(self):
        assert_allclose(ad.sigmoid_act(TensorNode(np.zeros(2))).value, [0.5, 0.5])

    def test_softmax_of_constant_vector(self):
        assert_allclose(ad.softmax_act(TensorNode(np.full(4, 3.0))).value, np.full(4, 0.25))

    def test_softmax_rows_sum_to_one(self, rng):
        y = ad.softmax_act(TensorNode(rng.normal(size=(3, 5)))).value
        assert_allclose(y.sum(axis=-1), np.ones(3))

    def test_clamp_blocks_gradient_outside_interval(self):
        x = TensorNode.parameter(np.array([-3.0, 0.2, 4.0]))
        ad.backward(ad.sum_all(ad.clamp(x, -1.0, 1.0)))
        assert_allclose(x.grad, [0.0, 1.0, 0.0])

    def test_softplus_is_stable_for_large_inputs(self):
        y = ad.softplus_act(TensorNode(np.array([-800.0, 0.0, 800.0]))).value
        assert np.all(np.isfinite(y))
        assert_allclose(y, [0.0, np.log(2.0), 800.0])


class TestLayerNorm:
    """Layer normalisation over the last axis."""

    def test_constant_vector_maps_to_zero(self):
        out = ad.layer_norm(TensorNode(np.full(4, 5.0)))
        assert_allclose(out.value, np.zeros(4))

    def test_unit_variance_input_is_unchanged(self):
        out = ad.layer_norm(TensorNode(np.array([1.0, -1.0])))
        assert_allclose(out.value, [1.0, -1.0], atol=1e-5)

    def test_moments(self, rng):
        out = ad.layer_norm(TensorNode(rng.normal(scale=10.0, size=64))).value
        assert abs(out.mean()) < 1e-9
        assert abs(out.var() - 1.0) < 1e-6

    def test_scale_and_shift(self):
        x = TensorNode(np.array([1.0, -1.0]))
        out = ad.layer_norm(
            x, TensorNode.parameter(np.array([2.0, 2.0])), TensorNode.parameter(np.array([1.0, 1.0]))
        )
        assert_allclose(out.value, [3.0, -1.0], atol=1e-4)

    def test_single_feature_is_rejected(self):
        with pytest.raises(DimensionError):
            ad.layer_norm(TensorNode(np.ones(1)))

    def test_gradient(self, rng):
        x = TensorNode.parameter(rng.normal(size=(2, 5)))
        scale = TensorNode.parameter(rng.normal(size=5))
        shift = TensorNode.parameter(rng.normal(size=5))
        w = rng.normal(size=(2, 5))
        error = ad.grad_check(
            lambda: ad.sum_all(ad.mul(ad.layer_norm(x, scale, shift), w)),
            {"x": x, "scale": scale, "shift": shift},
        )
        assert error < 1e-5


class TestAvgRNorm:
    """Average representation normalisation c·x / Mean(|x|)."""

    def test_hand_evaluation(self):
        out = ad.avg_rnorm(TensorNode(np.array([1.0, -1.0, 2.0, -2.0])), 0.1)
        assert_allclose(out.value, [0.0667, -0.0667, 0.1333, -0.1333], atol=5e-5)

    @pytest.mark.parametrize("k", [0.01, 1.0, 250.0])
    def test_constant_positive_vector(self, k):
        out = ad.avg_rnorm(TensorNode(np.full(4, k)), 0.1)
        assert_allclose(out.value, np.full(4, 0.1))

    def test_mean_absolute_output_equals_c(self, rng):
        out = ad.avg_rnorm(TensorNode(rng.normal(size=(3, 16))), 0.1).value
        assert_allclose(np.abs(out).mean(axis=-1), np.full(3, 0.1), atol=1e-12)

    def test_positive_scale_invariance(self, rng):
        x = rng.normal(size=10)
        assert_allclose(
            ad.avg_rnorm(TensorNode(2.0 * x), 0.1).value,
            ad.avg_rnorm(TensorNode(x), 0.1).value,
            rtol=1e-14,
        )

    def test_all_zero_input_uses_guard(self):
        x = TensorNode.parameter(np.zeros(4))
        out = ad.avg_rnorm(x, 0.1)
        ad.backward(ad.sum_all(out))
        assert_allclose(out.value, np.zeros(4))
        assert np.all(np.isfinite(x.grad))

    def test_gradient_away_from_guard(self, rng):
        x = TensorNode.parameter(rng.uniform(0.2, 1.0, size=6) * rng.choice([-1.0, 1.0], size=6))
        w = rng.normal(size=6)
        error = ad.grad_check(lambda: ad.sum_all(ad.mul(ad.avg_rnorm(x, 0.1), w)), {"x": x})
        assert error < 1e-5


def test_max_rnorm_divides_by_peak():
    """MaxRNorm scales the largest magnitude to one."""
    out = ad.max_rnorm(TensorNode(np.array([0.5, -4.0, 2.0])))
    assert_allclose(out.value, [0.125, -1.0, 0.5])


class TestBackward:
    """Graph traversal and accumulation."""

    def test_sum_gives_ones(self):
        x = TensorNode.parameter(np.arange(6.0).reshape(2, 3))
        ad.backward(ad.sum_all(x))
        assert_allclose(x.grad, np.ones((2, 3)))

    def test_dot_with_itself_gives_twice_x(self):
        x = TensorNode.parameter(np.array([1.0, -2.0, 3.0]))
        ad.backward(ad.sum_all(ad.mul(x, x)))
        assert_allclose(x.grad, 2.0 * x.value)

    def test_diamond_graph_sums_both_paths(self, rng):
        x = TensorNode.parameter(rng.normal(size=4))

        def loss():
            return ad.sum_all(ad.add(ad.square(x), ad.tanh_act(x)))

        ad.backward(loss())
        assert_allclose(x.grad, 2.0 * x.value + 1.0 - np.tanh(x.value) ** 2)
        assert ad.grad_check(loss, {"x": x}) < 1e-6

    def test_unreachable_parameter_keeps_zero_gradient(self):
        used = TensorNode.parameter(np.ones(2))
        unused = TensorNode.parameter(np.ones(2))
        ad.backward(ad.sum_all(used))
        assert_allclose(unused.grad, np.zeros(2))

    def test_repeated_calls_accumulate(self):
        x = TensorNode.parameter(np.ones(3))
        ad.backward(ad.sum_all(x))
        ad.backward(ad.sum_all(x))
        assert_allclose(x.grad, np.full(3, 2.0))
        ad.zero_grad([x])
        assert_allclose(x.grad, np.zeros(3))

    def test_interior_gradients_are_replaced_not_accumulated(self):
        x = TensorNode.parameter(np.array([0.2, -0.4, 1.0]))
        hidden = ad.tanh_act(x)
        loss = ad.sum_all(hidden)
        ad.backward(loss)
        ad.backward(loss)
        assert_allclose(hidden.grad, np.ones(3))
        assert_allclose(x.grad, 2.0 * (1.0 - np.tanh(x.value) ** 2))

    def test_fresh_nodes_report_zero_gradient(self):
        node = ad.linear(np.ones(2), TensorNode.parameter(np.ones((3, 2))))
        assert node.grad.shape == (3,)
        assert not np.any(node.grad)

    def test_non_scalar_loss_is_rejected(self):
        with pytest.raises(ContractError):
            ad.backward(ad.tanh_act(TensorNode.parameter(np.ones(3))))

    def test_bitwise_deterministic(self, rng):
        values = rng.normal(size=(3, 4))
        grads = []
        for _ in range(2):
            x = TensorNode.parameter(values)
            ad.backward(ad.mean_all(ad.layer_norm(ad.tanh_act(x))))
            grads.append(x.grad.copy())
        assert np.array_equal(grads[0], grads[1])

    def test_no_grad_records_no_edges(self):
        x = TensorNode.parameter(np.ones(2))
        with ad.no_grad():
            y = ad.tanh_act(x)
        assert not y.requires_grad
        assert y.parents == []
        assert ad.grad_enabled()

    def test_frozen_parameters_receive_no_gradient(self):
        w = TensorNode.parameter(np.ones(2))
        x = TensorNode.parameter(np.ones(2))
        with ad.frozen({"w": w}):
            loss = ad.sum_all(ad.mul(w, x))
        ad.backward(loss)
        assert w.requires_grad
        assert_allclose(w.grad, np.zeros(2))
        assert_allclose(x.grad, np.ones(2))

    def test_array_on_the_left_builds_a_node(self):
        x = TensorNode.parameter(np.ones(2))
        y = np.array([3.0, 4.0]) - x
        assert isinstance(y, TensorNode)
        ad.backward(ad.sum_all(y))
        assert_allclose(x.grad, [-1.0, -1.0])


class TestAdam:
    """Bias-corrected Adam."""

    def test_zero_gradient_from_fresh_state_leaves_parameters(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState()
        ad.adam_step(params, {"w": np.zeros(2)}, state, 1e-3)
        assert_allclose(params["w"], [1.0, -2.0])
        assert state.step_count == 1

    def test_zero_gradient_decays_moments(self):
        params = {"w": np.zeros(2)}
        state = AdamState(first_moment={"w": np.ones(2)}, second_moment={"w": np.ones(2)})
        ad.adam_step(params, {"w": np.zeros(2)}, state, 1e-3)
        assert_allclose(state.first_moment["w"], np.full(2, 0.9))
        assert_allclose(state.second_moment["w"], np.full(2, 0.999))

    def test_first_step_moves_by_learning_rate(self):
        params = {"w": np.zeros(3)}
        g = np.array([0.5, -2.0, 10.0])
        ad.adam_step(params, {"w": g}, AdamState(), 3e-4)
        assert_allclose(params["w"], -3e-4 * np.sign(g), rtol=1e-6)

    def test_constant_gradient_keeps_sign_steps(self):
        params = {"w": np.zeros(2)}
        state = AdamState()
        g = np.array([0.3, -0.7])
        for _ in range(50):
            before = params["w"].copy()
            ad.adam_step(params, {"w": g}, state, 1e-2)
        assert_allclose(params["w"] - before, -1e-2 * np.sign(g), rtol=1e-6)
        assert state.step_count == 50

    def test_non_finite_gradient_names_parameter(self):
        params = {"critic.head.weight": np.zeros(2)}
        with pytest.raises(NonFiniteGradientError, match="critic.head.weight"):
            ad.adam_step(params, {"critic.head.weight": np.array([np.nan, 0.0])}, AdamState(), 1e-3)

    def test_non_positive_learning_rate(self):
        with pytest.raises(ContractError):
            ad.adam_step({"w": np.zeros(1)}, {"w": np.zeros(1)}, AdamState(), 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ad.adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), 1e-3)

    def test_adam_update_uses_node_gradients(self):
        w = TensorNode.parameter(np.zeros(2))
        ad.backward(ad.sum_all(ad.mul(w, np.array([1.0, -1.0]))))
        ad.adam_update({"w": w}, AdamState(), 0.1)
        assert_allclose(w.value, [-0.1, 0.1], rtol=1e-6)


def test_grad_check_rejects_non_positive_step():
    """The finite-difference step must be positive."""
    x = TensorNode.parameter(np.ones(2))
    with pytest.raises(ContractError):
        ad.grad_check(lambda: ad.sum_all(x), {"x": x}, eps_fd=0.0)


def test_grad_check_detects_wrong_backward(monkeypatch):
    """A corrupted tanh derivative is caught."""
    x = TensorNode.parameter(np.array([0.3, -0.8, 1.2]))
    monkeypatch.setattr(ad, "_tanh_backward", lambda y, grad: grad)
    assert ad.grad_check(lambda: ad.sum_all(ad.tanh_act(x)), {"x": x}) > 1e-2
