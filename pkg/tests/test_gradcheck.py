"""
Tests for the gradient-check suite
"""

import pytest

from cirlab import autodiff as ad
from cirlab.gradcheck import (
    PRIMITIVE_CHECKS,
    check_actor,
    check_critic,
    check_primitive,
    run_suite,
)


@pytest.mark.parametrize("name", list(PRIMITIVE_CHECKS))
def test_primitive_gradients(name):
    """Every primitive agrees with central differences."""
    result = check_primitive(name, points=10)
    assert result.passed, f"{name}: {result.max_error:.2e}"
    assert result.points == 10


def test_critic_gradient():
    assert check_critic(hidden=16, entries=8).passed


@pytest.mark.parametrize("switches", [{"skip": "residual"}, {"activation": "sigmoid", "layernorm": False}])
def test_critic_ablation_gradients(switches):
    assert check_critic(hidden=16, entries=8, **switches).passed


def test_actor_gradient():
    assert check_actor(hidden=(16, 16), entries=8).passed


def test_unknown_primitive():
    with pytest.raises(KeyError, match="no gradient check"):
        check_primitive("matmul")


def test_broken_tanh_backward_is_caught(monkeypatch):
    """Dropping the 1 - y² factor is detected."""
    monkeypatch.setattr(ad, "_tanh_backward", lambda y, grad: grad)
    assert not check_primitive("tanh", points=5).passed
    assert check_primitive("sigmoid", points=5).passed


def test_suite_selection():
    results = run_suite(points=3, names=["add", "exp"])
    assert [r.name for r in results] == ["add", "exp"]
    assert all(r.passed for r in results)
