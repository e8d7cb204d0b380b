"""
Finite-difference checks for every autodiff primitive and both networks

Each case builds a random scalar objective Σ w·f(x) with fresh weights w, so
every output entry contributes to the checked gradient.
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import TensorNode
from .networks import (
    ActorNet,
    ActorSpec,
    CriticNet,
    CriticSpec,
    actor_forward,
    critic_forward,
    squashed_gaussian,
)


PRIMITIVE_THRESHOLD = 1e-4
NETWORK_THRESHOLD = 1e-4
PRIMITIVE_POINTS = 100

Objective = tuple[Callable[[], TensorNode], dict[str, TensorNode]]
CaseBuilder = Callable[[np.random.Generator], Objective]


@dataclass
class GradCheckResult:
    name: str
    max_error: float
    threshold: float
    points: int

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold


def _param(rng: np.random.Generator, *shape: int, low: float = -2.0, high: float = 2.0) -> TensorNode:
    return TensorNode.parameter(rng.uniform(low, high, size=shape))


def _away_from(
    rng: np.random.Generator, shape: tuple[int, ...], kinks: tuple[float, ...], gap: float = 0.05
) -> TensorNode:
    """Uniform values in [-2, 2] at least `gap` away from every kink."""
    x = rng.uniform(-2.0, 2.0, size=shape)
    for kink in kinks:
        near = np.abs(x - kink) < gap
        x[near] = kink + np.where(x[near] >= kink, gap, -gap) * 2.0
    return TensorNode.parameter(x)


def _unary(op: Callable[[TensorNode], TensorNode], kinks: tuple[float, ...] = ()) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Objective:
        x = _away_from(rng, (3, 5), kinks) if kinks else _param(rng, 3, 5)
        w = rng.normal(size=(3, 5))
        return (lambda: ad.sum_all(ad.mul(op(x), w))), {"x": x}

    return build


def _binary(op: Callable[[TensorNode, TensorNode], TensorNode]) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Objective:
        x, y = _param(rng, 3, 4), _param(rng, 4)
        w = rng.normal(size=(3, 4))
        return (lambda: ad.sum_all(ad.mul(op(x, y), w))), {"x": x, "y": y}

    return build


def _linear_case(batched: bool) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Objective:
        x = _param(rng, 4, 3) if batched else _param(rng, 3)
        weight, bias = _param(rng, 5, 3), _param(rng, 5)
        w = rng.normal(size=(4, 5) if batched else (5,))
        return (
            lambda: ad.sum_all(ad.mul(ad.linear(x, weight, bias), w)),
            {"x": x, "weight": weight, "bias": bias},
        )

    return build


def _layer_norm_case(rng: np.random.Generator) -> Objective:
    x, scale, shift = _param(rng, 3, 6), _param(rng, 6), _param(rng, 6)
    w = rng.normal(size=(3, 6))
    return (
        lambda: ad.sum_all(ad.mul(ad.layer_norm(x, scale, shift), w)),
        {"x": x, "scale": scale, "shift": shift},
    )


def _max_rnorm_case(rng: np.random.Generator) -> Objective:
    # a unique, clearly separated peak per row keeps the max differentiable
    values = rng.uniform(-1.0, 1.0, size=(3, 5))
    peak = rng.integers(0, 5, size=3)
    values[np.arange(3), peak] = rng.choice([-1.0, 1.0], size=3) * rng.uniform(1.5, 2.0, size=3)
    x = TensorNode.parameter(values)
    w = rng.normal(size=(3, 5))
    return (lambda: ad.sum_all(ad.mul(ad.max_rnorm(x), w))), {"x": x}


def _concat_case(rng: np.random.Generator) -> Objective:
    a, b = _param(rng, 2, 3), _param(rng, 2, 2)
    w = rng.normal(size=(2, 5))
    return (lambda: ad.sum_all(ad.mul(ad.concat_last(a, b), w))), {"a": a, "b": b}


def _reduction_case(op: Callable[[TensorNode], TensorNode]) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Objective:
        x = _param(rng, 3, 4)
        w = rng.normal(size=op(x).shape)
        return (lambda: ad.sum_all(ad.mul(op(x), w))), {"x": x}

    return build


PRIMITIVE_CHECKS: dict[str, CaseBuilder] = {
    "add": _binary(ad.add),
    "sub": _binary(ad.sub),
    "mul": _binary(ad.mul),
    "neg": _unary(ad.neg),
    "div": _unary(lambda x: x / 3.0),
    "square": _unary(ad.square),
    "exp": _unary(ad.exp_act),
    "softplus": _unary(ad.softplus_act),
    "clamp": _unary(lambda x: ad.clamp(x, -1.0, 1.0), kinks=(-1.0, 1.0)),
    "tanh": _unary(ad.tanh_act),
    "elu": _unary(ad.elu_act, kinks=(0.0,)),
    "sigmoid": _unary(ad.sigmoid_act),
    "softmax": _unary(ad.softmax_act),
    "linear": _linear_case(batched=True),
    "linear_vector": _linear_case(batched=False),
    "layer_norm": _layer_norm_case,
    "avg_rnorm": _unary(lambda x: ad.avg_rnorm(x, 0.1), kinks=(0.0,)),
    "max_rnorm": _max_rnorm_case,
    "concat": _concat_case,
    "reshape": _unary(lambda x: ad.reshape(ad.reshape(x, (5, 3)), (3, 5))),
    "sum_last": _reduction_case(ad.sum_last),
    "mean_all": _reduction_case(ad.mean_all),
}


def check_primitive(
    name: str,
    points: int = PRIMITIVE_POINTS,
    threshold: float = PRIMITIVE_THRESHOLD,
    seed: int = 0,
) -> GradCheckResult:
    """Largest relative error of one primitive over `points` random inputs."""
    if name not in PRIMITIVE_CHECKS:
        raise KeyError(f"no gradient check named {name!r}")
    rng = np.random.default_rng(seed)
    build = PRIMITIVE_CHECKS[name]
    worst = 0.0
    for _ in range(points):
        fn, params = build(rng)
        worst = max(worst, ad.grad_check(fn, params, rng=rng))
    return GradCheckResult(name, worst, threshold, points)


def check_critic(
    hidden: int = 64,
    depth: int = 2,
    batch: int = 4,
    entries: int | None = 16,
    threshold: float = NETWORK_THRESHOLD,
    seed: int = 0,
    **switches,
) -> GradCheckResult:
    """Full critic: every parameter tensor plus the action input."""
    rng = np.random.default_rng(seed)
    spec = CriticSpec(obs_dim=3, act_dim=1, hidden=hidden, depth=depth, **switches)
    net = CriticNet.create(spec, rng)
    states = rng.normal(size=(batch, spec.obs_dim))
    action = TensorNode.parameter(rng.uniform(-1.0, 1.0, size=(batch, spec.act_dim)))
    w = rng.normal(size=batch)
    params = {**net.params, "action": action}
    error = ad.grad_check(
        lambda: ad.sum_all(ad.mul(critic_forward(states, action, net), w)),
        params,
        max_entries=entries,
        rng=rng,
    )
    return GradCheckResult("critic", error, threshold, 1)


def check_actor(
    hidden: tuple[int, ...] = (32, 32),
    batch: int = 4,
    entries: int | None = 16,
    threshold: float = NETWORK_THRESHOLD,
    seed: int = 0,
) -> GradCheckResult:
    """Reparameterised action and log-probability through the actor."""
    rng = np.random.default_rng(seed)
    net = ActorNet.create(ActorSpec(obs_dim=3, act_dim=2, hidden=hidden), rng)
    states = rng.normal(size=(batch, 3))
    noise = rng.standard_normal((batch, 2))
    w_action, w_logp = rng.normal(size=(batch, 2)), rng.normal(size=batch)

    def objective() -> TensorNode:
        mean, log_std = actor_forward(states, net)
        sample = squashed_gaussian(mean, log_std, noise)
        return ad.add(
            ad.sum_all(ad.mul(sample.action, w_action)),
            ad.sum_all(ad.mul(sample.log_prob, w_logp)),
        )

    error = ad.grad_check(objective, net.params, max_entries=entries, rng=rng)
    return GradCheckResult("actor", error, threshold, 1)


def run_suite(
    primitive_threshold: float = PRIMITIVE_THRESHOLD,
    network_threshold: float = NETWORK_THRESHOLD,
    points: int = PRIMITIVE_POINTS,
    names: list[str] | None = None,
) -> list[GradCheckResult]:
    results = [
        check_primitive(name, points=points, threshold=primitive_threshold)
        for name in (names or PRIMITIVE_CHECKS)
    ]
    if names is None:
        results.append(check_critic(threshold=network_threshold))
        results.append(check_actor(threshold=network_threshold))
    return results
