"""
Critic and actor networks built on the autodiff engine.

The critic maps a concatenated (state, action) vector through a constrained
initial representation, a stack of down layers, a mirrored stack of up layers
fed by skip connections, and a scalar head. The actor is a plain two-layer elu
MLP producing a tanh-squashed Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import TensorNode


ACTIVATIONS = ("tanh", "sigmoid", "softmax", "layernorm", "none")
INPUT_NORMS = ("avg", "max", "none")
SKIP_MODES = ("unet", "residual", "none")
INIT_SCHEMES = ("uniform", "orthogonal")

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


class InputError(ValueError):
    """Raised when a network receives non-finite inputs."""


Params = dict[str, TensorNode]


def _init_linear(
    params: Params,
    prefix: str,
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
    scheme: str,
) -> None:
    if scheme == "orthogonal":
        gaussian = rng.standard_normal((max(fan_out, fan_in), min(fan_out, fan_in)))
        q, r = np.linalg.qr(gaussian)
        q *= np.sign(np.diag(r))
        weight = q if fan_out >= fan_in else q.T
    else:
        bound = 1.0 / math.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    params[f"{prefix}.weight"] = TensorNode.parameter(weight)
    params[f"{prefix}.bias"] = TensorNode.parameter(np.zeros(fan_out))


def _init_layernorm(params: Params, prefix: str, width: int) -> None:
    params[f"{prefix}.scale"] = TensorNode.parameter(np.ones(width))
    params[f"{prefix}.shift"] = TensorNode.parameter(np.zeros(width))


def _copy_params(params: Params) -> Params:
    return {name: TensorNode.parameter(node.value) for name, node in params.items()}


def _apply_linear(x: TensorNode, params: Params, prefix: str) -> TensorNode:
    return ad.linear(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"])


def _checked_input(x: TensorNode | np.ndarray, what: str) -> TensorNode:
    node = ad.as_node(x)
    if not np.all(np.isfinite(node.value)):
        raise InputError(f"{what} contains non-finite values")
    return node


@dataclass(frozen=True)
class CriticSpec:
    """Shape and ablation switches of a critic."""

    obs_dim: int
    act_dim: int
    hidden: int = 512
    depth: int = 2
    c: float = 0.1
    activation: str = "tanh"
    layernorm: bool = True
    input_layernorm: bool = True
    input_norm: str = "avg"
    all_avg_rnorm: bool = False
    skip: str = "unet"
    init: str = "uniform"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.input_norm not in INPUT_NORMS:
            raise ValueError(f"unknown input normalisation {self.input_norm!r}")
        if self.skip not in SKIP_MODES:
            raise ValueError(f"unknown skip mode {self.skip!r}")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.init!r}")
        if self.hidden < 2 or self.depth < 1:
            raise ValueError("critic needs hidden >= 2 and depth >= 1")

    @property
    def in_dim(self) -> int:
        return self.obs_dim + self.act_dim

    @property
    def uses_initial_layernorm(self) -> bool:
        return self.layernorm and self.input_layernorm


@dataclass
class CriticNet:
    spec: CriticSpec
    params: Params

    @classmethod
    def create(cls, spec: CriticSpec, rng: np.random.Generator) -> CriticNet:
        h = spec.hidden
        params: Params = {}
        _init_linear(params, "initial", spec.in_dim, h, rng, spec.init)
        if spec.uses_initial_layernorm:
            _init_layernorm(params, "initial.ln", h)
        for i in range(spec.depth):
            _init_linear(params, f"down.{i}", h, h, rng, spec.init)
            if spec.layernorm:
                _init_layernorm(params, f"down.{i}.ln", h)
        for i in range(spec.depth):
            _init_linear(params, f"up.{i}.inner", h, h, rng, spec.init)
            if spec.layernorm:
                _init_layernorm(params, f"up.{i}.ln", h)
            _init_linear(params, f"up.{i}.outer", h, h, rng, spec.init)
        _init_linear(params, "head", h, 1, rng, spec.init)
        return cls(spec, params)

    def copy(self) -> CriticNet:
        return CriticNet(self.spec, _copy_params(self.params))

    def parameter_count(self) -> int:
        return sum(node.value.size for node in self.params.values())

    def __call__(self, s: np.ndarray, a: TensorNode | np.ndarray) -> TensorNode:
        return critic_forward(s, a, self)


def _normalized(x: TensorNode, params: Params, prefix: str, spec: CriticSpec) -> TensorNode:
    if spec.layernorm:
        x = ad.layer_norm(x, params[f"{prefix}.scale"], params[f"{prefix}.shift"])
    if spec.all_avg_rnorm:
        x = ad.avg_rnorm(x, spec.c)
    return x


def constrain_initial(o: TensorNode | np.ndarray, net: CriticNet) -> TensorNode:
    """z = act(RNorm(LayerNorm(Linear(o)))) with the configured ablations."""
    return _constrain(_checked_input(o, "critic input"), net)[1]


def _constrain(o: TensorNode, net: CriticNet) -> tuple[TensorNode, TensorNode]:
    spec, params = net.spec, net.params
    pre = _apply_linear(o, params, "initial")
    x = pre
    if spec.uses_initial_layernorm:
        x = ad.layer_norm(x, params["initial.ln.scale"], params["initial.ln.shift"])
    if spec.input_norm == "avg":
        x = ad.avg_rnorm(x, spec.c)
    elif spec.input_norm == "max":
        x = ad.max_rnorm(x)
    match spec.activation:
        case "tanh":
            x = ad.tanh_act(x)
        case "sigmoid":
            x = ad.sigmoid_act(x)
        case "softmax":
            x = ad.softmax_act(x)
        case "layernorm":
            x = ad.layer_norm(x)
    return pre, x


@dataclass
class CriticTrace:
    """Every intermediate representation of one critic evaluation."""

    pre_activation: TensorNode
    z: TensorNode
    down: list[TensorNode] = field(default_factory=list)
    up: list[TensorNode] = field(default_factory=list)
    q: TensorNode | None = None

    @property
    def hidden(self) -> list[TensorNode]:
        return [self.pre_activation, self.z, *self.down, *self.up]


def critic_trace(s: np.ndarray, a: TensorNode | np.ndarray, net: CriticNet) -> CriticTrace:
    spec, params = net.spec, net.params
    s_node = _checked_input(s, "state")
    a_node = _checked_input(a, "action")
    if s_node.shape[-1] != spec.obs_dim or a_node.shape[-1] != spec.act_dim:
        raise ad.DimensionError(
            f"critic expects state dim {spec.obs_dim} and action dim {spec.act_dim}, "
            f"got shapes {s_node.shape} and {a_node.shape}"
        )
    pre, z = _constrain(ad.concat_last(s_node, a_node), net)
    trace = CriticTrace(pre_activation=pre, z=z)

    x = z
    for i in range(spec.depth):
        x = ad.elu_act(_normalized(_apply_linear(x, params, f"down.{i}"), params, f"down.{i}.ln", spec))
        trace.down.append(x)

    # up.0 is the innermost block; it pairs with the deepest down output.
    for i in range(spec.depth):
        inner = _normalized(_apply_linear(x, params, f"up.{i}.inner"), params, f"up.{i}.ln", spec)
        branch = _apply_linear(ad.elu_act(inner), params, f"up.{i}.outer")
        if spec.skip == "unet":
            x = trace.down[spec.depth - 1 - i] + branch
        elif spec.skip == "residual":
            x = x + branch
        else:
            x = branch
        trace.up.append(x)

    q = _apply_linear(x, params, "head")
    trace.q = ad.reshape(q, q.shape[:-1])
    return trace


def critic_forward(s: np.ndarray, a: TensorNode | np.ndarray, net: CriticNet) -> TensorNode:
    """Q(s, a); a scalar for a single pair, shape (B,) for a batch."""
    q = critic_trace(s, a, net).q
    assert q is not None
    return q


@dataclass(frozen=True)
class ActorSpec:
    obs_dim: int
    act_dim: int
    hidden: tuple[int, ...] = (512, 512)
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    init: str = "uniform"

    def __post_init__(self):
        if self.log_std_min >= self.log_std_max:
            raise ValueError("log_std_min must be below log_std_max")


@dataclass
class ActorNet:
    spec: ActorSpec
    params: Params

    @classmethod
    def create(cls, spec: ActorSpec, rng: np.random.Generator) -> ActorNet:
        params: Params = {}
        fan_in = spec.obs_dim
        for i, width in enumerate(spec.hidden):
            _init_linear(params, f"hidden.{i}", fan_in, width, rng, spec.init)
            fan_in = width
        _init_linear(params, "mean", fan_in, spec.act_dim, rng, spec.init)
        _init_linear(params, "log_std", fan_in, spec.act_dim, rng, spec.init)
        return cls(spec, params)

    def copy(self) -> ActorNet:
        return ActorNet(self.spec, _copy_params(self.params))


@dataclass
class PolicySample:
    action: TensorNode
    log_prob: TensorNode


def actor_forward(s: np.ndarray, net: ActorNet) -> tuple[TensorNode, TensorNode]:
    """Return the Gaussian mean and the clamped log standard deviation."""
    x = _checked_input(s, "state")
    if x.shape[-1] != net.spec.obs_dim:
        raise ad.DimensionError(f"actor expects state dim {net.spec.obs_dim}, got shape {x.shape}")
    for i in range(len(net.spec.hidden)):
        x = ad.elu_act(_apply_linear(x, net.params, f"hidden.{i}"))
    mean = _apply_linear(x, net.params, "mean")
    log_std = ad.clamp(
        _apply_linear(x, net.params, "log_std"), net.spec.log_std_min, net.spec.log_std_max
    )
    return mean, log_std


def squashed_gaussian(mean: TensorNode, log_std: TensorNode, noise: np.ndarray) -> PolicySample:
    """Reparameterised tanh(mean + std·noise) with its log-density.

    The tanh correction uses log(1 - tanh(u)²) = 2(log 2 - u - softplus(-2u)).
    """
    u = mean + ad.exp_act(log_std) * noise
    gaussian = -0.5 * noise * noise - 0.5 * LOG_2PI - log_std
    correction = 2.0 * (LOG_2 - u - ad.softplus_act(-2.0 * u))
    return PolicySample(action=ad.tanh_act(u), log_prob=ad.sum_last(gaussian - correction))


def actor_sample(
    s: np.ndarray,
    net: ActorNet,
    rng: np.random.Generator,
    *,
    deterministic: bool = False,
) -> PolicySample:
    mean, log_std = actor_forward(s, net)
    noise = np.zeros(mean.shape) if deterministic else rng.standard_normal(mean.shape)
    sample = squashed_gaussian(mean, log_std, noise)
    if deterministic:
        return PolicySample(action=ad.tanh_act(mean), log_prob=sample.log_prob)
    return sample
