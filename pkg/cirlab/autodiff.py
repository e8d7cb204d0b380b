"""
Reverse-mode differentiation on dense float64 arrays of rank at most two.

Graphs are built define-by-run: every primitive returns a new TensorNode that
remembers its parents together with a closure mapping the upstream gradient to
the parent's gradient contribution. `backward` walks the graph once in reverse
topological order.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterable, Iterator, Mapping
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np


LN_EPS = 1e-5
RNORM_EPS = 1e-8

GradFn = Callable[[np.ndarray], np.ndarray]


class AutodiffError(RuntimeError):
    """Base class for differentiation failures."""


class DimensionError(AutodiffError, ValueError):
    """Raised when operand shapes do not conform."""


class ContractError(AutodiffError):
    """Raised when an operation is called outside its contract."""


class NonFiniteGradientError(AutodiffError):
    """Raised when an optimizer receives NaN or infinite gradients."""


_grad_mode = threading.local()


def grad_enabled() -> bool:
    """Return whether new nodes record their parents on this thread."""
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording graph edges."""
    previous = grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class TensorNode:
    """A differentiable value in the computation graph."""

    __slots__ = ("_grad", "op", "parents", "requires_grad", "value")

    # mixed expressions such as `array - node` dispatch to TensorNode operators
    __array_ufunc__ = None

    def __init__(
        self,
        value: np.ndarray | float,
        *,
        requires_grad: bool = False,
        parents: Iterable[tuple[TensorNode, GradFn]] = (),
        op: str = "leaf",
    ):
        array = np.asarray(value, dtype=np.float64)
        if array.ndim > 2:
            raise DimensionError(f"tensors have rank at most 2, got shape {array.shape}")
        self.value = array
        self._grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents = list(parents)
        self.op = op

    @classmethod
    def parameter(cls, value: np.ndarray | float) -> TensorNode:
        """Create a trainable leaf owning a private copy of `value`."""
        return cls(np.array(value, dtype=np.float64), requires_grad=True)

    @property
    def grad(self) -> np.ndarray:
        """Accumulated gradient; zeros until something flows in."""
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, value: np.ndarray) -> None:
        self._grad = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def zero_grad(self) -> None:
        self._grad = None

    def __repr__(self) -> str:
        return f"TensorNode(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: TensorNode | float | np.ndarray) -> TensorNode:
        return add(self, other)

    def __radd__(self, other: float | np.ndarray) -> TensorNode:
        return add(other, self)

    def __sub__(self, other: TensorNode | float | np.ndarray) -> TensorNode:
        return sub(self, other)

    def __rsub__(self, other: float | np.ndarray) -> TensorNode:
        return sub(other, self)

    def __mul__(self, other: TensorNode | float | np.ndarray) -> TensorNode:
        return mul(self, other)

    def __rmul__(self, other: float | np.ndarray) -> TensorNode:
        return mul(other, self)

    def __neg__(self) -> TensorNode:
        return neg(self)

    def __truediv__(self, other: float) -> TensorNode:
        return mul(self, 1.0 / float(other))


def as_node(x: TensorNode | np.ndarray | float) -> TensorNode:
    """Wrap constants so they can enter the graph."""
    return x if isinstance(x, TensorNode) else TensorNode(x, op="const")


def _make(value: np.ndarray, parents: list[tuple[TensorNode, GradFn]], op: str) -> TensorNode:
    live = [(p, fn) for p, fn in parents if p.requires_grad] if grad_enabled() else []
    return TensorNode(value, requires_grad=bool(live), parents=live, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# Elementwise arithmetic


def add(a: TensorNode | float | np.ndarray, b: TensorNode | float | np.ndarray) -> TensorNode:
    a, b = as_node(a), as_node(b)
    return _make(
        a.value + b.value,
        [(a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape))],
        "add",
    )


def sub(a: TensorNode | float | np.ndarray, b: TensorNode | float | np.ndarray) -> TensorNode:
    a, b = as_node(a), as_node(b)
    return _make(
        a.value - b.value,
        [(a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(-g, b.shape))],
        "sub",
    )


def mul(a: TensorNode | float | np.ndarray, b: TensorNode | float | np.ndarray) -> TensorNode:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    return _make(
        av * bv,
        [
            (a, lambda g: _unbroadcast(g * bv, a.shape)),
            (b, lambda g: _unbroadcast(g * av, b.shape)),
        ],
        "mul",
    )


def neg(x: TensorNode) -> TensorNode:
    return _make(-x.value, [(x, lambda g: -g)], "neg")


def square(x: TensorNode) -> TensorNode:
    xv = x.value
    return _make(xv * xv, [(x, lambda g: 2.0 * xv * g)], "square")


def exp_act(x: TensorNode) -> TensorNode:
    y = np.exp(x.value)
    return _make(y, [(x, lambda g: g * y)], "exp")


def softplus_act(x: TensorNode) -> TensorNode:
    xv = x.value
    y = np.logaddexp(0.0, xv)
    return _make(y, [(x, lambda g: g * 0.5 * (1.0 + np.tanh(0.5 * xv)))], "softplus")


def clamp(x: TensorNode, low: float, high: float) -> TensorNode:
    """Clip to [low, high]; the gradient is zero outside the interval."""
    xv = x.value
    mask = (xv >= low) & (xv <= high)
    return _make(np.clip(xv, low, high), [(x, lambda g: g * mask)], "clamp")


# Activations


def _tanh_backward(y: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return grad * (1.0 - y * y)


def tanh_act(x: TensorNode) -> TensorNode:
    y = np.tanh(x.value)
    return _make(y, [(x, lambda g: _tanh_backward(y, g))], "tanh")


def elu_act(x: TensorNode) -> TensorNode:
    xv = x.value
    y = np.where(xv > 0, xv, np.expm1(np.minimum(xv, 0.0)))
    slope = np.where(xv > 0, 1.0, y + 1.0)
    return _make(y, [(x, lambda g: g * slope)], "elu")


def sigmoid_act(x: TensorNode) -> TensorNode:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _make(y, [(x, lambda g: g * y * (1.0 - y))], "sigmoid")


def softmax_act(x: TensorNode) -> TensorNode:
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return _make(
        y, [(x, lambda g: y * (g - (g * y).sum(axis=-1, keepdims=True)))], "softmax"
    )


# Linear maps and normalisation


def linear(x: TensorNode | np.ndarray, weight: TensorNode, bias: TensorNode | None = None) -> TensorNode:
    """Return x Wᵀ + b for a vector x of length n or a batch of shape (B, n)."""
    x = as_node(x)
    if weight.ndim != 2 or x.ndim not in (1, 2) or x.shape[-1] != weight.shape[1]:
        raise DimensionError(
            f"linear: input shape {x.shape} does not conform to weight shape {weight.shape}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError(
            f"linear: bias shape {bias.shape} does not conform to weight shape {weight.shape}"
        )
    xv, wv = x.value, weight.value
    out = xv @ wv.T
    parents: list[tuple[TensorNode, GradFn]] = [
        (x, lambda g: g @ wv),
        (weight, lambda g: np.outer(g, xv) if xv.ndim == 1 else g.T @ xv),
    ]
    if bias is not None:
        out = out + bias.value
        parents.append((bias, lambda g: g if g.ndim == 1 else g.sum(axis=0)))
    return _make(out, parents, "linear")


def _normalize(x: TensorNode, eps: float) -> TensorNode:
    xv = x.value
    mu = xv.mean(axis=-1, keepdims=True)
    sigma = np.sqrt(xv.var(axis=-1, keepdims=True) + eps)
    xhat = (xv - mu) / sigma

    def backward(g: np.ndarray) -> np.ndarray:
        g_mean = g.mean(axis=-1, keepdims=True)
        gx_mean = (g * xhat).mean(axis=-1, keepdims=True)
        return (g - g_mean - xhat * gx_mean) / sigma

    return _make(xhat, [(x, backward)], "layer_norm")


def layer_norm(
    x: TensorNode,
    scale: TensorNode | None = None,
    shift: TensorNode | None = None,
    eps: float = LN_EPS,
) -> TensorNode:
    """Normalise the last axis to zero mean and unit variance, then scale and shift."""
    if x.ndim == 0 or x.shape[-1] < 2:
        raise DimensionError(f"layer_norm needs at least 2 features, got shape {x.shape}")
    out = _normalize(x, eps)
    if scale is not None:
        out = mul(out, scale)
    if shift is not None:
        out = add(out, shift)
    return out


def avg_rnorm(x: TensorNode, c: float, eps: float = RNORM_EPS) -> TensorNode:
    """Return c·x / Mean(|x|) along the last axis, guarding small denominators."""
    if x.ndim == 0:
        raise DimensionError("avg_rnorm needs at least one feature axis")
    xv = x.value
    n = xv.shape[-1]
    mean_abs = np.abs(xv).mean(axis=-1, keepdims=True)
    guarded = mean_abs < eps
    denom = np.where(guarded, eps, mean_abs)
    y = c * xv / denom

    def backward(g: np.ndarray) -> np.ndarray:
        through_mean = np.where(
            guarded, 0.0, (g * xv).sum(axis=-1, keepdims=True) / (n * denom * denom)
        )
        return c * (g / denom - np.sign(xv) * through_mean)

    return _make(y, [(x, backward)], "avg_rnorm")


def max_rnorm(x: TensorNode, eps: float = RNORM_EPS) -> TensorNode:
    """Return x / Max(|x|) along the last axis."""
    if x.ndim == 0:
        raise DimensionError("max_rnorm needs at least one feature axis")
    xv = x.value
    absx = np.abs(xv)
    arg = absx.argmax(axis=-1)[..., None]
    peak = np.take_along_axis(absx, arg, axis=-1)
    guarded = peak < eps
    denom = np.where(guarded, eps, peak)
    y = xv / denom

    def backward(g: np.ndarray) -> np.ndarray:
        grad = g / denom
        coef = np.where(guarded, 0.0, (g * xv).sum(axis=-1, keepdims=True) / (denom * denom))
        sign_at_peak = np.sign(np.take_along_axis(xv, arg, axis=-1))
        correction = np.zeros_like(xv)
        np.put_along_axis(correction, arg, coef * sign_at_peak, axis=-1)
        return grad - correction

    return _make(y, [(x, backward)], "max_rnorm")


# Shape manipulation and reductions


def concat_last(a: TensorNode | np.ndarray, b: TensorNode | np.ndarray) -> TensorNode:
    a, b = as_node(a), as_node(b)
    if a.ndim != b.ndim or a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat: shapes {a.shape} and {b.shape} do not conform")
    split = a.shape[-1]
    return _make(
        np.concatenate([a.value, b.value], axis=-1),
        [(a, lambda g: g[..., :split]), (b, lambda g: g[..., split:])],
        "concat",
    )


def reshape(x: TensorNode, shape: tuple[int, ...]) -> TensorNode:
    original = x.shape
    return _make(x.value.reshape(shape), [(x, lambda g: g.reshape(original))], "reshape")


def sum_all(x: TensorNode) -> TensorNode:
    shape = x.shape
    return _make(np.asarray(x.value.sum()), [(x, lambda g: np.full(shape, float(g)))], "sum")


def mean_all(x: TensorNode) -> TensorNode:
    shape, size = x.shape, x.value.size
    return _make(
        np.asarray(x.value.mean()), [(x, lambda g: np.full(shape, float(g) / size))], "mean"
    )


def sum_last(x: TensorNode) -> TensorNode:
    """Reduce the last axis: (B, n) -> (B,), (n,) -> ()."""
    shape = x.shape
    return _make(
        x.value.sum(axis=-1),
        [(x, lambda g: np.broadcast_to(np.asarray(g)[..., None], shape).copy())],
        "sum_last",
    )


# Graph traversal


def _topological_order(root: TensorNode) -> list[TensorNode]:
    order: list[TensorNode] = []
    visited: set[int] = set()
    stack: list[tuple[TensorNode, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in reversed(node.parents):
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: TensorNode) -> None:
    """Accumulate d(loss)/d(node) into every reachable node that requires grad.

    Interior nodes are reset on every call; leaves keep accumulating until
    `zero_grad` is called.
    """
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.parents:
        loss.grad = loss.grad + 1.0
        return
    # interior gradients live in `pending` until every consumer has contributed
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topological_order(loss)):
        if not node.parents:
            continue
        g = pending.pop(id(node), None)
        node.grad = np.zeros_like(node.value) if g is None else g
        if g is None:
            continue
        for parent, fn in node.parents:
            contribution = fn(g)
            if not parent.parents:
                parent.grad += contribution
                continue
            key = id(parent)
            previous = pending.get(key)
            pending[key] = contribution if previous is None else previous + contribution


def zero_grad(params: Mapping[str, TensorNode] | Iterable[TensorNode]) -> None:
    nodes = params.values() if isinstance(params, Mapping) else params
    for node in nodes:
        node.zero_grad()


@contextmanager
def frozen(params: Mapping[str, TensorNode]) -> Iterator[None]:
    """Temporarily exclude parameters from graph construction."""
    previous = {name: node.requires_grad for name, node in params.items()}
    for node in params.values():
        node.requires_grad = False
    try:
        yield
    finally:
        for name, node in params.items():
            node.requires_grad = previous[name]


# Optimisation


@dataclass
class AdamState:
    """Moment estimates for one parameter group."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """Apply one bias-corrected Adam update to `params` in place."""
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise DimensionError(
                f"adam: gradient shape {grad.shape} does not match parameter '{name}' shape {value.shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter '{name}'")

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, value in params.items():
        grad = grads[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None or v is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        value -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def adam_update(params: Mapping[str, TensorNode], state: AdamState, lr: float) -> None:
    """Adam step using the gradients accumulated on the nodes."""
    adam_step(
        {name: node.value for name, node in params.items()},
        {name: node.grad for name, node in params.items()},
        state,
        lr,
    )


# Finite differences


def grad_check(
    fn: Callable[[], TensorNode],
    params: Mapping[str, TensorNode],
    eps_fd: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients of a scalar `fn()` against central differences.

    Returns the largest relative error |a - n| / max(|a|, |n|, eps_fd). With
    `max_entries` only a random subset of each parameter's entries is checked.
    """
    if eps_fd <= 0:
        raise ContractError(f"eps_fd must be positive, got {eps_fd}")
    zero_grad(params)
    backward(fn())
    analytic = {name: node.grad.copy() for name, node in params.items()}
    rng = rng or np.random.default_rng(0)

    worst = 0.0
    for name, node in params.items():
        indices = list(np.ndindex(node.shape))
        if max_entries is not None and len(indices) > max_entries:
            chosen = rng.choice(len(indices), size=max_entries, replace=False)
            indices = [indices[i] for i in sorted(chosen)]
        for idx in indices:
            original = node.value[idx]
            with no_grad():
                node.value[idx] = original + eps_fd
                f_plus = fn().item()
                node.value[idx] = original - eps_fd
                f_minus = fn().item()
            node.value[idx] = original
            numeric = (f_plus - f_minus) / (2.0 * eps_fd)
            a = analytic[name][idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), eps_fd)
            worst = max(worst, err)
    return worst
