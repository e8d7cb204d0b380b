"""
Soft actor-critic training with convex Q targets and sample-multiple-reuse.

One environment step is followed by one `smr_train_step`, which samples a
single batch and reuses it for `cfg.smr` full update iterations: target,
critic step, Polyak step, actor step and temperature step.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, TensorNode
from .config import TrainConfig
from .envs import ToyEnv, make_env
from .models import CurvePoint
from .networks import (
    ActorNet,
    ActorSpec,
    CriticNet,
    CriticSpec,
    actor_sample,
    critic_forward,
)
from .replay import Batch, ReplayBuffer, Transition


logger = logging.getLogger(__name__)

QFunction = Callable[[np.ndarray, TensorNode], TensorNode]


class TrainingAborted(RuntimeError):
    """Raised when targets, losses or gradients stop being finite."""


class EnvironmentFault(RuntimeError):
    """Raised when the environment fails; carries the env step index."""

    def __init__(self, step: int, cause: BaseException):
        self.step = step
        super().__init__(f"environment failed at step {step}: {cause}")


def critic_spec(cfg: TrainConfig, obs_dim: int, act_dim: int) -> CriticSpec:
    return CriticSpec(
        obs_dim=obs_dim,
        act_dim=act_dim,
        hidden=cfg.critic_hidden,
        depth=cfg.critic_depth,
        c=cfg.rnorm_c,
        activation=cfg.activation,
        layernorm=cfg.layernorm,
        input_layernorm=cfg.input_layernorm,
        input_norm=cfg.input_norm,
        all_avg_rnorm=cfg.all_avg_rnorm,
        skip=cfg.skip,
        init=cfg.init,
    )


def actor_spec(cfg: TrainConfig, obs_dim: int, act_dim: int) -> ActorSpec:
    return ActorSpec(
        obs_dim=obs_dim,
        act_dim=act_dim,
        hidden=tuple(cfg.actor_hidden),
        log_std_min=cfg.log_std_min,
        log_std_max=cfg.log_std_max,
        init=cfg.init,
    )


@dataclass
class TrainState:
    """Networks, optimiser states, generators and update counters of one run."""

    critic1: CriticNet
    critic2: CriticNet
    target1: CriticNet
    target2: CriticNet
    actor: ActorNet
    log_alpha: TensorNode
    target_entropy: float
    rng: np.random.Generator
    replay_rng: np.random.Generator
    critic1_opt: AdamState = field(default_factory=AdamState)
    critic2_opt: AdamState = field(default_factory=AdamState)
    actor_opt: AdamState = field(default_factory=AdamState)
    alpha_opt: AdamState = field(default_factory=AdamState)
    env_steps: int = 0
    critic_updates: int = 0
    actor_updates: int = 0
    alpha_updates: int = 0
    last_q_mean: float = math.nan
    last_log_probs: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def create(
        cls,
        cfg: TrainConfig,
        obs_dim: int,
        act_dim: int,
        seed: int | np.random.SeedSequence | None = None,
    ) -> TrainState:
        """Initialise both critics independently and copy them into the targets."""
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(cfg.seed if seed is None else seed)
        init_seq, policy_seq, replay_seq = seed.spawn(3)
        init_rng = np.random.default_rng(init_seq)
        c_spec = critic_spec(cfg, obs_dim, act_dim)
        critic1 = CriticNet.create(c_spec, init_rng)
        critic2 = CriticNet.create(c_spec, init_rng)
        return cls(
            critic1=critic1,
            critic2=critic2,
            target1=critic1.copy(),
            target2=critic2.copy(),
            actor=ActorNet.create(actor_spec(cfg, obs_dim, act_dim), init_rng),
            log_alpha=TensorNode.parameter(cfg.init_log_alpha),
            target_entropy=cfg.resolved_target_entropy(act_dim),
            rng=np.random.default_rng(policy_seq),
            replay_rng=np.random.default_rng(replay_seq),
        )

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha.item())

    def named_tensors(self) -> dict[str, np.ndarray]:
        tensors: dict[str, np.ndarray] = {}
        groups = {
            "critic1": self.critic1.params,
            "critic2": self.critic2.params,
            "target1": self.target1.params,
            "target2": self.target2.params,
            "actor": self.actor.params,
        }
        for group, params in groups.items():
            for name, node in params.items():
                tensors[f"{group}/{name}"] = node.value
        tensors["log_alpha"] = self.log_alpha.value
        return tensors

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        for key, node in self._nodes().items():
            np.copyto(node.value, tensors[key])

    def _nodes(self) -> dict[str, TensorNode]:
        nodes = {
            f"{group}/{name}": node
            for group, net in (
                ("critic1", self.critic1),
                ("critic2", self.critic2),
                ("target1", self.target1),
                ("target2", self.target2),
                ("actor", self.actor),
            )
            for name, node in net.params.items()
        }
        nodes["log_alpha"] = self.log_alpha
        return nodes


@dataclass
class UpdateMetrics:
    critic_loss: float = math.nan
    actor_loss: float = math.nan
    alpha: float = math.nan
    q_mean: float = math.nan
    skipped: bool = False
    warning: str | None = None


@dataclass
class TargetSample:
    """Next-state actions and their log-probabilities, detached from the graph."""

    actions: np.ndarray
    log_probs: np.ndarray


def convex_target_values(
    rewards: np.ndarray,
    dones: np.ndarray,
    q1: np.ndarray,
    q2: np.ndarray,
    log_probs: np.ndarray,
    alpha: float,
    gamma: float,
    lam: float,
    *,
    entropy: bool = True,
) -> np.ndarray:
    """r + γ(1-done)(λ·min + (1-λ)·max - α·log π)."""
    soft = lam * np.minimum(q1, q2) + (1.0 - lam) * np.maximum(q1, q2)
    if entropy:
        soft = soft - alpha * log_probs
    return rewards + gamma * (1.0 - dones) * soft


def sample_next_actions(batch: Batch, state: TrainState) -> TargetSample:
    with ad.no_grad():
        sample = actor_sample(batch.next_states, state.actor, state.rng)
    return TargetSample(actions=sample.action.value, log_probs=sample.log_prob.value)


def convex_q_target(
    batch: Batch,
    state: TrainState,
    cfg: TrainConfig,
    next_sample: TargetSample | None = None,
) -> np.ndarray:
    """Bootstrapped target from both target critics; carries no graph."""
    if len(batch) == 0:
        raise ValueError("convex_q_target needs a non-empty batch")
    nxt = next_sample or sample_next_actions(batch, state)
    with ad.no_grad():
        q1 = critic_forward(batch.next_states, nxt.actions, state.target1).value
        q2 = critic_forward(batch.next_states, nxt.actions, state.target2).value
    y = convex_target_values(
        batch.rewards,
        batch.dones,
        q1,
        q2,
        nxt.log_probs,
        state.alpha,
        cfg.gamma,
        cfg.convex_lambda,
        entropy=cfg.entropy_in_target,
    )
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        i = int(bad[0])
        raise TrainingAborted(
            f"non-finite Q target in {bad.size} of {len(y)} batch entries; first at {i}: "
            f"r={batch.rewards[i]!r} q1'={q1[i]!r} q2'={q2[i]!r} "
            f"log_pi={nxt.log_probs[i]!r} alpha={state.alpha!r}"
        )
    return y


def _step(params: dict[str, TensorNode], opt: AdamState, lr: float, group: str) -> None:
    try:
        ad.adam_update(params, opt, lr)
    except ad.NonFiniteGradientError as e:
        raise TrainingAborted(f"{group}: {e}") from e
    finally:
        ad.zero_grad(params)


def _finite_loss(loss: TensorNode, group: str) -> float:
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingAborted(f"{group}: loss is {value}")
    return value


def critic_update(
    batch: Batch, y: np.ndarray, state: TrainState, cfg: TrainConfig
) -> tuple[float, float]:
    """One Adam step per critic on the squared error to `y`; returns pre-step losses."""
    losses = []
    q_means = []
    for group, net, opt in (
        ("critic1", state.critic1, state.critic1_opt),
        ("critic2", state.critic2, state.critic2_opt),
    ):
        ad.zero_grad(net.params)
        q = critic_forward(batch.states, batch.actions, net)
        loss = ad.mean_all(ad.square(q - y))
        losses.append(_finite_loss(loss, group))
        q_means.append(float(np.mean(q.value)))
        ad.backward(loss)
        _step(net.params, opt, cfg.learning_rate, group)
    state.critic_updates += 1
    state.last_q_mean = float(np.mean(q_means))
    return losses[0], losses[1]


def actor_update(
    batch: Batch,
    state: TrainState,
    cfg: TrainConfig,
    q_function: QFunction | None = None,
) -> float:
    """Minimise E[α·log π(ã|s) - ½(Q1 + Q2)(s, ã)] with the critics held fixed."""
    ad.zero_grad(state.actor.params)
    sample = actor_sample(batch.states, state.actor, state.rng)
    if q_function is None:
        with ad.frozen(state.critic1.params), ad.frozen(state.critic2.params):
            q = 0.5 * (
                critic_forward(batch.states, sample.action, state.critic1)
                + critic_forward(batch.states, sample.action, state.critic2)
            )
    else:
        q = q_function(batch.states, sample.action)
    loss = ad.mean_all(state.alpha * sample.log_prob - q)
    value = _finite_loss(loss, "actor")
    state.last_log_probs = sample.log_prob.value.copy()
    ad.backward(loss)
    _step(state.actor.params, state.actor_opt, cfg.learning_rate, "actor")
    state.actor_updates += 1
    return value


def temperature_update(
    batch: Batch,
    state: TrainState,
    cfg: TrainConfig,
    log_probs: np.ndarray | None = None,
) -> float:
    """Step log α on E[-log α·(log π + H_target)]; returns the new α.

    `log_probs` are treated as constants. Without them the actor is sampled
    afresh on the batch states.
    """
    if log_probs is None:
        with ad.no_grad():
            log_probs = actor_sample(batch.states, state.actor, state.rng).log_prob.value
    state.log_alpha.zero_grad()
    loss = ad.mean_all(-(state.log_alpha * (np.asarray(log_probs) + state.target_entropy)))
    ad.backward(loss)
    _step({"log_alpha": state.log_alpha}, state.alpha_opt, cfg.learning_rate, "log_alpha")
    state.alpha_updates += 1
    return state.alpha


def polyak_update(state: TrainState, tau: float) -> None:
    """θ' ← τθ + (1-τ)θ' for both target critics."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    for online, target in ((state.critic1, state.target1), (state.critic2, state.target2)):
        for name, node in target.params.items():
            source = online.params[name].value
            if tau == 1.0:
                np.copyto(node.value, source)
            else:
                node.value += tau * (source - node.value)


def smr_train_step(state: TrainState, buffer: ReplayBuffer, cfg: TrainConfig) -> UpdateMetrics:
    """Sample one batch and run `cfg.smr` full update iterations on it."""
    if len(buffer) < cfg.batch_size:
        logger.debug("replay holds %d < %d transitions, update skipped", len(buffer), cfg.batch_size)
        return UpdateMetrics(skipped=True, warning="buffer_underflow")

    batch = buffer.sample(cfg.batch_size, state.replay_rng)
    frozen_sample = None if cfg.resample_target_action else sample_next_actions(batch, state)
    metrics = UpdateMetrics()
    for _ in range(cfg.smr):
        y = convex_q_target(batch, state, cfg, frozen_sample)
        loss1, loss2 = critic_update(batch, y, state, cfg)
        polyak_update(state, cfg.tau)
        metrics.actor_loss = actor_update(batch, state, cfg)
        # log π from the actor step, taken before its parameter update
        metrics.alpha = temperature_update(batch, state, cfg, state.last_log_probs)
        metrics.critic_loss = 0.5 * (loss1 + loss2)
    metrics.q_mean = state.last_q_mean
    return metrics


def evaluate(actor: ActorNet, env: ToyEnv, episodes: int) -> float:
    """Mean return of the deterministic policy tanh(mean)."""
    returns = []
    for _ in range(episodes):
        obs = env.reset()
        total = 0.0
        while True:
            with ad.no_grad():
                action = actor_sample(obs, actor, env.rng, deterministic=True).action.value
            result = env.step(action)
            total += result.reward
            obs = result.obs
            if result.done:
                break
        returns.append(total)
    return float(np.mean(returns))


def random_policy_return(env_name: str, episodes: int = 10, seed: int = 0) -> float:
    """Mean return of uniformly random actions, the baseline for learning checks."""
    env = make_env(env_name, seed)
    rng = np.random.default_rng(seed)
    returns = []
    for _ in range(episodes):
        env.reset()
        total = 0.0
        while True:
            result = env.step(rng.uniform(-1.0, 1.0, size=env.spec.act_dim))
            total += result.reward
            if result.done:
                break
        returns.append(total)
    return float(np.mean(returns))


@dataclass
class TrainResult:
    curve: list[CurvePoint]
    state: TrainState
    clamp_count: int = 0

    @property
    def final_return(self) -> float:
        return self.curve[-1].eval_return


def run_training(
    cfg: TrainConfig,
    env: ToyEnv | None = None,
    on_eval: Callable[[list[CurvePoint]], None] | None = None,
) -> TrainResult:
    """Full training loop; reproducible from `cfg.seed` alone."""
    cfg.check()
    state_seq, env_seq, eval_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    env = env or make_env(cfg.env or "", env_seq)
    eval_env = make_env(env.spec.name, eval_seq)
    obs_dim, act_dim = env.spec.obs_dim, env.spec.act_dim

    state = TrainState.create(cfg, obs_dim, act_dim, state_seq)
    buffer = ReplayBuffer(max(1, min(cfg.buffer_size, cfg.steps)), obs_dim, act_dim)
    metrics = UpdateMetrics()

    def record(step: int) -> None:
        curve.append(
            CurvePoint(
                env_step=step,
                eval_return=evaluate(state.actor, eval_env, cfg.eval_episodes),
                critic_loss=metrics.critic_loss,
                actor_loss=metrics.actor_loss,
                alpha=metrics.alpha,
                q_mean=metrics.q_mean,
            )
        )
        if on_eval is not None:
            on_eval(curve)

    curve: list[CurvePoint] = []
    record(0)
    obs = env.reset()
    for t in range(cfg.steps):
        if t < cfg.warmup_steps:
            action = state.rng.uniform(-1.0, 1.0, size=act_dim)
        else:
            with ad.no_grad():
                action = actor_sample(obs, state.actor, state.rng).action.value
        try:
            result = env.step(action)
        except Exception as e:
            raise EnvironmentFault(t, e) from e
        buffer.add(Transition(obs, action, result.reward, result.obs, result.terminal))
        obs = env.reset() if result.done else result.obs
        state.env_steps = t + 1

        if t >= cfg.warmup_steps:
            step_metrics = smr_train_step(state, buffer, cfg)
            if not step_metrics.skipped:
                metrics = step_metrics
        if (t + 1) % cfg.eval_interval == 0:
            record(t + 1)

    return TrainResult(curve=curve, state=state, clamp_count=env.clamp_count)


def train(cfg: TrainConfig, env: ToyEnv | None = None) -> list[CurvePoint]:
    """Learning curve of one run: the initial evaluation plus one per eval interval."""
    return run_training(cfg, env).curve
