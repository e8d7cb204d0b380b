"""
Finite-MDP tools for checking TD learning under tanh feature transforms.

Covers linear TD(0) with and without a tanh(W·φ) transform and a projection
ball, semi-gradient variance estimates, rank preservation of tanh features,
the regularised quadratic TD objective with its closed-form minimiser, and
tabular Q-learning with two estimators mixed by a convex min/max target.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


logger = logging.getLogger(__name__)

RANK_TOL = 1e-10


class TheoryError(RuntimeError):
    """Raised when an internal identity of a construction fails to hold."""


class NonErgodicChainError(TheoryError):
    """Raised when a policy's Markov chain is reducible or periodic."""


# Finite MDPs and Markov chains


@dataclass
class FiniteMDP:
    """Tabular dynamics P[s, a, s'], rewards r[s, a] and discount gamma."""

    P: np.ndarray
    r: np.ndarray
    gamma: float
    r_max: float | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ValueError(f"P must have shape (S, A, S), got {self.P.shape}")
        if self.r.shape != self.P.shape[:2]:
            raise ValueError(f"r must have shape {self.P.shape[:2]}, got {self.r.shape}")
        if np.any(self.P < 0) or np.any(np.abs(self.P.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("every row of P must be a probability distribution")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.r_max is None:
            self.r_max = float(np.abs(self.r).max())
        if np.any(np.abs(self.r) > self.r_max):
            raise ValueError(f"rewards exceed r_max={self.r_max}")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]


def random_mdp(
    n_states: int,
    n_actions: int,
    gamma: float,
    rng: np.random.Generator,
    *,
    deterministic: bool = False,
    reward_scale: float = 1.0,
) -> FiniteMDP:
    """Dirichlet(1) transition rows (or one-hot rows) and uniform rewards."""
    if deterministic:
        targets = rng.integers(0, n_states, size=(n_states, n_actions))
        P = np.zeros((n_states, n_actions, n_states))
        np.put_along_axis(P, targets[..., None], 1.0, axis=2)
    else:
        P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        P /= P.sum(axis=2, keepdims=True)
    r = rng.uniform(-reward_scale, reward_scale, size=(n_states, n_actions))
    return FiniteMDP(P=P, r=r, gamma=gamma, r_max=reward_scale)


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def induced_chain(mdp: FiniteMDP, policy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and expected reward of the chain followed under `policy`."""
    return np.einsum("sa,sat->st", policy, mdp.P), (policy * mdp.r).sum(axis=1)


def _reachable(adjacency: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(len(adjacency), dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adjacency[u] & ~seen):
            seen[v] = True
            queue.append(v)
    return seen


def check_ergodic(chain: np.ndarray) -> None:
    """Raise NonErgodicChainError unless the chain is irreducible and aperiodic."""
    adjacency = chain > 0
    forward = _reachable(adjacency, 0)
    backward = _reachable(adjacency.T, 0)
    stranded = np.flatnonzero(~(forward & backward))
    if stranded.size:
        raise NonErgodicChainError(
            f"chain is reducible: states {stranded.tolist()} do not communicate with state 0"
        )

    level = np.full(len(chain), -1)
    level[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adjacency[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    period = 0
    for u, v in zip(*np.nonzero(adjacency), strict=True):
        period = math.gcd(period, int(level[u] + 1 - level[v]))
    if period != 1:
        raise NonErgodicChainError(f"chain is periodic with period {period}")


def stationary_distribution(
    mdp: FiniteMDP,
    policy: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """ν with νᵀP_π = νᵀ, by power iteration on the induced chain."""
    chain, _ = induced_chain(mdp, policy)
    check_ergodic(chain)
    nu = np.full(mdp.n_states, 1.0 / mdp.n_states)
    for _ in range(max_iter):
        nxt = nu @ chain
        if np.abs(nxt - nu).sum() < tol:
            nu = nxt
            break
        nu = nxt
    else:
        raise TheoryError(f"power iteration did not reach {tol} in {max_iter} steps")
    return nu / nu.sum()


# Features


def _apply_w(w: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """W·φ for a diagonal given as a vector or a full matrix; works row-wise."""
    return phi * w if w.ndim == 1 else phi @ w.T


def _max_eigenvalue(w: np.ndarray) -> float:
    return float(w.max()) if w.ndim == 1 else float(np.linalg.eigvalsh(w).max())


def numerical_rank(matrix: np.ndarray, tol: float = RANK_TOL) -> tuple[int, float]:
    """Rank with cut-off tol·σ_max, and the smallest singular value."""
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, 0.0
    return int(np.sum(sv > tol * sv[0])), float(sv[-1])


@dataclass
class FeatureMap:
    """Feature rows φ(s)ᵀ and the positive diagonal of W."""

    phi: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.shape != (self.phi.shape[1],) or np.any(self.w <= 0):
            raise ValueError("W must be a positive diagonal matching the feature dimension")
        rank, _ = numerical_rank(self.phi)
        if rank < self.phi.shape[1]:
            raise ValueError(f"feature matrix must have full column rank, got rank {rank}")

    @classmethod
    def scaled(cls, phi: np.ndarray, c: float) -> FeatureMap:
        """W = c·I."""
        return cls(phi=phi, w=np.full(np.shape(phi)[1], float(c)))

    @property
    def dim(self) -> int:
        return self.phi.shape[1]

    def transformed(self) -> np.ndarray:
        return np.tanh(_apply_w(self.w, self.phi))

    def matrix(self, use_tanh: bool) -> np.ndarray:
        return self.transformed() if use_tanh else self.phi


@dataclass
class RankReport:
    rank_before: int
    rank_after: int
    min_sv_before: float
    min_sv_after: float

    @property
    def preserved(self) -> bool:
        return self.rank_after == self.rank_before


def check_linear_independence(phi: np.ndarray, c: float) -> RankReport:
    """Numerical ranks of Φ and of tanh(c·Φ)."""
    rank_before, sv_before = numerical_rank(phi)
    if rank_before < phi.shape[1]:
        raise ValueError(f"Φ must have full column rank, got rank {rank_before}")
    rank_after, sv_after = numerical_rank(np.tanh(c * phi))
    if rank_after < rank_before:
        logger.info("tanh(%g·Φ) lost rank: %d -> %d", c, rank_before, rank_after)
    return RankReport(rank_before, rank_after, sv_before, sv_after)


# Linear TD(0)


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes: harmonic a/(b+t), polynomial (1 + a·t)^-omega, or constant a."""

    kind: str = "harmonic"
    a: float = 1.0
    b: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        if self.kind not in ("harmonic", "polynomial", "constant"):
            raise ValueError(f"unknown schedule {self.kind!r}")

    def __call__(self, t: int | float) -> float:
        if self.kind == "harmonic":
            return self.a / (self.b + t)
        if self.kind == "polynomial":
            return (1.0 + self.a * t) ** (-self.omega)
        return self.a

    @property
    def robbins_monro(self) -> bool:
        """Σα = ∞ and Σα² < ∞."""
        if self.kind == "harmonic":
            return self.a > 0 and self.b > 0
        if self.kind == "polynomial":
            return self.a > 0 and 0.5 < self.omega <= 1.0
        return False


def td0_step(
    theta: np.ndarray,
    phi_s: np.ndarray,
    phi_next: np.ndarray,
    reward: float,
    alpha: float,
    gamma: float,
) -> np.ndarray:
    """θ + α(r + γφ(s')ᵀθ - φ(s)ᵀθ)φ(s)."""
    delta = reward + gamma * float(phi_next @ theta) - float(phi_s @ theta)
    return theta + alpha * delta * phi_s


def project(theta: np.ndarray, radius: float) -> np.ndarray:
    if radius == math.inf:
        return theta
    norm = math.sqrt(float(theta @ theta))
    if norm <= radius:
        return theta
    return theta * (radius / norm)


def td0_tanh_step(
    theta: np.ndarray,
    phi_s: np.ndarray,
    phi_next: np.ndarray,
    reward: float,
    alpha: float,
    gamma: float,
    w: np.ndarray,
    radius: float = math.inf,
) -> np.ndarray:
    """TD(0) on tanh(Wφ) features followed by projection onto ‖θ‖ ≤ radius."""
    w = np.asarray(w, dtype=np.float64)
    updated = td0_step(
        theta, np.tanh(_apply_w(w, phi_s)), np.tanh(_apply_w(w, phi_next)), reward, alpha, gamma
    )
    return project(updated, radius)


@dataclass
class LinearTDState:
    theta: np.ndarray
    schedule: StepSchedule
    radius: float = math.inf
    step: int = 0

    def advance(
        self,
        phi_s: np.ndarray,
        phi_next: np.ndarray,
        reward: float,
        gamma: float,
    ) -> None:
        theta = td0_step(self.theta, phi_s, phi_next, reward, self.schedule(self.step), gamma)
        self.theta = project(theta, self.radius)
        self.step += 1


def projected_fixed_point(
    mdp: FiniteMDP, features: FeatureMap, policy: np.ndarray, use_tanh: bool
) -> np.ndarray:
    """θ* solving Φ̃ᵀD(r_π + γP_πΦ̃θ - Φ̃θ) = 0."""
    chain, r_pi = induced_chain(mdp, policy)
    nu = stationary_distribution(mdp, policy)
    phi = features.matrix(use_tanh)
    weighted = phi.T * nu
    lhs = weighted @ (phi - mdp.gamma * chain @ phi)
    return np.linalg.solve(lhs, weighted @ r_pi)


def bellman_orthogonality_residual(
    mdp: FiniteMDP,
    features: FeatureMap,
    policy: np.ndarray,
    theta: np.ndarray,
    use_tanh: bool,
    nu: np.ndarray | None = None,
) -> float:
    """‖Φ̃ᵀDiag(ν)(TV - V)‖ for V = Φ̃θ."""
    chain, r_pi = induced_chain(mdp, policy)
    if nu is None:
        nu = stationary_distribution(mdp, policy)
    phi = features.matrix(use_tanh)
    values = phi @ theta
    return float(np.linalg.norm(phi.T @ (nu * (r_pi + mdp.gamma * chain @ values - values))))


@dataclass
class TDDiagnostics:
    tail_movement_half: float
    tail_movement_quarter: float
    orthogonality_residual: float
    fixed_point_distance: float
    fixed_point_norm: float
    max_norm: float
    robbins_monro: bool
    stationary: np.ndarray = field(repr=False)


@dataclass
class TDRun:
    trajectory: np.ndarray
    recorded_steps: np.ndarray
    theta: np.ndarray
    diagnostics: TDDiagnostics


def run_td0(
    mdp: FiniteMDP,
    features: FeatureMap,
    policy: np.ndarray,
    schedule: StepSchedule,
    use_tanh: bool,
    steps: int,
    rng: np.random.Generator,
    *,
    radius: float = math.inf,
    theta0: np.ndarray | None = None,
    record_every: int | None = None,
) -> TDRun:
    """Simulate the chain under `policy` and apply projected TD(0) at every transition."""
    nu = stationary_distribution(mdp, policy)
    if not schedule.robbins_monro:
        logger.warning("step-size schedule %s violates the Robbins-Monro conditions", schedule)

    phi = features.matrix(use_tanh)
    state = LinearTDState(
        theta=np.zeros(features.dim) if theta0 is None else np.array(theta0, dtype=np.float64),
        schedule=schedule,
        radius=radius,
    )
    cum_policy = np.cumsum(policy, axis=1)
    cum_p = np.cumsum(mdp.P, axis=2)
    last_a, last_s = mdp.n_actions - 1, mdp.n_states - 1
    draws = rng.random((steps, 2))
    s = int(rng.choice(mdp.n_states, p=nu))

    record_every = record_every or max(1, steps // 100)
    half, three_quarters = steps // 2, (3 * steps) // 4
    marks: dict[int, np.ndarray] = {0: state.theta.copy()}
    trajectory, recorded = [state.theta.copy()], [0]
    max_norm = float(np.linalg.norm(state.theta))
    for t in range(steps):
        a = min(int(np.searchsorted(cum_policy[s], draws[t, 0], side="right")), last_a)
        s_next = min(int(np.searchsorted(cum_p[s, a], draws[t, 1], side="right")), last_s)
        state.advance(phi[s], phi[s_next], mdp.r[s, a], mdp.gamma)
        s = s_next
        done = t + 1
        if done in (half, three_quarters):
            marks[done] = state.theta.copy()
        if done % record_every == 0 or done == steps:
            trajectory.append(state.theta.copy())
            recorded.append(done)
            max_norm = max(max_norm, float(np.linalg.norm(state.theta)))

    theta = state.theta
    theta_star = projected_fixed_point(mdp, features, policy, use_tanh)
    diagnostics = TDDiagnostics(
        tail_movement_half=float(np.linalg.norm(theta - marks.get(half, theta))),
        tail_movement_quarter=float(np.linalg.norm(theta - marks.get(three_quarters, theta))),
        orthogonality_residual=bellman_orthogonality_residual(
            mdp, features, policy, theta, use_tanh, nu
        ),
        fixed_point_distance=float(np.linalg.norm(theta - theta_star)),
        fixed_point_norm=float(np.linalg.norm(theta_star)),
        max_norm=max_norm,
        robbins_monro=schedule.robbins_monro,
        stationary=nu,
    )
    return TDRun(np.array(trajectory), np.array(recorded), theta, diagnostics)


# Semi-gradient variance


@dataclass
class GaussianFeatureSampler:
    """Independent N(0, scale²) feature vectors for s and s'."""

    dim: int
    scale: float = 1.0

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        return (
            rng.normal(0.0, self.scale, size=(n, self.dim)),
            rng.normal(0.0, self.scale, size=(n, self.dim)),
        )


@dataclass
class VarianceEstimate:
    """Trace of the empirical semi-gradient covariance and its analytic bound."""

    variance: float
    bound: float
    std_error: float
    per_sample_bound: np.ndarray = field(repr=False)
    mean_warning: bool = False


def semi_gradient_variance(
    sampler: GaussianFeatureSampler,
    theta: np.ndarray,
    gamma: float,
    r_max: float,
    w: np.ndarray | None = None,
    n_samples: int = 10_000,
    rng: np.random.Generator | None = None,
) -> VarianceEstimate:
    """Monte-Carlo variance of (r + γV(s') - V(s))∇V(s) with or without tanh(W·)."""
    if n_samples < 1000:
        raise ValueError(f"need at least 1000 samples, got {n_samples}")
    rng = rng or np.random.default_rng()
    phi, phi_next = sampler.sample(n_samples, rng)
    rewards = rng.uniform(-r_max, r_max, size=n_samples)

    mean = phi.mean(axis=0)
    spread = phi.std(axis=0, ddof=1) / math.sqrt(n_samples)
    mean_warning = bool(np.any(np.abs(mean) > 3.0 * spread))
    if mean_warning:
        logger.warning("feature sampler mean deviates from zero beyond 3 sigma: %s", mean)

    big_lambda = np.maximum(np.linalg.norm(phi, axis=1), np.linalg.norm(phi_next, axis=1))
    if w is None:
        psi, psi_next, lambda_w = phi, phi_next, 1.0
    else:
        w = np.asarray(w, dtype=np.float64)
        psi = np.tanh(_apply_w(w, phi))
        psi_next = np.tanh(_apply_w(w, phi_next))
        lambda_w = _max_eigenvalue(w)

    delta = rewards + gamma * psi_next @ theta - psi @ theta
    grads = delta[:, None] * psi
    sq = ((grads - grads.mean(axis=0)) ** 2).sum(axis=1)
    theta_norm = float(np.linalg.norm(theta))
    per_sample = (r_max + (1.0 + gamma) * theta_norm * lambda_w * big_lambda) ** 2 * (
        psi**2
    ).sum(axis=1)
    return VarianceEstimate(
        variance=float(sq.mean()),
        bound=float(per_sample.mean()),
        std_error=float(sq.std(ddof=1) / math.sqrt(n_samples)),
        per_sample_bound=per_sample,
        mean_warning=mean_warning,
    )


# Regularised quadratic objective


@dataclass
class QuadraticForm:
    """L(θ) = θᵀ(A + λI)θ - 2θᵀb + c."""

    A: np.ndarray
    b: np.ndarray
    c: float
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if np.linalg.eigvalsh(self.regularized).min() <= 0:
            raise TheoryError("A + λI is not positive definite")

    @property
    def regularized(self) -> np.ndarray:
        return self.A + self.lam * np.eye(len(self.b))

    @property
    def theta_star(self) -> np.ndarray:
        return np.linalg.solve(self.regularized, self.b)

    @property
    def beta(self) -> float:
        """Largest eigenvalue of the Hessian 2(A + λI)."""
        return float(2.0 * np.linalg.eigvalsh(self.regularized).max())

    def loss(self, theta: np.ndarray) -> float:
        return float(theta @ self.regularized @ theta - 2.0 * theta @ self.b + self.c)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return 2.0 * self.regularized @ theta - 2.0 * self.b

    def gap(self, theta: np.ndarray) -> float:
        """L(θ) - L(θ*), evaluated in the cancellation-free form."""
        e = theta - self.theta_star
        return float(e @ self.regularized @ e)


def _transition_weights(mdp: FiniteMDP, policy: np.ndarray, nu: np.ndarray) -> np.ndarray:
    return nu[:, None, None] * policy[:, :, None] * mdp.P


def regularized_quadratic(
    mdp: FiniteMDP,
    features: FeatureMap,
    lam: float,
    policy: np.ndarray | None = None,
    n_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> QuadraticForm:
    """A, b, c of E[(r + γψ'ᵀθ - ψᵀθ)²] + λ‖θ‖² with ψ = tanh(Wφ).

    Expectations are exact over the stationary distribution unless
    `n_samples` is given, in which case transitions are sampled.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    policy = uniform_policy(mdp.n_states, mdp.n_actions) if policy is None else policy
    nu = stationary_distribution(mdp, policy)
    psi = features.transformed()
    S, A_n = mdp.n_states, mdp.n_actions

    if n_samples is None:
        weights = _transition_weights(mdp, policy, nu)
        diff = mdp.gamma * psi[None, :, :] - psi[:, None, :]
        A = np.einsum("sat,std,ste->de", weights, diff, diff)
        b = -np.einsum("sat,sa,std->d", weights, mdp.r, diff)
        c = float(np.einsum("sat,sa->", weights, mdp.r**2))

        def direct(theta: np.ndarray) -> float:
            err = mdp.r[:, :, None] + (diff @ theta)[:, None, :]
            return float((weights * err**2).sum() + lam * theta @ theta)

    else:
        rng = rng or np.random.default_rng()
        s = rng.choice(S, size=n_samples, p=nu)
        a = (rng.random(n_samples)[:, None] > np.cumsum(policy[s], axis=1)).sum(axis=1)
        a = np.minimum(a, A_n - 1)
        s_next = (rng.random(n_samples)[:, None] > np.cumsum(mdp.P[s, a], axis=1)).sum(axis=1)
        s_next = np.minimum(s_next, S - 1)
        r = mdp.r[s, a]
        diff = mdp.gamma * psi[s_next] - psi[s]
        A = diff.T @ diff / n_samples
        b = -(r[:, None] * diff).mean(axis=0)
        c = float((r**2).mean())

        def direct(theta: np.ndarray) -> float:
            return float(((r + diff @ theta) ** 2).mean() + lam * theta @ theta)

    form = QuadraticForm(A=A, b=b, c=c, lam=lam)
    point = np.linspace(-1.0, 1.0, features.dim)
    expected = direct(point)
    if abs(form.loss(point) - expected) > 1e-9 * max(1.0, abs(expected)):
        raise TheoryError("quadratic expansion does not reproduce the regularised TD loss")
    if np.linalg.norm(form.gradient(form.theta_star)) > 1e-8 * max(1.0, float(np.linalg.norm(b))):
        raise TheoryError("gradient does not vanish at the closed-form minimiser")
    return form


@dataclass
class GDTrace:
    gaps: np.ndarray
    theta: np.ndarray
    rate: float
    violations: list[int] = field(default_factory=list)

    @property
    def first_violation(self) -> int | None:
        return self.violations[0] if self.violations else None


def regularized_gd(
    form: QuadraticForm,
    alpha: float,
    theta0: np.ndarray,
    steps: int,
    slack: float = 1e-9,
) -> GDTrace:
    """Full-gradient descent; every step must contract the gap by 1 - 2αλ."""
    beta = form.beta
    if alpha <= 0 or alpha > (1.0 / beta) * (1.0 + 1e-12):
        raise ValueError(f"step size {alpha} must lie in (0, 1/beta = {1.0 / beta}]")
    if not 0.0 < form.lam < beta / 2.0:
        raise ValueError(f"lambda {form.lam} must lie in (0, beta/2 = {beta / 2.0})")
    rate = 1.0 - 2.0 * alpha * form.lam
    theta = np.array(theta0, dtype=np.float64)
    gaps = [form.gap(theta)]
    violations: list[int] = []
    for t in range(steps):
        theta = theta - alpha * form.gradient(theta)
        gaps.append(form.gap(theta))
        if gaps[-1] > rate * gaps[-2] + slack:
            violations.append(t)
    return GDTrace(gaps=np.array(gaps), theta=theta, rate=rate, violations=violations)


# Tabular Q-learning with two estimators


def value_iteration(mdp: FiniteMDP, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Q* with sup-norm error at most `tol`."""
    if mdp.gamma == 0.0:
        return mdp.r.copy()
    q = np.zeros_like(mdp.r)
    threshold = tol * (1.0 - mdp.gamma) / mdp.gamma
    for _ in range(max_iter):
        nxt = mdp.r + mdp.gamma * mdp.P @ q.max(axis=1)
        if np.abs(nxt - q).max() < threshold:
            return nxt
        q = nxt
    raise TheoryError(f"value iteration did not converge in {max_iter} sweeps")


def bellman_residual(mdp: FiniteMDP, q: np.ndarray) -> float:
    return float(np.abs(mdp.r + mdp.gamma * mdp.P @ q.max(axis=1) - q).max())


@dataclass
class TabularQPair:
    qa: np.ndarray
    qb: np.ndarray
    visits: np.ndarray
    schedule: StepSchedule

    def alpha(self, s: int, a: int) -> float:
        return self.schedule(int(self.visits[s, a]))


@dataclass
class TabularHistoryPoint:
    step: int
    error_a: float
    error_b: float
    gap_ba: float


@dataclass
class TabularRun:
    pair: TabularQPair
    history: list[TabularHistoryPoint]
    identity_error: float
    q_star: np.ndarray | None = None

    @property
    def error_a(self) -> float:
        return math.nan if self.q_star is None else float(np.abs(self.pair.qa - self.q_star).max())

    @property
    def error_b(self) -> float:
        return math.nan if self.q_star is None else float(np.abs(self.pair.qb - self.q_star).max())


def tabular_convex_q(
    mdp: FiniteMDP,
    lam: float,
    schedule: StepSchedule,
    steps: int,
    rng: np.random.Generator,
    *,
    epsilon: float = 0.2,
    q_star: np.ndarray | None = None,
    restart_every: int | None = None,
    record_every: int | None = None,
    init_scale: float = 1.0,
) -> TabularRun:
    """Two tables updated toward one target built from both at a* = argmax Q^A(s').

    Behaviour is ε-greedy on Q^A; with `restart_every` the walk jumps to a
    uniformly random state at that cadence. `identity_error` is the largest
    deviation from |Q^B - Q^A|(s,a) shrinking by exactly (1 - α) per update.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    S, A = mdp.n_states, mdp.n_actions
    pair = TabularQPair(
        qa=rng.uniform(-init_scale, init_scale, size=(S, A)),
        qb=rng.uniform(-init_scale, init_scale, size=(S, A)),
        visits=np.zeros((S, A), dtype=np.int64),
        schedule=schedule,
    )
    qa, qb = pair.qa, pair.qb
    cum_p = np.cumsum(mdp.P, axis=2)
    draws = rng.random((steps, 3))
    record_every = record_every or max(1, steps // 100)
    history: list[TabularHistoryPoint] = []
    identity_error = 0.0
    s = int(rng.integers(S))

    for t in range(steps):
        if draws[t, 0] < epsilon:
            a = min(int(draws[t, 1] * A), A - 1)
        else:
            a = int(np.argmax(qa[s]))
        s_next = min(int(np.searchsorted(cum_p[s, a], draws[t, 2], side="right")), S - 1)
        best = int(np.argmax(qa[s_next]))
        low, high = sorted((qa[s_next, best], qb[s_next, best]))
        y = mdp.r[s, a] + mdp.gamma * (lam * low + (1.0 - lam) * high)

        alpha = pair.alpha(s, a)
        if not 0.0 <= alpha <= 1.0:
            raise TheoryError(f"step size {alpha} at ({s}, {a}) leaves [0, 1]")
        old_gap = abs(qb[s, a] - qa[s, a])
        qa[s, a] += alpha * (y - qa[s, a])
        qb[s, a] += alpha * (y - qb[s, a])
        pair.visits[s, a] += 1
        identity_error = max(identity_error, abs(abs(qb[s, a] - qa[s, a]) - (1.0 - alpha) * old_gap))

        done = t + 1
        s = int(rng.integers(S)) if restart_every and done % restart_every == 0 else s_next
        if done % record_every == 0 or done == steps:
            history.append(
                TabularHistoryPoint(
                    step=done,
                    error_a=math.nan if q_star is None else float(np.abs(qa - q_star).max()),
                    error_b=math.nan if q_star is None else float(np.abs(qb - q_star).max()),
                    gap_ba=float(np.abs(qb - qa).max()),
                )
            )
    return TabularRun(pair=pair, history=history, identity_error=identity_error, q_star=q_star)
