"""Policy classes and optimizers for planning inside a learned model.

Two optimizers are provided:

* `exact_value_iteration`: nonstationary backward induction on a finite MDP.
  The exported stationary table is the first-step greedy policy; the
  time-indexed tables and their exact value are kept on the result because
  the finite-horizon optimum is genuinely nonstationary.
* `npg_step`: one natural policy gradient step.  On finite models the
  gradient, Fisher and KL are computed exactly from occupancies; on
  continuous models they are estimated from rollout batches inside the model
  with GAE advantages and a linear critic.  Both paths share the conjugate
  gradient solve and a KL trust-region backtrack, and both support a
  behavior-cloning regularizer on expert pairs.

Costs fed to the advantage path are clipped to [0, 2H + 1], matching the
range of a bounded cost plus the capped pessimism penalty.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from milo.mdp import (
    FiniteMDP,
    LinearGaussianEnv,
    TabularPolicy,
    occupancy_timewise,
)


@dataclass
class AdvantageConfig:
    gamma: float = 0.995
    gae_lambda: float = 0.97
    critic_l2: float = 1e-4
    critic_epochs: int = 2


@dataclass
class NPGConfig:
    max_kl: float = 0.01
    cg_iters: int = 25
    cg_damping: float = 1e-5
    backtracks: int = 12
    # precondition the summed gradient (policy + BC) by default; when False
    # only the policy term goes through the Fisher solve
    precondition_bc: bool = True


@dataclass
class PlanResult:
    greedy_by_step: np.ndarray   # (H, S) greedy actions per step
    value: float                 # exact optimum from the backward pass
    policy: TabularPolicy        # stationary export: step-1 greedy table
    values_by_step: np.ndarray   # (H + 1, S) optimal cost-to-go

    def probs_by_step(self, n_actions: int) -> np.ndarray:
        H, S = self.greedy_by_step.shape
        probs = np.zeros((H, S, n_actions))
        idx = np.arange(S)
        for t in range(H):
            probs[t, idx, self.greedy_by_step[t]] = 1.0
        return probs


def exact_value_iteration(mdp: FiniteMDP, cost: np.ndarray | None = None) -> PlanResult:
    """Backward induction; ties resolve to the lowest action index."""
    f = mdp.cost if cost is None else np.asarray(cost, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("cost table must be finite")
    H, S = mdp.horizon, mdp.n_states
    V = np.zeros((H + 1, S))
    greedy = np.empty((H, S), dtype=np.int64)
    for t in range(H - 1, -1, -1):
        Q = f + mdp.transition @ V[t + 1]
        greedy[t] = np.argmin(Q, axis=1)
        V[t] = Q[np.arange(S), greedy[t]]
    policy = TabularPolicy.greedy(greedy[0], mdp.n_actions)
    return PlanResult(
        greedy_by_step=greedy,
        value=float(mdp.d0 @ V[0]),
        policy=policy,
        values_by_step=V,
    )


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


class SoftmaxTabularPolicy:
    """pi(a|s) proportional to exp(logits[s, a])."""

    def __init__(self, logits: np.ndarray):
        self.logits = np.asarray(logits, dtype=float).copy()

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "SoftmaxTabularPolicy":
        return cls(np.zeros((n_states, n_actions)))

    @classmethod
    def from_probs(cls, probs: np.ndarray, floor: float = 1e-8) -> "SoftmaxTabularPolicy":
        return cls(np.log(np.asarray(probs, dtype=float) + floor))

    @property
    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def as_tabular(self) -> TabularPolicy:
        return TabularPolicy(self.probs)

    def get_params(self) -> np.ndarray:
        return self.logits.ravel().copy()

    def with_params(self, theta: np.ndarray) -> "SoftmaxTabularPolicy":
        return SoftmaxTabularPolicy(theta.reshape(self.logits.shape))


class GaussianLinearPolicy:
    """a ~ N(M psi(s), diag(exp(2 log_std))) with psi(s) = [s, 1].

    The log standard deviations are trainable and floored at ``min_log_std``.
    """

    def __init__(
        self,
        d_state: int,
        d_action: int,
        weights: np.ndarray | None = None,
        log_std: np.ndarray | None = None,
        init_log_std: float = -0.25,
        min_log_std: float = -2.0,
    ):
        self.d_state = d_state
        self.d_action = d_action
        self.min_log_std = min_log_std
        self.weights = (
            np.zeros((d_action, d_state + 1)) if weights is None else np.asarray(weights, dtype=float).copy()
        )
        if log_std is None:
            log_std = np.full(d_action, init_log_std)
        self.log_std = np.maximum(np.asarray(log_std, dtype=float).copy(), min_log_std)

    def psi(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        return np.concatenate([states, np.ones((len(states), 1))], axis=1)

    def mean(self, states: np.ndarray) -> np.ndarray:
        return self.psi(states) @ self.weights.T

    def act(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(states)
        return mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mu = self.mean(states)
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        z = (actions - mu) / np.exp(self.log_std)
        return (
            -0.5 * np.sum(z**2, axis=1)
            - np.sum(self.log_std)
            - 0.5 * self.d_action * np.log(2.0 * np.pi)
        )

    def grad_log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Per-sample score vectors, shape (n, n_params)."""
        psi = self.psi(states)
        mu = psi @ self.weights.T
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        std = np.exp(self.log_std)
        z = (actions - mu) / std
        # d/dW: outer((a - mu) / std^2, psi); d/dlog_std: z^2 - 1
        grad_w = (z / std)[:, :, None] * psi[:, None, :]
        grad_s = z**2 - 1.0
        return np.concatenate([grad_w.reshape(len(psi), -1), grad_s], axis=1)

    def kl(self, other: "GaussianLinearPolicy", states: np.ndarray) -> float:
        """Mean KL(self || other) over the given states."""
        mu1, mu2 = self.mean(states), other.mean(states)
        s1, s2 = np.exp(self.log_std), np.exp(other.log_std)
        per_dim = (
            np.log(s2 / s1)[None, :]
            + (s1**2 + (mu1 - mu2) ** 2) / (2.0 * s2**2)
            - 0.5
        )
        return float(np.mean(per_dim.sum(axis=1)))

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.log_std])

    def with_params(self, theta: np.ndarray) -> "GaussianLinearPolicy":
        k = self.weights.size
        return GaussianLinearPolicy(
            self.d_state,
            self.d_action,
            weights=theta[:k].reshape(self.weights.shape),
            log_std=theta[k:],
            min_log_std=self.min_log_std,
        )


# ---------------------------------------------------------------------------
# Behavior cloning losses
# ---------------------------------------------------------------------------


def bc_loss(policy, states: np.ndarray, actions: np.ndarray) -> float:
    """Mean negative log likelihood of the expert pairs."""
    if isinstance(policy, SoftmaxTabularPolicy):
        logp = np.log(policy.probs[np.asarray(states, dtype=int), np.asarray(actions, dtype=int)])
        return float(-logp.mean())
    return float(-policy.log_prob(states, actions).mean())


def bc_gradient(policy, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Gradient of `bc_loss` in the policy's parameter vector."""
    if isinstance(policy, SoftmaxTabularPolicy):
        states = np.asarray(states, dtype=int)
        actions = np.asarray(actions, dtype=int)
        probs = policy.probs
        grad = np.zeros_like(policy.logits)
        n = len(states)
        np.add.at(grad, (states, actions), -1.0)
        visit = np.zeros(policy.logits.shape[0])
        np.add.at(visit, states, 1.0)
        grad += visit[:, None] * probs
        return grad.ravel() / n
    return -policy.grad_log_prob(states, actions).mean(axis=0)


# ---------------------------------------------------------------------------
# Advantages
# ---------------------------------------------------------------------------


class LinearCritic:
    """Ridge-regressed state value on [s, s^2, t/H, 1] features."""

    def __init__(self, d_state: int, l2: float = 1e-4):
        self.l2 = l2
        self.coef = np.zeros(2 * d_state + 2)

    def features(self, states: np.ndarray, trel: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        return np.concatenate(
            [states, states**2, trel[:, None], np.ones((len(states), 1))], axis=1
        )

    def predict(self, states: np.ndarray, trel: np.ndarray) -> np.ndarray:
        return self.features(states, trel) @ self.coef

    def fit(self, states: np.ndarray, trel: np.ndarray, targets: np.ndarray) -> None:
        X = self.features(states, trel)
        A = X.T @ X + self.l2 * len(X) * np.eye(X.shape[1])
        self.coef = np.linalg.solve(A, X.T @ np.asarray(targets, dtype=float))


def estimate_advantages(
    costs: np.ndarray, values: np.ndarray, cfg: AdvantageConfig
) -> np.ndarray:
    """Generalized advantage estimates on episode-aligned arrays.

    ``costs`` is (n, H); ``values`` is (n, H + 1) with values[:, H] = 0 at
    the terminal step.  With gamma = lambda = 1 and a zero critic this
    reduces to the raw cost-to-go.
    """
    costs = np.asarray(costs, dtype=float)
    values = np.asarray(values, dtype=float)
    n, H = costs.shape
    adv = np.zeros_like(costs)
    running = np.zeros(n)
    for t in range(H - 1, -1, -1):
        delta = costs[:, t] + cfg.gamma * values[:, t + 1] - values[:, t]
        running = delta + cfg.gamma * cfg.gae_lambda * running
        adv[:, t] = running
    return adv


# ---------------------------------------------------------------------------
# Conjugate gradient and the shared trust-region update
# ---------------------------------------------------------------------------


def conjugate_gradient(
    matvec, b: np.ndarray, iters: int, tol: float = 1e-10
) -> tuple[np.ndarray, bool]:
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    if rs < tol:
        return x, True
    for _ in range(iters):
        Ap = matvec(p)
        denom = float(p @ Ap)
        if denom <= 0 or not np.isfinite(denom):
            return x, False
        alpha = rs / denom
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        if rs_new < tol:
            return x, True
        p = r + (rs_new / rs) * p
        rs = rs_new
    # CG ran out of iterations; declare converged if the residual dropped far
    return x, rs < max(1e-6 * float(b @ b), tol)


def _natural_direction(grad, fisher_matvec, cfg: NPGConfig):
    """Solve the damped Fisher system; fall back to the raw gradient on failure."""
    damped = lambda v: fisher_matvec(v) + cfg.cg_damping * v
    direction, converged = conjugate_gradient(damped, grad, cfg.cg_iters)
    fallback = False
    if not converged or not np.all(np.isfinite(direction)):
        warnings.warn(
            "Fisher solve did not converge; falling back to the plain gradient",
            RuntimeWarning,
            stacklevel=3,
        )
        direction = grad.copy()
        fallback = True
    return direction, {"cg_converged": converged, "fallback": fallback}


def _backtrack(policy, direction, fisher_matvec, kl_fn, cfg: NPGConfig, info: dict):
    """Scale the step to the KL cap, then halve until the cap actually holds."""
    quad = float(direction @ (fisher_matvec(direction) + cfg.cg_damping * direction))
    if quad <= 1e-12 or not np.isfinite(quad):
        info.update(kl=0.0, step_scale=0.0)
        return policy, info
    scale = np.sqrt(2.0 * cfg.max_kl / quad)
    theta = policy.get_params()
    for _ in range(cfg.backtracks + 1):
        candidate = policy.with_params(theta - scale * direction)
        kl = kl_fn(candidate)
        if kl <= cfg.max_kl * (1.0 + 1e-6):
            info.update(kl=float(kl), step_scale=float(scale))
            return candidate, info
        scale *= 0.5
    info.update(kl=0.0, step_scale=0.0)
    return policy, info


def _trust_region_update(policy, grad, fisher_matvec, kl_fn, cfg: NPGConfig):
    direction, info = _natural_direction(grad, fisher_matvec, cfg)
    return _backtrack(policy, direction, fisher_matvec, kl_fn, cfg, info)


# ---------------------------------------------------------------------------
# NPG steps
# ---------------------------------------------------------------------------


def npg_step(
    policy,
    model,
    cost,
    expert_states,
    expert_actions,
    lam_bc: float,
    cfg: NPGConfig,
    adv_cfg: AdvantageConfig | None = None,
    batch_steps: int = 4000,
    seed: int = 0,
    critic: LinearCritic | None = None,
):
    """One natural gradient step inside the learned model.

    Finite models (`FiniteMDP` plus a cost table) use exact occupancies and
    advantages; continuous models (`LinearGaussianEnv` plus a cost callable)
    use ``batch_steps`` of model rollouts.  Returns ``(new_policy, info)``.
    """
    if isinstance(model, FiniteMDP):
        return _npg_step_tabular(policy, model, cost, expert_states, expert_actions, lam_bc, cfg)
    if adv_cfg is None:
        adv_cfg = AdvantageConfig()
    return _npg_step_continuous(
        policy, model, cost, expert_states, expert_actions, lam_bc, cfg, adv_cfg,
        batch_steps, seed, critic,
    )


def _npg_step_tabular(
    policy: SoftmaxTabularPolicy,
    model: FiniteMDP,
    cost: np.ndarray,
    expert_states,
    expert_actions,
    lam_bc: float,
    cfg: NPGConfig,
):
    H = model.horizon
    cost = np.clip(np.asarray(cost, dtype=float), 0.0, 2.0 * H + 1.0)
    S, A = model.n_states, model.n_actions
    probs = policy.probs
    tab = TabularPolicy(probs)

    d_t = occupancy_timewise(model, tab)
    # backward pass for per-step advantages under the clipped cost
    V = np.zeros((H + 1, S))
    M = np.zeros((S, A))  # sum_t d_t(s, a) * A_t(s, a)
    Q_by_t = np.empty((H, S, A))
    for t in range(H - 1, -1, -1):
        Q_by_t[t] = cost + model.transition @ V[t + 1]
        V[t] = np.sum(probs * Q_by_t[t], axis=1)
    for t in range(H):
        M += d_t[t] * (Q_by_t[t] - V[t][:, None])

    # exact policy gradient with respect to the logits
    grad_rl = (M - probs * M.sum(axis=1, keepdims=True)).ravel()

    state_weight = d_t.sum(axis=(0, 2)) / H  # average state occupancy

    def fisher_matvec(v: np.ndarray) -> np.ndarray:
        # block-diagonal softmax Fisher: F_s = w(s) (diag(pi_s) - pi_s pi_s^T)
        Vm = v.reshape(S, A)
        out = state_weight[:, None] * probs * (Vm - np.sum(probs * Vm, axis=1, keepdims=True))
        return out.ravel()

    bc_term = np.zeros_like(grad_rl)
    if lam_bc > 0 and len(expert_states) > 0:
        bc_term = lam_bc * bc_gradient(policy, expert_states, expert_actions)

    def kl_fn(candidate: SoftmaxTabularPolicy) -> float:
        q = candidate.probs
        per_state = np.sum(probs * (np.log(probs + 1e-12) - np.log(q + 1e-12)), axis=1)
        return float(state_weight @ per_state)

    if cfg.precondition_bc:
        new_policy, info = _trust_region_update(policy, grad_rl + bc_term, fisher_matvec, kl_fn, cfg)
    else:
        # precondition only the policy term, add the BC gradient raw
        direction, info = _natural_direction(grad_rl, fisher_matvec, cfg)
        new_policy, info = _backtrack(
            policy, direction + bc_term, fisher_matvec, kl_fn, cfg, info
        )
    info["bc_loss"] = bc_loss(policy, expert_states, expert_actions) if len(expert_states) else 0.0
    return new_policy, info


def _npg_step_continuous(
    policy: GaussianLinearPolicy,
    model_env: LinearGaussianEnv,
    cost_fn,
    expert_states,
    expert_actions,
    lam_bc: float,
    cfg: NPGConfig,
    adv_cfg: AdvantageConfig,
    batch_steps: int,
    seed: int,
    critic: LinearCritic | None,
):
    H = model_env.horizon
    n_episodes = max(1, batch_steps // H)
    rng = np.random.default_rng(seed)

    # rollout batch inside the model
    s = model_env.init_sampler(rng, n_episodes)
    d_s = s.shape[1]
    states = np.empty((n_episodes, H, d_s))
    actions = np.empty((n_episodes, H, policy.d_action))
    costs = np.empty((n_episodes, H))
    for t in range(H):
        a = model_env.clip_actions(policy.act(s, rng))
        states[:, t], actions[:, t] = s, a
        costs[:, t] = np.clip(cost_fn(s, a), 0.0, 2.0 * H + 1.0)
        s = model_env.step(s, a, rng)

    flat_states = states.reshape(-1, d_s)
    flat_actions = actions.reshape(-1, policy.d_action)
    trel = np.tile(np.arange(H) / H, n_episodes)

    if critic is None:
        critic = LinearCritic(d_s, l2=adv_cfg.critic_l2)
    # two half-epochs: fit on raw cost-to-go, then refit on GAE targets
    returns = np.flip(np.cumsum(np.flip(costs, 1), 1), 1)
    values = np.zeros((n_episodes, H + 1))
    for _ in range(adv_cfg.critic_epochs):
        critic.fit(flat_states, trel, returns.ravel())
        values[:, :H] = critic.predict(flat_states, trel).reshape(n_episodes, H)
        adv = estimate_advantages(costs, values, adv_cfg)
        returns = adv + values[:, :H]
    adv_flat = adv.ravel()
    adv_flat = (adv_flat - adv_flat.mean()) / (adv_flat.std() + 1e-8)

    scores = policy.grad_log_prob(flat_states, flat_actions)
    grad_rl = scores.T @ adv_flat / len(adv_flat)

    def fisher_matvec(v: np.ndarray) -> np.ndarray:
        return scores.T @ (scores @ v) / len(scores)

    bc_term = np.zeros_like(grad_rl)
    if lam_bc > 0 and len(expert_states) > 0:
        bc_term = lam_bc * bc_gradient(policy, expert_states, expert_actions)

    def kl_fn(candidate: GaussianLinearPolicy) -> float:
        return policy.kl(candidate, flat_states)

    if cfg.precondition_bc:
        new_policy, info = _trust_region_update(
            policy, grad_rl + bc_term, fisher_matvec, kl_fn, cfg
        )
    else:
        direction, info = _natural_direction(grad_rl, fisher_matvec, cfg)
        new_policy, info = _backtrack(
            policy, direction + bc_term, fisher_matvec, kl_fn, cfg, info
        )
    new_policy.log_std = np.maximum(new_policy.log_std, policy.min_log_std)
    info["bc_loss"] = bc_loss(policy, expert_states, expert_actions) if len(expert_states) else 0.0
    info["mean_cost"] = float(costs.sum(axis=1).mean())
    info["critic"] = critic
    return new_policy, info
