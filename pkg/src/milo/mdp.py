"""Finite and linear-Gaussian environments plus exact dynamic programming.

Conventions used throughout:

* Episodes run for exactly ``horizon`` steps, t = 1..H.  Costs lie in [0, 1]
  and are functions of (state, action).
* The (average) state-action occupancy of a policy is
  ``d(s, a) = (1/H) * sum_t Pr[s_t = s, a_t = a]``, so the H-step value of a
  cost table f satisfies ``V = H * <d, f>``.
* Transition tables may be sub-stochastic (rows summing to < 1) only when
  they come from a fitted model; the missing mass is routed to an absorbing
  sink state with zero cost (see `models.TabularModel.to_mdp`).  Environments
  constructed here validate full stochasticity.

Policies are stationary.  Time-indexed action tables appear only inside the
planner (`policy_opt.exact_value_iteration`) and in the helpers suffixed
``_nonstationary`` below.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12


@dataclass
class FiniteMDP:
    """Episodic finite MDP with step costs in [0, 1].

    Attributes
    ----------
    transition : (S, A, S) array, rows sum to 1 within 1e-12.
    cost : (S, A) array with entries in [0, 1].
    horizon : number of steps per episode.
    d0 : (S,) initial state distribution.
    """

    transition: np.ndarray
    cost: np.ndarray
    horizon: int
    d0: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        self.transition = np.asarray(self.transition, dtype=float)
        self.cost = np.asarray(self.cost, dtype=float)
        self.d0 = np.asarray(self.d0, dtype=float)
        S, A, S2 = self.transition.shape
        if S != S2:
            raise ValueError(f"transition must be (S, A, S), got {self.transition.shape}")
        if self.cost.shape != (S, A):
            raise ValueError(f"cost must be (S, A) = {(S, A)}, got {self.cost.shape}")
        if self.d0.shape != (S,):
            raise ValueError(f"d0 must be (S,) = {(S,)}, got {self.d0.shape}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        rows = self.transition.sum(axis=2)
        if np.any(np.abs(rows - 1.0) > ROW_SUM_TOL) or np.any(self.transition < -ROW_SUM_TOL):
            raise ValueError("transition rows must be probability distributions")
        if np.any(self.cost < 0.0) or np.any(self.cost > 1.0):
            raise ValueError("cost entries must lie in [0, 1]")
        if abs(self.d0.sum() - 1.0) > ROW_SUM_TOL or np.any(self.d0 < -ROW_SUM_TOL):
            raise ValueError("d0 must be a probability distribution")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def to_json(self) -> str:
        """Serialize to a JSON document (row-major flat arrays)."""
        doc = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "horizon": self.horizon,
            "name": self.name,
            "d0": self.d0.tolist(),
            "transition": self.transition.ravel().tolist(),
            "cost": self.cost.ravel().tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "FiniteMDP":
        doc = json.loads(text)
        S, A = doc["n_states"], doc["n_actions"]
        return cls(
            transition=np.array(doc["transition"], dtype=float).reshape(S, A, S),
            cost=np.array(doc["cost"], dtype=float).reshape(S, A),
            horizon=int(doc["horizon"]),
            d0=np.array(doc["d0"], dtype=float),
            name=doc.get("name", ""),
        )


@dataclass
class TabularPolicy:
    """Stationary stochastic policy over a finite state-action space."""

    probs: np.ndarray  # (S, A), rows sum to 1

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2:
            raise ValueError("probs must be (S, A)")
        rows = self.probs.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9) or np.any(self.probs < -1e-12):
            raise ValueError("policy rows must be probability distributions")

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def greedy(cls, actions: np.ndarray, n_actions: int) -> "TabularPolicy":
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)

    def epsilon_mix(self, eps: float) -> "TabularPolicy":
        """Mix with the uniform policy: (1 - eps) * pi + eps * uniform."""
        n_actions = self.probs.shape[1]
        return TabularPolicy((1.0 - eps) * self.probs + eps / n_actions)


@dataclass
class Trajectory:
    """One episode: arrays of equal length <= horizon."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    costs: np.ndarray

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class LinearGaussianEnv:
    """Episodic system s' = W @ phi(s, a) + noise, clipped to a box.

    ``features`` must map a batch of states (n, d_s) and actions (n, d_a) to
    features (n, d_phi); outputs are rescaled onto the unit ball whenever a
    row exceeds norm 1.  Costs are arbitrary callables clipped into [0, 1].
    """

    w_star: np.ndarray  # (d_s, d_phi)
    features: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise_std: float
    horizon: int
    init_sampler: Callable[[np.random.Generator, int], np.ndarray]
    cost_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    state_low: np.ndarray
    state_high: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray
    name: str = ""

    @property
    def d_state(self) -> int:
        return self.w_star.shape[0]

    def featurize(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        phi = np.asarray(self.features(states, actions), dtype=float)
        norms = np.linalg.norm(phi, axis=-1, keepdims=True)
        return phi / np.maximum(norms, 1.0)

    def clip_actions(self, actions: np.ndarray) -> np.ndarray:
        return np.clip(actions, self.action_low, self.action_high)

    def step(self, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        actions = self.clip_actions(actions)
        phi = self.featurize(states, actions)
        mean = phi @ self.w_star.T
        nxt = mean + self.noise_std * rng.standard_normal(mean.shape)
        return np.clip(nxt, self.state_low, self.state_high)

    def costs(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.clip(self.cost_fn(states, self.clip_actions(actions)), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Exact dynamic programming on finite MDPs
# ---------------------------------------------------------------------------


def occupancy_timewise(mdp: FiniteMDP, policy: TabularPolicy) -> np.ndarray:
    """Per-step state-action occupancies, shape (H, S, A); each slice sums to 1."""
    pi = policy.probs
    d_state = mdp.d0.copy()
    out = np.empty((mdp.horizon, mdp.n_states, mdp.n_actions))
    for t in range(mdp.horizon):
        dsa = d_state[:, None] * pi
        out[t] = dsa
        # next-state marginal: sum_{s,a} d(s,a) P(s'|s,a)
        d_state = np.einsum("sa,sak->k", dsa, mdp.transition)
    return out


def occupancy(mdp: FiniteMDP, policy: TabularPolicy) -> np.ndarray:
    """Average state-action occupancy d(s, a); sums to 1 within 1e-10."""
    return occupancy_timewise(mdp, policy).mean(axis=0)


def backward_values(
    mdp: FiniteMDP, policy: TabularPolicy, f: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backward policy evaluation under cost table f.

    Returns (V, Q) with V of shape (H + 1, S) and Q of shape (H, S, A),
    where V[t] is the cost-to-go over the remaining H - t steps (V[H] = 0).
    """
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("cost table must be finite")
    pi = policy.probs
    V = np.zeros((mdp.horizon + 1, mdp.n_states))
    Q = np.empty((mdp.horizon, mdp.n_states, mdp.n_actions))
    for t in range(mdp.horizon - 1, -1, -1):
        Q[t] = f + mdp.transition @ V[t + 1]
        V[t] = np.sum(pi * Q[t], axis=1)
    return V, Q


def value(mdp: FiniteMDP, policy: TabularPolicy, f: np.ndarray | None = None) -> float:
    """Expected total cost of ``policy`` over H steps, under cost table f.

    Equals ``horizon * <occupancy, f>`` up to numerical error.
    """
    if f is None:
        f = mdp.cost
    V, _ = backward_values(mdp, policy, f)
    return float(mdp.d0 @ V[0])


def value_nonstationary(
    mdp: FiniteMDP, actions_by_step: np.ndarray, f: np.ndarray | None = None
) -> float:
    """Expected total cost of a deterministic time-indexed policy (H, S) ints."""
    if f is None:
        f = mdp.cost
    f = np.asarray(f, dtype=float)
    V = np.zeros(mdp.n_states)
    for t in range(mdp.horizon - 1, -1, -1):
        acts = actions_by_step[t]
        idx = np.arange(mdp.n_states)
        V = f[idx, acts] + np.einsum("sk,k->s", mdp.transition[idx, acts], V)
    return float(mdp.d0 @ V)


def occupancy_timewise_nonstationary(mdp: FiniteMDP, probs_by_step: np.ndarray) -> np.ndarray:
    """Per-step occupancies for a stochastic time-indexed policy (H, S, A)."""
    d_state = mdp.d0.copy()
    out = np.empty((mdp.horizon, mdp.n_states, mdp.n_actions))
    for t in range(mdp.horizon):
        dsa = d_state[:, None] * probs_by_step[t]
        out[t] = dsa
        d_state = np.einsum("sa,sak->k", dsa, mdp.transition)
    return out


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------


def rollout_batch(
    mdp: FiniteMDP, policy: TabularPolicy, n: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample n episodes; returns (states, actions, next_states, costs), each (n, H).

    Deterministic given ``seed``.
    """
    rng = np.random.default_rng(seed)
    H, S = mdp.horizon, mdp.n_states
    states = np.empty((n, H), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    next_states = np.empty((n, H), dtype=np.int64)

    pi_cdf = np.cumsum(policy.probs, axis=1)
    trans_cdf = np.cumsum(mdp.transition, axis=2)
    d0_cdf = np.cumsum(mdp.d0)

    A = mdp.n_actions
    s = np.searchsorted(d0_cdf, rng.random(n), side="right").clip(max=S - 1)
    for t in range(H):
        u = rng.random(n)
        a = (pi_cdf[s] < u[:, None]).sum(axis=1).clip(max=A - 1)
        u = rng.random(n)
        sp = (trans_cdf[s, a] < u[:, None]).sum(axis=1).clip(max=S - 1)
        states[:, t], actions[:, t], next_states[:, t] = s, a, sp
        s = sp
    costs = mdp.cost[states, actions]
    return states, actions, next_states, costs


def rollout(mdp: FiniteMDP, policy: TabularPolicy, n: int, seed: int) -> list[Trajectory]:
    """Sample n episodes as Trajectory objects; deterministic given seed."""
    states, actions, next_states, costs = rollout_batch(mdp, policy, n, seed)
    return [
        Trajectory(states[i], actions[i], next_states[i], costs[i]) for i in range(len(states))
    ]


def rollout_continuous(
    env: LinearGaussianEnv, policy, n: int, seed: int
) -> list[Trajectory]:
    """Sample n episodes in a linear-Gaussian system.

    ``policy`` must expose ``act(states, rng) -> actions``; actions are
    clipped to the environment's box before stepping.
    """
    rng = np.random.default_rng(seed)
    s = env.init_sampler(rng, n)
    states = np.empty((n, env.horizon, s.shape[1]))
    actions_list = []
    next_states = np.empty_like(states)
    costs = np.empty((n, env.horizon))
    for t in range(env.horizon):
        a = env.clip_actions(np.asarray(policy.act(s, rng), dtype=float))
        sp = env.step(s, a, rng)
        states[:, t] = s
        actions_list.append(a)
        next_states[:, t] = sp
        costs[:, t] = env.costs(s, a)
        s = sp
    acts = np.stack(actions_list, axis=1)
    return [
        Trajectory(states[i], acts[i], next_states[i], costs[i]) for i in range(n)
    ]


# ---------------------------------------------------------------------------
# Simulation gap
# ---------------------------------------------------------------------------


def simulation_gap(
    mdp: FiniteMDP,
    policy: TabularPolicy,
    f: np.ndarray,
    transition_hat: np.ndarray,
    f_hat: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Decompose the value gap between (P, f) and (P_hat, f_hat) for one policy.

    Returns ``(lhs, rhs_terms)`` where ``lhs = V_{P,f} - V_{P_hat,f_hat}`` is
    computed by two independent backward passes and ``rhs_terms[t]`` is the
    exact per-step expectation

        E_{(s,a) ~ d_t} [ f - f_hat + (P - P_hat)(.|s,a) . V_hat_{t+1} ]

    with d_t the step-t occupancy under the true dynamics and V_hat the
    cost-to-go under the model.  The identity ``lhs == rhs_terms.sum()``
    holds exactly (up to float error).  ``transition_hat`` rows may be
    sub-stochastic; missing mass contributes zero continuation value.
    """
    f = np.asarray(f, dtype=float)
    f_hat = np.asarray(f_hat, dtype=float)
    transition_hat = np.asarray(transition_hat, dtype=float)

    v_true = value(mdp, policy, f)
    # backward pass under the model; sub-stochastic rows handled implicitly
    pi = policy.probs
    H = mdp.horizon
    V_hat = np.zeros((H + 1, mdp.n_states))
    for t in range(H - 1, -1, -1):
        Q = f_hat + transition_hat @ V_hat[t + 1]
        V_hat[t] = np.sum(pi * Q, axis=1)
    v_model = float(mdp.d0 @ V_hat[0])
    lhs = v_true - v_model

    d_t = occupancy_timewise(mdp, policy)
    rhs_terms = np.empty(H)
    for t in range(H):
        gap = f - f_hat + (mdp.transition - transition_hat) @ V_hat[t + 1]
        rhs_terms[t] = float(np.sum(d_t[t] * gap))
    return lhs, rhs_terms
