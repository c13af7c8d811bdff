"""Built-in benchmark environments and their reference policies.

Tabular scenarios are goal-reaching problems with unit step cost away from
an absorbing goal, so the optimal stationary policy is a shortest path and
exact value iteration recovers it.  The continuous scenario is a
two-dimensional tracking problem whose expert is the stationary LQ gain from
a Riccati recursion; the true optimum of the clipped, cost-saturated system
differs only out on the box boundary.

`normalized_score` rescales values so the expert sits at 1 and the uniform
random policy at 0 (higher is better even though everything inside is a
cost).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from milo.mdp import FiniteMDP, LinearGaussianEnv, TabularPolicy, value
from milo.policy_opt import GaussianLinearPolicy, exact_value_iteration

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3


def make_gridworld(
    width: int = 8,
    height: int = 8,
    horizon: int = 50,
    p_slip: float = 0.1,
    start: tuple[int, int] = (0, 0),
    goal: tuple[int, int] | None = None,
) -> FiniteMDP:
    """Grid with moves {up, down, left, right}; slips spread over the
    other three directions; walls bounce.  Goal is absorbing with cost 0,
    every other pair costs 1."""
    if goal is None:
        goal = (height - 1, width - 1)
    S = width * height
    A = 4

    def sid(r, c):
        return r * width + c

    moves = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
    transition = np.zeros((S, A, S))
    cost = np.ones((S, A))
    goal_id = sid(*goal)
    for r in range(height):
        for c in range(width):
            s = sid(r, c)
            if s == goal_id:
                transition[s, :, s] = 1.0
                cost[s, :] = 0.0
                continue
            for a in range(A):
                for b in range(A):
                    prob = (1.0 - p_slip) if b == a else p_slip / 3.0
                    dr, dc = moves[b]
                    rr = min(max(r + dr, 0), height - 1)
                    cc = min(max(c + dc, 0), width - 1)
                    transition[s, a, sid(rr, cc)] += prob
    d0 = np.zeros(S)
    d0[sid(*start)] = 1.0
    return FiniteMDP(transition, cost, horizon, d0, name=f"gridworld-{width}x{height}")


def make_chain(n: int = 6, horizon: int = 15, p_stay: float = 0.1) -> FiniteMDP:
    """Line of states, action 1 steps right (may stall), action 0 steps left.

    The last state is the absorbing zero-cost goal.
    """
    transition = np.zeros((n, 2, n))
    cost = np.ones((n, 2))
    for s in range(n - 1):
        transition[s, 1, min(s + 1, n - 1)] += 1.0 - p_stay
        transition[s, 1, s] += p_stay
        transition[s, 0, max(s - 1, 0)] = 1.0
    transition[n - 1, :, n - 1] = 1.0
    cost[n - 1, :] = 0.0
    d0 = np.zeros(n)
    d0[0] = 1.0
    return FiniteMDP(transition, cost, horizon, d0, name=f"chain-{n}")


def make_trap_chain(length: int = 5, horizon: int = 12) -> FiniteMDP:
    """Corridor with a third 'jump' action that truly leads to an absorbing pit.

    States 0..length-1 form the corridor, length-1 is the zero-cost goal and
    state `length` is the pit (absorbing, cost 1).  Behavior policies that
    never jump leave the jump pairs totally unobserved, which is exactly the
    regime where an unpenalized model planner hallucinates a free dead end.
    """
    n = length + 1
    pit = length
    goal = length - 1
    transition = np.zeros((n, 3, n))
    cost = np.ones((n, 3))
    for s in range(length):
        if s == goal:
            transition[s, :, s] = 1.0
            cost[s, :] = 0.0
            continue
        transition[s, 1, min(s + 1, goal)] = 1.0   # right
        transition[s, 0, max(s - 1, 0)] = 1.0      # left
        transition[s, 2, pit] = 1.0                # jump
    transition[pit, :, pit] = 1.0
    d0 = np.zeros(n)
    d0[0] = 1.0
    return FiniteMDP(transition, cost, horizon, d0, name=f"trap-chain-{length}")


def trap_chain_behavior(env: FiniteMDP, p_right: float = 0.7) -> TabularPolicy:
    """Corridor wanderer that never jumps; support {left, right} only."""
    probs = np.zeros((env.n_states, 3))
    probs[:, 1] = p_right
    probs[:, 0] = 1.0 - p_right
    return TabularPolicy(probs)


def tabular_expert(env: FiniteMDP) -> TabularPolicy:
    """Stationary greedy policy from exact value iteration on the true cost."""
    return exact_value_iteration(env).policy


def normalized_score(v_policy: float, v_expert: float, v_random: float) -> float:
    """1 at the expert's cost, 0 at the random policy's cost."""
    denom = v_random - v_expert
    if abs(denom) < 1e-12:
        return 0.0
    return (v_random - v_policy) / denom


def random_policy_value(env: FiniteMDP) -> float:
    return value(env, TabularPolicy.uniform(env.n_states, env.n_actions))


def epsilon_for_score(
    env: FiniteMDP, expert: TabularPolicy, target: float, tol: float = 0.01
) -> float:
    """Bisection on the exploration rate of an epsilon-mixed expert so its
    exact normalized score lands on ``target``.  Assumes the score decreases
    as epsilon grows, which holds for the goal-reaching scenarios here."""
    v_expert = value(env, expert)
    v_random = random_policy_value(env)

    def score(eps: float) -> float:
        return normalized_score(value(env, expert.epsilon_mix(eps)), v_expert, v_random)

    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        s = score(mid)
        if abs(s - target) <= tol:
            return mid
        if s > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Continuous tracking scenario
# ---------------------------------------------------------------------------


def _riccati_gain(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    P = Q.copy()
    for _ in range(500):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ (A - B @ K)
        if np.max(np.abs(P_next - P)) < 1e-12:
            P = P_next
            break
        P = P_next
    return np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


TRACK_A = np.array([[1.0, 0.08], [-0.02, 0.98]])
TRACK_B = np.array([[0.12, 0.0], [0.0, 0.12]])
TRACK_STATE_BOUND = 3.0
TRACK_ACTION_BOUND = 2.0
TRACK_NOISE = 0.05


def make_linear_tracking(horizon: int = 20, noise_std: float = TRACK_NOISE) -> LinearGaussianEnv:
    """Drive a slightly drifting 2-D point mass to the origin.

    Cost is a saturated quadratic; features are the concatenated, box-scaled
    (state, action) so the true dynamics are exactly linear in them.
    """
    scale = float(np.sqrt(2 * TRACK_STATE_BOUND**2 + 2 * TRACK_ACTION_BOUND**2))
    w_star = scale * np.concatenate([TRACK_A, TRACK_B], axis=1)

    def features(states, actions):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        return np.concatenate([states, actions], axis=1) / scale

    def cost_fn(states, actions):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        return np.minimum(
            (np.sum(states**2, axis=1) + 0.1 * np.sum(actions**2, axis=1)) / 6.0, 1.0
        )

    def init_sampler(rng, n):
        # start in a band away from the origin so there is something to do
        base = np.array([2.0, 0.0])
        return base + 0.25 * rng.standard_normal((n, 2))

    return LinearGaussianEnv(
        w_star=w_star,
        features=features,
        noise_std=noise_std,
        horizon=horizon,
        init_sampler=init_sampler,
        cost_fn=cost_fn,
        state_low=np.full(2, -TRACK_STATE_BOUND),
        state_high=np.full(2, TRACK_STATE_BOUND),
        action_low=np.full(2, -TRACK_ACTION_BOUND),
        action_high=np.full(2, TRACK_ACTION_BOUND),
        name="linear-tracking",
    )


def tracking_expert(log_std: float = -2.0) -> GaussianLinearPolicy:
    K = _riccati_gain(TRACK_A, TRACK_B, np.eye(2), 0.1 * np.eye(2))
    weights = np.concatenate([-K, np.zeros((2, 1))], axis=1)
    return GaussianLinearPolicy(2, 2, weights=weights, log_std=np.full(2, log_std))


def tracking_behavior(gain_scale: float = 0.25, noise_scale: float = 0.75) -> GaussianLinearPolicy:
    """A weakened expert gain driven with large exploration noise.

    Scores roughly 0.75 normalized: good coverage of the expert's route to
    the origin but clearly worse control.
    """
    expert = tracking_expert()
    return GaussianLinearPolicy(
        2, 2, weights=gain_scale * expert.weights, log_std=np.full(2, float(np.log(noise_scale)))
    )


def tracking_random() -> GaussianLinearPolicy:
    return GaussianLinearPolicy(2, 2, weights=np.zeros((2, 3)), log_std=np.zeros(2))


def continuous_policy_value(env: LinearGaussianEnv, policy, n: int = 2000, seed: int = 0) -> float:
    """Monte Carlo estimate of the expected episode cost."""
    from milo.mdp import rollout_continuous

    trajs = rollout_continuous(env, policy, n, seed)
    return float(np.mean([t.costs.sum() for t in trajs]))
