"""Planner and NPG machinery against enumeration and dense-algebra oracles."""

import itertools
import warnings

import numpy as np
import pytest

from milo.mdp import FiniteMDP, TabularPolicy, value, value_nonstationary
from milo.policy_opt import (
    AdvantageConfig,
    GaussianLinearPolicy,
    LinearCritic,
    NPGConfig,
    SoftmaxTabularPolicy,
    _natural_direction,
    bc_gradient,
    bc_loss,
    conjugate_gradient,
    estimate_advantages,
    exact_value_iteration,
    npg_step,
)
from tests.conftest import random_mdp, random_policy


class TestExactValueIteration:
    def test_matches_full_nonstationary_enumeration(self, rng):
        # exhaustive search over all |A|^(S*H) deterministic time-indexed
        # policies; the backward pass must hit that optimum exactly
        for _ in range(10):
            mdp = random_mdp(rng, 3, 2, 3)
            plan = exact_value_iteration(mdp)
            per_step_tables = list(itertools.product(range(2), repeat=3))
            best = np.inf
            for combo in itertools.product(per_step_tables, repeat=3):
                v = value_nonstationary(mdp, np.array(combo))
                best = min(best, v)
            assert plan.value == pytest.approx(best, abs=1e-12)

    def test_beats_every_stationary_policy(self, rng):
        for _ in range(10):
            mdp = random_mdp(rng, 4, 2, 5)
            plan = exact_value_iteration(mdp)
            for acts in itertools.product(range(2), repeat=4):
                pol = TabularPolicy.greedy(np.array(acts), 2)
                assert plan.value <= value(mdp, pol) + 1e-9

    def test_tie_break_lowest_action(self):
        transition = np.zeros((2, 3, 2))
        transition[:, :, 1] = 1.0
        cost = np.array([[0.5, 0.5, 0.5], [0.0, 0.0, 0.0]])
        mdp = FiniteMDP(transition, cost, 4, np.array([1.0, 0.0]))
        plan = exact_value_iteration(mdp)
        assert np.all(plan.greedy_by_step == 0)

    def test_stationary_export_is_step_one_greedy(self, rng):
        mdp = random_mdp(rng, 4, 3, 6)
        plan = exact_value_iteration(mdp)
        np.testing.assert_array_equal(np.argmax(plan.policy.probs, axis=1), plan.greedy_by_step[0])

    def test_probs_by_step_one_hot(self, rng):
        mdp = random_mdp(rng, 3, 2, 4)
        plan = exact_value_iteration(mdp)
        probs = plan.probs_by_step(2)
        np.testing.assert_allclose(probs.sum(axis=2), 1.0)
        assert plan.value == pytest.approx(
            value_nonstationary(mdp, plan.greedy_by_step), abs=1e-12
        )


class TestConjugateGradient:
    def test_matches_dense_solve_on_softmax_fisher(self, rng):
        # genuine 3-state softmax Fisher, dense assembled in the test
        probs = rng.dirichlet(np.ones(2), size=3)
        weight = rng.dirichlet(np.ones(3))
        p = 3 * 2
        F = np.zeros((p, p))
        for s in range(3):
            block = weight[s] * (np.diag(probs[s]) - np.outer(probs[s], probs[s]))
            F[s * 2 : s * 2 + 2, s * 2 : s * 2 + 2] = block
        damping = 1e-5
        g = rng.standard_normal(p)
        x, converged = conjugate_gradient(lambda v: F @ v + damping * v, g, iters=50)
        assert converged
        oracle = np.linalg.solve(F + damping * np.eye(p), g)
        np.testing.assert_allclose(x, oracle, atol=1e-6)

    def test_nonconvergence_triggers_fallback_warning(self):
        g = np.array([1.0, 2.0])
        with pytest.warns(RuntimeWarning, match="plain gradient"):
            direction, info = _natural_direction(
                g, lambda v: np.zeros_like(v), NPGConfig(cg_iters=3, cg_damping=0.0)
            )
        assert info["fallback"]
        np.testing.assert_array_equal(direction, g)


class TestAdvantages:
    def test_undiscounted_zero_critic_is_cost_to_go(self, rng):
        costs = rng.random((5, 4))
        values = np.zeros((5, 5))
        cfg = AdvantageConfig(gamma=1.0, gae_lambda=1.0)
        adv = estimate_advantages(costs, values, cfg)
        expected = np.flip(np.cumsum(np.flip(costs, 1), 1), 1)
        np.testing.assert_allclose(adv, expected, atol=1e-12)

    def test_gae_recursion_hand_check(self):
        costs = np.array([[1.0, 2.0]])
        values = np.array([[0.5, 0.25, 0.0]])
        cfg = AdvantageConfig(gamma=0.9, gae_lambda=0.8)
        adv = estimate_advantages(costs, values, cfg)
        d1 = 2.0 + 0.0 - 0.25
        d0 = 1.0 + 0.9 * 0.25 - 0.5
        np.testing.assert_allclose(adv[0], [d0 + 0.72 * d1, d1])

    def test_critic_fits_linear_values(self, rng):
        critic = LinearCritic(2, l2=1e-6)
        states = rng.standard_normal((200, 2))
        trel = rng.random(200)
        targets = states @ np.array([1.5, -0.5]) + 2.0
        critic.fit(states, trel, targets)
        pred = critic.predict(states, trel)
        np.testing.assert_allclose(pred, targets, atol=1e-2)


class TestBCGradients:
    def test_softmax_finite_difference(self, rng):
        pol = SoftmaxTabularPolicy(rng.standard_normal((4, 3)))
        states = rng.integers(0, 4, size=30)
        actions = rng.integers(0, 3, size=30)
        grad = bc_gradient(pol, states, actions)
        eps = 1e-6
        theta = pol.get_params()
        num = np.zeros_like(theta)
        for i in range(len(theta)):
            up, dn = theta.copy(), theta.copy()
            up[i] += eps
            dn[i] -= eps
            num[i] = (
                bc_loss(pol.with_params(up), states, actions)
                - bc_loss(pol.with_params(dn), states, actions)
            ) / (2 * eps)
        np.testing.assert_allclose(grad, num, rtol=1e-5, atol=1e-8)

    def test_gaussian_finite_difference(self, rng):
        pol = GaussianLinearPolicy(2, 2, weights=rng.standard_normal((2, 3)), log_std=np.array([-0.3, -0.5]))
        states = rng.standard_normal((25, 2))
        actions = rng.standard_normal((25, 2))
        grad = bc_gradient(pol, states, actions)
        eps = 1e-6
        theta = pol.get_params()
        num = np.zeros_like(theta)
        for i in range(len(theta)):
            up, dn = theta.copy(), theta.copy()
            up[i] += eps
            dn[i] -= eps
            num[i] = (
                bc_loss(pol.with_params(up), states, actions)
                - bc_loss(pol.with_params(dn), states, actions)
            ) / (2 * eps)
        np.testing.assert_allclose(grad, num, rtol=1e-5, atol=1e-8)


class TestGaussianPolicy:
    def test_log_prob_matches_manual(self, rng):
        pol = GaussianLinearPolicy(2, 1, weights=rng.standard_normal((1, 3)), log_std=np.array([-0.1]))
        s = rng.standard_normal((5, 2))
        a = rng.standard_normal((5, 1))
        mu = pol.mean(s)
        std = np.exp(-0.1)
        manual = -0.5 * ((a - mu) / std) ** 2 - np.log(std) - 0.5 * np.log(2 * np.pi)
        np.testing.assert_allclose(pol.log_prob(s, a), manual.ravel(), atol=1e-12)

    def test_kl_properties(self, rng):
        pol = GaussianLinearPolicy(2, 2, weights=rng.standard_normal((2, 3)))
        other = pol.with_params(pol.get_params() + 0.1)
        s = rng.standard_normal((10, 2))
        assert pol.kl(pol, s) == pytest.approx(0.0, abs=1e-12)
        assert pol.kl(other, s) > 0.0

    def test_log_std_floor(self):
        pol = GaussianLinearPolicy(1, 1, log_std=np.array([-5.0]))
        assert pol.log_std[0] == -2.0


class TestNPGStep:
    def test_tabular_reduces_cost(self, rng):
        mdp = random_mdp(rng, 4, 2, 6)
        pol = SoftmaxTabularPolicy.uniform(4, 2)
        v0 = value(mdp, pol.as_tabular())
        cfg = NPGConfig()
        for _ in range(25):
            pol, info = npg_step(pol, mdp, mdp.cost, [], [], 0.0, cfg)
            assert info["kl"] <= 0.0100001
        v1 = value(mdp, pol.as_tabular())
        plan = exact_value_iteration(mdp)
        assert v1 < v0 - 0.3 * (v0 - plan.value)

    def test_tabular_bc_only_matches_expert_actions(self, rng):
        mdp = random_mdp(rng, 3, 2, 4)
        pol = SoftmaxTabularPolicy.uniform(3, 2)
        states = np.array([0, 1, 2] * 10)
        actions = np.array([1, 0, 1] * 10)
        cfg = NPGConfig()
        for _ in range(60):
            pol, _ = npg_step(pol, mdp, np.zeros((3, 2)), states, actions, 5.0, cfg)
        probs = pol.probs
        assert probs[0, 1] > 0.8 and probs[1, 0] > 0.8 and probs[2, 1] > 0.8

    def test_continuous_reduces_cost(self, rng):
        from milo.envs import make_linear_tracking

        env = make_linear_tracking(horizon=10)
        pol = GaussianLinearPolicy(env.d_state, 2)
        cfg = NPGConfig()
        adv = AdvantageConfig()

        def cost_fn(s, a):
            return env.costs(s, a)

        critic = None
        first = None
        for k in range(15):
            pol, info = npg_step(
                pol, env, cost_fn, [], [], 0.0, cfg, adv, batch_steps=2000, seed=100 + k,
                critic=critic,
            )
            critic = info["critic"]
            if first is None:
                first = info["mean_cost"]
        assert info["mean_cost"] < first
