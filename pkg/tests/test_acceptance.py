"""Acceptance checks: one criterion per test, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the verdict lines.
Each criterion enforces its own wall-clock budget.
"""

import itertools
import time

import numpy as np

from milo.data import OfflineDataset, generate_expert, generate_offline, single_trajectory_expert
from milo.diagnostics import (
    concentrability,
    effective_dimension,
    empirical_effective_dimension,
    err_bounds,
    relative_condition_number,
)
from milo.discriminators import finite_class_with_decoys, mmd_best_response
from milo.envs import (
    epsilon_for_score,
    make_gridworld,
    make_linear_tracking,
    make_trap_chain,
    normalized_score,
    random_policy_value,
    tabular_expert,
    tracking_behavior,
    tracking_expert,
    tracking_random,
    trap_chain_behavior,
    continuous_policy_value,
)
from milo.mdp import (
    FiniteMDP,
    TabularPolicy,
    backward_values,
    occupancy,
    occupancy_timewise,
    value,
)
from milo.models import exact_tv_sigma, fit_gp, fit_knr, fit_tabular, rbf_kernel
from milo.policy_opt import exact_value_iteration
from milo.solver import MiloConfig, ablate_pessimism, bc_train, extend_policy_probs, solve_milo


def verdict(num: int, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    status = "PASS" if (ok and elapsed < budget) else "FAIL"
    print(f"criterion {num:2d}: {status} [{elapsed:6.1f}s / {budget:.0f}s] {detail}")
    assert ok, f"criterion {num}: {detail}"
    assert elapsed < budget, f"criterion {num}: exceeded budget ({elapsed:.1f}s)"


def random_mdp(rng, s_max=5, a_max=3, h_max=10) -> FiniteMDP:
    S = int(rng.integers(2, s_max + 1))
    A = int(rng.integers(1, a_max + 1))
    H = int(rng.integers(2, h_max + 1))
    P = rng.dirichlet(np.ones(S), size=(S, A))
    return FiniteMDP(P, rng.random((S, A)), H, rng.dirichlet(np.ones(S)))


def iid_transition_data(rng, env: FiniteMDP, n: int) -> OfflineDataset:
    """Uniform (s, a) draws with next states sampled from the true kernel."""
    s = rng.integers(0, env.n_states, size=n)
    a = rng.integers(0, env.n_actions, size=n)
    u = rng.random(n)
    sp = (u[:, None] > np.cumsum(env.transition[s, a], axis=1)).sum(axis=1)
    return OfflineDataset(s, a, sp)


def test_criterion_01_pessimism_sandwich():
    """Exact-TV penalty brackets the model value gap on random instances."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_low, worst_high = np.inf, -np.inf
    for _ in range(50):
        env = random_mdp(rng)
        S, A, H = env.n_states, env.n_actions, env.horizon
        model = fit_tabular(iid_transition_data(rng, env, int(rng.integers(20, 200))), S, A)
        model_mdp = model.to_mdp(H, env.d0)
        sigma = exact_tv_sigma(model, env)
        b = H * np.minimum(sigma, 2.0)
        for _ in range(100):
            pol = TabularPolicy(rng.dirichlet(np.ones(A), size=S))
            f = rng.uniform(-1.0, 1.0, size=(S, A))
            v_true = value(env, pol, f=f)
            pol_aug = TabularPolicy(extend_policy_probs(pol.probs))
            v_model = value(model_mdp, pol_aug, f=model.augment_cost(f + b))
            gap = v_model - v_true
            bound = (3.0 * H**2 + H) * float(np.sum(occupancy(env, pol) * np.minimum(sigma, 2.0)))
            worst_low = min(worst_low, gap)
            worst_high = max(worst_high, bound - gap)
            assert gap >= -1e-8 and gap <= bound + 1e-8
    elapsed = time.perf_counter() - t0
    verdict(1, worst_low >= -1e-8 and worst_high >= -1e-8,
            f"5000 policy-cost pairs bracketed (min gap {worst_low:.2e}, "
            f"min slack {worst_high:.2e})", elapsed, 60.0)


def test_criterion_02_simulation_lemma():
    """The value difference decomposes exactly across model occupancies."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        env = random_mdp(rng)
        S, A, H = env.n_states, env.n_actions, env.horizon
        env_hat = FiniteMDP(rng.dirichlet(np.ones(S), size=(S, A)), env.cost, H, env.d0)
        f = rng.random((S, A))
        f_hat = rng.random((S, A))
        pol = TabularPolicy(rng.dirichlet(np.ones(A), size=S))
        lhs = value(env_hat, pol, f=f_hat) - value(env, pol, f=f)
        d_hat = occupancy_timewise(env_hat, pol)
        V, _ = backward_values(env, pol, f)
        rhs = 0.0
        for t in range(H):
            delta_p = np.einsum("sak,k->sa", env_hat.transition - env.transition, V[t + 1])
            rhs += float(np.sum(d_hat[t] * (f_hat - f + delta_p)))
        worst = max(worst, abs(lhs - rhs))
        assert abs(lhs - rhs) <= 1e-9
    elapsed = time.perf_counter() - t0
    verdict(2, worst <= 1e-9, f"100 tuples, max residual {worst:.2e}", elapsed, 10.0)


def test_criterion_03_oracle_equivalences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)

    X = rng.normal(size=(60, 5))
    Y = rng.normal(size=(60, 3))
    lam = 0.7
    model = fit_knr(X, Y, lam=lam, noise_std=0.5)
    w_oracle = np.linalg.solve(X.T @ X + lam * np.eye(5), X.T @ Y).T
    ridge_err = float(np.max(np.abs(model.w_hat - w_oracle)))

    zeta = 0.4
    gp = fit_gp(X, Y, kernel=lambda a, b: a @ b.T, noise_std=zeta)
    Xq = rng.normal(size=(20, 5))
    mean_gp = gp.posterior_mean(Xq)
    ridge_w = np.linalg.solve(X.T @ X + zeta**2 * np.eye(5), X.T @ Y)
    mean_ridge = Xq @ ridge_w
    var_gp = gp.posterior_var(Xq)
    inv = np.linalg.solve(X.T @ X + zeta**2 * np.eye(5), Xq.T)
    var_ridge = zeta**2 * np.einsum("qd,dq->q", Xq, inv)
    gp_err = max(float(np.max(np.abs(mean_gp - mean_ridge))),
                 float(np.max(np.abs(var_gp - var_ridge))))

    mu1 = rng.normal(size=24)
    mu2 = rng.normal(size=24)
    _, closed = mmd_best_response(mu1, mu2)
    w = rng.normal(size=24)
    w /= np.linalg.norm(w)
    for _ in range(60):
        w = w + 0.5 * (mu1 - mu2)
        w /= max(np.linalg.norm(w), 1.0)
    mmd_err = abs(closed - float(w @ (mu1 - mu2)))

    env = random_mdp(rng, s_max=3, a_max=2, h_max=3)
    while env.horizon * env.n_states * np.log(env.n_actions) > np.log(5e4):
        env = random_mdp(rng, s_max=3, a_max=2, h_max=3)
    plan = exact_value_iteration(env)
    per_step = list(itertools.product(range(env.n_actions), repeat=env.n_states))
    best = np.inf
    for combo in itertools.product(per_step, repeat=env.horizon):
        acts = np.array(combo)
        V = np.zeros(env.n_states)
        for t in range(env.horizon - 1, -1, -1):
            idx = np.arange(env.n_states)
            V = env.cost[idx, acts[t]] + env.transition[idx, acts[t]] @ V
        best = min(best, float(env.d0 @ V))
    vi_err = abs(plan.value - best)

    ok = ridge_err <= 1e-8 and gp_err <= 1e-6 and mmd_err <= 1e-4 and vi_err <= 1e-12
    elapsed = time.perf_counter() - t0
    verdict(3, ok, f"ridge {ridge_err:.1e}, gp {gp_err:.1e}, mmd {mmd_err:.1e}, "
            f"vi-vs-enumeration {vi_err:.1e}", elapsed, 60.0)


def test_criterion_04_calibration_coverage():
    """The count-model width covers the realized TV error on most redraws.

    The width formula is a deviation bound for the probability (half-l1)
    total variation, so that is the convention checked here.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    S, A, n_o, delta = 6, 2, 10_000, 0.1
    env = FiniteMDP(rng.dirichlet(np.ones(S), size=(S, A)), rng.random((S, A)),
                    10, rng.dirichlet(np.ones(S)))
    violations = 0
    for redraw in range(200):
        r = np.random.default_rng(5000 + redraw)
        model = fit_tabular(iid_transition_data(r, env, n_o), S, A, lam=1.0)
        if np.any(0.5 * exact_tv_sigma(model, env) > model.sigma(delta)):
            violations += 1
    elapsed = time.perf_counter() - t0
    verdict(4, violations <= 30, f"{violations}/200 redraws violated (allowed 30)",
            elapsed, 120.0)


def test_criterion_05_covariate_shift_headline():
    """Few expert pairs + broad offline data: imitation beats cloning."""
    t0 = time.perf_counter()
    env = make_gridworld(8, 8, 50)
    expert_pol = tabular_expert(env)
    v_exp, v_rand = value(env, expert_pol), random_policy_value(env)
    behavior = expert_pol.epsilon_mix(epsilon_for_score(env, expert_pol, 0.45))
    b_score = normalized_score(value(env, behavior), v_exp, v_rand)

    milo_s, bce_s, bcb_s = [], [], []
    for seed in range(5):
        e = generate_expert(env, expert_pol, 20, seed=100 + seed)
        o = generate_offline(env, behavior, 10_000, seed=300 + seed)
        cfg = MiloConfig(iterations=25, lambda_penalty=0.01, solver_mode="exact")
        _, rep = solve_milo(env, e, o, cfg, seed=seed)
        milo_s.append(normalized_score(rep.final_v_true(), v_exp, v_rand))
        bce_s.append(normalized_score(value(env, bc_train(e, env)), v_exp, v_rand))
        bcb_s.append(normalized_score(value(env, bc_train(e, env, o)), v_exp, v_rand))
    m, be, bb = np.median(milo_s), np.median(bce_s), np.median(bcb_s)
    ok = (0.4 <= b_score <= 0.5) and m >= be + 0.2 and m >= bb + 0.1 and m >= 0.85
    elapsed = time.perf_counter() - t0
    verdict(5, ok, f"medians milo {m:.2f}, bc-expert {be:.2f}, bc-both {bb:.2f} "
            f"(behavior {b_score:.2f})", elapsed, 300.0)


def test_criterion_06_pessimism_ablation():
    """Removing the penalty lets the plan dive through the uncovered jump."""
    t0 = time.perf_counter()
    env = make_trap_chain(5, 12)
    expert_pol = tabular_expert(env)
    v_exp, v_rand = value(env, expert_pol), random_policy_value(env)
    behavior = trap_chain_behavior(env)
    gaps = []
    for seed in range(5):
        e = generate_expert(env, expert_pol, 60, seed=100 + seed)
        o = generate_offline(env, behavior, 5000, seed=300 + seed)
        cfg = MiloConfig(iterations=12, lambda_penalty=0.5, solver_mode="exact",
                         discriminator="finite",
                         finite_class=finite_class_with_decoys(env.cost, 8, seed=0))
        arms = ablate_pessimism(env, e, o, cfg, seed=seed)
        s_on = normalized_score(arms["with"][1].final_v_true(), v_exp, v_rand)
        s_off = normalized_score(arms["without"][1].final_v_true(), v_exp, v_rand)
        gaps.append(s_on - s_off)
    med = float(np.median(gaps))
    elapsed = time.perf_counter() - t0
    verdict(6, med >= 0.2, f"median with-minus-without gap {med:.2f}", elapsed, 180.0)


def test_criterion_07_coverage_degradation():
    """Scores decay as the behavior tier drops toward random."""
    t0 = time.perf_counter()
    env = make_gridworld(8, 8, 50)
    expert_pol = tabular_expert(env)
    v_exp, v_rand = value(env, expert_pol), random_policy_value(env)
    medians = []
    for target in (0.5, 0.25, None):
        if target is None:
            behavior = TabularPolicy.uniform(env.n_states, env.n_actions)
        else:
            behavior = expert_pol.epsilon_mix(epsilon_for_score(env, expert_pol, target))
        scores = []
        for seed in range(5):
            e = generate_expert(env, expert_pol, 20, seed=100 + seed)
            o = generate_offline(env, behavior, 1500, seed=300 + seed)
            cfg = MiloConfig(iterations=25, lambda_penalty=0.01, solver_mode="exact")
            _, rep = solve_milo(env, e, o, cfg, seed=seed)
            scores.append(normalized_score(rep.final_v_true(), v_exp, v_rand))
        medians.append(float(np.median(scores)))
    inversions = [max(medians[i + 1] - medians[i], 0.0) for i in range(2)]
    n_inv = sum(1 for g in inversions if g > 0)
    ok = n_inv <= 1 and max(inversions) <= 0.05
    elapsed = time.perf_counter() - t0
    verdict(7, ok, "tier medians 50%/25%/random = "
            + "/".join(f"{m:.2f}" for m in medians), elapsed, 600.0)


def test_criterion_08_sample_size_trend():
    t0 = time.perf_counter()
    env = make_gridworld(8, 8, 50)
    expert_pol = tabular_expert(env)
    v_exp = value(env, expert_pol)
    behavior = expert_pol.epsilon_mix(epsilon_for_score(env, expert_pol, 0.45))
    medians, ses = [], []
    for n_o in (100, 1000, 10_000):
        subs = []
        for seed in range(7):
            e = generate_expert(env, expert_pol, 20, seed=500 + seed)
            o = generate_offline(env, behavior, n_o, seed=700 + seed)
            cfg = MiloConfig(iterations=25, lambda_penalty=0.01, solver_mode="exact")
            _, rep = solve_milo(env, e, o, cfg, seed=seed)
            subs.append(rep.final_v_true() - v_exp)
        medians.append(float(np.median(subs)))
        ses.append(float(np.std(subs) / np.sqrt(len(subs))))
    inversions = [
        (medians[i + 1] - medians[i], ses[i] + ses[i + 1]) for i in range(2)
    ]
    n_inv = sum(1 for gap, _ in inversions if gap > 0)
    trend_ok = n_inv <= 1 and all(gap <= se for gap, se in inversions if gap > 0)

    # Theorem-1 style evaluator with the exact TV width must cover the
    # measured suboptimality on nearly every run.
    chain = make_gridworld(4, 4, 12)
    chain_expert = tabular_expert(chain)
    cv_exp = value(chain, chain_expert)
    chain_behavior = chain_expert.epsilon_mix(
        epsilon_for_score(chain, chain_expert, 0.45)
    )
    d_exp = occupancy(chain, chain_expert)
    covered = 0
    for run in range(100):
        n_o = (100, 1000, 10_000)[run % 3]
        e = generate_expert(chain, chain_expert, 50, seed=900 + run)
        o = generate_offline(chain, chain_behavior, n_o, seed=1300 + run)
        cfg = MiloConfig(iterations=8, lambda_penalty=0.5, solver_mode="exact")
        _, rep = solve_milo(chain, e, o, cfg, seed=run)
        subopt = rep.final_v_true() - cv_exp
        model = fit_tabular(o, chain.n_states, chain.n_actions)
        bounds = err_bounds(exact_tv_sigma(model, chain), n_e=len(e),
                            n_classes=chain.n_states * chain.n_actions,
                            delta=0.1, horizon=chain.horizon, d_expert=d_exp)
        if subopt <= bounds.err_o + bounds.err_e:
            covered += 1
    ok = trend_ok and covered >= 95
    elapsed = time.perf_counter() - t0
    verdict(8, ok, f"median subopt {'/'.join(f'{m:.2f}' for m in medians)}, "
            f"bound covered {covered}/100 runs", elapsed, 600.0)


def test_criterion_09_knr_tracking():
    t0 = time.perf_counter()
    env = make_linear_tracking(20)
    expert_pol = tracking_expert()
    v_exp = continuous_policy_value(env, expert_pol, n=2000, seed=9301)
    v_rand = continuous_policy_value(env, tracking_random(), n=2000, seed=9301)
    behavior = tracking_behavior()
    cfg = MiloConfig(iterations=18, model_kind="knr", discriminator="rff",
                     solver_mode="npg", batch_steps=2000, eval_rollouts=400)
    results = {}
    for label, single in (("pairs", False), ("single-trajectory", True)):
        scores = []
        for seed in range(5):
            if single:
                e = single_trajectory_expert(env, expert_pol, seed=100 + seed)
            else:
                e = generate_expert(env, expert_pol, 40, seed=100 + seed)
            o = generate_offline(env, behavior, 4000, seed=300 + seed)
            _, rep = solve_milo(env, e, o, cfg, seed=seed)
            scores.append(normalized_score(rep.final_v_true(), v_exp, v_rand))
        results[label] = float(np.median(scores))
    ok = results["pairs"] >= 0.8 and results["single-trajectory"] >= 0.9
    elapsed = time.perf_counter() - t0
    verdict(9, ok, f"median scores: pairs {results['pairs']:.2f}, "
            f"single-trajectory {results['single-trajectory']:.2f}", elapsed, 600.0)


def test_criterion_10_diagnostics_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1010)

    d_e = rng.dirichlet(np.ones(12))
    rho = rng.dirichlet(np.ones(12)) + 0.01
    rho /= rho.sum()
    c_pie, _ = concentrability(d_e, rho)
    rel, _ = relative_condition_number(np.diag(d_e), np.diag(rho))
    onehot_err = abs(c_pie - rel)

    X = rng.normal(size=(40, 3))
    zeta = 0.3
    gp = fit_gp(X, rng.normal(size=(40, 2)), kernel=rbf_kernel(1.0), noise_std=zeta)
    lhs = float(np.sum(gp.posterior_var(X))) / zeta**2
    mu_hat = np.maximum(np.linalg.eigvalsh(rbf_kernel(1.0)(X, X)), 0.0)
    rhs = float(np.sum(mu_hat / (mu_hat + zeta**2)))
    trace_err = abs(lhs - rhs)

    mu = np.sort(rng.random(10))[::-1]
    d_stars = [effective_dimension(mu, n, zeta) for n in (10, 100, 1000, 10_000)]
    gains, d_hats = [], []
    Xbig = rng.normal(size=(200, 3))
    for n in (25, 50, 100, 200):
        gp_n = fit_gp(Xbig[:n], np.zeros((n, 1)), kernel=rbf_kernel(1.0), noise_std=zeta)
        gains.append(gp_n.information_gain())
        gram = rbf_kernel(1.0)(Xbig[:n], Xbig[:n])
        d_hats.append(empirical_effective_dimension(np.linalg.eigvalsh(gram), zeta))
    mono = (all(a <= b for a, b in zip(d_stars, d_stars[1:]))
            and all(a <= b + 1e-12 for a, b in zip(gains, gains[1:]))
            and all(a <= b for a, b in zip(d_hats, d_hats[1:])))

    ok = onehot_err <= 1e-8 and trace_err <= 1e-8 and mono
    elapsed = time.perf_counter() - t0
    verdict(10, ok, f"one-hot identity {onehot_err:.1e}, trace identity {trace_err:.1e}, "
            f"monotone gains/dims {mono}", elapsed, 30.0)
