"""The adversarial imitation solver and its offline-RL and cloning baselines.

`solve_milo` alternates a best-response cost player with a policy update
against the penalized cost

    g = (1 - lambda_penalty) * (f + offset) + lambda_penalty * b

where b is the model-uncertainty penalty and ``offset`` lifts signed
discriminators into a nonnegative range.  The offset is accounted on the
model's absorbing sink as well, so it cancels from every policy comparison
and exists purely to keep the cost range compatible with clipping.

Finite problems support an exact mode (full value-iteration best response
against the current cost, occupancies computed in closed form) and an
incremental natural-gradient mode; continuous problems always use the
natural-gradient path with rollouts inside the learned model.

Policies over a sink-augmented model carry one extra state row; the rows
over real states are what gets evaluated in the true environment.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from milo.data import ExpertDataset, OfflineDataset
from milo.discriminators import (
    FiniteClass,
    OneHotMap,
    best_response_finite,
    empirical_occupancy,
    make_rff,
    mmd_best_response,
)
from milo.mdp import (
    FiniteMDP,
    LinearGaussianEnv,
    TabularPolicy,
    occupancy,
    occupancy_timewise_nonstationary,
    value,
    value_nonstationary,
)
from milo.models import (
    GPModel,
    KNRModel,
    TabularModel,
    exact_tv_sigma,
    fit_ensemble,
    fit_gp_from_dataset,
    fit_knr_from_dataset,
    fit_tabular,
    knr_generative_env,
    penalty_from_sigma,
)
from milo.policy_opt import (
    AdvantageConfig,
    GaussianLinearPolicy,
    LinearCritic,
    NPGConfig,
    SoftmaxTabularPolicy,
    exact_value_iteration,
    npg_step,
)


@dataclass
class MiloConfig:
    iterations: int = 40
    lambda_bc: float = 0.1
    lambda_penalty: float = 2.5e-4
    penalty_variant: str = "theory"      # theory | ensemble | exact-tv
    model_kind: str = "tabular"          # tabular | knr | gp | ensemble
    solver_mode: str = "exact"           # exact | npg (continuous is always npg)
    # exact mode: best-respond to the running-average occupancy of the policy
    # iterates (fictitious play).  Pure best response against the current
    # iterate cycles in this zero-sum game and makes the last plan arbitrary.
    fictitious_play: bool = True
    discriminator: str = "onehot"        # onehot | finite | rff
    finite_class: FiniteClass | None = None
    delta: float = 0.1
    smoothing: float = 1.0               # tabular count smoothing
    ridge_lam: float | None = None       # knr ridge; defaults to noise_std^2
    warm_start_bc: bool = True
    rff_features: int = 256
    bandwidth: float | None = None
    n_members: int = 4
    batch_steps: int = 4000              # rollout steps per npg iteration
    eval_rollouts: int = 600             # continuous true-environment evaluation
    track_pessimism: bool = False        # record sandwich terms (tabular exact)
    npg: NPGConfig = field(default_factory=NPGConfig)
    adv: AdvantageConfig = field(default_factory=AdvantageConfig)

    def __post_init__(self) -> None:
        if not (0.0 <= self.lambda_penalty <= 1.0):
            raise ValueError("lambda_penalty must be in [0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")


class SolverDivergence(RuntimeError):
    """Policy values went non-finite; carries the partial report."""

    def __init__(self, message: str, report: "SolverReport"):
        super().__init__(message)
        self.report = report


@dataclass
class IterationRecord:
    iteration: int
    ipm: float
    v_true: float
    v_model: float
    bc_loss: float
    penalty_mass: float


@dataclass
class SolverReport:
    records: list[IterationRecord] = field(default_factory=list)
    wall_clock: float = 0.0
    v_expert: float | None = None
    sandwich: list[dict] = field(default_factory=list)
    final_stationary: TabularPolicy | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def final_v_true(self) -> float:
        return self.records[-1].v_true

    def append_checked(self, record: IterationRecord) -> None:
        vals = [record.ipm, record.v_true, record.v_model, record.bc_loss, record.penalty_mass]
        self.records.append(record)
        if not np.all(np.isfinite(vals)):
            raise SolverDivergence(
                f"non-finite policy values at iteration {record.iteration}", self
            )

    def to_json(self) -> str:
        import json

        return json.dumps(
            {
                "records": [vars(r) for r in self.records],
                "wall_clock": self.wall_clock,
                "v_expert": self.v_expert,
                "sandwich": self.sandwich,
            }
        )


CSV_COLUMNS = ("iter", "ipm", "v_true", "v_model", "bc_loss", "penalty_mass")


def write_report_csv(report: SolverReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in report.records:
            fh.write(
                f"{r.iteration},{r.ipm:.10g},{r.v_true:.10g},{r.v_model:.10g},"
                f"{r.bc_loss:.10g},{r.penalty_mass:.10g}\n"
            )


# ---------------------------------------------------------------------------
# Behavior cloning
# ---------------------------------------------------------------------------


def bc_train(
    expert: ExpertDataset, env, offline: OfflineDataset | None = None
) -> TabularPolicy | GaussianLinearPolicy:
    """Maximum-likelihood cloning of the given pairs.

    Tabular: empirical action frequencies with a uniform fallback at states
    that never appear.  Continuous: least-squares regression of actions on
    [s, 1] with the residual scale as the (floored) log standard deviation.
    When an offline dataset is supplied its pairs are concatenated with the
    expert pairs, unweighted.
    """
    if offline is not None:
        expert = concat_expert(expert, offline)
    if isinstance(env, FiniteMDP):
        S, A = env.n_states, env.n_actions
        counts = np.zeros((S, A))
        np.add.at(counts, (np.asarray(expert.states, dtype=int), np.asarray(expert.actions, dtype=int)), 1.0)
        totals = counts.sum(axis=1, keepdims=True)
        probs = np.where(totals > 0, counts / np.maximum(totals, 1.0), 1.0 / A)
        return TabularPolicy(probs)
    states = np.atleast_2d(np.asarray(expert.states, dtype=float))
    actions = np.atleast_2d(np.asarray(expert.actions, dtype=float))
    psi = np.concatenate([states, np.ones((len(states), 1))], axis=1)
    weights, *_ = np.linalg.lstsq(psi, actions, rcond=None)
    resid = actions - psi @ weights
    std = resid.std(axis=0)
    log_std = np.log(np.maximum(std, 1e-6))
    return GaussianLinearPolicy(
        states.shape[1], actions.shape[1], weights=weights.T, log_std=log_std
    )


def concat_expert(a: ExpertDataset, b: OfflineDataset) -> ExpertDataset:
    """Expert pairs plus the behavior pairs, for the cloning-on-both baseline."""
    states = np.concatenate([np.asarray(a.states), np.asarray(b.states)])
    actions = np.concatenate([np.asarray(a.actions), np.asarray(b.actions)])
    return ExpertDataset(states, actions, env_name=a.env_name, seed=a.seed)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def extend_policy_probs(probs: np.ndarray) -> np.ndarray:
    """Add a uniform sink row so a real-state policy acts in the augmented model."""
    S, A = probs.shape
    return np.vstack([probs, np.full((1, A), 1.0 / A)])


def _tabular_penalty_table(
    model: TabularModel, env: FiniteMDP, cfg: MiloConfig, seed: int
) -> np.ndarray:
    H = env.horizon
    if cfg.penalty_variant == "theory":
        return penalty_from_sigma(model.sigma(cfg.delta), H)
    if cfg.penalty_variant == "exact-tv":
        return penalty_from_sigma(exact_tv_sigma(model, env), H)
    if cfg.penalty_variant == "ensemble":
        S, A = env.n_states, env.n_actions
        onehot = OneHotMap(S, A)
        grid_s, grid_a = np.divmod(np.arange(S * A), A)
        feats_all = onehot(grid_s, grid_a)
        counts_idx = np.asarray(model.counts.nonzero()).T
        # reconstruct raw transitions from counts for member fits
        s_list, a_list, sp_list = [], [], []
        for s, a, sp in counts_idx:
            k = int(model.counts[s, a, sp])
            s_list += [s] * k
            a_list += [a] * k
            sp_list += [sp] * k
        feats = onehot(np.array(s_list, dtype=int), np.array(a_list, dtype=int))
        targets = np.eye(S)[np.array(sp_list, dtype=int)]
        ens = fit_ensemble(
            feats, targets, lam=cfg.smoothing, noise_std=1.0,
            n_members=cfg.n_members, seed=seed,
        )
        return ens.disagreement(feats_all).reshape(S, A) * H
    raise ValueError(f"unknown penalty variant {cfg.penalty_variant!r}")


def _mixed_cost_tables(
    f_table: np.ndarray, b_table: np.ndarray, lam: float, offset: float
) -> np.ndarray:
    """Augmented (S+1, A) cost: real rows mixed and lifted, sink row = lift only."""
    real = (1.0 - lam) * (f_table + offset) + lam * b_table
    sink = np.full((1, f_table.shape[1]), (1.0 - lam) * offset)
    return np.vstack([real, sink])


# ---------------------------------------------------------------------------
# Tabular solve
# ---------------------------------------------------------------------------


def _solve_milo_tabular(
    env: FiniteMDP,
    expert: ExpertDataset,
    offline: OfflineDataset,
    cfg: MiloConfig,
    seed: int,
) -> tuple[TabularPolicy, SolverReport]:
    t0 = time.perf_counter()
    S, A, H = env.n_states, env.n_actions, env.horizon
    model = fit_tabular(offline, S, A, lam=cfg.smoothing)
    model_mdp = model.to_mdp(H, env.d0)
    b_table = _tabular_penalty_table(model, env, cfg, seed)
    b_aug = model.augment_cost(b_table)

    d_expert = empirical_occupancy(
        np.asarray(expert.states, dtype=int), np.asarray(expert.actions, dtype=int), S, A
    )

    if cfg.discriminator == "finite" and cfg.finite_class is None:
        raise ValueError("finite discriminator mode requires cfg.finite_class")
    offset = 1.0 if cfg.discriminator == "onehot" else 0.0

    report = SolverReport()
    lam = cfg.lambda_penalty

    if cfg.solver_mode == "exact":
        # iterates are deterministic time-indexed plans; seed only enters
        # through the datasets
        if cfg.warm_start_bc:
            init = bc_train(ExpertDataset(offline.states, offline.actions), env)
        else:
            init = TabularPolicy.uniform(S, A)
        probs_by_step = np.tile(extend_policy_probs(init.probs), (H, 1, 1))
        plan = None
        d_running = None
        for it in range(cfg.iterations):
            d_aug = occupancy_timewise_nonstationary(model_mdp, probs_by_step).mean(axis=0)
            d_model = d_aug[:S]
            if d_running is None:
                d_running = d_model.copy()
            else:
                d_running += (d_model - d_running) / (it + 1.0)
            d_target = d_running if cfg.fictitious_play else d_model
            f_table, _ = _tabular_best_response(cfg, d_target, d_expert)
            _, ipm = _tabular_best_response(cfg, d_model, d_expert)
            g_aug = _mixed_cost_tables(f_table, b_table, lam, offset)
            plan = exact_value_iteration(model_mdp, g_aug)
            probs_by_step = plan.probs_by_step(A)
            real_actions = plan.greedy_by_step[:, :S]
            v_true = value_nonstationary(env, real_actions)
            v_model = _augmented_plan_value(model_mdp, plan, model.augment_cost(env.cost))
            pen_mass = H * float(np.sum(d_aug * b_aug))
            stationary = plan.policy.probs[:S]
            stationary_pol = TabularPolicy(stationary / stationary.sum(axis=1, keepdims=True))
            report.append_checked(
                IterationRecord(
                    iteration=it,
                    ipm=float(ipm),
                    v_true=v_true,
                    v_model=v_model,
                    bc_loss=_frequency_bc_loss(stationary_pol, expert),
                    penalty_mass=pen_mass,
                )
            )
            if cfg.track_pessimism:
                report.sandwich.append(
                    _sandwich_terms(env, model, model_mdp, probs_by_step, f_table, b_table, offset)
                )
        report.final_stationary = TabularPolicy(
            plan.policy.probs[:S] / plan.policy.probs[:S].sum(axis=1, keepdims=True)
        )
        report.wall_clock = time.perf_counter() - t0
        return report.final_stationary, report

    # incremental natural-gradient mode on the augmented state space
    init = bc_train(ExpertDataset(offline.states, offline.actions), env) if cfg.warm_start_bc else None
    if init is not None:
        policy = SoftmaxTabularPolicy.from_probs(extend_policy_probs(init.probs))
    else:
        policy = SoftmaxTabularPolicy.uniform(S + 1, A)
    expert_states = np.asarray(expert.states, dtype=int)
    expert_actions = np.asarray(expert.actions, dtype=int)
    for it in range(cfg.iterations):
        tab_aug = policy.as_tabular()
        d_aug = occupancy(model_mdp, tab_aug)
        d_model = d_aug[:S]
        f_table, ipm = _tabular_best_response(cfg, d_model, d_expert)
        g_aug = _mixed_cost_tables(f_table, b_table, lam, offset)
        policy, info = npg_step(
            policy, model_mdp, g_aug, expert_states, expert_actions, cfg.lambda_bc, cfg.npg
        )
        real = policy.probs[:S]
        real_pol = TabularPolicy(real / real.sum(axis=1, keepdims=True))
        report.append_checked(
            IterationRecord(
                iteration=it,
                ipm=float(ipm),
                v_true=value(env, real_pol),
                v_model=value(model_mdp, policy.as_tabular(), model.augment_cost(env.cost)),
                bc_loss=info["bc_loss"],
                penalty_mass=H * float(np.sum(d_aug * b_aug)),
            )
        )
    real = policy.probs[:S]
    final = TabularPolicy(real / real.sum(axis=1, keepdims=True))
    report.final_stationary = final
    report.wall_clock = time.perf_counter() - t0
    return final, report


def _tabular_best_response(cfg: MiloConfig, d_model: np.ndarray, d_expert: np.ndarray):
    if cfg.discriminator == "onehot":
        disc, ipm = mmd_best_response(d_model.ravel(), d_expert.ravel())
        return disc.weights.reshape(d_model.shape), ipm
    if cfg.discriminator == "finite":
        idx, gap = best_response_finite(cfg.finite_class, d_model, d_expert)
        return cfg.finite_class.members[idx], gap
    raise ValueError(f"discriminator {cfg.discriminator!r} not available on finite problems")


def _augmented_plan_value(model_mdp: FiniteMDP, plan, cost_aug: np.ndarray) -> float:
    return value_nonstationary(model_mdp, plan.greedy_by_step, cost_aug)


def _frequency_bc_loss(policy: TabularPolicy, expert: ExpertDataset) -> float:
    probs = policy.probs[np.asarray(expert.states, dtype=int), np.asarray(expert.actions, dtype=int)]
    return float(-np.log(probs + 1e-12).mean())


def _sandwich_terms(env, model, model_mdp, probs_by_step, f_table, b_table, offset) -> dict:
    """Pessimism sandwich for the current iterate at exact-TV widths.

    The guarantee is stated for costs in [0, 1], so signed discriminators are
    mapped through the same affine lift the solver plans with: (f + offset)
    rescaled onto the unit range.  Finite classes pass through unchanged.
    """
    S, H = env.n_states, env.horizon
    scale = max(1.0, 2.0 * offset)
    f01 = (f_table + offset) / scale
    f_aug = model.augment_cost(f01, sink_value=offset / scale)
    b_aug = model.augment_cost(b_table)
    # nonstationary evaluation in the augmented model under f + b
    V = np.zeros(model_mdp.n_states)
    for t in range(H - 1, -1, -1):
        Q = (f_aug + b_aug) + model_mdp.transition @ V
        V = np.sum(probs_by_step[t] * Q, axis=1)
    v_pess = float(model_mdp.d0 @ V)
    # true-environment evaluation under f alone
    Vt = np.zeros(S)
    for t in range(H - 1, -1, -1):
        Q = f01 + env.transition @ Vt
        Vt = np.sum(probs_by_step[t][:S] * Q, axis=1)
    v_ref = float(env.d0 @ Vt)
    sigma = np.minimum(exact_tv_sigma(model, env), 2.0)
    d_true = occupancy_timewise_nonstationary(env, probs_by_step[:, :S]).mean(axis=0)
    bound = (3.0 * H**2 + H) * float(np.sum(d_true * sigma))
    return {"v_pessimistic": v_pess, "v_true_f": v_ref, "bound": bound}


# ---------------------------------------------------------------------------
# Continuous solve
# ---------------------------------------------------------------------------


class _GPDynamicsEnv:
    """Duck-typed rollout environment for a GP mean with the template's geometry."""

    def __init__(self, gp: GPModel, template: LinearGaussianEnv):
        self.gp = gp
        self.template = template
        self.horizon = template.horizon
        self.init_sampler = template.init_sampler
        self.cost_fn = template.cost_fn

    def clip_actions(self, actions):
        return self.template.clip_actions(actions)

    def step(self, states, actions, rng):
        x = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
        mean = self.gp.posterior_mean(x)
        nxt = mean + self.gp.noise_std * rng.standard_normal(mean.shape)
        return np.clip(nxt, self.template.state_low, self.template.state_high)


def _continuous_model_and_penalty(env, offline, cfg: MiloConfig, seed: int):
    """Returns (model_env for rollouts, penalty callable b(s, a) in cost units)."""
    H = env.horizon
    lam_ridge = cfg.ridge_lam if cfg.ridge_lam is not None else env.noise_std**2

    if cfg.model_kind in ("knr", "ensemble"):
        model = fit_knr_from_dataset(offline, env, lam=lam_ridge)
        if cfg.model_kind == "ensemble":
            phi = env.featurize(offline.states, offline.actions)
            ens = fit_ensemble(
                phi, np.asarray(offline.next_states, dtype=float), lam=lam_ridge,
                noise_std=env.noise_std, n_members=cfg.n_members, seed=seed,
            )
            mean_w = np.mean([m.w_hat for m in ens.members], axis=0)
            roll_model = KNRModel(
                w_hat=mean_w, sigma_mat=model.sigma_mat, lam=model.lam,
                noise_std=model.noise_std, w_star_norm=model.w_star_norm,
                n_samples=model.n_samples,
            )
            model_env = knr_generative_env(roll_model, env)

            def b_fn(s, a):
                return ens.disagreement(env.featurize(s, a)) * H

            return model_env, b_fn, model
        model_env = knr_generative_env(model, env)
        if cfg.penalty_variant == "exact-tv":

            def b_fn(s, a):
                phi = env.featurize(s, a)
                gap = np.linalg.norm(phi @ (model.w_hat - env.w_star).T, axis=-1)
                return penalty_from_sigma(gap / env.noise_std, H)

        else:

            def b_fn(s, a):
                return penalty_from_sigma(model.sigma(env.featurize(s, a), cfg.delta), H)

        return model_env, b_fn, model

    if cfg.model_kind == "gp":
        gp = fit_gp_from_dataset(offline, env.noise_std, bandwidth=cfg.bandwidth)
        model_env = _GPDynamicsEnv(gp, env)

        def b_fn(s, a):
            x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1)
            return penalty_from_sigma(gp.sigma(x, cfg.delta), H)

        return model_env, b_fn, gp

    raise ValueError(f"model kind {cfg.model_kind!r} not available on continuous problems")


def _solve_milo_continuous(
    env: LinearGaussianEnv,
    expert: ExpertDataset,
    offline: OfflineDataset,
    cfg: MiloConfig,
    seed: int,
) -> tuple[GaussianLinearPolicy, SolverReport]:
    t0 = time.perf_counter()
    H = env.horizon
    model_env, b_fn, _ = _continuous_model_and_penalty(env, offline, cfg, seed)

    inputs = np.concatenate(
        [np.atleast_2d(np.asarray(offline.states, dtype=float)),
         np.atleast_2d(np.asarray(offline.actions, dtype=float))], axis=1
    )
    rff = make_rff(inputs, cfg.rff_features, seed=seed, bandwidth=cfg.bandwidth)
    ex_inputs = np.concatenate(
        [np.atleast_2d(np.asarray(expert.states, dtype=float)),
         np.atleast_2d(np.asarray(expert.actions, dtype=float))], axis=1
    )
    mean_expert = rff(ex_inputs).mean(axis=0)
    offset = float(np.sqrt(2.0))  # |w . phi| <= ||phi|| <= sqrt(2) for unit-ball w

    if cfg.warm_start_bc:
        policy = bc_train(ExpertDataset(offline.states, offline.actions), env)
    else:
        policy = GaussianLinearPolicy(env.d_state, len(np.atleast_1d(env.action_low)))

    expert_states = np.atleast_2d(np.asarray(expert.states, dtype=float))
    expert_actions = np.atleast_2d(np.asarray(expert.actions, dtype=float))

    report = SolverReport()
    lam = cfg.lambda_penalty
    rng_base = np.random.default_rng(seed)
    critic: LinearCritic | None = None
    for it in range(cfg.iterations):
        # feature means of the current policy inside the model
        probe_eps = max(1, cfg.batch_steps // (2 * H))
        p_states, p_actions = _model_rollout_pairs(model_env, policy, probe_eps, seed * 977 + it)
        mean_model = rff(np.concatenate([p_states, p_actions], axis=1)).mean(axis=0)
        disc, ipm = mmd_best_response(mean_model, mean_expert)

        def cost_fn(s, a, _w=disc.weights):
            x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1)
            f = rff(x) @ _w
            return (1.0 - lam) * (f + offset) + lam * b_fn(s, a)

        policy, info = npg_step(
            policy, model_env, cost_fn,
            expert_states, expert_actions, cfg.lambda_bc, cfg.npg, cfg.adv,
            batch_steps=cfg.batch_steps, seed=seed * 31 + it, critic=critic,
        )
        critic = info["critic"]
        v_true = _continuous_value(env, policy, cfg.eval_rollouts, seed * 53 + it)
        v_model = _continuous_value(model_env, policy, cfg.eval_rollouts // 2, seed * 59 + it,
                                    cost_fn=env.costs)
        pen = float(np.mean(b_fn(p_states, p_actions)))
        report.append_checked(
            IterationRecord(
                iteration=it,
                ipm=float(ipm),
                v_true=v_true,
                v_model=v_model,
                bc_loss=info["bc_loss"],
                penalty_mass=pen,
            )
        )
    report.wall_clock = time.perf_counter() - t0
    return policy, report


def _model_rollout_pairs(model_env, policy, n_episodes: int, seed: int):
    rng = np.random.default_rng(seed)
    s = model_env.init_sampler(rng, n_episodes)
    all_s, all_a = [], []
    for _ in range(model_env.horizon):
        a = model_env.clip_actions(policy.act(s, rng))
        all_s.append(s)
        all_a.append(a)
        s = model_env.step(s, a, rng)
    return np.concatenate(all_s), np.concatenate(all_a)


def _continuous_value(env_like, policy, n_episodes: int, seed: int, cost_fn=None) -> float:
    rng = np.random.default_rng(seed)
    s = env_like.init_sampler(rng, n_episodes)
    total = np.zeros(len(s))
    fn = cost_fn if cost_fn is not None else env_like.cost_fn
    for _ in range(env_like.horizon):
        a = env_like.clip_actions(policy.act(s, rng))
        total += np.clip(np.asarray(fn(s, a), dtype=float), 0.0, 1.0)
        s = env_like.step(s, a, rng)
    return float(total.mean())


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def solve_milo(env, expert: ExpertDataset, offline: OfflineDataset, cfg: MiloConfig, seed: int = 0):
    """Pessimistic model-based imitation from the two offline datasets.

    Returns ``(policy, report)``; the policy is the last iterate.
    """
    if isinstance(env, FiniteMDP):
        return _solve_milo_tabular(env, expert, offline, cfg, seed)
    return _solve_milo_continuous(env, expert, offline, cfg, seed)


def solve_offline_rl(env, offline: OfflineDataset, cfg: MiloConfig, seed: int = 0):
    """Pessimistic planning against the known true cost, c + b at full strength."""
    if not isinstance(env, FiniteMDP):
        raise NotImplementedError("offline RL with known cost is tabular-only here")
    t0 = time.perf_counter()
    S, A, H = env.n_states, env.n_actions, env.horizon
    model = fit_tabular(offline, S, A, lam=cfg.smoothing)
    model_mdp = model.to_mdp(H, env.d0)
    b_table = _tabular_penalty_table(model, env, cfg, seed)
    g_aug = model.augment_cost(env.cost + b_table)
    plan = exact_value_iteration(model_mdp, g_aug)
    report = SolverReport()
    real_actions = plan.greedy_by_step[:, :S]
    d_aug = occupancy_timewise_nonstationary(model_mdp, plan.probs_by_step(A)).mean(axis=0)
    report.append_checked(
        IterationRecord(
            iteration=0,
            ipm=0.0,
            v_true=value_nonstationary(env, real_actions),
            v_model=_augmented_plan_value(model_mdp, plan, model.augment_cost(env.cost)),
            bc_loss=0.0,
            penalty_mass=H * float(np.sum(d_aug * model.augment_cost(b_table))),
        )
    )
    probs = plan.policy.probs[:S]
    final = TabularPolicy(probs / probs.sum(axis=1, keepdims=True))
    report.final_stationary = final
    report.wall_clock = time.perf_counter() - t0
    return final, report


def ablate_pessimism(env, expert, offline, cfg: MiloConfig, seed: int = 0):
    """Identical solves with and without the uncertainty penalty."""
    import copy

    cfg_off = copy.deepcopy(cfg)
    cfg_off.lambda_penalty = 0.0
    pol_on, rep_on = solve_milo(env, expert, offline, cfg, seed)
    pol_off, rep_off = solve_milo(env, expert, offline, cfg_off, seed)
    return {"with": (pol_on, rep_on), "without": (pol_off, rep_off)}
