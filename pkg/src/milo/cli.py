"""Config-driven experiment harness.

Verbs: ``generate`` (datasets + manifest), ``run`` (solvers and baselines
over seeds), ``diagnose`` (coverage report for a dataset/model pair) and
``report`` (aggregate summaries into tables and figures).

The config file is a single JSON document, e.g.

    {
      "env":      {"kind": "gridworld", "width": 8, "height": 8, "horizon": 50},
      "expert":   {"n_pairs": 20, "seed": 101},
      "behavior": {"target_score": 0.45},
      "offline":  {"n_triples": 10000, "seed": 303},
      "solver":   {"iterations": 30, "lambda_penalty": 0.5},
      "methods":  ["milo", "bc-expert", "bc-both"],
      "seeds":    [0, 1, 2, 3, 4],
      "tier":     "50%",
      "out_dir":  "runs/grid"
    }

Every command is deterministic given the config; the only timestamp lives
in the generate manifest.  Exit codes: 0 success, 2 config error, 3
runtime failure.
"""

from __future__ import annotations

import argparse
import copy
import datetime
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from milo.data import (
    ExpertDataset,
    OfflineDataset,
    generate_expert,
    generate_offline,
    load_expert,
    load_offline,
    save_expert,
    save_offline,
    single_trajectory_expert,
)
from milo.diagnostics import coverage_report_continuous, coverage_report_tabular
from milo.discriminators import empirical_occupancy, finite_class_with_decoys
from milo.envs import (
    continuous_policy_value,
    epsilon_for_score,
    make_chain,
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
)
from milo.mdp import FiniteMDP, TabularPolicy, value
from milo.models import fit_gp_from_dataset, fit_knr_from_dataset, fit_tabular
from milo.solver import (
    IterationRecord,
    MiloConfig,
    SolverDivergence,
    SolverReport,
    bc_train,
    solve_milo,
    solve_offline_rl,
    write_report_csv,
)

METHODS = ("milo", "milo-nopess", "bc-expert", "bc-both", "offline-rl")
EVAL_SEED = 9301


class ConfigError(ValueError):
    """Malformed or unresolvable experiment configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    env: dict
    seeds: list[int]
    out_dir: Path
    expert: dict = field(default_factory=dict)
    behavior: dict = field(default_factory=dict)
    offline: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    methods: list[str] = field(default_factory=list)
    tier: str = ""
    diagnose: dict = field(default_factory=dict)
    workers: int = 1

    def data_dir(self, seed: int) -> Path:
        return self.out_dir / "data" / f"seed{seed}"


_TOP_KEYS = {
    "env", "seeds", "out_dir", "expert", "behavior", "offline",
    "solver", "methods", "tier", "diagnose", "workers",
}


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("env", "seeds", "out_dir"):
        if key not in doc:
            raise ConfigError(f"config is missing required key {key!r}")
    seeds = doc["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) for s in seeds
    ):
        raise ConfigError("seeds must be a nonempty list of integers")
    methods = doc.get("methods", [])
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    cfg = ExperimentConfig(
        env=doc["env"],
        seeds=list(seeds),
        out_dir=Path(doc["out_dir"]),
        expert=doc.get("expert", {}),
        behavior=doc.get("behavior", {}),
        offline=doc.get("offline", {}),
        solver=doc.get("solver", {}),
        methods=list(methods),
        tier=str(doc.get("tier", "")),
        diagnose=doc.get("diagnose", {}),
        workers=int(doc.get("workers", 1)),
    )
    build_env(cfg)          # fail early on unresolvable environment ids
    build_milo_config(cfg)  # and on bad solver settings
    return cfg


def build_env(cfg: ExperimentConfig):
    params = dict(cfg.env)
    kind = params.pop("kind", None)
    builders = {
        "gridworld": make_gridworld,
        "chain": make_chain,
        "trap-chain": make_trap_chain,
        "linear-tracking": make_linear_tracking,
    }
    if kind not in builders:
        raise ConfigError(f"unknown env kind {kind!r}; choose from {sorted(builders)}")
    try:
        return builders[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for env {kind!r}: {exc}") from exc


def build_milo_config(cfg: ExperimentConfig, env=None) -> MiloConfig:
    doc = dict(cfg.solver)
    n_decoys = doc.pop("finite_decoys", 8)
    try:
        milo_cfg = MiloConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver settings: {exc}") from exc
    if milo_cfg.discriminator == "finite" and milo_cfg.finite_class is None:
        if env is None:
            env = build_env(cfg)
        if not isinstance(env, FiniteMDP):
            raise ConfigError("the finite discriminator class needs a finite environment")
        milo_cfg.finite_class = finite_class_with_decoys(
            env.cost, n_decoys=int(n_decoys), seed=doc.get("finite_seed", 0)
        )
    return milo_cfg


# ---------------------------------------------------------------------------
# Reference policies and values
# ---------------------------------------------------------------------------


@dataclass
class References:
    expert_policy: object
    behavior_policy: object
    v_expert: float
    v_random: float
    behavior_score: float
    epsilon: float | None
    band: tuple[float, float] | None


def _policy_value(env, policy, n_rollouts: int = 2000, seed: int = EVAL_SEED) -> float:
    if isinstance(env, FiniteMDP):
        return value(env, policy)
    return continuous_policy_value(env, policy, n=n_rollouts, seed=seed)


def reference_policies(env, cfg: ExperimentConfig) -> References:
    spec = cfg.behavior
    band = None
    target = spec.get("target_score")
    if target is not None:
        half = float(spec.get("band", 0.1))
        band = (float(target) - half, float(target) + half)

    if isinstance(env, FiniteMDP):
        expert_pol = tabular_expert(env)
        v_expert = value(env, expert_pol)
        v_random = random_policy_value(env)
        kind = spec.get("kind", "epsilon-mix")
        eps = None
        if kind == "uniform":
            behavior = TabularPolicy.uniform(env.n_states, env.n_actions)
        elif kind == "corridor":
            behavior = trap_chain_behavior(env, spec.get("p_right", 0.7))
        elif kind == "epsilon-mix":
            if target is None:
                raise ConfigError("epsilon-mix behavior needs a target_score")
            eps = epsilon_for_score(env, expert_pol, float(target))
            behavior = expert_pol.epsilon_mix(eps)
        else:
            raise ConfigError(f"unknown tabular behavior kind {kind!r}")
        score = normalized_score(value(env, behavior), v_expert, v_random)
    else:
        expert_pol = tracking_expert()
        v_expert = _policy_value(env, expert_pol)
        v_random = _policy_value(env, tracking_random())
        kind = spec.get("kind", "scaled")
        eps = None
        if kind == "scaled":
            behavior = tracking_behavior(
                gain_scale=spec.get("gain_scale", 0.25),
                noise_scale=spec.get("noise_scale", 0.75),
            )
        elif kind == "random":
            behavior = tracking_random()
        else:
            raise ConfigError(f"unknown continuous behavior kind {kind!r}")
        score = normalized_score(_policy_value(env, behavior), v_expert, v_random)

    if band is not None and not (band[0] <= score <= band[1]):
        raise RuntimeError(
            f"behavior policy scored {score:.3f}, outside the configured band "
            f"[{band[0]:.2f}, {band[1]:.2f}]"
        )
    return References(expert_pol, behavior, v_expert, v_random, score, eps, band)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_generate(cfg: ExperimentConfig) -> int:
    env = build_env(cfg)
    refs = reference_policies(env, cfg)
    n_pairs = int(cfg.expert.get("n_pairs", 20))
    expert_seed = int(cfg.expert.get("seed", 101))
    single = bool(cfg.expert.get("single_trajectory", False))
    n_triples = int(cfg.offline.get("n_triples", 10_000))
    offline_seed = int(cfg.offline.get("seed", 303))

    files = []
    for k in cfg.seeds:
        d = cfg.data_dir(k)
        d.mkdir(parents=True, exist_ok=True)
        if single:
            expert_ds = single_trajectory_expert(env, refs.expert_policy, seed=expert_seed + k)
        else:
            expert_ds = generate_expert(env, refs.expert_policy, n_pairs, seed=expert_seed + k)
        offline_ds = generate_offline(env, refs.behavior_policy, n_triples, seed=offline_seed + k)
        save_expert(expert_ds, d / "expert.jsonl")
        save_offline(offline_ds, d / "offline.jsonl")
        files += [str((d / "expert.jsonl").relative_to(cfg.out_dir)),
                  str((d / "offline.jsonl").relative_to(cfg.out_dir))]

    manifest = {
        "command": "generate",
        "env": env.name,
        "tier": cfg.tier,
        "seeds": cfg.seeds,
        "files": files,
        "v_expert": refs.v_expert,
        "v_random": refs.v_random,
        "behavior_score": refs.behavior_score,
        "band": list(refs.band) if refs.band else None,
        "epsilon": refs.epsilon,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _write_json(cfg.out_dir / "manifest.json", manifest)
    print(f"wrote {len(files)} dataset files under {cfg.out_dir} "
          f"(behavior score {refs.behavior_score:.3f})")
    return 0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _load_datasets(cfg: ExperimentConfig, seed: int):
    d = cfg.data_dir(seed)
    for name in ("expert.jsonl", "offline.jsonl"):
        if not (d / name).exists():
            raise RuntimeError(f"missing {d / name}; run 'generate' first")
    return load_expert(d / "expert.jsonl"), load_offline(d / "offline.jsonl")


def _bc_report(env, policy, milo_cfg: MiloConfig, seed: int) -> SolverReport:
    v = _policy_value(env, policy, n_rollouts=milo_cfg.eval_rollouts, seed=EVAL_SEED + seed)
    report = SolverReport()
    report.append_checked(IterationRecord(0, 0.0, v, v, 0.0, 0.0))
    return report


def run_method(env, method: str, expert: ExpertDataset, offline: OfflineDataset,
               milo_cfg: MiloConfig, seed: int) -> SolverReport:
    if method == "milo":
        _, report = solve_milo(env, expert, offline, milo_cfg, seed=seed)
    elif method == "milo-nopess":
        off = copy.deepcopy(milo_cfg)
        off.lambda_penalty = 0.0
        _, report = solve_milo(env, expert, offline, off, seed=seed)
    elif method == "bc-expert":
        report = _bc_report(env, bc_train(expert, env), milo_cfg, seed)
    elif method == "bc-both":
        report = _bc_report(env, bc_train(expert, env, offline), milo_cfg, seed)
    elif method == "offline-rl":
        _, report = solve_offline_rl(env, offline, milo_cfg, seed=seed)
    else:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    return report


def _default_methods(env) -> list[str]:
    if isinstance(env, FiniteMDP):
        return list(METHODS)
    return [m for m in METHODS if m != "offline-rl"]


def cmd_run(cfg: ExperimentConfig, method_filter: str | None) -> int:
    env = build_env(cfg)
    refs = reference_policies(env, cfg)
    milo_cfg = build_milo_config(cfg, env)
    methods = [method_filter] if method_filter else (cfg.methods or _default_methods(env))
    if "offline-rl" in methods and not isinstance(env, FiniteMDP):
        raise ConfigError("offline-rl needs a finite environment")
    datasets = {k: _load_datasets(cfg, k) for k in cfg.seeds}

    for method in methods:
        out = cfg.out_dir / "runs" / method
        out.mkdir(parents=True, exist_ok=True)

        def solve_one(k: int) -> SolverReport:
            expert, offline = datasets[k]
            report = run_method(env, method, expert, offline, milo_cfg, seed=k)
            write_report_csv(report, out / f"seed{k}.csv")
            return report

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                reports = list(pool.map(solve_one, cfg.seeds))
        else:
            reports = [solve_one(k) for k in cfg.seeds]

        finals = [r.final_v_true() for r in reports]
        scores = [normalized_score(v, refs.v_expert, refs.v_random) for v in finals]
        summary = {
            "method": method,
            "env": env.name,
            "tier": cfg.tier,
            "seeds": cfg.seeds,
            "finals": finals,
            "scores": scores,
            "mean_final": float(np.mean(finals)),
            "std_final": float(np.std(finals)),
            "mean_score": float(np.mean(scores)),
            "std_score": float(np.std(scores)),
            "median_score": float(np.median(scores)),
            "v_expert": refs.v_expert,
            "v_random": refs.v_random,
            "behavior_score": refs.behavior_score,
        }
        _write_json(out / "summary.json", summary)
        print(f"{method}: mean score {summary['mean_score']:.3f} "
              f"(median {summary['median_score']:.3f}) over {len(cfg.seeds)} seeds")
    return 0


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def cmd_diagnose(cfg: ExperimentConfig) -> int:
    env = build_env(cfg)
    milo_cfg = build_milo_config(cfg, env)
    seed = cfg.seeds[0]
    expert, offline = _load_datasets(cfg, seed)
    n_classes = int(cfg.diagnose.get("n_classes", 32))

    if isinstance(env, FiniteMDP):
        S, A = env.n_states, env.n_actions
        model = fit_tabular(offline, S, A, lam=milo_cfg.smoothing)
        d_expert = empirical_occupancy(expert.states, expert.actions, S, A)
        rho = empirical_occupancy(offline.states, offline.actions, S, A)
        report = coverage_report_tabular(
            d_expert, rho, model.sigma(milo_cfg.delta),
            n_e=len(expert), n_classes=n_classes,
            delta=milo_cfg.delta, horizon=env.horizon,
        )
    else:
        kind = cfg.diagnose.get("model", milo_cfg.model_kind)
        d_s = env.d_state

        def featurize(inputs):
            return env.featurize(inputs[:, :d_s], inputs[:, d_s:])

        expert_actions = np.atleast_2d(np.asarray(expert.actions, dtype=float))
        expert_inputs = np.concatenate(
            [np.atleast_2d(np.asarray(expert.states, dtype=float)), expert_actions], axis=1
        )
        offline_inputs = np.concatenate(
            [np.atleast_2d(np.asarray(offline.states, dtype=float)),
             np.atleast_2d(np.asarray(offline.actions, dtype=float))], axis=1
        )
        if kind == "gp":
            model = fit_gp_from_dataset(offline, noise_std=env.noise_std,
                                        bandwidth=milo_cfg.bandwidth)
        elif kind in ("knr", "tabular", "ensemble"):
            lam = milo_cfg.ridge_lam if milo_cfg.ridge_lam is not None else env.noise_std**2
            model = fit_knr_from_dataset(offline, env, lam=lam)
        else:
            raise ConfigError(f"unknown diagnose model kind {kind!r}")
        report = coverage_report_continuous(
            expert_inputs, offline_inputs, featurize, model,
            n_e=len(expert), n_classes=n_classes,
            delta=milo_cfg.delta, horizon=env.horizon, zeta=env.noise_std,
        )

    doc = {
        "env": env.name,
        "seed": seed,
        "n_e": len(expert),
        "n_o": len(offline),
        "report": json.loads(report.to_json()),
    }
    _write_json(cfg.out_dir / "diagnostics.json", doc)
    print(f"wrote {cfg.out_dir / 'diagnostics.json'}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("env", "tier", "method", "seeds", "mean_score", "std_score",
                  "median_score", "mean_final")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _tier_key(tier: str):
    digits = tier.rstrip("%")
    if digits.replace(".", "", 1).isdigit():
        return (0, -float(digits))
    return (1, tier)


def _collect_summaries(root: Path) -> list[dict]:
    summaries = []
    for path in sorted(root.rglob("summary.json")):
        summaries.append(json.loads(path.read_text()))
    return summaries


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def _pivot(rows: list[dict], row_key) -> tuple[list[str], list[list[str]]]:
    methods = [m for m in METHODS if any(r["method"] == m for r in rows)]
    labels = []
    for r in rows:
        lab = row_key(r)
        if lab not in labels:
            labels.append(lab)
    table = []
    for lab in labels:
        cells = [lab]
        for m in methods:
            hits = [r for r in rows if row_key(r) == lab and r["method"] == m]
            cells.append(_fmt(hits[0]["mean_score"]) if hits else "")
        table.append(cells)
    return methods, table


def _render_figures(root: Path, rows: list[dict]) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    groups = []
    for r in rows:
        g = (r["env"], r["tier"])
        if g not in groups:
            groups.append(g)
    methods = [m for m in METHODS if any(r["method"] == m for r in rows)]

    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(groups), 1)
    xs = np.arange(len(methods))
    for i, g in enumerate(groups):
        vals = []
        for m in methods:
            hits = [r for r in rows if (r["env"], r["tier"]) == g and r["method"] == m]
            vals.append(hits[0]["mean_score"] if hits else np.nan)
        label = g[0] if not g[1] else f"{g[0]} ({g[1]})"
        ax.bar(xs + i * width, vals, width=width, label=label)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(methods, rotation=20)
    ax.set_ylabel("mean normalized score")
    ax.axhline(1.0, color="gray", lw=0.8, ls="--")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(root / "fig_scores.png", dpi=120)
    plt.close(fig)
    written.append("fig_scores.png")

    curve_axes = None
    for summary_path in sorted(root.rglob("summary.json")):
        summary = json.loads(summary_path.read_text())
        csvs = sorted(summary_path.parent.glob("seed*.csv"))
        if not csvs:
            continue
        tables = [np.genfromtxt(p, delimiter=",", names=True) for p in csvs]
        n = min(np.atleast_1d(t["v_true"]).size for t in tables)
        if n < 2:
            continue
        v = np.mean([np.atleast_1d(t["v_true"])[:n] for t in tables], axis=0)
        denom = summary["v_random"] - summary["v_expert"]
        score = (summary["v_random"] - v) / denom if abs(denom) > 1e-12 else v * 0.0
        if curve_axes is None:
            curve_axes = plt.subplots(figsize=(6, 4))
        label = summary["method"] if not summary["tier"] else \
            f"{summary['method']} ({summary['tier']})"
        curve_axes[1].plot(np.arange(n), score, label=label)
    if curve_axes is not None:
        fig, ax = curve_axes
        ax.set_xlabel("iteration")
        ax.set_ylabel("normalized score (mean over seeds)")
        ax.axhline(1.0, color="gray", lw=0.8, ls="--")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(root / "fig_curves.png", dpi=120)
        plt.close(fig)
        written.append("fig_curves.png")

    tiers = []
    for r in rows:
        if r["tier"] and r["tier"] not in tiers:
            tiers.append(r["tier"])
    tiers.sort(key=_tier_key)
    if len(tiers) >= 2:
        fig, ax = plt.subplots(figsize=(6, 4))
        for m in methods:
            vals = []
            for t in tiers:
                hits = [r for r in rows if r["tier"] == t and r["method"] == m]
                vals.append(hits[0]["mean_score"] if hits else np.nan)
            if not all(np.isnan(v) for v in vals):
                ax.plot(tiers, vals, marker="o", label=m)
        ax.set_xlabel("behavior tier")
        ax.set_ylabel("mean normalized score")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(root / "fig_tiers.png", dpi=120)
        plt.close(fig)
        written.append("fig_tiers.png")
    return written


def cmd_report(root: Path) -> int:
    root = Path(root)
    summaries = _collect_summaries(root)
    if not summaries:
        raise RuntimeError(f"no runs found under {root}")

    rows = sorted(
        summaries,
        key=lambda s: (s["env"], _tier_key(s["tier"]), METHODS.index(s["method"])),
    )
    cells = [
        [r["env"], r["tier"], r["method"], str(len(r["seeds"])),
         _fmt(r["mean_score"]), _fmt(r["std_score"]),
         _fmt(r["median_score"]), _fmt(r["mean_final"])]
        for r in rows
    ]

    with (root / "report.csv").open("w") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for row in cells:
            fh.write(",".join(row) + "\n")

    lines = ["# Imitation report", "", "## All runs", "",
             _markdown_table(list(REPORT_COLUMNS), cells), ""]

    envs = sorted({r["env"] for r in rows})
    methods, score_table = _pivot(
        rows, lambda r: r["env"] if not r["tier"] else f"{r['env']} ({r['tier']})"
    )
    lines += ["## Mean normalized score", "",
              _markdown_table(["setting"] + methods, score_table), ""]

    tier_rows = [r for r in rows if r["tier"]]
    if tier_rows:
        tier_rows.sort(key=lambda r: (_tier_key(r["tier"]), METHODS.index(r["method"])))
        if len(envs) > 1:
            methods, tier_table = _pivot(tier_rows, lambda r: f"{r['env']}/{r['tier']}")
        else:
            methods, tier_table = _pivot(tier_rows, lambda r: r["tier"])
        lines += ["## Score by behavior tier", "",
                  _markdown_table(["tier"] + methods, tier_table), ""]

    figures = _render_figures(root, rows)
    if figures:
        lines += ["## Figures", ""]
        for f in figures:
            lines += [f"![{f}]({f})", ""]

    (root / "report.md").write_text("\n".join(lines))
    print(f"aggregated {len(rows)} summaries into {root / 'report.md'}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="milo", description="Offline imitation experiment harness."
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("generate", "run", "diagnose", "report"):
        p = sub.add_parser(verb)
        p.add_argument("--config", help="path to the JSON experiment config")
        p.add_argument("--seed-override",
                       help="comma-separated seed list replacing the config's")
        p.add_argument("--out", help="override the config's output directory")
        if verb == "run":
            p.add_argument("--method", choices=METHODS,
                           help="run a single method instead of the configured list")
    return parser


def _configure(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = parse_config(args.config)
    if args.seed_override:
        try:
            cfg.seeds = [int(s) for s in args.seed_override.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --seed-override: {exc}") from exc
        if not cfg.seeds:
            raise ConfigError("--seed-override must name at least one seed")
    if args.out:
        cfg.out_dir = Path(args.out)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.verb == "report":
            if args.out:
                root = Path(args.out)
            elif args.config:
                root = parse_config(args.config).out_dir
            else:
                raise ConfigError("report needs --out or --config")
            return cmd_report(root)
        cfg = _configure(args)
        if args.verb == "generate":
            return cmd_generate(cfg)
        if args.verb == "run":
            return cmd_run(cfg, getattr(args, "method", None))
        return cmd_diagnose(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverDivergence as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return 3
    except (RuntimeError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
