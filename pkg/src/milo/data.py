"""Expert and offline datasets with a JSONL on-disk format.

An expert dataset is a bag of (state, action) pairs; an offline dataset is a
bag of (state, action, next_state) transition triples gathered by a behavior
policy.  Files carry a single header line followed by one record per line:

    {"kind": "expert", "env": "...", "seed": 3, "n": 20}
    {"s": 12, "a": 1}
    ...

Tabular records hold integer indices, continuous records hold float lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from milo.mdp import FiniteMDP, LinearGaussianEnv, TabularPolicy, rollout, rollout_continuous


@dataclass
class ExpertDataset:
    """(state, action) pairs demonstrating the target behavior."""

    states: np.ndarray
    actions: np.ndarray
    env_name: str = ""
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.states) != len(self.actions):
            raise ValueError("states and actions must have equal length")

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class OfflineDataset:
    """(state, action, next_state) triples from the behavior policy."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    env_name: str = ""
    seed: int = 0

    def __post_init__(self) -> None:
        if not (len(self.states) == len(self.actions) == len(self.next_states)):
            raise ValueError("states, actions and next_states must have equal length")

    def __len__(self) -> int:
        return len(self.states)


class MixturePolicy:
    """Samples one component policy per trajectory.

    The induced state-action distribution is the weight-average of the
    component occupancies, which keeps the data distribution of mixed-quality
    datasets exactly computable.
    """

    def __init__(self, policies: list, weights: list[float]):
        if len(policies) != len(weights):
            raise ValueError("one weight per policy required")
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must form a probability vector")
        self.policies = policies
        self.weights = w

    def choose(self, rng: np.random.Generator):
        return self.policies[rng.choice(len(self.policies), p=self.weights)]


def _pool_pairs(env, policy, n_trajectories: int, seed: int):
    if isinstance(env, FiniteMDP):
        trajs = rollout(env, policy, n_trajectories, seed)
    else:
        trajs = rollout_continuous(env, policy, n_trajectories, seed)
    states = np.concatenate([t.states for t in trajs])
    actions = np.concatenate([t.actions for t in trajs])
    next_states = np.concatenate([t.next_states for t in trajs])
    return states, actions, next_states


def generate_expert(
    env, policy, n_pairs: int, seed: int, pool_trajectories: int = 50
) -> ExpertDataset:
    """Roll out a trajectory pool, then subsample n_pairs (state, action) pairs.

    Sampling is without replacement; if the pool is smaller than n_pairs it
    falls back to sampling with replacement.
    """
    states, actions, _ = _pool_pairs(env, policy, pool_trajectories, seed)
    rng = np.random.default_rng(seed + 1)
    replace = n_pairs > len(states)
    idx = rng.choice(len(states), size=n_pairs, replace=replace)
    name = getattr(env, "name", "")
    return ExpertDataset(states[idx], actions[idx], env_name=name, seed=seed)


def single_trajectory_expert(env, policy, seed: int) -> ExpertDataset:
    """All (state, action) pairs of one expert episode, in order."""
    if isinstance(env, FiniteMDP):
        traj = rollout(env, policy, 1, seed)[0]
    else:
        traj = rollout_continuous(env, policy, 1, seed)[0]
    name = getattr(env, "name", "")
    return ExpertDataset(traj.states.copy(), traj.actions.copy(), env_name=name, seed=seed)


def generate_offline(env, policy, n_triples: int, seed: int) -> OfflineDataset:
    """Pool full behavior trajectories until n_triples transitions are collected.

    ``policy`` may be a plain policy or a MixturePolicy; mixtures pick one
    component per trajectory.  The last trajectory is truncated to land on
    exactly n_triples.
    """
    horizon = env.horizon
    rng = np.random.default_rng(seed)
    states, actions, next_states = [], [], []
    collected = 0
    batch = max(1, -(-n_triples // horizon))  # ceil division
    k = 0
    while collected < n_triples:
        if isinstance(policy, MixturePolicy):
            # one component per trajectory, so draw singly
            pol = policy.choose(rng)
            s, a, sp = _pool_pairs(env, pol, 1, seed + 1000 + k)
        else:
            s, a, sp = _pool_pairs(env, policy, batch, seed + 1000 + k)
        states.append(s)
        actions.append(a)
        next_states.append(sp)
        collected += len(s)
        k += 1
    states = np.concatenate(states)[:n_triples]
    actions = np.concatenate(actions)[:n_triples]
    next_states = np.concatenate(next_states)[:n_triples]
    name = getattr(env, "name", "")
    return OfflineDataset(states, actions, next_states, env_name=name, seed=seed)


# ---------------------------------------------------------------------------
# JSONL round trip
# ---------------------------------------------------------------------------


def _scalarize(x):
    arr = np.asarray(x)
    if arr.dtype.kind in "iu":
        return int(arr) if arr.ndim == 0 else arr.tolist()
    if arr.ndim == 0:
        return float(arr)
    return arr.tolist()


def save_expert(ds: ExpertDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        header = {"kind": "expert", "env": ds.env_name, "seed": ds.seed, "n": len(ds)}
        fh.write(json.dumps(header) + "\n")
        for s, a in zip(ds.states, ds.actions):
            fh.write(json.dumps({"s": _scalarize(s), "a": _scalarize(a)}) + "\n")


def save_offline(ds: OfflineDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        header = {"kind": "offline", "env": ds.env_name, "seed": ds.seed, "n": len(ds)}
        fh.write(json.dumps(header) + "\n")
        for s, a, sp in zip(ds.states, ds.actions, ds.next_states):
            rec = {"s": _scalarize(s), "a": _scalarize(a), "sp": _scalarize(sp)}
            fh.write(json.dumps(rec) + "\n")


def _read_records(path: Path, expected_kind: str):
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line 1: corrupted header: {exc}") from exc
    if header.get("kind") != expected_kind:
        raise ValueError(f"{path}: expected kind {expected_kind!r}, got {header.get('kind')!r}")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {i}: corrupted record: {exc}") from exc
    if len(records) != header.get("n"):
        raise ValueError(
            f"{path}: header says n={header.get('n')} but found {len(records)} records"
        )
    return header, records


def load_expert(path: str | Path) -> ExpertDataset:
    path = Path(path)
    header, records = _read_records(path, "expert")
    states = np.array([r["s"] for r in records])
    actions = np.array([r["a"] for r in records])
    return ExpertDataset(states, actions, env_name=header.get("env", ""), seed=header.get("seed", 0))


def load_offline(path: str | Path) -> OfflineDataset:
    path = Path(path)
    header, records = _read_records(path, "offline")
    states = np.array([r["s"] for r in records])
    actions = np.array([r["a"] for r in records])
    next_states = np.array([r["sp"] for r in records])
    return OfflineDataset(
        states, actions, next_states, env_name=header.get("env", ""), seed=header.get("seed", 0)
    )
