import numpy as np
import pytest

from milo.data import (
    MixturePolicy,
    generate_expert,
    generate_offline,
    load_expert,
    load_offline,
    save_expert,
    save_offline,
    single_trajectory_expert,
)
from milo.mdp import TabularPolicy, occupancy
from tests.conftest import random_mdp, random_policy


def test_expert_round_trip_tabular(tmp_path, rng):
    mdp = random_mdp(rng, 5, 2, 6)
    pol = random_policy(rng, 5, 2)
    ds = generate_expert(mdp, pol, 20, seed=4)
    path = tmp_path / "expert.jsonl"
    save_expert(ds, path)
    back = load_expert(path)
    np.testing.assert_array_equal(back.states, ds.states)
    np.testing.assert_array_equal(back.actions, ds.actions)
    assert back.states.dtype.kind == "i"


def test_offline_round_trip(tmp_path, rng):
    mdp = random_mdp(rng, 5, 2, 6)
    pol = random_policy(rng, 5, 2)
    ds = generate_offline(mdp, pol, 37, seed=4)
    assert len(ds) == 37
    path = tmp_path / "offline.jsonl"
    save_offline(ds, path)
    back = load_offline(path)
    np.testing.assert_array_equal(back.next_states, ds.next_states)


def test_corrupted_line_reports_line_number(tmp_path, rng):
    mdp = random_mdp(rng, 4, 2, 5)
    ds = generate_expert(mdp, random_policy(rng, 4, 2), 5, seed=1)
    path = tmp_path / "expert.jsonl"
    save_expert(ds, path)
    lines = path.read_text().splitlines()
    lines[3] = '{"s": 1, "a":'
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="line 4"):
        load_expert(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "expert.jsonl"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_expert(path)


def test_kind_mismatch_rejected(tmp_path, rng):
    mdp = random_mdp(rng, 4, 2, 5)
    ds = generate_expert(mdp, random_policy(rng, 4, 2), 5, seed=1)
    path = tmp_path / "e.jsonl"
    save_expert(ds, path)
    with pytest.raises(ValueError, match="kind"):
        load_offline(path)


def test_expert_subsample_without_replacement(rng):
    mdp = random_mdp(rng, 4, 2, 10)
    pol = random_policy(rng, 4, 2)
    # pool of 50 * 10 = 500 pairs, ask for 20: no repeats of pool indices
    ds = generate_expert(mdp, pol, 20, seed=9)
    assert len(ds) == 20
    # oversubscribed: falls back to replacement instead of raising
    big = generate_expert(mdp, pol, 600, seed=9, pool_trajectories=50)
    assert len(big) == 600


def test_expert_pairs_match_occupancy(rng):
    # with a big pool the pair frequencies track the exact occupancy
    mdp = random_mdp(rng, 4, 2, 8)
    pol = random_policy(rng, 4, 2)
    ds = generate_expert(mdp, pol, 40_000, seed=2, pool_trajectories=10_000)
    emp = np.zeros((4, 2))
    np.add.at(emp, (ds.states, ds.actions), 1.0)
    emp /= emp.sum()
    np.testing.assert_allclose(emp, occupancy(mdp, pol), atol=1.5e-2)


def test_single_trajectory_in_order(rng):
    mdp = random_mdp(rng, 4, 2, 7)
    pol = random_policy(rng, 4, 2)
    ds = single_trajectory_expert(mdp, pol, seed=5)
    assert len(ds) == 7


def test_mixture_weights_validated():
    with pytest.raises(ValueError, match="probability"):
        MixturePolicy([None, None], [0.7, 0.7])


def test_mixture_offline_counts(rng):
    mdp = random_mdp(rng, 4, 2, 5)
    a = TabularPolicy.greedy(np.zeros(4, dtype=int), 2)
    b = TabularPolicy.greedy(np.ones(4, dtype=int), 2)
    mix = MixturePolicy([a, b], [0.9, 0.1])
    ds = generate_offline(mdp, mix, 2000, seed=3)
    assert len(ds) == 2000
    frac_action_zero = np.mean(ds.actions == 0)
    assert 0.8 < frac_action_zero < 0.97
