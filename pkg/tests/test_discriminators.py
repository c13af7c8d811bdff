"""Best responses against numeric maximizer oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from milo.discriminators import (
    FiniteClass,
    LinearDiscriminator,
    Normalizer,
    OneHotMap,
    RFFMap,
    best_response_finite,
    empirical_occupancy,
    make_rff,
    mmd_best_response,
)


class TestFiniteClass:
    def test_range_enforced(self):
        with pytest.raises(ValueError, match="range"):
            FiniteClass(np.array([[[0.0, 1.5]]]))

    def test_best_response_argmax(self, rng):
        members = rng.random((6, 3, 2))
        fc = FiniteClass(members)
        d_model = rng.dirichlet(np.ones(6)).reshape(3, 2)
        d_expert = rng.dirichlet(np.ones(6)).reshape(3, 2)
        idx, val = best_response_finite(fc, d_model, d_expert)
        scores = [float(np.sum(m * (d_model - d_expert))) for m in members]
        assert idx == int(np.argmax(scores))
        assert val == pytest.approx(max(scores))

    def test_tie_breaks_lowest_index(self):
        member = np.full((2, 2), 0.5)
        fc = FiniteClass(np.stack([member, member, member]))
        d = np.full((2, 2), 0.25)
        idx, _ = best_response_finite(fc, d, d * 0.5 + 0.125)
        assert idx == 0


class TestMMD:
    def test_frozen_example(self):
        # delta = (3, 4): direction (0.6, 0.8), value 5
        disc, val = mmd_best_response(np.array([3.0, 4.0]), np.zeros(2))
        np.testing.assert_allclose(disc.weights, [0.6, 0.8])
        assert val == pytest.approx(5.0)

    def test_zero_gap(self):
        disc, val = mmd_best_response(np.ones(3), np.ones(3))
        assert val == 0.0
        np.testing.assert_array_equal(disc.weights, np.zeros(3))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_against_projected_ascent_oracle(self, seed):
        # numeric maximizer over the unit ball agrees with the closed form
        rng = np.random.default_rng(seed)
        delta = rng.standard_normal(5)
        _, val = mmd_best_response(delta + 1.0, np.ones(5))
        w = rng.standard_normal(5)
        w /= max(np.linalg.norm(w), 1.0)
        for _ in range(200):
            w = w + 0.5 * delta
            n = np.linalg.norm(w)
            if n > 1.0:
                w /= n
        assert float(w @ delta) == pytest.approx(val, abs=1e-4)

    def test_unit_norm_enforced(self):
        with pytest.raises(ValueError, match="radius"):
            LinearDiscriminator(np.array([1.0, 1.0]), radius=1.0)


class TestRFF:
    def test_bounded_entries(self, rng):
        X = rng.standard_normal((50, 3))
        rff = make_rff(X, n_features=64, seed=5)
        feats = rff(X)
        bound = np.sqrt(2.0 / 64)
        assert np.all(np.abs(feats) <= bound + 1e-12)

    def test_deterministic_by_seed(self, rng):
        X = rng.standard_normal((20, 2))
        a = RFFMap(2, 32, 1.0, seed=9)
        b = RFFMap(2, 32, 1.0, seed=9)
        np.testing.assert_array_equal(a(X), b(X))

    def test_json_round_trip(self, rng):
        X = rng.standard_normal((40, 3))
        rff = make_rff(X, n_features=16, seed=2)
        back = RFFMap.from_json(rff.to_json())
        np.testing.assert_allclose(back(X), rff(X))

    def test_kernel_approximation(self, rng):
        # inner products approximate the Gaussian kernel
        bw = 1.5
        rff = RFFMap(2, 4096, bw, seed=1)
        x = np.array([[0.3, -0.2]])
        y = np.array([[1.0, 0.4]])
        approx = float((rff(x) @ rff(y).T)[0, 0])
        exact = np.exp(-np.sum((x - y) ** 2) / (2 * bw**2))
        assert approx == pytest.approx(exact, abs=0.05)

    def test_rejects_bad_bandwidth(self):
        with pytest.raises(ValueError, match="bandwidth"):
            RFFMap(2, 8, 0.0, seed=1)


class TestOneHot:
    def test_mmd_equals_occupancy_gap(self, rng):
        # with indicators the induced distance is the l2 occupancy gap
        n_s, n_a = 4, 3
        onehot = OneHotMap(n_s, n_a)
        d1 = rng.dirichlet(np.ones(n_s * n_a)).reshape(n_s, n_a)
        d2 = rng.dirichlet(np.ones(n_s * n_a)).reshape(n_s, n_a)
        _, val = mmd_best_response(d1.ravel(), d2.ravel())
        assert val == pytest.approx(float(np.linalg.norm(d1 - d2)), abs=1e-12)

    def test_feature_rows(self):
        onehot = OneHotMap(3, 2)
        feats = onehot(np.array([0, 2]), np.array([1, 0]))
        assert feats.shape == (2, 6)
        assert feats[0, 1] == 1.0 and feats[1, 4] == 1.0
        assert feats.sum() == 2.0

    def test_table_round_trip(self, rng):
        onehot = OneHotMap(3, 2)
        w = rng.standard_normal(6)
        table = onehot.table_from_weights(w)
        assert table[2, 1] == w[5]


def test_empirical_occupancy_normalizes(rng):
    states = rng.integers(0, 4, size=100)
    actions = rng.integers(0, 2, size=100)
    occ = empirical_occupancy(states, actions, 4, 2)
    assert occ.sum() == pytest.approx(1.0)


def test_normalizer_handles_constant_dims(rng):
    X = np.column_stack([rng.standard_normal(30), np.full(30, 2.0)])
    norm = Normalizer.fit(X)
    out = norm(X)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out[:, 1], 0.0)
