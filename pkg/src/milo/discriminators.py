"""Cost classes for the adversarial matching objective.

Two families are supported.  A `FiniteClass` holds explicit candidate cost
tables bounded in [0, 1]; its best response is an argmax over members.  The
kernel route plays over the unit ball of linear functions of a feature map
(random Fourier features in continuous spaces, one-hot indicators in finite
ones); the best response and the induced distance are closed form:

    w* = delta / ||delta||,   distance = ||delta||,
    delta = E_model[features] - E_expert[features].

Feature inputs are concatenated (state, action) vectors, normalized by the
per-dimension statistics of the offline dataset so bandwidths are unitless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class FiniteClass:
    """Explicit finite set of cost tables with entries in [0, 1]."""

    members: np.ndarray  # (m, S, A)

    def __post_init__(self) -> None:
        self.members = np.asarray(self.members, dtype=float)
        if self.members.ndim != 3:
            raise ValueError("members must be (m, S, A)")
        if np.any(self.members < 0.0) or np.any(self.members > 1.0):
            raise ValueError("finite-class members must have range within [0, 1]")

    def __len__(self) -> int:
        return len(self.members)


def best_response_finite(
    fclass: FiniteClass, d_model: np.ndarray, d_expert: np.ndarray
) -> tuple[int, float]:
    """argmax over members of <d_model - d_expert, f>; ties pick the lowest index.

    Both occupancy arguments are (S, A) distributions (exact or empirical).
    """
    gap = np.asarray(d_model, dtype=float) - np.asarray(d_expert, dtype=float)
    scores = np.einsum("msa,sa->m", fclass.members, gap)
    idx = int(np.argmax(scores))  # argmax returns the first maximizer
    return idx, float(scores[idx])


def finite_class_with_decoys(cost: np.ndarray, n_decoys: int, seed: int) -> FiniteClass:
    """The given cost table plus uniform random decoy tables.

    A realizable class for experiments: the solver sees the set but is never
    told which member is the environment's cost.
    """
    rng = np.random.default_rng(seed)
    cost = np.asarray(cost, dtype=float)
    decoys = rng.uniform(0.0, 1.0, size=(n_decoys, *cost.shape))
    return FiniteClass(np.concatenate([cost[None], decoys]))


def empirical_occupancy(states: np.ndarray, actions: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    out = np.zeros((n_states, n_actions))
    np.add.at(out, (states, actions), 1.0)
    if out.sum() > 0:
        out /= out.sum()
    return out


# ---------------------------------------------------------------------------
# Feature maps
# ---------------------------------------------------------------------------


@dataclass
class Normalizer:
    """Per-dimension shift and scale frozen from the offline data."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        std = X.std(axis=0)
        return cls(mean=X.mean(axis=0), std=np.where(std > 1e-8, std, 1.0))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean) / self.std


class RFFMap:
    """Random Fourier features phi_j(x) = sqrt(2/D) cos(w_j . x + b_j).

    Frequencies are N(0, 1/bandwidth^2) and phases uniform on [0, 2 pi), so
    E[phi(x) . phi(y)] approximates a Gaussian kernel.  The map is fully
    determined by (seed, dim, bandwidth, normalizer) and serializes to JSON.
    """

    def __init__(self, input_dim: int, n_features: int, bandwidth: float, seed: int, normalizer: Normalizer | None = None):
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        self.input_dim = input_dim
        self.n_features = n_features
        self.bandwidth = bandwidth
        self.seed = seed
        self.normalizer = normalizer
        rng = np.random.default_rng(seed)
        self.freqs = rng.standard_normal((n_features, input_dim)) / bandwidth
        self.phases = rng.uniform(0.0, 2.0 * np.pi, size=n_features)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.normalizer is not None:
            X = self.normalizer(X)
        proj = X @ self.freqs.T + self.phases
        return np.sqrt(2.0 / self.n_features) * np.cos(proj)

    def to_json(self) -> str:
        doc = {
            "input_dim": self.input_dim,
            "n_features": self.n_features,
            "bandwidth": self.bandwidth,
            "seed": self.seed,
        }
        if self.normalizer is not None:
            doc["normalizer"] = {
                "mean": self.normalizer.mean.tolist(),
                "std": self.normalizer.std.tolist(),
            }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RFFMap":
        doc = json.loads(text)
        norm = None
        if "normalizer" in doc:
            norm = Normalizer(
                mean=np.array(doc["normalizer"]["mean"]),
                std=np.array(doc["normalizer"]["std"]),
            )
        return cls(doc["input_dim"], doc["n_features"], doc["bandwidth"], doc["seed"], norm)


def make_rff(
    offline_inputs: np.ndarray, n_features: int, seed: int, bandwidth: float | None = None
) -> RFFMap:
    """Fit the normalizer on offline (s, a) rows, then draw the random map.

    Bandwidth defaults to the median pairwise distance of the normalized
    inputs.
    """
    from milo.models import median_heuristic_bandwidth

    X = np.atleast_2d(np.asarray(offline_inputs, dtype=float))
    norm = Normalizer.fit(X)
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(norm(X))
    return RFFMap(X.shape[1], n_features, bandwidth, seed, norm)


class OneHotMap:
    """Indicator basis over a finite state-action space.

    The kernel route degenerates to exact occupancy matching: the induced
    distance is the l2 gap between occupancy vectors.
    """

    def __init__(self, n_states: int, n_actions: int):
        self.n_states = n_states
        self.n_actions = n_actions
        self.n_features = n_states * n_actions

    def __call__(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.atleast_1d(np.asarray(states, dtype=int))
        actions = np.atleast_1d(np.asarray(actions, dtype=int))
        out = np.zeros((len(states), self.n_features))
        out[np.arange(len(states)), states * self.n_actions + actions] = 1.0
        return out

    def table_from_weights(self, w: np.ndarray) -> np.ndarray:
        """View a weight vector as a cost table f(s, a) = w[(s, a)]."""
        return np.asarray(w, dtype=float).reshape(self.n_states, self.n_actions)


# ---------------------------------------------------------------------------
# Unit-ball linear discriminators
# ---------------------------------------------------------------------------


@dataclass
class LinearDiscriminator:
    """f(x) = w . phi(x) with ||w|| <= radius (the dual ball of the distance)."""

    weights: np.ndarray
    radius: float = 1.0

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        norm = np.linalg.norm(self.weights)
        if norm > self.radius * (1.0 + 1e-9):
            raise ValueError(f"discriminator weight norm {norm:.6f} exceeds radius {self.radius}")

    def __call__(self, features: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(features, dtype=float)) @ self.weights


def mmd_best_response(
    mean_model: np.ndarray, mean_expert: np.ndarray, radius: float = 1.0
) -> tuple[LinearDiscriminator, float]:
    """Closed-form maximizer of w . (mean_model - mean_expert) over the ball.

    Returns the discriminator and the distance value ||delta|| * radius.
    A zero gap yields the zero discriminator and value 0.
    """
    delta = np.asarray(mean_model, dtype=float) - np.asarray(mean_expert, dtype=float)
    norm = float(np.linalg.norm(delta))
    if norm == 0.0:
        return LinearDiscriminator(np.zeros_like(delta), radius), 0.0
    w = radius * delta / norm
    return LinearDiscriminator(w, radius), radius * norm
