"""Dynamics models fit from offline data, with calibrated uncertainty.

Every model provides a point estimate of the transition kernel and a
per-input uncertainty width sigma(s, a) such that, with probability 1 - delta
over the offline data, the total-variation distance between the estimated
and true next-state distributions is at most min(sigma, 2).  The pessimistic
cost penalty is ``b = horizon * min(sigma, 2)``.

Model zoo:

* `TabularModel`: smoothed empirical frequencies, sub-stochastic rows; the
  missing mass is routed to an absorbing zero-cost sink by `to_mdp`.
* `KNRModel`: ridge regression of next state on features, Gaussian noise.
* `GPModel`: GP regression with an arbitrary kernel; with a finite-rank
  kernel and lambda = zeta^2 it reproduces the ridge model exactly.
* `EnsembleModel`: bootstrapped ridge members; max pairwise disagreement of
  the predicted means serves as a practical, unscaled penalty.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from milo.data import OfflineDataset
from milo.mdp import FiniteMDP, LinearGaussianEnv

COND_WARN_THRESHOLD = 1e12


def clipped(sigma: np.ndarray) -> np.ndarray:
    """Total variation can never exceed 2, so widths are capped there."""
    return np.minimum(sigma, 2.0)


def penalty_from_sigma(sigma: np.ndarray, horizon: int) -> np.ndarray:
    return horizon * clipped(np.asarray(sigma, dtype=float))


# ---------------------------------------------------------------------------
# Tabular
# ---------------------------------------------------------------------------


@dataclass
class TabularModel:
    """Smoothed count model P_hat(s'|s,a) = N(s,a,s') / (N(s,a) + lam)."""

    counts: np.ndarray  # (S, A, S)
    lam: float

    @property
    def n_states(self) -> int:
        return self.counts.shape[0]

    @property
    def n_actions(self) -> int:
        return self.counts.shape[1]

    @property
    def visits(self) -> np.ndarray:
        return self.counts.sum(axis=2)

    def transition(self) -> np.ndarray:
        """Sub-stochastic transition table, rows sum to N / (N + lam) <= 1."""
        denom = self.visits + self.lam
        return self.counts / denom[:, :, None]

    def sigma(self, delta: float) -> np.ndarray:
        """Calibration width for the smoothed count model.

        sqrt((S ln 2 + ln(2 S A / delta)) / (2 (N + lam))) + lam / (N + lam),
        valid simultaneously over all (s, a) with probability 1 - delta.
        """
        S, A = self.n_states, self.n_actions
        n = self.visits + self.lam
        log_term = S * math.log(2.0) + math.log(2.0 * S * A / delta)
        return np.sqrt(log_term / (2.0 * n)) + self.lam / n

    def to_mdp(self, horizon: int, d0: np.ndarray) -> FiniteMDP:
        """Stochastic completion: missing row mass goes to an absorbing sink.

        The sink is a fresh terminal state with cost 0 under every action, so
        planning in the returned MDP treats unmodeled transitions as dead
        ends rather than free reward.  Cost tables for the original space are
        extended with `augment_cost`.
        """
        S, A = self.n_states, self.n_actions
        trans = np.zeros((S + 1, A, S + 1))
        p = self.transition()
        trans[:S, :, :S] = p
        trans[:S, :, S] = 1.0 - p.sum(axis=2)
        trans[S, :, S] = 1.0
        cost = np.zeros((S + 1, A))
        d0_aug = np.concatenate([np.asarray(d0, dtype=float), [0.0]])
        return FiniteMDP(transition=trans, cost=cost, horizon=horizon, d0=d0_aug)

    @staticmethod
    def augment_cost(f: np.ndarray, sink_value: float = 0.0) -> np.ndarray:
        """Extend a cost table (S, A) to the sink-augmented space (S+1, A)."""
        f = np.asarray(f, dtype=float)
        return np.vstack([f, np.full((1, f.shape[1]), sink_value)])


def fit_tabular(
    data: OfflineDataset, n_states: int, n_actions: int, lam: float = 1.0
) -> TabularModel:
    counts = np.zeros((n_states, n_actions, n_states))
    np.add.at(counts, (data.states, data.actions, data.next_states), 1.0)
    return TabularModel(counts=counts, lam=lam)


def exact_tv_sigma(model: TabularModel, env: FiniteMDP) -> np.ndarray:
    """Exact model error per (s, a): l1 gap to the true kernel plus leaked mass.

    This is the total variation distance on the sink-augmented space, the
    quantity for which the pessimism guarantees hold with equality-grade
    certainty (no probabilistic slack).
    """
    p_hat = model.transition()
    gap = np.abs(p_hat - env.transition).sum(axis=2)
    leak = 1.0 - p_hat.sum(axis=2)
    return gap + leak


def tabular_tv(model: TabularModel, env: FiniteMDP) -> np.ndarray:
    """l1 distance between estimated and true rows over the original states."""
    return np.abs(model.transition() - env.transition).sum(axis=2)


# ---------------------------------------------------------------------------
# Kernelized nonlinear regulator (ridge regression with Gaussian noise)
# ---------------------------------------------------------------------------


@dataclass
class KNRModel:
    w_hat: np.ndarray        # (d_state, d_phi)
    sigma_mat: np.ndarray    # (d_phi, d_phi) = sum phi phi^T + lam I
    lam: float
    noise_std: float
    w_star_norm: float       # spectral norm bound used by the width multiplier
    n_samples: int
    ill_conditioned: bool = False

    @property
    def d_state(self) -> int:
        return self.w_hat.shape[0]

    def predict(self, phi: np.ndarray) -> np.ndarray:
        return np.asarray(phi, dtype=float) @ self.w_hat.T

    def information_gain_bar(self) -> float:
        """ln det(Sigma / lam), the log volume ratio against the prior."""
        sign, logdet = np.linalg.slogdet(self.sigma_mat)
        if sign <= 0:
            raise np.linalg.LinAlgError("feature covariance is not positive definite")
        return float(logdet - self.sigma_mat.shape[0] * math.log(self.lam))

    def beta(self, delta: float) -> float:
        gain = self.information_gain_bar()
        return math.sqrt(
            2.0 * self.lam * self.w_star_norm**2
            + 8.0 * self.noise_std**2 * (self.d_state * math.log(5.0) + math.log(1.0 / delta) + gain)
        )

    def leverage(self, phi: np.ndarray) -> np.ndarray:
        """phi^T Sigma^{-1} phi for a batch of feature rows."""
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        sol = np.linalg.solve(self.sigma_mat, phi.T)
        return np.einsum("nd,dn->n", phi, sol)

    def sigma(self, phi: np.ndarray, delta: float) -> np.ndarray:
        lev = np.maximum(self.leverage(phi), 0.0)
        return (self.beta(delta) / self.noise_std) * np.sqrt(lev)


def fit_knr(
    features: np.ndarray,
    next_states: np.ndarray,
    lam: float,
    noise_std: float,
    w_star_norm: float = 1.0,
) -> KNRModel:
    """Ridge solution of min_W sum ||W phi_i - s'_i||^2 + lam ||W||_F^2."""
    X = np.asarray(features, dtype=float)
    Y = np.asarray(next_states, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ValueError("features (n, d_phi) and next_states (n, d_state) required")
    sigma_mat = X.T @ X + lam * np.eye(X.shape[1])
    cond = np.linalg.cond(sigma_mat)
    ill = bool(cond > COND_WARN_THRESHOLD)
    if ill:
        warnings.warn(
            f"regularized feature covariance is ill conditioned (cond={cond:.2e})",
            RuntimeWarning,
            stacklevel=2,
        )
    w_hat = np.linalg.solve(sigma_mat, X.T @ Y).T
    return KNRModel(
        w_hat=w_hat,
        sigma_mat=sigma_mat,
        lam=lam,
        noise_std=noise_std,
        w_star_norm=w_star_norm,
        n_samples=len(X),
        ill_conditioned=ill,
    )


def fit_knr_from_dataset(
    data: OfflineDataset, env: LinearGaussianEnv, lam: float, w_star_norm: float | None = None
) -> KNRModel:
    phi = env.featurize(data.states, data.actions)
    if w_star_norm is None:
        w_star_norm = float(np.linalg.norm(env.w_star, 2))
    return fit_knr(phi, data.next_states, lam=lam, noise_std=env.noise_std, w_star_norm=w_star_norm)


def knr_generative_env(model: KNRModel, template: LinearGaussianEnv) -> LinearGaussianEnv:
    """The fitted model viewed as a simulator with the template's geometry."""
    return LinearGaussianEnv(
        w_star=model.w_hat,
        features=template.features,
        noise_std=model.noise_std,
        horizon=template.horizon,
        init_sampler=template.init_sampler,
        cost_fn=template.cost_fn,
        state_low=template.state_low,
        state_high=template.state_high,
        action_low=template.action_low,
        action_high=template.action_high,
        name=template.name + "-model",
    )


# ---------------------------------------------------------------------------
# Gaussian process regression
# ---------------------------------------------------------------------------


def rbf_kernel(bandwidth: float, output_scale: float = 1.0):
    def k(X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
        X1 = np.atleast_2d(np.asarray(X1, dtype=float))
        X2 = np.atleast_2d(np.asarray(X2, dtype=float))
        sq = (
            np.sum(X1**2, axis=1)[:, None]
            - 2.0 * X1 @ X2.T
            + np.sum(X2**2, axis=1)[None, :]
        )
        return output_scale * np.exp(-np.maximum(sq, 0.0) / (2.0 * bandwidth**2))

    return k


def median_heuristic_bandwidth(X: np.ndarray, max_points: int = 2000, seed: int = 0) -> float:
    """Median pairwise distance; the stock choice when nothing is tuned."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) > max_points:
        idx = np.random.default_rng(seed).choice(len(X), size=max_points, replace=False)
        X = X[idx]
    sq = (
        np.sum(X**2, axis=1)[:, None] - 2.0 * X @ X.T + np.sum(X**2, axis=1)[None, :]
    )
    d = np.sqrt(np.maximum(sq[np.triu_indices(len(X), k=1)], 0.0))
    med = float(np.median(d)) if len(d) else 1.0
    return med if med > 0 else 1.0


@dataclass
class GPModel:
    X: np.ndarray            # (n, d_in) training inputs
    Y: np.ndarray            # (n, d_state) training targets
    kernel: object           # callable (X1, X2) -> gram block
    noise_std: float
    chol: np.ndarray = field(repr=False, default=None)
    jitter: float = 0.0

    @property
    def n_samples(self) -> int:
        return len(self.X)

    @property
    def d_state(self) -> int:
        return self.Y.shape[1]

    def _solve(self, B: np.ndarray) -> np.ndarray:
        z = np.linalg.solve(self.chol, B)
        return np.linalg.solve(self.chol.T, z)

    def posterior_mean(self, Xq: np.ndarray) -> np.ndarray:
        kq = self.kernel(self.X, np.atleast_2d(Xq))
        return kq.T @ self._solve(self.Y)

    def posterior_kernel(self, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
        k12 = self.kernel(np.atleast_2d(X1), np.atleast_2d(X2))
        k1 = self.kernel(self.X, np.atleast_2d(X1))
        k2 = self.kernel(self.X, np.atleast_2d(X2))
        return k12 - k1.T @ self._solve(k2)

    def posterior_var(self, Xq: np.ndarray) -> np.ndarray:
        Xq = np.atleast_2d(Xq)
        kq = self.kernel(self.X, Xq)
        prior = np.diag(self.kernel(Xq, Xq)).copy()
        reduction = np.einsum("nm,nm->m", kq, self._solve(kq))
        return np.maximum(prior - reduction, 0.0)

    def information_gain(self) -> float:
        """ln det(I + K / zeta^2) over the training inputs."""
        K = self.kernel(self.X, self.X)
        sign, logdet = np.linalg.slogdet(np.eye(len(K)) + K / self.noise_std**2)
        return float(logdet)

    def beta(self, delta: float) -> float:
        gain = self.information_gain()
        log3 = math.log(self.d_state * self.n_samples / delta) ** 3
        return math.sqrt(self.d_state * (2.0 + 150.0 * log3 * gain))

    def sigma(self, Xq: np.ndarray, delta: float) -> np.ndarray:
        return (self.beta(delta) / self.noise_std) * np.sqrt(self.posterior_var(Xq))


def fit_gp(X: np.ndarray, Y: np.ndarray, kernel, noise_std: float) -> GPModel:
    """Cholesky of K + zeta^2 I with an escalating jitter retry.

    Starts jitter at 1e-10 * tr(K) / n and multiplies by 10 up to three
    times before giving up.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    K = kernel(X, X)
    base = K + noise_std**2 * np.eye(len(K))
    jitter = 0.0
    step = 1e-10 * float(np.trace(K)) / max(len(K), 1)
    for attempt in range(4):
        try:
            chol = np.linalg.cholesky(base + jitter * np.eye(len(K)))
            return GPModel(X=X, Y=Y, kernel=kernel, noise_std=noise_std, chol=chol, jitter=jitter)
        except np.linalg.LinAlgError:
            jitter = step if jitter == 0.0 else jitter * 10.0
    raise np.linalg.LinAlgError(
        f"Cholesky failed after jitter escalation up to {jitter:.3e}"
    )


def fit_gp_from_dataset(
    data: OfflineDataset, noise_std: float, bandwidth: float | None = None
) -> GPModel:
    inputs = np.concatenate(
        [np.atleast_2d(data.states), np.atleast_2d(data.actions)], axis=1
    )
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(inputs)
    return fit_gp(inputs, data.next_states, rbf_kernel(bandwidth), noise_std)


# ---------------------------------------------------------------------------
# Bootstrap ensemble
# ---------------------------------------------------------------------------


@dataclass
class EnsembleModel:
    members: list[KNRModel]

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least two members")

    def predict(self, phi: np.ndarray) -> np.ndarray:
        """Mean prediction across members."""
        return np.mean([m.predict(phi) for m in self.members], axis=0)

    def disagreement(self, phi: np.ndarray) -> np.ndarray:
        """Max pairwise l2 gap between member means; zero iff members agree."""
        preds = np.stack([m.predict(phi) for m in self.members])
        k = len(self.members)
        out = np.zeros(preds.shape[1])
        for i in range(k):
            for j in range(i + 1, k):
                out = np.maximum(out, np.linalg.norm(preds[i] - preds[j], axis=-1))
        return out


def fit_ensemble(
    features: np.ndarray,
    next_states: np.ndarray,
    lam: float,
    noise_std: float,
    n_members: int = 4,
    seed: int = 0,
    w_star_norm: float = 1.0,
) -> EnsembleModel:
    if n_members < 2:
        raise ValueError("an ensemble needs at least two members")
    rng = np.random.default_rng(seed)
    n = len(features)
    members = []
    for _ in range(n_members):
        idx = rng.integers(0, n, size=n)
        members.append(
            fit_knr(features[idx], next_states[idx], lam, noise_std, w_star_norm=w_star_norm)
        )
    return EnsembleModel(members)


# ---------------------------------------------------------------------------
# Calibration checks
# ---------------------------------------------------------------------------


def calibration_check_tabular(
    model: TabularModel, env: FiniteMDP, delta: float
) -> dict:
    """Exact TV against the width at every (s, a).

    Returns violation count, fraction, and the worst ratio tv / width.
    """
    tv = tabular_tv(model, env)
    width = clipped(model.sigma(delta))
    viol = tv > width
    ratio = np.divide(tv, width, out=np.zeros_like(tv), where=width > 0)
    return {
        "violations": int(viol.sum()),
        "checked": int(tv.size),
        "fraction": float(viol.mean()),
        "max_ratio": float(ratio.max()),
    }


def calibration_check_gaussian(
    predicted_mean: np.ndarray,
    true_mean: np.ndarray,
    noise_std: float,
    sigma: np.ndarray,
) -> dict:
    """Surrogate check for continuous models.

    For two Gaussians with shared isotropic covariance, the l1 distance is at
    most ||mu1 - mu2|| / zeta, so that ratio is compared against min(sigma, 2).
    """
    gap = np.linalg.norm(
        np.atleast_2d(predicted_mean) - np.atleast_2d(true_mean), axis=-1
    ) / noise_std
    width = clipped(np.asarray(sigma, dtype=float))
    viol = gap > width
    ratio = np.divide(gap, width, out=np.zeros_like(gap), where=width > 0)
    return {
        "violations": int(viol.sum()),
        "checked": int(gap.size),
        "fraction": float(viol.mean()),
        "max_ratio": float(ratio.max()),
    }
