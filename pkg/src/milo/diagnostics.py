"""Coverage measures, effective dimensions, and evaluable error bounds.

Everything here is a pure computation on occupancies, feature covariances,
or fitted models.  Infinite coverage is reported through explicit boolean
flags, never through sentinel floats, so JSON consumers cannot mistake a
divergent ratio for a large finite one.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

RANGE_TOL = 1e-8


@dataclass
class CoverageReport:
    c_pie: float | None
    c_pie_infinite: bool
    rel_cond: float | None
    rel_cond_infinite: bool
    info_gain_bar: float | None   # finite-dimensional ln det(Sigma / lam)
    info_gain: float | None       # gram-based ln det(I + K / zeta^2)
    d_star: int | None
    d_hat: int | None
    err_o: float | None
    err_e: float | None

    def __post_init__(self) -> None:
        for name in ("c_pie", "rel_cond", "info_gain_bar", "info_gain", "err_o", "err_e"):
            v = getattr(self, name)
            if v is not None and (not np.isfinite(v) or v < 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "CoverageReport":
        return cls(**json.loads(text))


def concentrability(d_expert: np.ndarray, rho: np.ndarray) -> tuple[float | None, bool]:
    """max over the expert's support of d_expert / rho.

    Returns ``(value, infinite_flag)``; the flag is set when the expert
    visits a pair the offline distribution never touches.
    """
    d_expert = np.asarray(d_expert, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if d_expert.shape != rho.shape:
        raise ValueError("distributions must share a shape")
    support = d_expert > 0
    if np.any(support & (rho == 0)):
        return None, True
    ratios = d_expert[support] / rho[support]
    return (float(ratios.max()) if ratios.size else 0.0), False


def relative_condition_number(
    sigma_e: np.ndarray, sigma_rho: np.ndarray
) -> tuple[float | None, bool]:
    """sup_x (x' Sigma_e x) / (x' Sigma_rho x) on the range of Sigma_rho.

    Any expert covariance mass outside that range (beyond RANGE_TOL) makes
    the ratio infinite.
    """
    sigma_e = np.asarray(sigma_e, dtype=float)
    sigma_rho = np.asarray(sigma_rho, dtype=float)
    if sigma_e.shape != sigma_rho.shape or sigma_e.ndim != 2:
        raise ValueError("covariances must be square matrices of equal size")
    evals, evecs = np.linalg.eigh(sigma_rho)
    cut = max(evals.max(), 0.0) * 1e-12 + 1e-300
    on = evals > cut
    null_basis = evecs[:, ~on]
    if null_basis.size:
        leak = float(np.abs(null_basis.T @ sigma_e @ null_basis).max())
        if leak > RANGE_TOL:
            return None, True
    range_basis = evecs[:, on]
    if not range_basis.size:
        # Sigma_rho = 0; Sigma_e must be ~0 too or we returned above
        return 0.0, False
    inv_sqrt = range_basis / np.sqrt(evals[on])
    pencil = inv_sqrt.T @ sigma_e @ inv_sqrt
    top = float(np.linalg.eigvalsh(pencil).max())
    return max(top, 0.0), False


def effective_dimension(mu: np.ndarray, n_o: int, zeta: float) -> int:
    """min { j : j >= B(j+1) * n_o / zeta^2 } with B(j) the eigenvalue tail sum."""
    mu = np.asarray(mu, dtype=float)
    if np.any(np.diff(mu) > 1e-12):
        raise ValueError("eigenvalues must be nonincreasing")
    if np.any(mu < -1e-12):
        raise ValueError("eigenvalues must be nonnegative")
    # tails[j] = sum of mu[j:], so tails[j] equals B(j+1) in 1-indexed terms
    tails = np.concatenate([np.cumsum(mu[::-1])[::-1], [0.0]])
    for j in range(len(mu) + 1):
        if j >= tails[j] * n_o / zeta**2:
            return j
    return len(mu)


def empirical_effective_dimension(mu_hat: np.ndarray, zeta: float) -> int:
    """Gram-spectrum version: min { j : j >= B_hat(j+1) / zeta^2 }."""
    mu_hat = np.sort(np.asarray(mu_hat, dtype=float))[::-1]
    mu_hat = np.maximum(mu_hat, 0.0)
    tails = np.concatenate([np.cumsum(mu_hat[::-1])[::-1], [0.0]])
    for j in range(len(mu_hat) + 1):
        if j >= tails[j] / zeta**2:
            return j
    return len(mu_hat)


@dataclass
class ErrBounds:
    err_o: float             # statement form: 8 H^2 E[min(sigma, 1)]
    err_o_proof_form: float  # (6 H^2 + 2 H) E[min(sigma, 1)] + 2 H eps_stat
    err_e: float             # 2 H sqrt(ln(2 |F| / delta) / (2 n_e))


def expert_sigma_mean(sigma: np.ndarray, d_expert: np.ndarray | None = None) -> float:
    """E[min(sigma, 1)] under the expert occupancy (or a sample average)."""
    clipped = np.minimum(np.asarray(sigma, dtype=float), 1.0)
    if d_expert is None:
        return float(clipped.mean())
    return float(np.sum(np.asarray(d_expert, dtype=float) * clipped))


def err_bounds(
    sigma: np.ndarray,
    n_e: int,
    n_classes: int,
    delta: float,
    horizon: int,
    d_expert: np.ndarray | None = None,
) -> ErrBounds:
    """Evaluate both error terms of the main suboptimality bound.

    ``sigma`` is either a width table weighted by ``d_expert`` (exact
    expectation) or widths at expert-drawn samples (averaged directly).
    """
    mean_sig = expert_sigma_mean(sigma, d_expert)
    H = horizon
    eps_stat = math.sqrt(math.log(2.0 * n_classes / delta) / (2.0 * n_e))
    return ErrBounds(
        err_o=8.0 * H**2 * mean_sig,
        err_o_proof_form=(6.0 * H**2 + 2.0 * H) * mean_sig + 2.0 * H * eps_stat,
        err_e=2.0 * H * eps_stat,
    )


# ---------------------------------------------------------------------------
# Closed-form bound evaluators (universal constants set to 1 by default;
# outputs are for trend comparison, not absolute certification)
# ---------------------------------------------------------------------------


def theorem_bound_tabular(
    horizon: int, c_pie: float, n_states: int, n_actions: int, n_o: int,
    delta: float, c1: float = 1.0, c2: float = 1.0,
) -> float:
    H, S, A = horizon, n_states, n_actions
    lead = math.sqrt(c_pie * S**2 * A / n_o) + c_pie * S * A / n_o
    return c1 * H**2 * lead * math.log(S * A * c2 / delta)


def theorem_bound_knr(
    horizon: int, c_pie: float, rank: int, d_state: int, n_o: int,
    delta: float, c1: float = 1.0, c2: float = 1.0,
) -> float:
    H = horizon
    lead = rank**2 + rank * math.log(c2 / delta)
    return c1 * H**2 * lead * math.sqrt(d_state * c_pie / n_o) * math.sqrt(math.log(1.0 + n_o))


def theorem_bound_gp(
    horizon: int, c_pie: float, d_star: int, d_state: int, n_o: int,
    delta: float, c1: float = 1.0, c2: float = 1.0,
) -> float:
    H = horizon
    lead = d_star**2 + d_star * math.log(c2 / delta)
    log_terms = math.sqrt(math.log(c2 * d_state * n_o / delta) ** 3 * math.log(1.0 + n_o))
    return c1 * H**2 * lead * math.sqrt(d_state * c_pie / n_o) * log_terms


def theorem_bound_evaluators(kind: str, **kwargs) -> float:
    table = {
        "tabular": theorem_bound_tabular,
        "knr": theorem_bound_knr,
        "gp": theorem_bound_gp,
    }
    if kind not in table:
        raise ValueError(f"unknown bound kind {kind!r}")
    return table[kind](**kwargs)


def learning_curve(gp_model, rho_samples: np.ndarray) -> float:
    """Average posterior variance over draws from the offline distribution."""
    return float(np.mean(gp_model.posterior_var(np.atleast_2d(rho_samples))))


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


def coverage_report_tabular(
    d_expert: np.ndarray,
    rho: np.ndarray,
    sigma: np.ndarray,
    n_e: int,
    n_classes: int,
    delta: float,
    horizon: int,
) -> CoverageReport:
    """One-hot instantiation: concentrability doubles as the condition number."""
    c_pie, c_inf = concentrability(d_expert, rho)
    sigma_e = np.diag(d_expert.ravel())
    sigma_rho = np.diag(rho.ravel())
    rel, rel_inf = relative_condition_number(sigma_e, sigma_rho)
    bounds = err_bounds(sigma, n_e, n_classes, delta, horizon, d_expert=d_expert)
    return CoverageReport(
        c_pie=c_pie,
        c_pie_infinite=c_inf,
        rel_cond=rel,
        rel_cond_infinite=rel_inf,
        info_gain_bar=None,
        info_gain=None,
        # one-hot features have a finite-rank spectrum, where the effective
        # dimension reduces to the rank of the offline feature covariance
        d_star=int(np.sum(rho > 0)),
        d_hat=None,
        err_o=bounds.err_o,
        err_e=bounds.err_e,
    )


def coverage_report_continuous(
    expert_inputs: np.ndarray,
    offline_inputs: np.ndarray,
    featurize,
    model,
    n_e: int,
    n_classes: int,
    delta: float,
    horizon: int,
    zeta: float,
) -> CoverageReport:
    """Feature-space coverage for a fitted ridge or GP dynamics model.

    ``featurize`` maps stacked (s, a) rows to feature rows; ``model`` must
    expose either ``information_gain_bar``/``sigma(phi, delta)`` (ridge) or
    ``information_gain``/``sigma(x, delta)`` (GP).
    """
    phi_e = featurize(expert_inputs)
    phi_o = featurize(offline_inputs)
    sigma_e = phi_e.T @ phi_e / len(phi_e)
    sigma_rho = phi_o.T @ phi_o / len(phi_o)
    rel, rel_inf = relative_condition_number(sigma_e, sigma_rho)

    mu = np.linalg.eigvalsh(sigma_rho)[::-1]
    d_star = effective_dimension(np.maximum(mu, 0.0), len(phi_o), zeta)

    gram = phi_o @ phi_o.T
    d_hat = empirical_effective_dimension(np.linalg.eigvalsh(gram), zeta)

    if hasattr(model, "information_gain_bar"):
        gain_bar, gain = model.information_gain_bar(), None
        widths = model.sigma(phi_e, delta)
    else:
        gain_bar, gain = None, model.information_gain()
        widths = model.sigma(expert_inputs, delta)
    bounds = err_bounds(widths, n_e, n_classes, delta, horizon)
    return CoverageReport(
        c_pie=None,
        c_pie_infinite=False,
        rel_cond=rel,
        rel_cond_infinite=rel_inf,
        info_gain_bar=gain_bar,
        info_gain=gain,
        d_star=d_star,
        d_hat=d_hat,
        err_o=bounds.err_o,
        err_e=bounds.err_e,
    )
