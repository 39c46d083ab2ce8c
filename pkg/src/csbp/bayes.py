"""Importance-sampling posterior inference with the prior as proposal.

Draws come from a factorized prior (shifted Beta for the jump index,
normal for the drift, lognormal for the jump scale); each draw is
weighted by its likelihood on the observed path.  With the proposal equal
to the prior the weights are the likelihood values themselves, handled in
the log domain and normalized by log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ConfigurationError,
    DegenerateConditioningError,
    InstabilityError,
)
from .estimation import loglik
from .inversion import InversionConfig
from .model import ModelParams
from .sampling import RngStream, Trajectory

__all__ = [
    "PriorSpec",
    "WeightedPosterior",
    "sample_prior",
    "compute_weights",
    "posterior_expectation",
    "posterior_variance",
    "posterior_summary",
]

_ESS_WARN = 50.0


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors: alpha ~ 1 + Beta(a, b), gamma ~ Normal,
    beta ~ Lognormal (parameters on the log scale)."""

    alpha_shape: tuple[float, float] = (3.0, 3.0)
    gamma_mean: float = -6.0
    gamma_sd: float = 1.0
    log_beta_mean: float = 1.8
    log_beta_sd: float = 0.1

    def __post_init__(self) -> None:
        if min(self.alpha_shape) <= 0 or self.gamma_sd <= 0 or self.log_beta_sd <= 0:
            raise ConfigurationError("prior shape and scale parameters must be positive")

    @property
    def alpha_prior_sd(self) -> float:
        a, b = self.alpha_shape
        return math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))


@dataclass(frozen=True)
class WeightedPosterior:
    """Prior draws with normalized importance weights.

    draws: (n, 3) array of (gamma, beta, alpha); log_weights are the raw
    log-likelihoods (-inf for failed evaluations); weights sum to one;
    ess = 1 / sum(w**2) is the effective sample size.
    """

    draws: np.ndarray
    log_weights: np.ndarray
    weights: np.ndarray
    ess: float
    failure_fraction: float

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def ess_warning(self) -> bool:
        return self.ess < _ESS_WARN


def sample_prior(n_draws: int, spec: PriorSpec | None = None, rng: RngStream | None = None) -> np.ndarray:
    """i.i.d. (gamma, beta, alpha) triples from the factorized prior."""
    if n_draws < 1:
        raise ConfigurationError("n_draws must be positive")
    spec = spec or PriorSpec()
    rng = rng or RngStream(seed=0)
    gen = rng.generator()
    gamma = gen.normal(spec.gamma_mean, spec.gamma_sd, size=n_draws)
    beta = gen.lognormal(spec.log_beta_mean, spec.log_beta_sd, size=n_draws)
    a, b = spec.alpha_shape
    alpha = 1.0 + gen.beta(a, b, size=n_draws)
    return np.column_stack([gamma, beta, alpha])


def compute_weights(
    draws: np.ndarray,
    traj: Trajectory,
    cfg: InversionConfig | None = None,
    loglik_fn: Callable[[ModelParams, Trajectory, InversionConfig], float] | None = None,
) -> WeightedPosterior:
    """Weight each draw by its likelihood on the path.

    Draws where the likelihood cannot be evaluated (inversion refusal in
    the unstable alpha region, degenerate conditioning) get weight zero
    and are counted in failure_fraction; if every draw fails the
    posterior is undefined and an error is raised.
    """
    cfg = cfg or InversionConfig()
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[1] != 3 or draws.shape[0] < 1:
        raise ConfigurationError("draws must be a nonempty (n, 3) array")
    fn = loglik_fn or loglik
    log_w = np.full(draws.shape[0], -np.inf)
    failures = 0
    for i, (gamma, beta, alpha) in enumerate(draws):
        try:
            params = ModelParams(gamma=gamma, beta=beta, alpha=alpha)
            log_w[i] = fn(params, traj, cfg)
        except (ConfigurationError, InstabilityError, DegenerateConditioningError):
            failures += 1
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise ConfigurationError(
            "all importance weights are zero: every likelihood evaluation "
            "failed or underflowed"
        )
    norm = float(logsumexp(log_w[finite]))
    weights = np.zeros_like(log_w)
    weights[finite] = np.exp(log_w[finite] - norm)
    weights[finite] /= weights[finite].sum()  # remove residual rounding
    ess = 1.0 / float(np.sum(weights**2))
    return WeightedPosterior(
        draws=draws,
        log_weights=log_w,
        weights=weights,
        ess=ess,
        failure_fraction=failures / draws.shape[0],
    )


def posterior_expectation(post: WeightedPosterior, g: Callable) -> float:
    """Weighted average of g(gamma, beta, alpha) over the draws."""
    vals = np.array([g(*row) for row in post.draws], dtype=float)
    return float(np.sum(post.weights * vals))


def posterior_variance(post: WeightedPosterior, g: Callable) -> float:
    """Weighted variance of g via the squared deviation from the
    weighted mean."""
    vals = np.array([g(*row) for row in post.draws], dtype=float)
    mean = float(np.sum(post.weights * vals))
    return float(np.sum(post.weights * (vals - mean) ** 2))


def posterior_summary(post: WeightedPosterior) -> dict:
    """Means, variances and health metrics for the three coordinates."""
    names = ("gamma", "beta", "alpha")
    out: dict = {"ess": post.ess, "failure_fraction": post.failure_fraction,
                 "ess_warning": post.ess_warning, "n_draws": post.n_draws}
    for j, name in enumerate(names):
        mean = float(np.sum(post.weights * post.draws[:, j]))
        var = float(np.sum(post.weights * (post.draws[:, j] - mean) ** 2))
        out[name] = {"mean": mean, "variance": var, "sd": math.sqrt(var)}
    return out
