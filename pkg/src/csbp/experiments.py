"""Scripted simulation studies at configurable scale.

Each runner simulates data under known parameters, applies the
estimators, and emits flat CSV/JSON artifacts (curve data for the
figures, per-path tables, summary statistics).  Desk-scale defaults keep
the full battery runnable in a test suite; paper-scale sizes are opt-in.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import gaussian_kde

from .bayes import PriorSpec, compute_weights, posterior_summary, sample_prior
from .errors import ConfigurationError
from .estimation import (
    AlphaGrid,
    FitResult,
    OptimizerConfig,
    joint_fit_unrestricted,
    two_step_fit,
)
from .inversion import InversionConfig
from .model import ModelParams, bracket_offset
from .sampling import (
    RngStream,
    Trajectory,
    simulate_path,
    write_manifest,
    write_trajectories_csv,
)

__all__ = [
    "ExperimentPlan",
    "simulate_paths",
    "run_stability_experiment",
    "run_identifiability_experiment",
    "run_stability_region_scan",
    "run_bayes_experiment",
]

# stream_id layout under one master seed: path k uses k, the Bayes prior
# uses the dedicated offset below
_PRIOR_STREAM = 2**32

# trajectories start high enough that the extinction mass over every
# studied horizon is far below the reporting threshold
DEFAULT_X0 = 100.0


@dataclass(frozen=True)
class ExperimentPlan:
    """One simulation study: true parameters, discretization, and scale."""

    name: str
    params_true: ModelParams
    delta: float = 1.0 / 6.0
    n_steps: int = 20
    n_paths: int = 20
    x0: float = DEFAULT_X0
    grid: AlphaGrid = field(default_factory=AlphaGrid)
    seed: int = 20260810
    outputs: Path | None = None
    inversion: InversionConfig = field(default_factory=InversionConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self) -> None:
        if self.n_paths < 1 or self.n_steps < 1:
            raise ConfigurationError("n_paths and n_steps must be positive")
        if self.delta <= 0 or self.x0 <= 0:
            raise ConfigurationError("delta and x0 must be positive")

    def with_outputs(self, out_dir: str | Path | None) -> "ExperimentPlan":
        return replace(self, outputs=Path(out_dir) if out_dir else None)


def _out_path(plan: ExperimentPlan, filename: str) -> Path | None:
    if plan.outputs is None:
        return None
    plan.outputs.mkdir(parents=True, exist_ok=True)
    return plan.outputs / filename


def _write_csv(path: Path | None, header: list[str], rows: list[list]) -> None:
    if path is None:
        return
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_json(path: Path | None, doc: dict) -> None:
    if path is not None:
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _mean_ci(values: np.ndarray) -> dict:
    """Cross-path mean with a normal-approximation 95% interval;
    degenerate with a single path."""
    m = float(np.mean(values))
    if values.size < 2:
        return {"mean": m, "ci_low": None, "ci_high": None}
    half = 1.96 * float(np.std(values, ddof=1)) / math.sqrt(values.size)
    return {"mean": m, "ci_low": m - half, "ci_high": m + half}


def simulate_paths(plan: ExperimentPlan) -> list[Trajectory]:
    """One trajectory per path id, each on its own counter-keyed stream."""
    return [
        simulate_path(
            plan.x0,
            plan.delta,
            plan.n_steps,
            plan.params_true,
            RngStream(seed=plan.seed, stream_id=k),
            plan.inversion,
        )
        for k in range(plan.n_paths)
    ]


def run_stability_experiment(plan: ExperimentPlan) -> dict:
    """Simulate, fit per path with the two-step estimator, aggregate.

    Emits the mean log-likelihood per grid alpha (likelihood-surface
    curve), cross-path means with 95% intervals for the selected
    (gamma, beta), and the per-path selected triples.
    """
    trajectories = simulate_paths(plan)
    fits: list[FitResult | None] = []
    errors: list[str | None] = []
    for traj in trajectories:
        try:
            fits.append(two_step_fit(traj, plan.grid, plan.inversion, plan.optimizer))
            errors.append(None)
        except ConfigurationError as exc:  # keep partial results
            fits.append(None)
            errors.append(str(exc))

    fit_rows = []
    for pid, fit in enumerate(fits):
        if fit is None:
            continue
        for f in fit.per_alpha:
            fit_rows.append(
                [pid, f.alpha, f.gamma, f.beta,
                 f.loglik if math.isfinite(f.loglik) else "", int(f.converged),
                 f.n_evals, f.error or ""]
            )

    loglik_by_alpha = []
    for alpha in plan.grid.values:
        vals = [
            f.loglik
            for fit in fits if fit is not None
            for f in fit.per_alpha
            if f.alpha == alpha and not f.failed
        ]
        loglik_by_alpha.append(
            {"alpha": alpha,
             "mean_loglik": float(np.mean(vals)) if vals else None,
             "n_paths": len(vals)}
        )

    selected_rows = []
    for pid, fit in enumerate(fits):
        if fit is None:
            continue
        g, b, a = fit.theta_star
        selected_rows.append([pid, g, b, a, fit.per_alpha[fit.selected].loglik])
    ok_fits = [f for f in fits if f is not None]
    if not ok_fits:
        raise ConfigurationError("every path failed to fit")
    gammas = np.array([f.theta_star[0] for f in ok_fits])
    betas = np.array([f.theta_star[1] for f in ok_fits])
    alphas = np.array([f.theta_star[2] for f in ok_fits])
    unique, counts = np.unique(alphas, return_counts=True)
    modal_alpha = float(unique[np.argmax(counts)])

    summary = {
        "plan": _plan_doc(plan),
        "n_paths_fit": len(ok_fits),
        "path_errors": [e for e in errors if e],
        "gamma": _mean_ci(gammas),
        "beta": _mean_ci(betas),
        "alpha_selected": {
            "modal": modal_alpha,
            "counts": {repr(float(u)): int(c) for u, c in zip(unique, counts)},
        },
        "loglik_by_alpha": loglik_by_alpha,
    }

    if plan.outputs is not None:
        write_trajectories_csv(trajectories, _out_path(plan, "trajectories.csv"))
        write_manifest(
            _out_path(plan, "manifest.json"), plan.params_true, plan.delta,
            plan.n_steps, plan.n_paths, plan.seed, extra={"x0": plan.x0},
        )
        _write_csv(
            _out_path(plan, "fits.csv"),
            ["path_id", "alpha", "gamma", "beta", "loglik", "converged", "n_evals", "error"],
            fit_rows,
        )
        _write_csv(
            _out_path(plan, "selected.csv"),
            ["path_id", "gamma", "beta", "alpha", "loglik"],
            selected_rows,
        )
        _write_csv(
            _out_path(plan, "loglik_by_alpha.csv"),
            ["alpha", "mean_loglik", "n_paths"],
            [[r["alpha"], r["mean_loglik"] if r["mean_loglik"] is not None else "", r["n_paths"]]
             for r in loglik_by_alpha],
        )
        _write_json(_out_path(plan, "summary.json"), summary)
    return summary


def _kde_curve(values: np.ndarray, n_grid: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-bandwidth Gaussian kernel density on a padded grid
    (Silverman's rule)."""
    kde = gaussian_kde(values, bw_method="silverman")
    h = float(kde.factor) * float(np.std(values, ddof=1))
    lo, hi = float(np.min(values)) - 3 * h, float(np.max(values)) + 3 * h
    grid = np.linspace(lo, hi, n_grid)
    return grid, kde(grid)


def count_modes(values: np.ndarray, rel_height: float = 0.01) -> int:
    """Interior local maxima of the kernel density above a noise floor."""
    if values.size < 3 or np.ptp(values) == 0.0:
        return 1
    _, dens = _kde_curve(values)
    floor = rel_height * float(np.max(dens))
    interior = (dens[1:-1] > dens[:-2]) & (dens[1:-1] > dens[2:]) & (dens[1:-1] > floor)
    return int(np.count_nonzero(interior))


def run_identifiability_experiment(plan: ExperimentPlan) -> dict:
    """Direct three-parameter fits per path, with kernel-density plot data
    and mode counts showing how the estimates scatter."""
    trajectories = simulate_paths(plan)
    fits = [joint_fit_unrestricted(t, plan.inversion, plan.optimizer) for t in trajectories]
    est = {
        "gamma": np.array([f.gamma for f in fits]),
        "beta": np.array([f.beta for f in fits]),
        "alpha": np.array([f.alpha for f in fits]),
    }
    summary = {
        "plan": _plan_doc(plan),
        "estimates": {
            name: {
                "mean": float(np.mean(vals)),
                "sd": float(np.std(vals, ddof=1)) if vals.size > 1 else None,
                "modes": count_modes(vals),
            }
            for name, vals in est.items()
        },
        "n_converged": int(sum(f.converged for f in fits)),
    }
    if plan.outputs is not None:
        _write_csv(
            _out_path(plan, "estimates.csv"),
            ["path_id", "gamma", "beta", "alpha", "loglik", "converged"],
            [[i, f.gamma, f.beta, f.alpha,
              f.loglik if math.isfinite(f.loglik) else "", int(f.converged)]
             for i, f in enumerate(fits)],
        )
        for name, vals in est.items():
            grid, dens = _kde_curve(vals)
            _write_csv(
                _out_path(plan, f"kde_{name}.csv"),
                ["x", "density"],
                [[float(x), float(d)] for x, d in zip(grid, dens)],
            )
        _write_json(_out_path(plan, "summary.json"), summary)
    return summary


def run_stability_region_scan(
    delta: float,
    gamma: float,
    beta_values: tuple[float, ...],
    alphas: np.ndarray,
    a_cap: float = 500.0,
    out_dir: str | Path | None = None,
) -> dict:
    """Aliasing requirement A = 2R as the jump index varies.

    R is the singularity modulus of the transition transform at lag
    delta; at unit process scale A = 2R (one-node contour factor), the
    published stability diagnostic.  Rows where A exceeds the cap are in
    the refusal region.
    """
    alphas = np.asarray(alphas, dtype=float)
    if np.any((alphas <= 1.0) | (alphas >= 2.0)):
        raise ConfigurationError("alpha scan range must lie inside (1, 2)")
    rows = []
    crossings = {}
    for beta in beta_values:
        prev_refused = None
        for alpha in alphas:
            params = ModelParams(gamma=gamma, beta=beta, alpha=alpha)
            c = bracket_offset(delta, params)
            modulus = c ** (1.0 / (1.0 - alpha))
            a_val = 2.0 * modulus
            refused = bool(a_val > a_cap)
            rows.append([float(beta), float(alpha), float(modulus), float(a_val), int(refused)])
            if prev_refused and not refused:
                crossings[beta] = float(alpha)
            prev_refused = refused
    doc = {
        "delta": delta,
        "gamma": gamma,
        "a_cap": a_cap,
        "first_stable_alpha": {repr(float(k)): v for k, v in crossings.items()},
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "a_curve.csv", ["beta", "alpha", "modulus", "a_value", "refused"], rows)
        _write_json(out / "scan_summary.json", doc)
    return {"rows": rows, **doc}


def run_bayes_experiment(
    plan: ExperimentPlan,
    prior: PriorSpec | None = None,
    n_draws: int = 1000,
) -> dict:
    """One simulated path, prior draws, importance weights, summaries.

    Emits the weighted draws, marginal histogram bin counts, and the
    posterior means/variances with the effective sample size.
    """
    prior = prior or PriorSpec()
    traj = simulate_path(
        plan.x0, plan.delta, plan.n_steps, plan.params_true,
        RngStream(seed=plan.seed, stream_id=0), plan.inversion,
    )
    draws = sample_prior(n_draws, prior, RngStream(seed=plan.seed, stream_id=_PRIOR_STREAM))
    post = compute_weights(draws, traj, plan.inversion)
    summary = {
        "plan": _plan_doc(plan),
        "n_draws": n_draws,
        "prior": {
            "alpha_shape": list(prior.alpha_shape),
            "gamma_mean": prior.gamma_mean, "gamma_sd": prior.gamma_sd,
            "log_beta_mean": prior.log_beta_mean, "log_beta_sd": prior.log_beta_sd,
            "alpha_prior_sd": prior.alpha_prior_sd,
        },
        "posterior": posterior_summary(post),
    }
    if plan.outputs is not None:
        write_trajectories_csv([traj], _out_path(plan, "trajectory.csv"))
        _write_csv(
            _out_path(plan, "posterior.csv"),
            ["gamma", "beta", "alpha", "weight"],
            [[g, b, a, w] for (g, b, a), w in zip(post.draws, post.weights)],
        )
        for j, name in enumerate(("gamma", "beta", "alpha")):
            counts, edges = np.histogram(post.draws[:, j], bins=30, weights=post.weights)
            _write_csv(
                _out_path(plan, f"hist_{name}.csv"),
                ["bin_left", "bin_right", "weight"],
                [[float(edges[i]), float(edges[i + 1]), float(counts[i])]
                 for i in range(len(counts))],
            )
        _write_json(_out_path(plan, "summary.json"), summary)
    return summary


def _plan_doc(plan: ExperimentPlan) -> dict:
    p = plan.params_true
    return {
        "name": plan.name,
        "params_true": {"gamma": p.gamma, "beta": p.beta, "alpha": p.alpha},
        "delta": plan.delta,
        "n_steps": plan.n_steps,
        "n_paths": plan.n_paths,
        "x0": plan.x0,
        "grid": list(plan.grid.values),
        "seed": plan.seed,
    }
