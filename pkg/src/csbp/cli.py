"""Command-line harness for simulation, estimation and the study presets.

Exit codes: 0 on success, 2 for configuration problems (bad flags,
invalid parameters, unusable inputs), 3 when the numerical inversion
refuses the requested regime as unstable.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .bayes import PriorSpec
from .errors import ConfigurationError, InstabilityError
from .estimation import AlphaGrid, two_step_fit
from .experiments import (
    DEFAULT_X0,
    ExperimentPlan,
    run_bayes_experiment,
    run_identifiability_experiment,
    run_stability_experiment,
    run_stability_region_scan,
)
from .model import ModelParams
from .sampling import (
    RngStream,
    read_trajectories_csv,
    simulate_path,
    write_manifest,
    write_trajectories_csv,
)

EXIT_CONFIG = 2
EXIT_UNSTABLE = 3


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InstabilityError as exc:
            click.echo(f"numerical-instability refusal: {exc}", err=True)
            sys.exit(EXIT_UNSTABLE)
        except ConfigurationError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


def _load_config(config: str | None) -> dict:
    if not config:
        return {}
    try:
        doc = json.loads(Path(config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return doc


def _merge(cfg: dict, key: str, flag_value, default):
    """Flag beats config beats default."""
    if flag_value is not None:
        return flag_value
    return cfg.get(key, default)


def _parse_grid(text: str | None) -> AlphaGrid:
    if not text:
        return AlphaGrid()
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigurationError(f"bad --grid value: {text!r}") from exc
    return AlphaGrid(values=values)


@click.group()
def main():
    """Simulate and estimate stable branching processes."""


_shared = [
    click.option("--config", type=str, default=None, help="JSON file with defaults."),
    click.option("--seed", type=int, default=None, help="Master seed."),
    click.option("--out", type=str, default=None, help="Output directory."),
    click.option("--delta", type=float, default=None, help="Time step."),
    click.option("--steps", type=int, default=None, help="Steps per path."),
]


def _with_shared(fn):
    for opt in reversed(_shared):
        fn = opt(fn)
    return fn


def _params_from(cfg: dict, gamma, beta, alpha) -> ModelParams:
    return ModelParams(
        gamma=_merge(cfg, "gamma", gamma, -6.0),
        beta=_merge(cfg, "beta", beta, 6.0),
        alpha=_merge(cfg, "alpha", alpha, 1.5),
    )


@main.command()
@_with_shared
@click.option("--gamma", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--paths", type=int, default=None, help="Number of paths.")
@click.option("--x0", type=float, default=None, help="Initial state.")
@_handle_errors
def simulate(config, seed, out, delta, steps, gamma, beta, alpha, paths, x0):
    """Simulate discrete trajectories and write CSV plus manifest."""
    cfg = _load_config(config)
    params = _params_from(cfg, gamma, beta, alpha)
    delta = _merge(cfg, "delta", delta, 1.0 / 6.0)
    steps = _merge(cfg, "steps", steps, 20)
    paths = _merge(cfg, "paths", paths, 1)
    x0 = _merge(cfg, "x0", x0, DEFAULT_X0)
    seed = _merge(cfg, "seed", seed, 20260810)
    out_dir = Path(_merge(cfg, "out", out, "csbp-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    trajs = [
        simulate_path(x0, delta, steps, params, RngStream(seed=seed, stream_id=k))
        for k in range(paths)
    ]
    write_trajectories_csv(trajs, out_dir / "trajectories.csv")
    write_manifest(out_dir / "manifest.json", params, delta, steps, paths, seed,
                   extra={"x0": x0})
    click.echo(f"wrote {paths} path(s) to {out_dir}")


@main.command()
@_with_shared
@click.option("--input", "input_csv", type=str, required=True,
              help="Trajectory CSV (path_id, step_index, time, value).")
@click.option("--grid", type=str, default=None,
              help="Comma-separated alpha grid, e.g. 1.1,1.2,...")
@_handle_errors
def estimate(config, seed, out, delta, steps, input_csv, grid):
    """Two-step fit for every path in a trajectory CSV."""
    del steps, seed  # estimation is deterministic
    cfg = _load_config(config)
    delta = _merge(cfg, "delta", delta, None)
    if delta is None:
        manifest = Path(input_csv).with_name("manifest.json")
        if manifest.exists():
            delta = json.loads(manifest.read_text()).get("delta")
    if delta is None:
        raise ConfigurationError("--delta is required when no manifest is present")
    alpha_grid = _parse_grid(_merge(cfg, "grid", grid, None))
    out_dir = Path(_merge(cfg, "out", out, "csbp-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    trajs = read_trajectories_csv(input_csv, delta=float(delta))
    if not trajs:
        raise ConfigurationError(f"no trajectories found in {input_csv}")
    import csv as _csv

    with (out_dir / "fits.csv").open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["path_id", "alpha", "gamma", "beta", "loglik",
                         "converged", "n_evals", "error"])
        selected = []
        for pid, traj in enumerate(trajs):
            fit = two_step_fit(traj, alpha_grid)
            for f in fit.per_alpha:
                writer.writerow([pid, f.alpha, repr(f.gamma), repr(f.beta),
                                 repr(f.loglik) if np.isfinite(f.loglik) else "",
                                 int(f.converged), f.n_evals, f.error or ""])
            g, b, a = fit.theta_star
            selected.append([pid, repr(g), repr(b), repr(a)])
    with (out_dir / "selected.csv").open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["path_id", "gamma", "beta", "alpha"])
        writer.writerows(selected)
    click.echo(f"fit {len(trajs)} path(s); results in {out_dir}")


@main.command()
@_with_shared
@click.option("--gamma", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--x0", type=float, default=None)
@click.option("--draws", type=int, default=None, help="Prior draws.")
@_handle_errors
def bayes(config, seed, out, delta, steps, gamma, beta, alpha, x0, draws):
    """Importance-sampling posterior from one simulated trajectory."""
    cfg = _load_config(config)
    plan = ExperimentPlan(
        name="bayes",
        params_true=_params_from(cfg, gamma, beta, alpha),
        delta=_merge(cfg, "delta", delta, 1.0 / 24.0),
        n_steps=_merge(cfg, "steps", steps, 50),
        n_paths=1,
        x0=_merge(cfg, "x0", x0, 10.0),
        seed=_merge(cfg, "seed", seed, 20260810),
    ).with_outputs(_merge(cfg, "out", out, "csbp-out"))
    summary = run_bayes_experiment(plan, PriorSpec(), _merge(cfg, "draws", draws, 1000))
    click.echo(json.dumps(summary["posterior"], indent=2, sort_keys=True))


@main.command("scan-stability")
@_with_shared
@click.option("--gamma", type=float, default=None)
@click.option("--betas", type=str, default=None, help="Comma-separated jump scales.")
@click.option("--alpha-min", type=float, default=None)
@click.option("--alpha-max", type=float, default=None)
@click.option("--alpha-step", type=float, default=None)
@_handle_errors
def scan_stability(config, seed, out, delta, steps, gamma, betas, alpha_min,
                   alpha_max, alpha_step):
    """Aliasing-parameter curve A(alpha) with the refusal region flagged."""
    del seed, steps  # pure evaluation
    cfg = _load_config(config)
    delta = _merge(cfg, "delta", delta, 1.0 / 6.0)
    gamma = _merge(cfg, "gamma", gamma, -6.0)
    betas_text = _merge(cfg, "betas", betas, "6")
    beta_values = tuple(float(b) for b in str(betas_text).split(","))
    lo = _merge(cfg, "alpha_min", alpha_min, 1.05)
    hi = _merge(cfg, "alpha_max", alpha_max, 1.95)
    step = _merge(cfg, "alpha_step", alpha_step, 0.05)
    alphas = np.round(np.arange(lo, hi + 0.5 * step, step), 10)
    out_dir = _merge(cfg, "out", out, "csbp-out")
    doc = run_stability_region_scan(delta, gamma, beta_values, alphas, out_dir=out_dir)
    click.echo(json.dumps({k: v for k, v in doc.items() if k != "rows"},
                          indent=2, sort_keys=True))


_EXPERIMENTS = ("stability", "robustness", "identifiability", "scan", "bayes")


@main.command()
@click.argument("name", type=click.Choice(_EXPERIMENTS))
@_with_shared
@click.option("--paths", type=int, default=None, help="Paths per study.")
@click.option("--x0", type=float, default=None)
@click.option("--grid", type=str, default=None)
@click.option("--paper-scale", is_flag=True, default=False,
              help="Full-size run (100 paths / 1000 draws).")
@_handle_errors
def experiment(name, config, seed, out, delta, steps, paths, x0, grid, paper_scale):
    """Run a preset study at desk scale (or --paper-scale)."""
    cfg = _load_config(config)
    seed = _merge(cfg, "seed", seed, 20260810)
    out_dir = _merge(cfg, "out", out, f"csbp-out/{name}")
    delta_v = _merge(cfg, "delta", delta, 1.0 / 6.0)
    m_default = 100 if paper_scale else 20

    if name == "scan":
        alphas = np.round(np.arange(1.05, 1.951, 0.05), 10)
        doc = run_stability_region_scan(delta_v, _merge(cfg, "gamma", None, -6.0),
                                        (6.0, 12.0), alphas, out_dir=out_dir)
        click.echo(json.dumps({k: v for k, v in doc.items() if k != "rows"},
                              indent=2, sort_keys=True))
        return

    if name == "bayes":
        plan = ExperimentPlan(
            name=name,
            params_true=ModelParams(-6.0, 6.0, 1.5),
            delta=_merge(cfg, "delta", delta, 1.0 / 24.0),
            n_steps=_merge(cfg, "steps", steps, 50),
            n_paths=1,
            x0=_merge(cfg, "x0", x0, 10.0),
            seed=seed,
        ).with_outputs(out_dir)
        n_draws = 1000 if paper_scale else _merge(cfg, "draws", None, 1000)
        summary = run_bayes_experiment(plan, PriorSpec(), n_draws)
        click.echo(json.dumps(summary["posterior"], indent=2, sort_keys=True))
        return

    if name == "robustness":
        params = ModelParams(-6.0, 6.0, 1.9)
    elif name == "identifiability":
        params = ModelParams(-6.0, 6.0, 1.5)
    else:
        params = ModelParams(-6.0, 1.0 / delta_v, 1.5)
    plan = ExperimentPlan(
        name=name,
        params_true=params,
        delta=delta_v,
        n_steps=_merge(cfg, "steps", steps, 20),
        n_paths=_merge(cfg, "paths", paths, m_default),
        x0=_merge(cfg, "x0", x0, DEFAULT_X0),
        grid=_parse_grid(_merge(cfg, "grid", grid, None)),
        seed=seed,
    ).with_outputs(out_dir)
    if name == "identifiability":
        summary = run_identifiability_experiment(plan)
        click.echo(json.dumps(summary["estimates"], indent=2, sort_keys=True))
    else:
        summary = run_stability_experiment(plan)
        click.echo(json.dumps(
            {"gamma": summary["gamma"], "beta": summary["beta"],
             "alpha_selected": summary["alpha_selected"]},
            indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
