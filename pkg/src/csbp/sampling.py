"""Random-variate generation for the branching-process transition law.

One transition from state x over lag delta is a mixture: an atom at zero
with the extinction mass, and a continuous part sampled by inverse
transform -- the conditional CDF is recovered by numerical Laplace
inversion and the root of F(s) = u is solved by bracketing, bisection and
secant polishing.  Discrete paths chain independent transitions; the
zero state is absorbing and costs no inversion work.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .inversion import InversionConfig, invert_cdf, windowed_quadrature
from .model import (
    ModelParams,
    TransitionContext,
    conditional_transform,
    extinction_probability,
    residual_transform,
    transition_mean,
    transition_width,
    upper_tail_coefficient,
)

__all__ = [
    "RngStream",
    "Trajectory",
    "sample_transition",
    "sample_transitions",
    "simulate_path",
    "transition_cdf",
    "write_trajectories_csv",
    "write_manifest",
]

_BRACKET_FLOOR = 1e-10
_MAX_DOUBLINGS = 60
_BISECT_ABS_TOL = 1e-10
_SECANT_REL_TOL = 1e-8
_MAX_SECANT = 12


@dataclass
class RngStream:
    """Counter-based random stream: (seed, stream_id) keys a Philox generator.

    Distinct stream_ids under one master seed give statistically
    independent streams, so paths can be generated in parallel while
    staying bit-for-bit reproducible.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator | None = field(
        default=None, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise ConfigurationError(f"{name} must fit in an unsigned 64-bit int")

    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed, self.stream_id], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def uniform(self, size: int | None = None):
        return self.generator().uniform(size=size)


@dataclass(frozen=True)
class Trajectory:
    """A discrete path: values[0] = x0 and one entry per step thereafter."""

    x0: float
    delta: float
    values: tuple[float, ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.delta <= 0.0:
            raise ConfigurationError("delta must be positive")
        vals = np.asarray(self.values, dtype=float)
        if vals.size < 1 or vals[0] != self.x0:
            raise ConfigurationError("values must start at x0")
        if np.any(vals < 0.0):
            raise ConfigurationError("trajectory values must be nonnegative")
        dead = np.flatnonzero(vals == 0.0)
        if dead.size and np.any(vals[dead[0] :] != 0.0):
            raise ConfigurationError("zero is absorbing: no value may follow it")

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    def times(self) -> np.ndarray:
        return self.delta * np.arange(len(self.values))

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def _conditional_cdf_fn(ctx: TransitionContext, cfg: InversionConfig):
    """Survival-conditioned CDF as a vectorized callable, dispatched by
    evaluation regime.

    Points on the scale of the mean of a concentrated transition (large
    conditioning state) use the mean-centered windowed quadrature, whose
    nodes resolve the actual noise width; elsewhere the classic
    inversion of the conditional transform applies, and offsets beyond
    the windows use the dead left edge and the exact leading power tail.
    """
    handle = conditional_transform(ctx)
    resid = residual_transform(ctx)
    mean = transition_mean(ctx)
    width = transition_width(ctx)
    k_tail = upper_tail_coefficient(ctx)
    alpha = ctx.params.alpha

    def cdf(s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros(s.shape)
        z = s - mean
        classic = (s <= 12.0 * width) | (z >= s / 16.0)
        if np.any(classic):
            out[classic] = invert_cdf(handle, s[classic], cfg)
        rest = ~classic
        zw = z / width
        for units, mask in (
            (32.0, rest & (np.abs(zw) <= 28.0)),
            (256.0, rest & (zw > 28.0) & (zw <= 224.0)),
        ):
            if np.any(mask):
                out[mask] = np.clip(
                    windowed_quadrature(
                        resid, z[mask], width, half_width_units=units, cdf=True
                    ),
                    0.0,
                    1.0,
                )
        far = rest & (zw > 224.0)
        if np.any(far):
            out[far] = 1.0 - k_tail * z[far] ** -alpha
        # rows below the dead left edge keep CDF 0
        return out

    return cdf


def transition_cdf(
    s,
    ctx: TransitionContext,
    cfg: InversionConfig | None = None,
):
    """CDF of the full transition law (atom at zero plus continuous part).

    Right-continuous: s = 0 returns the atom mass.
    """
    cfg = cfg or InversionConfig()
    p0 = extinction_probability(ctx)
    cond_cdf = _conditional_cdf_fn(ctx, cfg)
    scalar = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.full(s_arr.shape, p0)
    pos = s_arr > 0.0
    if np.any(pos):
        out[pos] = p0 + (1.0 - p0) * cond_cdf(s_arr[pos])
    return float(out[0]) if scalar else out


def _solve_conditional_quantiles(
    u: np.ndarray,
    ctx: TransitionContext,
    cfg: InversionConfig,
) -> np.ndarray:
    """Roots of F(s) = u for the survival-conditioned CDF, vectorized.

    Bracket [1e-10, x * exp(-gamma * delta)] (the unconditional mean sets
    the starting scale), double the upper end until it covers every
    quantile, bisect down to a scale-aware absolute tolerance, then
    polish with secant steps to 1e-8 relative.
    """
    cond_cdf = _conditional_cdf_fn(ctx, cfg)
    mean_scale = transition_mean(ctx)
    noise_width = transition_width(ctx)
    lower = np.full(u.shape, _BRACKET_FLOOR)
    upper = np.full(u.shape, max(mean_scale, 2.0 * _BRACKET_FLOOR))

    f_upper = cond_cdf(upper)
    for _ in range(_MAX_DOUBLINGS):
        short = f_upper <= u
        if not np.any(short):
            break
        upper[short] *= 2.0
        f_upper[short] = cond_cdf(upper[short])
    else:
        raise ConfigurationError(
            "CDF root bracketing failed after 60 doublings; "
            "inversion output is not reaching the requested quantile"
        )

    # quantiles below F(1e-10) are vanishingly rare; push the lower end down
    f_lower = cond_cdf(lower)
    for _ in range(_MAX_DOUBLINGS):
        high = f_lower >= u
        if not np.any(high):
            break
        lower[high] /= 4.0
        f_lower[high] = cond_cdf(lower[high])

    # Tolerances must track the law's feature scale, not the root's
    # magnitude: for concentrated transitions (mean >> noise width) a
    # value-relative tolerance would be coarser than the distribution
    # itself.  1e-10 absolute / 1e-8 relative still govern order-one
    # scales; 1e-6 of the noise width governs large states.
    def stop_tol(s):
        return np.maximum(
            _BISECT_ABS_TOL,
            np.minimum(_SECANT_REL_TOL * np.abs(s), 1e-6 * noise_width),
        )

    for _ in range(200):
        if np.all(upper - lower <= stop_tol(upper)):
            break
        mid = 0.5 * (lower + upper)
        f_mid = cond_cdf(mid)
        below = f_mid < u
        lower = np.where(below, mid, lower)
        f_lower = np.where(below, f_mid, f_lower)
        upper = np.where(below, upper, mid)
        f_upper = np.where(below, f_upper, f_mid)

    # secant polish on the final bracket
    s0, s1 = lower.copy(), upper.copy()
    f0, f1 = f_lower - u, f_upper - u
    root = np.where(np.abs(f0) < np.abs(f1), s0, s1)
    for _ in range(_MAX_SECANT):
        denom = f1 - f0
        ok = np.abs(denom) > 0.0
        step = np.where(ok, f1 * (s1 - s0) / np.where(ok, denom, 1.0), 0.0)
        s_new = np.clip(s1 - step, _BRACKET_FLOOR / 4.0**_MAX_DOUBLINGS, None)
        if np.all(np.abs(s_new - s1) <= stop_tol(s_new)):
            root = s_new
            break
        f_new = cond_cdf(s_new) - u
        s0, f0 = s1, f1
        s1, f1 = s_new, f_new
        root = s_new
    return root


def sample_transitions(
    x: float,
    delta: float,
    params: ModelParams,
    n_draws: int,
    rng: RngStream,
    cfg: InversionConfig | None = None,
) -> np.ndarray:
    """n_draws independent transitions from state x over one lag.

    Each draw spends one uniform on the atom-at-zero decision and, on
    survival, a second independent uniform on the conditional quantile.
    """
    if x <= 0.0:
        raise ConfigurationError("sampling a transition requires x > 0")
    if n_draws < 1:
        raise ConfigurationError("n_draws must be positive")
    cfg = cfg or InversionConfig()
    ctx = TransitionContext(x=x, t=delta, params=params)
    p0 = extinction_probability(ctx)
    u_atom = np.atleast_1d(rng.uniform(size=n_draws))
    out = np.zeros(n_draws)
    alive = u_atom > p0
    n_alive = int(np.count_nonzero(alive))
    if n_alive:
        u_cond = np.atleast_1d(rng.uniform(size=n_alive))
        out[alive] = _solve_conditional_quantiles(u_cond, ctx, cfg)
    return out


def sample_transition(
    x: float,
    delta: float,
    params: ModelParams,
    rng: RngStream,
    cfg: InversionConfig | None = None,
) -> float:
    """One transition draw: 0 with the extinction mass, else the
    conditional quantile at an independent uniform."""
    return float(sample_transitions(x, delta, params, 1, rng, cfg)[0])


def simulate_path(
    x0: float,
    delta: float,
    n_steps: int,
    params: ModelParams,
    rng: RngStream,
    cfg: InversionConfig | None = None,
) -> Trajectory:
    """Discrete path chaining transition draws; zero is absorbing."""
    if x0 <= 0.0:
        raise ConfigurationError("x0 must be positive")
    if n_steps < 0:
        raise ConfigurationError("n_steps must be nonnegative")
    cfg = cfg or InversionConfig()
    values = [float(x0)]
    for _ in range(n_steps):
        prev = values[-1]
        values.append(
            0.0 if prev == 0.0 else sample_transition(prev, delta, params, rng, cfg)
        )
    return Trajectory(
        x0=float(x0), delta=float(delta), values=tuple(values), seed=rng.seed
    )


# ---------------------------------------------------------------------------
# serialization

def write_trajectories_csv(trajectories: list[Trajectory], path: str | Path) -> None:
    """Long-format CSV: path_id, step_index, time, value (full precision)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "step_index", "time", "value"])
        for pid, traj in enumerate(trajectories):
            for i, v in enumerate(traj.values):
                writer.writerow([pid, i, repr(i * traj.delta), repr(float(v))])


def write_manifest(
    path: str | Path,
    params: ModelParams,
    delta: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    extra: dict | None = None,
) -> None:
    """Sidecar JSON describing how a trajectory batch was produced."""
    doc = {
        "params": {"gamma": params.gamma, "beta": params.beta, "alpha": params.alpha},
        "delta": delta,
        "n_steps": n_steps,
        "n_paths": n_paths,
        "seed": seed,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_trajectories_csv(
    path: str | Path, delta: float, seed: int | None = None
) -> list[Trajectory]:
    """Inverse of write_trajectories_csv (delta comes from the manifest)."""
    rows: dict[int, list[tuple[int, float]]] = {}
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["path_id"]), []).append(
                (int(rec["step_index"]), float(rec["value"]))
            )
    out = []
    for pid in sorted(rows):
        vals = [v for _, v in sorted(rows[pid])]
        out.append(
            Trajectory(x0=vals[0], delta=delta, values=tuple(vals), seed=seed)
        )
    return out
