"""Numerical Laplace-transform inversion on a Bromwich contour.

Trapezoidal quadrature with Euler-summation acceleration, the classic
four-parameter scheme (ell, m, n, A): the contour abscissa is
r = A / (2*ell*s), nodes are spaced pi / (ell*s) apart along the
imaginary direction, and the last ``m`` block partial sums are combined
with binomial weights.  The discretization (aliasing) error of the
trapezoidal rule is bounded by exp(-A) / (1 - exp(-A)) for transforms of
functions bounded by 1, about 1e-8 at the default A = 18.4.

Densities come from inverting L(lambda) directly, distribution functions
from inverting L(lambda) / lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InstabilityError

__all__ = [
    "InversionConfig",
    "TransformHandle",
    "InversionDiagnostics",
    "aliasing_error_bound",
    "effective_a",
    "check_stability",
    "invert_density",
    "invert_cdf",
]


@dataclass(frozen=True)
class InversionConfig:
    """Controls for the Euler-summation quadrature.

    ell:    oscillation-damping factor of the node spacing (1 = classic
            alternating series).
    euler_m: number of partial sums averaged with binomial weights.
    euler_n: index of the first partial sum entering the average.
    a_target: minimum aliasing parameter A.
    a_cap:  largest A accepted before refusing as numerically unstable
            (exp(A/2) amplifies roundoff in the accelerated sum).
    abscissa_safety: multiplicative margin keeping the contour strictly
            right of any declared singularity bound.
    """

    ell: int = 1
    euler_m: int = 11
    euler_n: int = 38
    a_target: float = 18.4
    a_cap: float = 500.0
    abscissa_safety: float = 1.05

    def __post_init__(self) -> None:
        if self.ell < 1 or self.euler_m < 1 or self.euler_n < 1:
            raise ConfigurationError("ell, euler_m, euler_n must be positive integers")
        if not (0.0 < self.a_target <= self.a_cap):
            raise ConfigurationError("need 0 < a_target <= a_cap")
        if self.abscissa_safety < 1.0:
            raise ConfigurationError("abscissa_safety must be >= 1")


@dataclass(frozen=True)
class TransformHandle:
    """A Laplace transform ready for contour evaluation.

    evaluate: elementwise map from complex lambda arrays to transform
        values; must be finite for Re(lambda) > abscissa.
    abscissa: lower bound for valid contour placement (right edge of any
        genuine singularity of the analytic continuation).  0 for
        transforms of probability laws on [0, inf).
    stability_abscissa: unit-scale singularity bound used only for the
        refusal gate: inversion is refused outright when
        2 * abscissa_safety * ell * stability_abscissa exceeds a_cap.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    abscissa: float = 0.0
    stability_abscissa: float = 0.0


@dataclass
class InversionDiagnostics:
    """Per-call quadrature health report."""

    a_used: np.ndarray
    aliasing_bound: np.ndarray
    clamp_count: int


def aliasing_error_bound(a: float | np.ndarray) -> float | np.ndarray:
    """Trapezoidal-rule discretization error bound exp(-A)/(1-exp(-A))."""
    ea = np.exp(-np.asarray(a, dtype=float))
    out = ea / (1.0 - ea)
    return float(out) if np.ndim(a) == 0 else out


def check_stability(stability_abscissa: float, cfg: InversionConfig) -> None:
    """Refuse transforms whose unit-scale aliasing requirement exceeds the cap."""
    a_unit = 2.0 * cfg.abscissa_safety * stability_abscissa * cfg.ell
    if a_unit > cfg.a_cap:
        raise InstabilityError(
            f"aliasing parameter A = {a_unit:.6g} at unit scale exceeds cap "
            f"{cfg.a_cap:.6g}; transform singularities too far right for a "
            "stable inversion"
        )


def effective_a(
    s: float | np.ndarray, handle: TransformHandle, cfg: InversionConfig
) -> float | np.ndarray:
    """Aliasing parameter used at evaluation point(s) s.

    A = max(a_target, 2 * abscissa_safety * abscissa * ell * s); the
    contour abscissa actually used is r = A / (2*ell*s).  Raises
    InstabilityError when A would exceed a_cap, or when the handle's
    unit-scale stability bound already does.
    """
    check_stability(handle.stability_abscissa, cfg)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0):
        raise ConfigurationError("inversion point s must be positive")
    a = np.maximum(
        cfg.a_target, 2.0 * cfg.abscissa_safety * handle.abscissa * cfg.ell * s_arr
    )
    if np.any(a > cfg.a_cap):
        raise InstabilityError(
            f"aliasing parameter A = {float(np.max(a)):.6g} exceeds cap "
            f"{cfg.a_cap:.6g} at s = {float(s_arr.flat[int(np.argmax(a))]):.6g}"
        )
    return float(a) if np.ndim(s) == 0 else a


@lru_cache(maxsize=8)
def _euler_weights(m: int) -> np.ndarray:
    return np.array([math.comb(m, k) for k in range(m + 1)], dtype=float) / 2.0**m


def _quadrature(
    values_fn: Callable[[np.ndarray], np.ndarray],
    s: np.ndarray,
    a: np.ndarray,
    cfg: InversionConfig,
    cdf: bool,
) -> np.ndarray:
    """Euler-accelerated trapezoidal Bromwich sum at points s (1-D array)."""
    ell, m, n = cfg.ell, cfg.euler_m, cfg.euler_n
    k = np.arange((n + m) * ell + 1)
    r = a / (2.0 * ell * s)
    lam = r[:, None] + 1j * np.pi * k[None, :] / (ell * s[:, None])
    vals = values_fn(lam)
    if cdf:
        vals = vals / lam
    terms = (vals * np.exp(1j * np.pi * k / ell)[None, :]).real
    terms[:, 0] *= 0.5
    partial = np.cumsum(terms, axis=1)[:, (n + np.arange(m + 1)) * ell]
    acc = partial @ _euler_weights(m)
    return np.exp(a / (2.0 * ell)) / (ell * s) * acc


def windowed_quadrature(
    values_fn: Callable[[np.ndarray], np.ndarray],
    z: np.ndarray,
    width: np.ndarray,
    half_width_units: float = 32.0,
    nodes_per_width: int = 8,
    cdf: bool = False,
) -> np.ndarray:
    """Plain trapezoidal Bromwich sum for a centered, concentrated law.

    Intended for transforms of mean-centered variables whose density has
    spread ``width`` and lives within ``half_width_units * width`` of the
    origin: the contour abscissa and node spacing are set by the window,
    so a few hundred nodes resolve features the classic scheme (nodes
    tied to the evaluation point s) cannot once s >> width.  No Euler
    acceleration is needed because such transforms decay like
    exp(-(width * omega)**alpha) along the contour; with the defaults the
    integrand is dead at the last node and the periodization images carry
    e**-30.  ``z`` is the (possibly negative) offset from the mean;
    ``width`` may vary per row.  With cdf=True the running integral of
    the density up to z is returned instead.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    width = np.broadcast_to(np.asarray(width, dtype=float), z.shape)
    if np.any(width <= 0.0):
        raise ConfigurationError("window width must be positive")
    k = np.arange(int(round(nodes_per_width * half_width_units)) + 1)
    r = (15.0 / half_width_units) / width
    h = np.pi / (half_width_units * width)
    lam = r[:, None] + 1j * h[:, None] * k[None, :]
    vals = values_fn(lam)
    if cdf:
        vals = vals / lam
    terms = (vals * np.exp(1j * np.outer(h * z, k))).real
    terms[:, 0] *= 0.5
    return (h / np.pi) * np.exp(r * z) * terms.sum(axis=1)


def _invert(
    handle: TransformHandle,
    s: float | np.ndarray,
    cfg: InversionConfig,
    cdf: bool,
) -> tuple[np.ndarray, InversionDiagnostics, bool]:
    scalar = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    a = np.atleast_1d(np.asarray(effective_a(s_arr, handle, cfg)))
    raw = _quadrature(handle.evaluate, s_arr, a, cfg, cdf)
    if cdf:
        clamped = np.clip(raw, 0.0, 1.0)
    else:
        clamped = np.maximum(raw, 0.0)
    diag = InversionDiagnostics(
        a_used=a,
        aliasing_bound=aliasing_error_bound(a),
        clamp_count=int(np.count_nonzero(clamped != raw)),
    )
    return clamped, diag, scalar


def invert_density(
    handle: TransformHandle,
    s: float | np.ndarray,
    cfg: InversionConfig | None = None,
    *,
    with_diagnostics: bool = False,
):
    """Recover the density f(s) from its Laplace transform.

    Small negative quadrature undershoot is clamped to 0; the clamp count
    is reported through the optional diagnostics.
    """
    cfg = cfg or InversionConfig()
    out, diag, scalar = _invert(handle, s, cfg, cdf=False)
    result = float(out[0]) if scalar else out
    return (result, diag) if with_diagnostics else result


def invert_cdf(
    handle: TransformHandle,
    s: float | np.ndarray,
    cfg: InversionConfig | None = None,
    *,
    with_diagnostics: bool = False,
):
    """Recover the distribution function F(s) by inverting L(lambda)/lambda.

    Output is clamped to [0, 1]; monotone in s up to quadrature tolerance.
    """
    cfg = cfg or InversionConfig()
    out, diag, scalar = _invert(handle, s, cfg, cdf=True)
    result = float(out[0]) if scalar else out
    return (result, diag) if with_diagnostics else result
