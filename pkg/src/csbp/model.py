"""Stable continuous-state branching process in transform space.

The process with branching mechanism psi(u) = beta * u**alpha + gamma * u
(jump activity index 1 < alpha < 2, no diffusive part) has transition
Laplace transforms available in closed form: conditional on the current
state x, the next observation at lag t has transform exp(-x * u_t(lambda))
with

    u_t(lambda) = exp(-gamma*t) * (lambda**(1-alpha) + c_t) ** (1/(1-alpha)),
    c_t         = (beta/gamma) * (1 - exp(gamma*(1-alpha)*t)),

the mass at zero is exp(-x * u_t(inf)), and the law conditioned on a
positive value follows by normalizing the transform.  This module
evaluates those closed forms, locates the (second-sheet) singularities
of the transform that govern quadrature stability, and packages the
conditional transform for the numerical inverter.

All complex powers use the principal branch; for c_t > 0 (which holds for
every admissible parameter set) the resulting transform is analytic on
the complex plane cut along the negative real axis, so any contour with
positive real part is valid for inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateConditioningError
from .inversion import TransformHandle

__all__ = [
    "ModelParams",
    "TransitionContext",
    "SingularitySet",
    "psi",
    "laplace_exponent",
    "laplace_exponent_at_infinity",
    "extinction_probability",
    "conditional_laplace",
    "singularities",
    "conditional_transform",
    "small_value_cdf_constant",
]

# p/q detection for the jump index: denominators above this are treated
# as irrational (the flag is diagnostic only).
_MAX_RATIONAL_DENOMINATOR = 64
_RATIONAL_TOL = 1e-12
_ANGLE_TOL = 1e-9
_DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Branching-mechanism parameters (gamma, beta, alpha).

    gamma: linear drift rate (any finite real; 0 uses the analytic limit).
    beta:  positive jump-scale coefficient.
    alpha: jump activity index, strictly between 1 and 2.
    """

    gamma: float
    beta: float
    alpha: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.gamma):
            raise ConfigurationError("gamma must be finite")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ConfigurationError("beta must be positive and finite")
        if not (1.0 < self.alpha < 2.0):
            raise ConfigurationError("alpha must lie in the open interval (1, 2)")


@dataclass(frozen=True)
class TransitionContext:
    """One transition: conditioning state x, elapsed time t, parameters."""

    x: float
    t: float
    params: ModelParams

    def __post_init__(self) -> None:
        if not (self.x >= 0.0 and math.isfinite(self.x)):
            raise ConfigurationError("conditioning state x must be nonnegative")
        if not (self.t > 0.0 and math.isfinite(self.t)):
            raise ConfigurationError("elapsed time t must be positive")


def psi(u, params: ModelParams):
    """Branching mechanism beta * u**alpha + gamma * u for u >= 0."""
    u = np.asarray(u, dtype=float)
    out = params.beta * u**params.alpha + params.gamma * u
    return float(out) if out.ndim == 0 else out


def bracket_offset(t: float, params: ModelParams) -> float:
    """The lambda-free term c_t = (beta/gamma) * (1 - exp(gamma*(1-alpha)*t)).

    Always positive.  gamma = 0 is a removable singularity with limit
    beta * t * (alpha - 1).
    """
    if params.gamma == 0.0:
        return params.beta * t * (params.alpha - 1.0)
    z = params.gamma * (1.0 - params.alpha) * t
    return -(params.beta / params.gamma) * math.expm1(z)


def laplace_exponent(lam, t: float, params: ModelParams):
    """u_t(lambda), the exponent of the transition transform.

    Accepts nonnegative reals (0 maps to the limit 0) or complex values
    off the negative real axis; principal branch throughout.  Scalar in,
    scalar out; arrays are mapped elementwise.
    """
    if t <= 0.0:
        raise ConfigurationError("t must be positive")
    scalar = np.ndim(lam) == 0
    lam_arr = np.atleast_1d(np.asarray(lam))
    c = bracket_offset(t, params)
    expo = 1.0 / (1.0 - params.alpha)
    if np.iscomplexobj(lam_arr):
        if np.any(lam_arr == 0):
            raise ConfigurationError("complex lambda = 0 is outside the domain")
        out = np.exp(-params.gamma * t) * (lam_arr ** (1.0 - params.alpha) + c) ** expo
    else:
        lam_arr = lam_arr.astype(float)
        if np.any(lam_arr < 0):
            raise ConfigurationError("real lambda must be nonnegative")
        out = np.zeros_like(lam_arr)
        pos = lam_arr > 0
        with np.errstate(divide="ignore"):
            out[pos] = (
                np.exp(-params.gamma * t)
                * (lam_arr[pos] ** (1.0 - params.alpha) + c) ** expo
            )
    return out[0] if scalar else out


def _log1p_complex(w: np.ndarray) -> np.ndarray:
    out = np.log1p(w) if not np.iscomplexobj(w) else np.log(1.0 + w)
    small = np.abs(w) < 1e-4
    if np.any(small):
        ws = np.where(small, w, 0.0)
        out = np.where(small, ws * (1.0 - ws * (0.5 - ws / 3.0)), out)
    return out


def _expm1_complex(w: np.ndarray) -> np.ndarray:
    out = np.expm1(w) if not np.iscomplexobj(w) else np.exp(w) - 1.0
    small = np.abs(w) < 1e-4
    if np.any(small):
        ws = np.where(small, w, 0.0)
        out = np.where(small, ws * (1.0 + ws * (0.5 + ws / 6.0)), out)
    return out


def laplace_exponent_minus_drift(lam, t: float, params: ModelParams):
    """u_t(lambda) - exp(-gamma*t)*lambda, free of cancellation.

    This is the exponent of the mean-centered transition transform:
    E[exp(-lambda*(X_t - mean)) | X_0 = x] = exp(-x * (this)).  Stable
    log1p/expm1 arithmetic matters because the two terms agree to many
    digits at small |lambda|.
    """
    c = bracket_offset(t, params)
    lam = np.asarray(lam)
    inner = (1.0 / (1.0 - params.alpha)) * _log1p_complex(c * lam ** (params.alpha - 1.0))
    return math.exp(-params.gamma * t) * lam * _expm1_complex(inner)


def transition_mean(ctx: TransitionContext) -> float:
    """Exact unconditional transition mean x * exp(-gamma * t)."""
    return ctx.x * math.exp(-ctx.params.gamma * ctx.t)


def transition_width(ctx: TransitionContext) -> float:
    """Scale of the noise around the transition mean.

    The centered transform behaves like exp(+C * lambda**alpha) with
    C = mean * c_t / (alpha - 1); its law has spread of order C**(1/alpha).
    Used to pick quadrature windows, not as an exact moment.
    """
    params = ctx.params
    c = bracket_offset(ctx.t, params)
    return (transition_mean(ctx) * c / (params.alpha - 1.0)) ** (1.0 / params.alpha)


def residual_transform(ctx: TransitionContext):
    """Elementwise transform of the centered transition X_t - mean."""
    x, t, params = ctx.x, ctx.t, ctx.params

    def evaluate(lam: np.ndarray) -> np.ndarray:
        return np.exp(-x * laplace_exponent_minus_drift(lam, t, params))

    return evaluate


def upper_tail_coefficient(ctx: TransitionContext) -> float:
    """K in P(X_t - mean > z | X_0 = x) ~ K * z**(-alpha) as z -> inf."""
    params = ctx.params
    c = bracket_offset(ctx.t, params)
    return (
        transition_mean(ctx)
        * c
        / ((params.alpha - 1.0) * abs(math.gamma(1.0 - params.alpha)))
    )


def laplace_exponent_at_infinity(t: float, params: ModelParams) -> float:
    """Limit of u_t(lambda) as lambda -> inf, from the closed form.

    Computed without a large-lambda evaluation to avoid overflow in
    lambda**(1-alpha).
    """
    c = bracket_offset(t, params)
    return math.exp(-params.gamma * t) * c ** (1.0 / (1.0 - params.alpha))


def extinction_probability(ctx: TransitionContext) -> float:
    """Mass at zero of the transition law, exp(-x * u_t(inf))."""
    return math.exp(-ctx.x * laplace_exponent_at_infinity(ctx.t, ctx.params))


def conditional_laplace(lam, ctx: TransitionContext):
    """Transform of the transition law conditioned on a positive value.

    (exp(-x * u_t(lambda)) - p0) / (1 - p0) with p0 the mass at zero;
    equals 1 at real lambda = 0 and is completely monotone on (0, inf).
    """
    if ctx.x <= 0.0:
        raise ConfigurationError("conditioning on survival requires x > 0")
    p0 = extinction_probability(ctx)
    if p0 >= 1.0 - _DEGENERATE_TOL:
        raise DegenerateConditioningError(
            f"survival probability {1.0 - p0:.3e} is numerically zero"
        )
    scalar = np.ndim(lam) == 0
    lam_arr = np.atleast_1d(np.asarray(lam))
    u = np.atleast_1d(laplace_exponent(lam_arr, ctx.t, ctx.params))
    out = (np.exp(-ctx.x * u) - p0) / (1.0 - p0)
    return out[0] if scalar else out


def _rational_approximation(value: float) -> tuple[int, int] | None:
    """Continued-fraction p/q with q <= 64 matching value to 1e-12, if any."""
    from fractions import Fraction

    frac = Fraction(value).limit_denominator(_MAX_RATIONAL_DENOMINATOR)
    if abs(value - float(frac)) <= _RATIONAL_TOL:
        return frac.numerator, frac.denominator
    return None


@dataclass(frozen=True)
class SingularitySet:
    """Singularities of the transition transform (all on modulus R).

    The points R * exp(i * angle) solve
    lambda**(1-alpha) + c_t = 0 on the appropriate branch; angles are the
    distinct values of (pi + 2*pi*n)/(alpha - 1) mod 2*pi.  is_finite
    reflects rationality of alpha - 1 at working precision and is purely
    diagnostic.  abscissa_bound is a safe contour abscissa strictly right
    of every real part.
    """

    modulus: float
    angles: tuple[float, ...]
    is_finite: bool
    abscissa_bound: float

    @property
    def max_real_part(self) -> float:
        return self.modulus * max(math.cos(a) for a in self.angles)


def singularities(
    t: float, params: ModelParams, max_count: int = 16
) -> SingularitySet:
    """Locate the transform singularities for a transition of length t."""
    if max_count < 1:
        raise ConfigurationError("max_count must be positive")
    c = bracket_offset(t, params)
    modulus = c ** (1.0 / (1.0 - params.alpha))
    w = params.alpha - 1.0
    angles: list[float] = []
    n = 0
    while len(angles) < max_count:
        angle = math.fmod((math.pi + 2.0 * math.pi * n) / w, 2.0 * math.pi)
        if angle < 0.0:
            angle += 2.0 * math.pi
        if angle > 2.0 * math.pi - _ANGLE_TOL:
            angle = 0.0
        if any(
            min(abs(angle - a), 2.0 * math.pi - abs(angle - a)) < _ANGLE_TOL
            for a in angles
        ):
            break  # cycle closed: alpha - 1 is rational at this precision
        angles.append(angle)
        n += 1
    max_real = modulus * max(math.cos(a) for a in angles)
    bound = 1.05 * max_real if max_real > 0.0 else _ANGLE_TOL
    return SingularitySet(
        modulus=modulus,
        angles=tuple(sorted(angles)),
        is_finite=_rational_approximation(w) is not None,
        abscissa_bound=bound,
    )


def conditional_transform(ctx: TransitionContext) -> TransformHandle:
    """Inversion handle for the survival-conditioned transition transform.

    The closed form is analytic for Re(lambda) > 0 (the singularity set
    lives on other branches of the complex power), so the contour
    abscissa is unconstrained; the singularity modulus is carried as the
    unit-scale stability bound that triggers refusal near alpha = 1.
    """
    if ctx.x <= 0.0:
        raise ConfigurationError("conditioning on survival requires x > 0")
    p0 = extinction_probability(ctx)
    if p0 >= 1.0 - _DEGENERATE_TOL:
        raise DegenerateConditioningError(
            f"survival probability {1.0 - p0:.3e} is numerically zero"
        )
    x, t, params = ctx.x, ctx.t, ctx.params
    c = bracket_offset(t, params)
    expo = 1.0 / (1.0 - params.alpha)
    scale = math.exp(-params.gamma * t)

    def evaluate(lam: np.ndarray) -> np.ndarray:
        u = scale * (lam ** (1.0 - params.alpha) + c) ** expo
        return (np.exp(-x * u) - p0) / (1.0 - p0)

    return TransformHandle(
        evaluate=evaluate,
        abscissa=0.0,
        stability_abscissa=c**expo,
    )


def small_value_cdf_constant(ctx: TransitionContext) -> float:
    """Reference scale for the survival-conditioned CDF near zero.

    F(y) vanishes like y**(alpha-1); this constant,
    K = p0/(1-p0) * exp(-gamma*t)/(alpha-1) * (1/c_t)**(alpha/(alpha-1)),
    matches the exact slope up to a factor of order one (the conditioning
    state and 1/Gamma(alpha) from the Tauberian inversion) and serves as
    the small-value oracle for the numerical CDF at x = 1.
    """
    params = ctx.params
    p0 = extinction_probability(ctx)
    c = bracket_offset(ctx.t, params)
    return (
        p0
        / (1.0 - p0)
        * math.exp(-params.gamma * ctx.t)
        / (params.alpha - 1.0)
        * (1.0 / c) ** (params.alpha / (params.alpha - 1.0))
    )
