"""Iteration-indexed stepsize sources, including the adaptive quotient rule."""

import math
from dataclasses import dataclass
from typing import Optional

from .prox import QuadraticFn
from .solvers import Schedule

# Default clamp intervals, expressed relative to the problem's admissible ranges:
# gamma in [0.01, 1.99] * beta, alpha in [0.1, 0.9].
GAMMA_CLAMP_FRACTIONS = (0.01, 1.99)
ALPHA_CLAMP = (0.1, 0.9)


def _check_gamma_static(gamma, p):
    if not (0.0 < gamma < 2.0 * p.beta):
        raise ValueError(f"gamma={gamma} out of range (0, {2.0 * p.beta})")


def _check_lambda_static(lam, p):
    hi = p.lambda_hi
    if not (0.0 < lam) or lam > hi:
        raise ValueError(f"lambda={lam} out of range (0, {hi}]")


def _clip(value, lo, hi):
    return min(max(value, lo), hi)


def constant_schedule(gamma, lam, alpha=0.0, problem=None):
    """Schedule emitting the same (gamma, lambda, alpha) every iteration.

    When ``problem`` is given, the values are validated against its ranges
    at construction: ``gamma`` strictly inside ``(0, 2 beta)``, ``lam`` in
    ``(0, 1/lambda_max(D D^T)]`` (the upper end is admissible), ``alpha``
    in ``[0, 1)``.
    """
    gamma, lam, alpha = float(gamma), float(lam), float(alpha)
    if problem is not None:
        _check_gamma_static(gamma, problem)
        _check_lambda_static(lam, problem)
    if not (0.0 <= alpha < 1.0):
        raise ValueError(f"alpha={alpha} out of range [0, 1)")
    return Schedule(
        gamma=lambda n, x: gamma,
        lam=lambda n, x: lam,
        alpha=lambda n, x: alpha,
    )


def bb_gamma_raw(f2, x, half_numerator=False):
    """The adaptive stepsize quotient before clamping.

    Returns ``||A x - b||^2 / ||grad f2(x)||^2`` for a quadratic data term
    (``half_numerator=True`` uses ``0.5 ||A x - b||^2`` instead). The
    special values: NaN when the gradient vanishes, 0.0 when only the
    residual vanishes.
    """
    if not isinstance(f2, QuadraticFn):
        raise ValueError("the adaptive stepsize rule needs a quadratic data term")
    val, grad = f2.value_and_grad(x)
    num = val if half_numerator else 2.0 * val
    den = float(grad @ grad)
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return math.nan
    return num / den


def bb_dynamic_schedule(p, lambda0=None, alpha0=0.5, clamp=None, half_numerator=False):
    """Adaptive stepsize schedule: ``gamma_n`` from the residual/gradient quotient.

    ``gamma_n`` is the clamped quotient of the (unhalved) residual norm
    squared over the squared gradient norm at the current iterate;
    ``lambda_n`` is held constant at ``min(lambda0, 1/lambda_max(D D^T))``
    and ``alpha_n`` constant at ``alpha0`` clamped into the alpha interval.
    A vanishing residual emits the lower gamma clamp; a vanishing gradient
    (iterate already stationary for the data term) emits the upper clamp.

    ``clamp`` is ``(gamma_lo, gamma_hi, lambda_lo, lambda_hi, alpha_lo,
    alpha_hi)`` in absolute units; defaults derive from the problem's
    admissible ranges.
    """
    if not isinstance(p.f2, QuadraticFn):
        raise ValueError("the adaptive stepsize rule needs a quadratic data term")
    g_lo, g_hi, l_lo, l_hi, a_lo, a_hi = _resolve_clamp(p, clamp)
    lam = p.lambda_hi if lambda0 is None else min(float(lambda0), p.lambda_hi)
    lam = _clip(lam, l_lo, l_hi)
    alpha = _clip(float(alpha0), a_lo, a_hi)

    def gamma(n, x):
        raw = bb_gamma_raw(p.f2, x, half_numerator=half_numerator)
        if math.isnan(raw):
            return g_hi
        return _clip(raw, g_lo, g_hi)

    return Schedule(gamma=gamma, lam=lambda n, x: lam, alpha=lambda n, x: alpha)


def _resolve_clamp(p, clamp):
    g_lo = GAMMA_CLAMP_FRACTIONS[0] * p.beta
    g_hi = GAMMA_CLAMP_FRACTIONS[1] * p.beta
    l_hi = p.lambda_hi
    l_lo = 1e-12 if math.isinf(l_hi) else 1e-6 * l_hi
    a_lo, a_hi = ALPHA_CLAMP
    if clamp is not None:
        g_lo, g_hi, l_lo, l_hi, a_lo, a_hi = (float(c) for c in clamp)
    if not (0.0 < g_lo <= g_hi < 2.0 * p.beta):
        raise ValueError("gamma clamp must sit strictly inside (0, 2 beta)")
    if not (0.0 < l_lo <= l_hi <= p.lambda_hi):
        raise ValueError("lambda clamp must sit inside (0, 1/lambda_max(D D^T)]")
    if not (0.0 < a_lo <= a_hi < 1.0):
        raise ValueError("alpha clamp must sit strictly inside (0, 1)")
    return g_lo, g_hi, l_lo, l_hi, a_lo, a_hi


def convergent_perturbation_schedule(gamma, lam, alpha=0.0, decay=0.0, problem=None):
    """Schedule with a vanishing perturbation: ``gamma_n = gamma + decay/(n+1)``.

    ``lambda_n`` decays the same way toward ``lam``. Values are clamped to
    the problem's admissible ranges when a problem is supplied. With
    ``decay = 0`` this is a constant schedule.
    """
    gamma, lam, alpha, decay = float(gamma), float(lam), float(alpha), float(decay)
    if decay < 0:
        raise ValueError("decay must be nonnegative")
    if problem is not None:
        _check_gamma_static(gamma, problem)
        _check_lambda_static(lam, problem)
    if not (0.0 <= alpha < 1.0):
        raise ValueError(f"alpha={alpha} out of range [0, 1)")
    g_hi = math.inf if problem is None else 2.0 * problem.beta * (1.0 - 1e-9)
    l_hi = math.inf if problem is None else problem.lambda_hi

    def gamma_src(n, x):
        return min(gamma + decay / (n + 1.0), g_hi)

    def lam_src(n, x):
        return min(lam + decay / (n + 1.0), l_hi)

    return Schedule(gamma=gamma_src, lam=lam_src, alpha=lambda n, x: alpha)


@dataclass(frozen=True)
class ScheduleSpec:
    """Declarative schedule description, constructible from a config file."""

    kind: str = "constant"
    gamma0: Optional[float] = None
    lambda0: Optional[float] = None
    alpha0: float = 0.0
    decay: float = 0.0
    clamp: Optional[tuple] = None
    half_numerator: bool = False

    def build(self, problem):
        gamma0 = 1.99 * problem.beta if self.gamma0 is None else self.gamma0
        lambda0 = problem.lambda_hi if self.lambda0 is None else self.lambda0
        if self.kind == "constant":
            return constant_schedule(gamma0, lambda0, self.alpha0, problem=problem)
        if self.kind == "bb_dynamic":
            return bb_dynamic_schedule(
                problem,
                lambda0=lambda0,
                alpha0=self.alpha0 if self.alpha0 > 0 else 0.5,
                clamp=self.clamp,
                half_numerator=self.half_numerator,
            )
        if self.kind == "convergent_perturbation":
            return convergent_perturbation_schedule(
                gamma0, lambda0, self.alpha0, self.decay, problem=problem
            )
        raise ValueError(f"unknown schedule kind {self.kind!r}")
