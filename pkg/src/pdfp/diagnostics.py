"""Norms, residuals, image-quality metrics, and the linear-rate certificate."""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .solvers import PDState, _tentative, apply_T, mann_combine

TRACE_CSV_HEADER = "iter,gamma,lambda,alpha,objective,residual,snr,relerr,wall_ms"


class InvariantViolationError(RuntimeError):
    """A quantity that should be nonnegative came out significantly negative."""


def lambda_norm(u, lam):
    """Product-space norm ``sqrt(||x||^2 + lam * ||v||^2)`` of a (v, x) state."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return math.sqrt(float(u.x @ u.x) + lam * float(u.v @ u.v))


def m_seminorm(v, D, lam):
    """Semi-norm ``sqrt(<v, (I - lam D D^T) v>)`` of a dual vector.

    For ``0 < lam <= 1/lambda_max(D D^T)`` the weighting matrix is positive
    semi-definite; rounding-level negative inner products (down to -1e-12)
    are clamped to zero, anything more negative means ``lam`` is too large
    and raises :class:`InvariantViolationError`.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    v = np.asarray(v, dtype=np.float64)
    Dt_v = D.adjoint(v)
    val = float(v @ v) - lam * float(Dt_v @ Dt_v)
    if val < -1e-12:
        raise InvariantViolationError(
            f"<v, (I - lam D D^T) v> = {val} < -1e-12; lam is too large"
        )
    return math.sqrt(max(val, 0.0))


def snr(x, x_true):
    """Signal-to-noise ratio ``20 log10(||x_true|| / ||x - x_true||)`` in dB.

    Returns ``inf`` when the two images agree exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    x_true = np.asarray(x_true, dtype=np.float64)
    if x.shape != x_true.shape:
        raise ValueError("images must have the same shape")
    nd = float(np.linalg.norm(x - x_true))
    if nd == 0.0:
        return math.inf
    return 20.0 * math.log10(float(np.linalg.norm(x_true)) / nd)


def rel_err(x, x_true):
    """Squared relative error ``||x - x_true||^2 / ||x_true||^2``."""
    x = np.asarray(x, dtype=np.float64)
    x_true = np.asarray(x_true, dtype=np.float64)
    if x.shape != x_true.shape:
        raise ValueError("images must have the same shape")
    nt = float(np.linalg.norm(x_true))
    if nt == 0.0:
        raise ValueError("x_true must be nonzero")
    nd = float(np.linalg.norm(x - x_true))
    return (nd * nd) / (nt * nt)


def fixed_point_residual(p, gamma, lam, u):
    """``||u - T(u)||`` in the lambda-weighted norm, at constant stepsizes."""
    Tu = apply_T(p, gamma, lam, u)
    return lambda_norm(PDState(u.v - Tu.v, u.x - Tu.x), lam)


def optimality_residual(p, gamma, lam, u):
    """How far a state is from the first-order conditions of the problem.

    Returns the larger of the gradient-balance residual
    ``||gamma grad f2(x) + lam D^T v||`` and the prox-characterization
    residual ``||D x - prox_{(gamma/lam) f1}(D x + v)||``; both vanish
    exactly at a fixed point whose x solves the problem.
    """
    grad_bal = gamma * p.f2.grad(u.x) + lam * p.D.adjoint(u.v)
    Dx = p.D.forward(u.x)
    prox_res = Dx - p.f1.prox(gamma / lam, Dx + u.v)
    return max(float(np.linalg.norm(grad_bal)), float(np.linalg.norm(prox_res)))


def fejer_check(trace, u_ref, lam, slack=1e-10):
    """True iff ``||u_n - u_ref||`` is non-increasing along the stored iterates.

    Requires the trace to have been recorded with ``record_iterates=True``.
    A trace holding only the starting state passes vacuously.
    """
    if trace.iterates is None:
        raise ValueError("trace does not store iterates; rerun with record_iterates=True")
    dists = [
        lambda_norm(PDState(u.v - u_ref.v, u.x - u_ref.x), lam) for u in trace.iterates
    ]
    return all(b <= a + slack for a, b in zip(dists, dists[1:]))


@dataclass(frozen=True)
class RateCertificate:
    """A-priori geometric convergence bound ``||x_n - x*|| <= d theta^n / (1 - theta)``.

    ``mu`` and ``nu`` are the contraction factors of the dual weighting and
    of the forward step, ``eta = max(mu, nu)``, and ``theta`` folds in the
    relaxation clamp ``[alpha_lo, alpha_hi]`` as
    ``theta = alpha_hi + (1 - alpha_lo) eta``.
    """

    mu: float
    nu: float
    eta: float
    theta: float
    d: float

    def bound(self, n):
        return self.d * self.theta ** n / (1.0 - self.theta)


def _dense_gram(D):
    m = D.out_dim
    B = np.empty((m, m))
    e = np.zeros(m)
    for j in range(m):
        e[j] = 1.0
        B[:, j] = D.forward(D.adjoint(e))
        e[j] = 0.0
    return B


def _lambda_min_inverse_power(B, tol=1e-10, max_iter=500, seed=0):
    """Smallest eigenvalue of a dense symmetric PSD matrix by shifted inverse iteration."""
    m = B.shape[0]
    shift = -1e-10 * max(float(np.trace(B)) / m, 1.0)
    try:
        lu = scipy.linalg.lu_factor(B - shift * np.eye(m))
    except scipy.linalg.LinAlgError:
        return 0.0
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(m)
    z /= np.linalg.norm(z)
    lam_prev = None
    lam = 0.0
    for _ in range(max_iter):
        w = scipy.linalg.lu_solve(lu, z)
        nw = float(np.linalg.norm(w))
        if nw == 0.0 or not np.isfinite(nw):
            return 0.0
        z = w / nw
        lam = float(z @ (B @ z))
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            break
        lam_prev = lam
    return max(lam, 0.0)


def _lambda_max_power(B, tol=1e-12, max_iter=5000, seed=0):
    m = B.shape[0]
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(m)
    z /= np.linalg.norm(z)
    lam_prev = None
    lam = 0.0
    for _ in range(max_iter):
        w = B @ z
        lam = float(z @ w)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            break
        z = w / nw
        lam_prev = lam
    return lam


def rate_certificate(p, gamma, lam, alpha_lo, alpha_hi, sigma, u0=None, alpha0=None):
    """Geometric-rate certificate for strongly convex data and full-row-rank ``D``.

    The contraction factors are ``mu^2 = 1 - lam * lambda_min(D D^T)`` and
    ``nu^2 = 1 - gamma sigma (2 beta - gamma) / beta`` where ``sigma`` is
    the strong-convexity modulus of ``f2`` (supplied by the caller, who
    asserts full row rank of ``D``). ``d`` is the length of the first step
    taken from ``u0`` with relaxation ``alpha0``.

    Returns ``None`` (not applicable) when a contraction factor reaches 1,
    when the combined ``theta`` reaches 1, or when the dual dimension
    exceeds the desk-scale limit of 5000 (the smallest eigenvalue is found
    by dense shifted inverse power iteration).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not (0.0 < alpha_lo <= alpha_hi < 1.0):
        raise ValueError("alpha clamp must satisfy 0 < alpha_lo <= alpha_hi < 1")
    m = p.D.out_dim
    if m > 5000:
        return None
    B = _dense_gram(p.D)
    lam_min = _lambda_min_inverse_power(B)
    lam_max = _lambda_max_power(B)
    if not (0.0 < gamma < 2.0 * p.beta):
        raise ValueError(f"gamma={gamma} out of range (0, {2.0 * p.beta})")
    lam_hi = math.inf if lam_max == 0.0 else (1.0 + 1e-9) / lam_max
    if not (0.0 < lam <= lam_hi):
        raise ValueError(f"lam={lam} out of range (0, {lam_hi}]")
    mu_sq = 1.0 - lam * lam_min
    nu_sq = 1.0 - gamma * sigma * (2.0 * p.beta - gamma) / p.beta
    mu = math.sqrt(max(mu_sq, 0.0))
    nu = math.sqrt(max(nu_sq, 0.0))
    if mu >= 1.0 or nu >= 1.0:
        return None
    eta = max(mu, nu)
    theta = alpha_hi + (1.0 - alpha_lo) * eta
    if theta >= 1.0:
        return None
    u0 = p.zeros() if u0 is None else u0
    a0 = alpha_lo if alpha0 is None else float(alpha0)
    # the stepsizes were validated against the dense spectrum above, which
    # can admit the exact upper end that the cached estimate would reject
    vt, xt = _tentative(p, gamma, lam, u0.v, u0.x, p.f2.grad(u0.x))
    u1 = PDState(mann_combine(a0, u0.v, vt), mann_combine(a0, u0.x, xt))
    d = lambda_norm(PDState(u1.v - u0.v, u1.x - u0.x), lam)
    return RateCertificate(mu=mu, nu=nu, eta=eta, theta=theta, d=d)


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trace_csv(trace, path):
    """Serialize a run trace to CSV (one row per iteration, '.' decimals)."""
    lines = [TRACE_CSV_HEADER]
    for k in range(len(trace.iters)):
        lines.append(
            ",".join(
                _fmt(col[k])
                for col in (
                    trace.iters,
                    trace.gammas,
                    trace.lams,
                    trace.alphas,
                    trace.objectives,
                    trace.residuals,
                    trace.snrs,
                    trace.relerrs,
                    trace.wall_ms,
                )
            )
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
