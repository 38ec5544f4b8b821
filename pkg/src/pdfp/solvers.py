"""Primal-dual fixed point solvers over the shared (v, x) state.

The family shares one iteration kernel: a forward step on the smooth term,
a shrinkage step on the dual variable, and a dual correction of the primal,
optionally relaxed by a convex combination with the previous state. The
comparison solvers (an inner/outer splitting, an inverse-matrix fixed point
scheme, a primal-dual hybrid gradient scheme, and a split inexact Uzawa
scheme) expose the standard forms the kernel is equivalent to.
"""

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .linops import LinearOp, op_norm_sq
from .prox import QuadraticFn, conjugate_prox


class UnsupportedProblemError(ValueError):
    """Raised when a solver cannot handle the supplied problem structure."""


@dataclass
class PDState:
    """The primal-dual iterate ``u = (v, x)``; ``v`` is the dual variable."""

    v: np.ndarray
    x: np.ndarray

    def copy(self):
        return PDState(self.v.copy(), self.x.copy())


@dataclass(frozen=True)
class Problem:
    """Data for ``min f1(D x) + f2(x)``.

    ``beta`` is the cocoercivity constant of ``grad f2`` (the reciprocal of
    its Lipschitz constant) and ``lambda_max_ddt`` caches a safe
    over-estimate of the largest eigenvalue of ``D D^T``; both drive the
    admissible stepsize ranges.
    """

    f1: object
    f2: object
    D: LinearOp
    beta: float
    lambda_max_ddt: float

    def objective(self, x):
        return self.f1.value(self.D.forward(x)) + self.f2.value(x)

    def zeros(self):
        return PDState(np.zeros(self.D.out_dim), np.zeros(self.D.in_dim))

    @property
    def lambda_hi(self):
        """Closed upper end of the admissible dual stepsize range."""
        if self.lambda_max_ddt == 0.0:
            return math.inf
        return 1.0 / self.lambda_max_ddt


def make_problem(f1, f2, D, power_tol=1e-6, power_seed=0):
    """Assemble a :class:`Problem`, caching the spectral bound of ``D D^T``.

    Operators carrying an exact spectral bound use it; otherwise the
    power-iteration estimate is inflated by ``1 + power_tol`` so that
    stepsizes chosen as ``1 / lambda_max_ddt`` never exceed the theoretical
    bound through estimation error.
    """
    if f1.dim != D.out_dim:
        raise ValueError(f"f1 acts on R^{f1.dim} but D maps into R^{D.out_dim}")
    if f2.dim != D.in_dim:
        raise ValueError(f"f2 acts on R^{f2.dim} but D maps from R^{D.in_dim}")
    if f2.lipschitz <= 0:
        raise ValueError("f2 must have a positive Lipschitz constant")
    if D.norm_sq_hint is not None:
        lam_max = float(D.norm_sq_hint)
    else:
        lam_max = op_norm_sq(D, tol=power_tol, seed=power_seed) * (1.0 + power_tol)
    return Problem(f1=f1, f2=f2, D=D, beta=1.0 / f2.lipschitz, lambda_max_ddt=lam_max)


@dataclass(frozen=True)
class Schedule:
    """Per-iteration parameter sources ``(n, x_n) -> value`` for the solvers."""

    gamma: Callable
    lam: Callable
    alpha: Callable
    kappa: float = 0.0


@dataclass(frozen=True)
class StoppingRule:
    """Stop when the relative state change drops below ``tol`` or at ``max_iter``.

    ``tol = 0`` disables the tolerance test, running the budget in full
    (useful for fixed-length traces).
    """

    tol: float = 1e-8
    max_iter: int = 10000


@dataclass
class RunTrace:
    """Per-iteration record of a solver run.

    For the fixed-point family, ``residuals[k]`` is the fixed-point
    residual of the iterate the k-th step started from, measured in the
    lambda-weighted product norm with weight ``lambda_ref``; the comparison
    solvers record their per-step state change there instead. ``iterates``
    (including the starting state) is populated only when requested.
    ``snr``/``relerr`` hold NaN when no ground-truth image was supplied.
    """

    lambda_ref: float
    converged: bool
    n_iter: int
    iters: np.ndarray
    gammas: np.ndarray
    lams: np.ndarray
    alphas: np.ndarray
    objectives: np.ndarray
    residuals: np.ndarray
    dist_ref: np.ndarray
    snrs: np.ndarray
    relerrs: np.ndarray
    wall_ms: np.ndarray
    iterates: Optional[list] = None
    inner_iters: Optional[np.ndarray] = None


def mann_combine(alpha, a, b):
    """Convex combination ``alpha * a + (1 - alpha) * b`` used by the relaxed step."""
    return alpha * a + (1.0 - alpha) * b


def _lnorm(v, x, lam):
    return math.sqrt(float(x @ x) + lam * float(v @ v))


def _check_gamma(g, beta, n):
    eps = 1e-12 * beta
    if not (eps < g < 2.0 * beta - eps):
        raise ValueError(f"gamma={g} out of range (0, {2.0 * beta}) at iteration {n}")


def _check_lambda(l, lam_hi, n):
    eps = 0.0 if math.isinf(lam_hi) else 1e-12 * lam_hi
    if not (eps < l) or l > lam_hi:
        raise ValueError(f"lambda={l} out of range (0, {lam_hi}] at iteration {n}")


def _check_alpha(a, n):
    if not (0.0 <= a < 1.0):
        raise ValueError(f"alpha={a} out of range [0, 1) at iteration {n}")


def _tentative(p, g, l, v, x, grad):
    """One unrelaxed fixed-point step from (v, x) at stepsizes (g, l)."""
    z = x - g * grad
    w = p.D.forward(z) + (v - l * p.D.forward(p.D.adjoint(v)))
    vt = w - p.f1.prox(g / l, w)
    xt = z - l * p.D.adjoint(vt)
    return vt, xt


def apply_T(p, gamma, lam, u):
    """Apply the fixed-point operator once at constant stepsizes.

    The dual component is the shrinkage residue of the forward-stepped
    image of the state; the primal component is the forward step corrected
    by the adjoint of the new dual. Parameters outside the admissible
    ranges raise ``ValueError``.
    """
    _check_gamma(gamma, p.beta, 0)
    _check_lambda(lam, p.lambda_hi, 0)
    vt, xt = _tentative(p, gamma, lam, u.v, u.x, p.f2.grad(u.x))
    return PDState(vt, xt)


def apply_Tn(p, sched, n, u):
    """Apply the fixed-point operator with stepsizes drawn at index ``n``."""
    g = float(sched.gamma(n, u.x))
    l = float(sched.lam(n, u.x))
    _check_gamma(g, p.beta, n)
    _check_lambda(l, p.lambda_hi, n)
    vt, xt = _tentative(p, g, l, u.v, u.x, p.f2.grad(u.x))
    return PDState(vt, xt)


def _metrics(x, x_true):
    if x_true is None:
        return math.nan, math.nan
    d = x - x_true
    nd = float(np.linalg.norm(d))
    nt = float(np.linalg.norm(x_true))
    if nd == 0.0:
        return math.inf, 0.0
    return 20.0 * math.log10(nt / nd), (nd * nd) / (nt * nt)


def _run_kernel(p, gamma_src, lam_src, alpha_src, u0, stop,
                ref=None, x_true=None, record_iterates=False):
    """Shared driver for the fixed-point family (plain, relaxed, dynamic)."""
    v = np.array(u0.v, dtype=np.float64)
    x = np.array(u0.x, dtype=np.float64)
    lam_ref = float(lam_src(0, x))
    rows = {k: [] for k in ("it", "g", "l", "a", "obj", "res", "dref", "snr", "rel", "wall")}
    iterates = [PDState(v.copy(), x.copy())] if record_iterates else None
    t0 = time.perf_counter()
    converged = False
    n_done = 0
    for n in range(stop.max_iter):
        g = float(gamma_src(n, x))
        l = float(lam_src(n, x))
        a = float(alpha_src(n, x)) if alpha_src is not None else 0.0
        _check_gamma(g, p.beta, n)
        _check_lambda(l, p.lambda_hi, n)
        _check_alpha(a, n)
        grad = p.f2.grad(x)
        vt, xt = _tentative(p, g, l, v, x, grad)
        res = _lnorm(vt - v, xt - x, lam_ref)
        if a == 0.0:
            v_new, x_new = vt, xt
        else:
            v_new = mann_combine(a, v, vt)
            x_new = mann_combine(a, x, xt)
        step = _lnorm(v_new - v, x_new - x, lam_ref)
        denom = max(1.0, _lnorm(v, x, lam_ref))
        snr, rel = _metrics(x_new, x_true)
        rows["it"].append(n + 1)
        rows["g"].append(g)
        rows["l"].append(l)
        rows["a"].append(a)
        rows["obj"].append(p.objective(x_new))
        rows["res"].append(res)
        rows["dref"].append(
            _lnorm(v_new - ref.v, x_new - ref.x, lam_ref) if ref is not None else math.nan
        )
        rows["snr"].append(snr)
        rows["rel"].append(rel)
        rows["wall"].append((time.perf_counter() - t0) * 1e3)
        v, x = v_new, x_new
        n_done = n + 1
        if record_iterates:
            iterates.append(PDState(v.copy(), x.copy()))
        if stop.tol > 0.0 and step / denom <= stop.tol:
            converged = True
            break
    trace = RunTrace(
        lambda_ref=lam_ref,
        converged=converged,
        n_iter=n_done,
        iters=np.array(rows["it"], dtype=np.int64),
        gammas=np.array(rows["g"]),
        lams=np.array(rows["l"]),
        alphas=np.array(rows["a"]),
        objectives=np.array(rows["obj"]),
        residuals=np.array(rows["res"]),
        dist_ref=np.array(rows["dref"]),
        snrs=np.array(rows["snr"]),
        relerrs=np.array(rows["rel"]),
        wall_ms=np.array(rows["wall"]),
        iterates=iterates,
    )
    return PDState(v, x), trace


def _const(value):
    value = float(value)
    return lambda n, x: value


def pdfp2o(p, gamma, lam, u0=None, stop=None, ref=None, x_true=None, record_iterates=False):
    """Fixed-point iteration with constant stepsizes.

    Iterates ``u_{n+1} = T(u_n)`` where ``T`` combines one gradient step on
    ``f2``, one shrinkage on the dual variable, and the dual correction of
    the primal. Requires ``0 < gamma < 2 beta`` and
    ``0 < lam <= 1 / lambda_max(D D^T)``.

    Returns
    -------
    (PDState, RunTrace)
        The final state and the per-iteration trace; the trace is flagged
        non-converged when the iteration budget ran out first.
    """
    u0 = p.zeros() if u0 is None else u0
    stop = StoppingRule() if stop is None else stop
    return _run_kernel(p, _const(gamma), _const(lam), None, u0, stop,
                       ref=ref, x_true=x_true, record_iterates=record_iterates)


def pdfp2o_kappa(p, gamma, lam, kappa, u0=None, stop=None, ref=None, x_true=None,
                 record_iterates=False):
    """Relaxed fixed-point iteration ``u_{n+1} = kappa u_n + (1 - kappa) T(u_n)``.

    ``kappa = 0`` reproduces :func:`pdfp2o` exactly.
    """
    if not (0.0 <= kappa < 1.0):
        raise ValueError("kappa must lie in [0, 1)")
    u0 = p.zeros() if u0 is None else u0
    stop = StoppingRule() if stop is None else stop
    return _run_kernel(p, _const(gamma), _const(lam), _const(kappa), u0, stop,
                       ref=ref, x_true=x_true, record_iterates=record_iterates)


def pdfp2o_ds(p, sched, u0=None, stop=None, ref=None, x_true=None, record_iterates=False):
    """Fixed-point iteration with dynamic stepsizes drawn from ``sched``.

    Each iteration performs::

        z   = x - gamma_n * grad f2(x)
        v'  = (I - prox_{(gamma_n/lambda_n) f1})(D z + (I - lambda_n D D^T) v)
        x'  = z - lambda_n * D^T v'

    A constant schedule reproduces :func:`pdfp2o` exactly.
    """
    u0 = p.zeros() if u0 is None else u0
    stop = StoppingRule() if stop is None else stop
    return _run_kernel(p, sched.gamma, sched.lam, None, u0, stop,
                       ref=ref, x_true=x_true, record_iterates=record_iterates)


def pdfp2o_dsn(p, sched, u0=None, stop=None, ref=None, x_true=None, record_iterates=False):
    """Relaxed (Mann) iteration over the dynamic-stepsize operator.

    The update is the convex combination ``alpha_n u_n + (1 - alpha_n) T_n(u_n)``
    with all three parameter sequences drawn from ``sched``. ``alpha_n = 0``
    reproduces :func:`pdfp2o_ds` exactly.
    """
    u0 = p.zeros() if u0 is None else u0
    stop = StoppingRule() if stop is None else stop
    return _run_kernel(p, sched.gamma, sched.lam, sched.alpha, u0, stop,
                       ref=ref, x_true=x_true, record_iterates=record_iterates)


def pfbs_fp2o(p, gamma, lam, kappa, inner_stop, u0=None, stop=None, ref=None,
              x_true=None, record_iterates=False, warm_start=True):
    """Forward step plus an inner fixed-point loop for the implicit prox.

    After the forward step ``z = x - gamma * grad f2(x)``, the dual variable
    is iterated to (approximate) convergence of::

        H(v) = (I - prox_{(gamma/lam) f1})(D z + (I - lam D D^T) v)

    relaxed by ``kappa``, and the primal update is ``x' = z - lam D^T v*``.
    The trace records the inner-iteration count per outer step; with a
    single warm-started inner iteration and ``kappa = 0`` the method
    coincides with :func:`pdfp2o` step for step.
    """
    _check_gamma(gamma, p.beta, 0)
    _check_lambda(lam, p.lambda_hi, 0)
    if not (0.0 <= kappa < 1.0):
        raise ValueError("kappa must lie in [0, 1)")
    u0 = p.zeros() if u0 is None else u0
    stop = StoppingRule() if stop is None else stop
    v = np.array(u0.v, dtype=np.float64)
    x = np.array(u0.x, dtype=np.float64)
    lam_ref = lam
    rows = {k: [] for k in ("it", "obj", "res", "dref", "snr", "rel", "wall", "inner")}
    iterates = [PDState(v.copy(), x.copy())] if record_iterates else None
    t0 = time.perf_counter()
    converged = False
    n_done = 0
    for n in range(stop.max_iter):
        grad = p.f2.grad(x)
        z = x - gamma * grad
        Dz = p.D.forward(z)
        vi = v if warm_start else np.zeros_like(v)
        inner = 0
        for _ in range(inner_stop.max_iter):
            w = Dz + (vi - lam * p.D.forward(p.D.adjoint(vi)))
            Hv = w - p.f1.prox(gamma / lam, w)
            vi_new = Hv if kappa == 0.0 else mann_combine(kappa, vi, Hv)
            inner += 1
            dv = float(np.linalg.norm(vi_new - vi))
            ref_v = max(1.0, float(np.linalg.norm(vi)))
            vi = vi_new
            if inner_stop.tol > 0.0 and dv / ref_v <= inner_stop.tol:
                break
        x_new = z - lam * p.D.adjoint(vi)
        v_new = vi
        step = _lnorm(v_new - v, x_new - x, lam_ref)
        denom = max(1.0, _lnorm(v, x, lam_ref))
        snr, rel = _metrics(x_new, x_true)
        rows["it"].append(n + 1)
        rows["obj"].append(p.objective(x_new))
        rows["res"].append(step)
        rows["dref"].append(
            _lnorm(v_new - ref.v, x_new - ref.x, lam_ref) if ref is not None else math.nan
        )
        rows["snr"].append(snr)
        rows["rel"].append(rel)
        rows["wall"].append((time.perf_counter() - t0) * 1e3)
        rows["inner"].append(inner)
        v, x = v_new, x_new
        n_done = n + 1
        if record_iterates:
            iterates.append(PDState(v.copy(), x.copy()))
        if stop.tol > 0.0 and step / denom <= stop.tol:
            converged = True
            break
    k = len(rows["it"])
    trace = RunTrace(
        lambda_ref=lam_ref,
        converged=converged,
        n_iter=n_done,
        iters=np.array(rows["it"], dtype=np.int64),
        gammas=np.full(k, gamma),
        lams=np.full(k, lam),
        alphas=np.full(k, kappa),
        objectives=np.array(rows["obj"]),
        residuals=np.array(rows["res"]),
        dist_ref=np.array(rows["dref"]),
        snrs=np.array(rows["snr"]),
        relerrs=np.array(rows["rel"]),
        wall_ms=np.array(rows["wall"]),
        iterates=iterates,
        inner_iters=np.array(rows["inner"], dtype=np.int64),
    )
    return PDState(v, x), trace


def ifp2o(Q, b, f1, D, lam, kappa, stop=None, v0=None):
    """Fixed-point scheme for ``min f1(D x) + 0.5 x^T Q x - b^T x`` with dense SPD ``Q``.

    Iterates ``v_{n+1} = kappa v_n + (1 - kappa) H(v_n)`` with
    ``H(v) = (I - prox_{f1/lam})(D Q^{-1} b + (I - lam D Q^{-1} D^T) v)``
    and returns ``x* = Q^{-1}(b - lam D^T v*)``. Requires
    ``0 < lam <= 2 / lambda_max(D Q^{-1} D^T)`` and ``kappa`` in (0, 1).
    """
    stop = StoppingRule() if stop is None else stop
    Q = np.asarray(Q, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = Q.shape[0]
    if Q.shape != (n, n) or b.shape != (n,):
        raise ValueError("Q must be square and b must match its size")
    if not np.allclose(Q, Q.T, rtol=1e-10, atol=1e-12):
        raise ValueError("Q must be symmetric")
    try:
        cho = scipy.linalg.cho_factor(Q)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Q must be symmetric positive definite") from exc
    if not (0.0 < kappa < 1.0):
        raise ValueError("kappa must lie in (0, 1)")
    solve = lambda rhs: scipy.linalg.cho_solve(cho, rhs)
    K = LinearOp(
        in_dim=D.out_dim,
        out_dim=D.out_dim,
        forward=lambda w: D.forward(solve(D.adjoint(w))),
        adjoint=lambda w: D.forward(solve(D.adjoint(w))),
    )
    lam_max_K = math.sqrt(op_norm_sq(K)) * (1.0 + 1e-6)
    hi = math.inf if lam_max_K == 0.0 else 2.0 / lam_max_K
    if not (0.0 < lam <= hi):
        raise ValueError(f"lam={lam} out of range (0, {hi}]")
    c = solve(b)
    Dc = D.forward(c)
    v = np.zeros(D.out_dim) if v0 is None else np.array(v0, dtype=np.float64)

    def x_of(vv):
        return solve(b - lam * D.adjoint(vv))

    def obj(xx):
        return f1.value(D.forward(xx)) + 0.5 * float(xx @ (Q @ xx)) - float(b @ xx)

    rows = {k: [] for k in ("it", "obj", "res", "wall")}
    t0 = time.perf_counter()
    converged = False
    n_done = 0
    for it in range(stop.max_iter):
        w = Dc + (v - lam * K.forward(v))
        Hv = w - f1.prox(1.0 / lam, w)
        v_new = mann_combine(kappa, v, Hv)
        res = float(np.linalg.norm(Hv - v))
        step = float(np.linalg.norm(v_new - v))
        denom = max(1.0, float(np.linalg.norm(v)))
        rows["it"].append(it + 1)
        rows["obj"].append(obj(x_of(v_new)))
        rows["res"].append(res)
        rows["wall"].append((time.perf_counter() - t0) * 1e3)
        v = v_new
        n_done = it + 1
        if stop.tol > 0.0 and step / denom <= stop.tol:
            converged = True
            break
    k = len(rows["it"])
    nanarr = np.full(k, math.nan)
    trace = RunTrace(
        lambda_ref=lam,
        converged=converged,
        n_iter=n_done,
        iters=np.array(rows["it"], dtype=np.int64),
        gammas=nanarr.copy(),
        lams=np.full(k, lam),
        alphas=np.full(k, kappa),
        objectives=np.array(rows["obj"]),
        residuals=np.array(rows["res"]),
        dist_ref=nanarr.copy(),
        snrs=nanarr.copy(),
        relerrs=nanarr.copy(),
        wall_ms=np.array(rows["wall"]),
    )
    return x_of(v), trace


def _as_source(value):
    if callable(value):
        return value
    value = float(value)
    return lambda n: value


def _cg(apply_A, rhs, x0, tol, max_iter=1000):
    """Conjugate gradient for SPD systems, to a relative residual of ``tol``."""
    x = x0.copy()
    r = rhs - apply_A(x)
    d = r.copy()
    rs = float(r @ r)
    target = tol * max(float(np.linalg.norm(rhs)), 1e-300)
    for _ in range(max_iter):
        if math.sqrt(rs) <= target:
            break
        Ad = apply_A(d)
        alpha = rs / float(d @ Ad)
        x += alpha * d
        r -= alpha * Ad
        rs_new = float(r @ r)
        d = r + (rs_new / rs) * d
        rs = rs_new
    return x


def _quadratic_resolvent(f2, tau, w, x0, tol=1e-10):
    """Solve ``x + tau * grad f2(x) = w`` for a quadratic ``f2``."""
    if not isinstance(f2, QuadraticFn):
        raise UnsupportedProblemError(
            "the primal resolvent is only available for quadratic data terms"
        )
    A, b = f2.A, f2.b
    if A.tag == "identity":
        return (w + tau * b) / (1.0 + tau)
    rhs = w + tau * A.adjoint(b)
    apply_M = lambda y: y + tau * A.adjoint(A.forward(y))
    return _cg(apply_M, rhs, x0, tol)


def chambolle_pock(p, sigma_sched, tau_sched, theta, state0=None, stop=None,
                   ref=None, x_true=None, record_iterates=False):
    """Primal-dual hybrid gradient scheme on the saddle form of the problem.

    Updates, with ``sigma_n``/``tau_n`` drawn per iteration::

        vbar' = prox_{sigma_n f1*}(vbar + sigma_n D y)
        x'    = (I + tau_n grad f2)^{-1}(x - tau_n D^T vbar')
        y'    = x' + theta (x' - x)

    ``theta = 0`` degenerates the extrapolation (the classical
    Arrow-Hurwicz-Uzawa update). The primal resolvent is solved in closed
    form when the data operator is the identity and by conjugate gradient
    (relative residual 1e-10) for general quadratic terms; other smooth
    terms raise :class:`UnsupportedProblemError`.
    """
    if not (0.0 <= theta <= 1.0):
        raise ValueError("theta must lie in [0, 1]")
    stop = StoppingRule() if stop is None else stop
    sigma_src = _as_source(sigma_sched)
    tau_src = _as_source(tau_sched)
    state0 = p.zeros() if state0 is None else state0
    vbar = np.array(state0.v, dtype=np.float64)
    x = np.array(state0.x, dtype=np.float64)
    y = x.copy()
    lam_ref = float(sigma_src(0)) * float(tau_src(0))
    if lam_ref <= 0:
        raise ValueError("sigma_0 * tau_0 must be positive")
    rows = {k: [] for k in ("it", "g", "l", "obj", "res", "dref", "snr", "rel", "wall")}
    iterates = [PDState(vbar.copy(), x.copy())] if record_iterates else None
    t0 = time.perf_counter()
    converged = False
    n_done = 0
    for n in range(stop.max_iter):
        sig = float(sigma_src(n))
        tau = float(tau_src(n))
        prod = sig * tau
        hi = p.lambda_hi
        if not (0.0 < prod) or (not math.isinf(hi) and prod >= hi):
            raise ValueError(f"sigma*tau={prod} out of range (0, {hi}) at iteration {n}")
        vbar_new = conjugate_prox(p.f1, sig, vbar + sig * p.D.forward(y))
        x_new = _quadratic_resolvent(p.f2, tau, x - tau * p.D.adjoint(vbar_new), x)
        y = x_new + theta * (x_new - x)
        step = _lnorm(vbar_new - vbar, x_new - x, lam_ref)
        denom = max(1.0, _lnorm(vbar, x, lam_ref))
        snr, rel = _metrics(x_new, x_true)
        rows["it"].append(n + 1)
        rows["g"].append(tau)
        rows["l"].append(sig)
        rows["obj"].append(p.objective(x_new))
        rows["res"].append(step)
        rows["dref"].append(
            _lnorm(vbar_new - ref.v, x_new - ref.x, lam_ref) if ref is not None else math.nan
        )
        rows["snr"].append(snr)
        rows["rel"].append(rel)
        rows["wall"].append((time.perf_counter() - t0) * 1e3)
        vbar, x = vbar_new, x_new
        n_done = n + 1
        if record_iterates:
            iterates.append(PDState(vbar.copy(), x.copy()))
        if stop.tol > 0.0 and step / denom <= stop.tol:
            converged = True
            break
    k = len(rows["it"])
    trace = RunTrace(
        lambda_ref=lam_ref,
        converged=converged,
        n_iter=n_done,
        iters=np.array(rows["it"], dtype=np.int64),
        gammas=np.array(rows["g"]),
        lams=np.array(rows["l"]),
        alphas=np.full(k, theta),
        objectives=np.array(rows["obj"]),
        residuals=np.array(rows["res"]),
        dist_ref=np.array(rows["dref"]),
        snrs=np.array(rows["snr"]),
        relerrs=np.array(rows["rel"]),
        wall_ms=np.array(rows["wall"]),
        iterates=iterates,
    )
    return PDState(vbar, x), trace


@dataclass
class SIUState:
    """State (x, d, v) of the split inexact Uzawa scheme."""

    x: np.ndarray
    d: np.ndarray
    v: np.ndarray

    def copy(self):
        return SIUState(self.x.copy(), self.d.copy(), self.v.copy())


def siu_x_update(f2, D, delta, nu, x, d, v):
    """The x-step of the split inexact Uzawa scheme for quadratic data terms."""
    if not isinstance(f2, QuadraticFn):
        raise UnsupportedProblemError("the split scheme needs a quadratic data term")
    A, b = f2.A, f2.b
    return x - delta * A.adjoint(A.forward(x) - b) - delta * nu * D.adjoint(D.forward(x) - d + v)


def ds_split_x_update(f2, D, delta, nu, x, d, v):
    """The x-step of the dynamic-stepsize method written in split (x, d, v) form.

    Differs from :func:`siu_x_update` exactly by the second-order coupling
    term ``- delta^2 nu A^T A D^T (d - D x)``.
    """
    if not isinstance(f2, QuadraticFn):
        raise UnsupportedProblemError("the split scheme needs a quadratic data term")
    A, b = f2.A, f2.b
    Dx = D.forward(x)
    base = x - delta * A.adjoint(A.forward(x) - b) - delta * nu * D.adjoint(Dx - d + v)
    return base - delta * delta * nu * A.adjoint(A.forward(D.adjoint(d - Dx)))


def siu(p, delta_sched, nu_sched, state0=None, stop=None, x_true=None):
    """Split inexact Uzawa iteration over (x, d, v) for quadratic data terms.

    Updates::

        x' = x - delta_n A^T(A x - b) - delta_n nu_n D^T(D x - d + v)
        d' = prox_{(1/nu_n) f1}(D x' + v)
        v' = v - (d' - D x')

    As the iteration converges, ``d - D x`` tends to zero.
    """
    if not isinstance(p.f2, QuadraticFn):
        raise UnsupportedProblemError("this scheme needs a quadratic data term")
    stop = StoppingRule() if stop is None else stop
    delta_src = _as_source(delta_sched)
    nu_src = _as_source(nu_sched)
    if state0 is None:
        state0 = SIUState(
            x=np.zeros(p.D.in_dim), d=np.zeros(p.D.out_dim), v=np.zeros(p.D.out_dim)
        )
    x = np.array(state0.x, dtype=np.float64)
    d = np.array(state0.d, dtype=np.float64)
    v = np.array(state0.v, dtype=np.float64)
    rows = {k: [] for k in ("it", "g", "l", "obj", "res", "snr", "rel", "wall")}
    t0 = time.perf_counter()
    converged = False
    n_done = 0
    A, b = p.f2.A, p.f2.b
    for n in range(stop.max_iter):
        delta = float(delta_src(n))
        nu = float(nu_src(n))
        if delta <= 0 or nu <= 0:
            raise ValueError(f"delta and nu must be positive at iteration {n}")
        x_new = x - delta * A.adjoint(A.forward(x) - b) - delta * nu * p.D.adjoint(
            p.D.forward(x) - d + v
        )
        Dx_new = p.D.forward(x_new)
        d_new = p.f1.prox(1.0 / nu, Dx_new + v)
        v_new = v - (d_new - Dx_new)
        step = math.sqrt(
            float((x_new - x) @ (x_new - x))
            + float((d_new - d) @ (d_new - d))
            + float((v_new - v) @ (v_new - v))
        )
        denom = max(1.0, math.sqrt(float(x @ x) + float(d @ d) + float(v @ v)))
        snr, rel = _metrics(x_new, x_true)
        rows["it"].append(n + 1)
        rows["g"].append(delta)
        rows["l"].append(nu)
        rows["obj"].append(p.objective(x_new))
        rows["res"].append(step)
        rows["snr"].append(snr)
        rows["rel"].append(rel)
        rows["wall"].append((time.perf_counter() - t0) * 1e3)
        x, d, v = x_new, d_new, v_new
        n_done = n + 1
        if stop.tol > 0.0 and step / denom <= stop.tol:
            converged = True
            break
    k = len(rows["it"])
    nanarr = np.full(k, math.nan)
    trace = RunTrace(
        lambda_ref=1.0,
        converged=converged,
        n_iter=n_done,
        iters=np.array(rows["it"], dtype=np.int64),
        gammas=np.array(rows["g"]),
        lams=np.array(rows["l"]),
        alphas=np.zeros(k),
        objectives=np.array(rows["obj"]),
        residuals=np.array(rows["res"]),
        dist_ref=nanarr.copy(),
        snrs=np.array(rows["snr"]),
        relerrs=np.array(rows["rel"]),
        wall_ms=np.array(rows["wall"]),
    )
    return SIUState(x, d, v), trace


def saddle_step(p, gamma, lam, vbar, x, y):
    """One iteration of the dynamic-stepsize method in saddle (conjugate-prox) form.

    With ``sigma = lam/gamma`` and the scaled dual ``vbar = (lam/gamma) v``::

        vbar' = prox_{sigma f1*}(vbar + sigma D y)
        x'    = x - gamma grad f2(x) - gamma D^T vbar'
        y'    = x' - gamma grad f2(x') - gamma D^T vbar'

    Seeding ``y = x - gamma grad f2(x) - lam D^T v`` makes this reproduce
    one iteration of :func:`pdfp2o_ds` exactly (up to rounding).
    """
    sigma = lam / gamma
    vbar_new = conjugate_prox(p.f1, sigma, vbar + sigma * p.D.forward(y))
    x_new = x - gamma * p.f2.grad(x) - gamma * p.D.adjoint(vbar_new)
    y_new = x_new - gamma * p.f2.grad(x_new) - gamma * p.D.adjoint(vbar_new)
    return vbar_new, x_new, y_new
