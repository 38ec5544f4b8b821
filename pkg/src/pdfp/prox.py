"""Proximity operators, conjugate proxes, and smooth quadratic terms."""

import numpy as np
from dataclasses import dataclass
from typing import Callable

from .linops import op_norm_sq


@dataclass(frozen=True)
class ProxFn:
    """A convex function with an evaluable value and proximity map.

    ``prox(t, z)`` returns ``argmin_y t*f(y) + 0.5*||y - z||^2`` for ``t > 0``.
    The scale is taken at call time because solvers with dynamic stepsizes
    change it every iteration.
    """

    dim: int
    value: Callable
    prox: Callable


@dataclass(frozen=True)
class SmoothFn:
    """A differentiable convex function with a Lipschitz-continuous gradient."""

    dim: int
    value: Callable
    grad: Callable
    lipschitz: float

    def value_and_grad(self, x):
        return self.value(x), self.grad(x)


@dataclass(frozen=True)
class QuadraticFn(SmoothFn):
    """``0.5*||A x - b||^2`` with its operator and data kept accessible."""

    A: object = None
    b: object = None

    def value_and_grad(self, x):
        r = self.A.forward(x) - self.b
        return 0.5 * float(r @ r), self.A.adjoint(r)


def l1_prox(t, z):
    """Componentwise soft threshold ``sign(z) * max(|z| - t, 0)``."""
    if t <= 0:
        raise ValueError("t must be positive")
    z = np.asarray(z, dtype=np.float64)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _group_ids(dim, groups):
    """Validate that ``groups`` partitions ``range(dim)``; return the id map."""
    gid = np.full(dim, -1, dtype=np.int64)
    for g, idx in enumerate(groups):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= dim):
            raise ValueError("group index out of range")
        if np.any(gid[idx] >= 0):
            raise ValueError("groups overlap; overlapping groups are not supported")
        gid[idx] = g
    if np.any(gid < 0):
        raise ValueError("groups do not cover every index")
    return gid


def group_l2_prox(t, z, groups):
    """Blockwise shrinkage ``z_g * max(1 - t/||z_g||, 0)`` over a partition."""
    if t <= 0:
        raise ValueError("t must be positive")
    z = np.asarray(z, dtype=np.float64)
    gid = _group_ids(z.size, groups)
    return _group_shrink(t, z, gid, len(groups))


def _group_shrink(t, z, gid, n_groups):
    norms = np.sqrt(np.bincount(gid, weights=z * z, minlength=n_groups))
    scale = np.zeros(n_groups)
    nz = norms > 0.0
    scale[nz] = np.maximum(1.0 - t / norms[nz], 0.0)
    return z * scale[gid]


def conjugate_prox(f, t, z):
    """Prox of the convex conjugate, ``prox_{t f*}(z) = z - t * prox_{f/t}(z/t)``.

    This realizes the Moreau decomposition: for any ``z`` and ``t > 0``,
    ``z = prox_{t f}(z) + t * prox_{(1/t) f*}(z / t)`` holds up to rounding.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    z = np.asarray(z, dtype=np.float64)
    return z - t * f.prox(1.0 / t, z / t)


def resolvent_identity_check(f, nu, mu, z):
    """Residual of the two-scale resolvent identity for ``f``.

    Returns ``||prox_{nu f}(z) - prox_{mu f}((mu/nu) z + (1 - mu/nu) prox_{nu f}(z))||``,
    which is zero for any proper convex ``f``.
    """
    if nu <= 0 or mu <= 0:
        raise ValueError("nu and mu must be positive")
    z = np.asarray(z, dtype=np.float64)
    lhs = f.prox(nu, z)
    rhs = f.prox(mu, (mu / nu) * z + (1.0 - mu / nu) * lhs)
    return float(np.linalg.norm(lhs - rhs))


def subgradient_prox_check(f, t, z, n_probes=32, seed=0, tol=1e-9, x=None):
    """Check the subgradient characterization of the prox at ``z``.

    With ``x = prox(t, z)`` and ``y = (z - x)/t``, verifies
    ``f(w) >= f(x) + <y, w - x> - tol`` at deterministic and random probes
    ``w``. Passing ``x`` overrides the prox output (useful to confirm that
    perturbed points fail the test).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    z = np.asarray(z, dtype=np.float64)
    if x is None:
        x = f.prox(t, z)
    x = np.asarray(x, dtype=np.float64)
    y = (z - x) / t
    fx = f.value(x)
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(z))))
    probes = [np.zeros_like(z), z.copy(), f.prox(t, z)]
    probes += [scale * rng.standard_normal(z.size) for _ in range(n_probes)]
    for w in probes:
        if f.value(w) < fx + float(y @ (w - x)) - tol:
            return False
    return True


def quadratic_fn(A, b, power_tol=1e-6, power_seed=0):
    """Least-squares term ``0.5*||A x - b||^2`` as a :class:`SmoothFn`.

    The Lipschitz constant of the gradient is estimated by power iteration
    and inflated by ``1 + power_tol`` so stepsize bounds derived from it stay
    on the safe side of estimation error.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.out_dim,):
        raise ValueError(f"b must have length {A.out_dim}, got {b.shape}")
    if A.norm_sq_hint is not None:
        L = float(A.norm_sq_hint)
    else:
        L = op_norm_sq(A, tol=power_tol, seed=power_seed) * (1.0 + power_tol)
    if L <= 0:
        raise ValueError("A must be nonzero")

    def value(x):
        r = A.forward(x) - b
        return 0.5 * float(r @ r)

    def grad(x):
        return A.adjoint(A.forward(x) - b)

    return QuadraticFn(dim=A.in_dim, value=value, grad=grad, lipschitz=L, A=A, b=b)


def zero_prox_fn(dim):
    """The zero function; its prox is the identity."""
    return ProxFn(dim=dim, value=lambda z: 0.0, prox=lambda t, z: np.asarray(z, dtype=np.float64).copy())


def l1_norm_fn(dim, weight=1.0):
    """Weighted l1 norm ``weight * ||z||_1``."""
    if weight <= 0:
        raise ValueError("weight must be positive")
    return ProxFn(
        dim=dim,
        value=lambda z: weight * float(np.sum(np.abs(z))),
        prox=lambda t, z: l1_prox(t * weight, z),
    )


def group_l2_norm_fn(dim, groups, weight=1.0):
    """Weighted mixed l1-l2 norm ``weight * sum_g ||z_g||_2`` over a partition."""
    if weight <= 0:
        raise ValueError("weight must be positive")
    gid = _group_ids(dim, groups)
    n_groups = len(groups)

    def value(z):
        z = np.asarray(z, dtype=np.float64)
        norms = np.sqrt(np.bincount(gid, weights=z * z, minlength=n_groups))
        return weight * float(norms.sum())

    def prox(t, z):
        if t <= 0:
            raise ValueError("t must be positive")
        z = np.asarray(z, dtype=np.float64)
        return _group_shrink(t * weight, z, gid, n_groups)

    return ProxFn(dim=dim, value=value, prox=prox)
