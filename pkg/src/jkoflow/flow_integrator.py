"""Fixed-step RK4 for the augmented flow

    dz/dt   = v(z, t)
    dl/dt   = trace(grad_z v(z, t))
    dkin/dt = 1/2 |v(z, t)|^2

with z(0) = x, l(0) = 0, kin(0) = 0.  The inverse map integrates the same
field from t = T back to t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from jkoflow.potential_net import NetConfig, NumericalOverflowError, velocity_batch


@dataclass(frozen=True)
class IntegratorConfig:
    T: float = 1.0
    nt: int = 8
    direction: str = "forward"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.nt < 1:
            raise ValueError(f"nt must be >= 1, got {self.nt}")
        if self.direction not in ("forward", "inverse"):
            raise ValueError(f"direction must be 'forward' or 'inverse', got {self.direction!r}")


class AugmentedState(NamedTuple):
    z: np.ndarray
    ell: np.ndarray
    kin: np.ndarray


def _rhs(theta, Z, t, net):
    v, div = velocity_batch(theta, Z, t, net)
    return v, div, 0.5 * jnp.sum(v ** 2, axis=1)


def integrate(theta, X, net: NetConfig, T: float, nt: int, inverse: bool = False):
    """RK4 on the augmented system for a batch; traceable and differentiable.

    Returns (Z, ell, kin, bad_step) where bad_step is the first step index that
    produced a non-finite state, or -1.
    """
    h = (-T if inverse else T) / nt
    t0 = T if inverse else 0.0
    n = X.shape[0]

    def step(carry, i):
        Z, ell, kin, bad = carry
        t = t0 + i * h
        k1 = _rhs(theta, Z, t, net)
        k2 = _rhs(theta, Z + 0.5 * h * k1[0], t + 0.5 * h, net)
        k3 = _rhs(theta, Z + 0.5 * h * k2[0], t + 0.5 * h, net)
        k4 = _rhs(theta, Z + h * k3[0], t + h, net)
        upd = [(a + 2.0 * b + 2.0 * c + e) * (h / 6.0) for a, b, c, e in zip(k1, k2, k3, k4)]
        Z, ell, kin = Z + upd[0], ell + upd[1], kin + upd[2]
        finite = jnp.all(jnp.isfinite(Z)) & jnp.all(jnp.isfinite(ell)) & jnp.all(jnp.isfinite(kin))
        bad = jnp.where((bad < 0) & ~finite, i, bad)
        return (Z, ell, kin, bad), None

    init = (X, jnp.zeros(n, X.dtype), jnp.zeros(n, X.dtype), jnp.array(-1))
    (Z, ell, kin, bad), _ = jax.lax.scan(step, init, jnp.arange(nt))
    return Z, ell, kin, bad


@partial(jax.jit, static_argnums=(2, 3, 4, 5))
def _integrate_jit(theta, X, net, T, nt, inverse):
    return integrate(theta, X, net, T, nt, inverse)


def _run(theta, X, net, cfg, inverse):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != net.d:
        raise ValueError(f"samples have dimension {X.shape[1]}, network expects {net.d}")
    Z, ell, kin, bad = _integrate_jit(jnp.asarray(theta), jnp.asarray(X), net, float(cfg.T), int(cfg.nt), inverse)
    Z, ell, kin = np.asarray(Z), np.asarray(ell), np.asarray(kin)
    if int(bad) >= 0:
        rows = np.flatnonzero(~(np.isfinite(Z).all(axis=1) & np.isfinite(ell) & np.isfinite(kin)))
        raise NumericalOverflowError(
            f"non-finite state at RK4 step {int(bad)} (rows {rows[:10].tolist()})"
        )
    return AugmentedState(Z, ell, kin)


def rhs(theta, state: AugmentedState, t: float, net: NetConfig) -> AugmentedState:
    """Time derivative of a single augmented state."""
    z = np.atleast_2d(np.asarray(state.z, dtype=np.float64))
    v, div, dkin = _rhs_jit(jnp.asarray(theta), jnp.asarray(z), float(t), net)
    out = AugmentedState(np.asarray(v)[0], float(div[0]), float(dkin[0]))
    if not (np.all(np.isfinite(out.z)) and np.isfinite(out.ell) and np.isfinite(out.kin)):
        raise NumericalOverflowError(f"non-finite derivative at t={t}")
    return out


@partial(jax.jit, static_argnums=(3,))
def _rhs_jit(theta, Z, t, net):
    return _rhs(theta, Z, t, net)


def flow_forward(theta, x, cfg: IntegratorConfig, net: NetConfig) -> AugmentedState:
    """Augmented state at t = T for a single starting point x."""
    if cfg.direction != "forward":
        raise ValueError("flow_forward needs a forward IntegratorConfig")
    Z, ell, kin = _run(theta, x, net, cfg, inverse=False)
    return AugmentedState(Z[0], float(ell[0]), float(kin[0]))


def flow_forward_batch(theta, X, cfg: IntegratorConfig, net: NetConfig) -> AugmentedState:
    if cfg.direction != "forward":
        raise ValueError("flow_forward_batch needs a forward IntegratorConfig")
    return _run(theta, X, net, cfg, inverse=False)


def flow_inverse(theta, y, cfg: IntegratorConfig, net: NetConfig) -> np.ndarray:
    if cfg.direction != "inverse":
        raise ValueError("flow_inverse needs an inverse IntegratorConfig")
    return _run(theta, y, net, cfg, inverse=True).z[0]


def flow_inverse_batch(theta, Y, cfg: IntegratorConfig, net: NetConfig) -> np.ndarray:
    if cfg.direction != "inverse":
        raise ValueError("flow_inverse_batch needs an inverse IntegratorConfig")
    return _run(theta, Y, net, cfg, inverse=True).z
