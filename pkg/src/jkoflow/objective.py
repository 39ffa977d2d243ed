"""OT-regularized likelihood objective

    mean_x [ int_0^T 1/2 |v(z(x,t),t)|^2 dt + alpha * C(x, T) ],
    C(x, T) = -log rho_1(z(x, T)) - ell(x, T),

with rho_1 the standard normal.  Gradients are exact for the RK4-discretized
objective (discretize-then-optimize).
"""

from __future__ import annotations

from functools import partial
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from jkoflow.flow_integrator import AugmentedState, IntegratorConfig, integrate
from jkoflow.potential_net import NetConfig, NumericalOverflowError

LOG_2PI = float(np.log(2.0 * np.pi))


class LossBreakdown(NamedTuple):
    kinetic: float
    nll: float
    total: float
    alpha: float


def gaussian_logpdf(y) -> np.ndarray | float:
    """Standard normal log density along the last axis."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0:
        y = y[None]
    d = y.shape[-1]
    out = -0.5 * d * LOG_2PI - 0.5 * np.sum(y ** 2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def terminal_cost(state: AugmentedState):
    return -gaussian_logpdf(state.z) - np.asarray(state.ell)


def _loss(theta, X, alpha, net, T, nt):
    Z, ell, kin, bad = integrate(theta, X, net, T, nt)
    d = X.shape[1]
    cost = 0.5 * d * LOG_2PI + 0.5 * jnp.sum(Z ** 2, axis=1) - ell
    kinetic = jnp.mean(kin)
    nll = jnp.mean(cost)
    return kinetic + alpha * nll, (kinetic, nll, bad)


@partial(jax.jit, static_argnums=(3, 4, 5))
def _loss_jit(theta, X, alpha, net, T, nt):
    return _loss(theta, X, alpha, net, T, nt)


@partial(jax.jit, static_argnums=(3, 4, 5))
def loss_and_grad(theta, X, alpha, net, T, nt):
    """((total, (kinetic, nll, bad_step)), grad) as jax arrays; used by the trainer."""
    return jax.value_and_grad(_loss, has_aux=True)(theta, X, alpha, net, T, nt)


def _check(total, bad, X):
    if int(bad) >= 0 or not np.isfinite(float(total)):
        raise NumericalOverflowError(
            f"objective is non-finite (first bad RK4 step {int(bad)}, batch of {X.shape[0]} rows)"
        )


def _prepare(X, alpha, integ_cfg):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if integ_cfg.direction != "forward":
        raise ValueError("the objective integrates forward in time")
    return X


def ot_loss(theta, X, alpha: float, integ_cfg: IntegratorConfig, net: NetConfig) -> LossBreakdown:
    X = _prepare(X, alpha, integ_cfg)
    total, (kinetic, nll, bad) = _loss_jit(
        jnp.asarray(theta), jnp.asarray(X), float(alpha), net, float(integ_cfg.T), int(integ_cfg.nt)
    )
    _check(total, bad, X)
    return LossBreakdown(float(kinetic), float(nll), float(total), float(alpha))


def loss_gradient(theta, X, alpha: float, integ_cfg: IntegratorConfig, net: NetConfig) -> np.ndarray:
    X = _prepare(X, alpha, integ_cfg)
    (total, (_, _, bad)), grad = loss_and_grad(
        jnp.asarray(theta), jnp.asarray(X), float(alpha), net, float(integ_cfg.T), int(integ_cfg.nt)
    )
    _check(total, bad, X)
    return np.asarray(grad)
