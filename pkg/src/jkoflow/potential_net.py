"""Potential network Phi(z, t) whose negative spatial gradient is the velocity.

    Phi(s) = w^T N(s) + 1/2 s^T (A^T A) s + b^T s + c,      s = [z; t]

with N a residual network

    u_0     = sigma(K_0 s + b_0)
    u_{j+1} = u_j + h * sigma(K_j u_j + b_j)

and sigma(x) = log(2 cosh x), so sigma' = tanh and sigma'' = 1 - tanh^2.
The gradient and the z-Laplacian of Phi are assembled in closed form; only
the derivative with respect to the parameters goes through ``jax.vjp``.

Flat parameter layout (row-major, in this order)::

    K0 (m, d+1) | b0 (m) | [K_j (m, m) | b_j (m)] * n_resblocks
    | w (m) | A (d+1, d+1) | b (d+1) | c (1)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

LAYOUT_VERSION = 1


class NumericalOverflowError(FloatingPointError):
    """Raised when a potential evaluation or flow step yields non-finite values."""


@dataclass(frozen=True)
class NetConfig:
    d: int
    m: int
    n_resblocks: int = 1
    resnet_step: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.m < 1 or self.n_resblocks < 1:
            raise ValueError(f"invalid NetConfig {self}: d, m and n_resblocks must be >= 1")

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        d1, m = self.d + 1, self.m
        entries = [("K0", (m, d1)), ("b0", (m,))]
        for j in range(self.n_resblocks):
            entries += [(f"K{j + 1}", (m, m)), (f"b{j + 1}", (m,))]
        entries += [("w", (m,)), ("A", (d1, d1)), ("b", (d1,)), ("c", (1,))]
        return entries


def param_count(cfg: NetConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in cfg.layout())


def unpack(theta, cfg: NetConfig) -> dict:
    """Split a flat parameter vector into named arrays (works for numpy and jax)."""
    out, pos = {}, 0
    for name, shape in cfg.layout():
        size = int(np.prod(shape))
        out[name] = theta[pos:pos + size].reshape(shape)
        pos += size
    if pos != theta.shape[0]:
        raise ValueError(f"parameter vector has length {theta.shape[0]}, expected {pos}")
    return out


def pack(params: dict, cfg: NetConfig) -> np.ndarray:
    return np.concatenate(
        [np.asarray(params[name], dtype=np.float64).reshape(-1) for name, _ in cfg.layout()]
    )


def init_params(cfg: NetConfig, seed) -> np.ndarray:
    """Random initial parameters.

    Weight matrices are N(0, 1/m); biases, readout and constant start at zero;
    A = 0.1 * I so the initial flow is close to the identity.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in cfg.layout():
        if name.startswith("K"):
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(cfg.m), size=shape)
        else:
            params[name] = np.zeros(shape)
    params["A"] = 0.1 * np.eye(cfg.d + 1)
    return pack(params, cfg)


@jax.custom_jvp
def sigma_tanh(x):
    """(log(2 cosh x), tanh x) from a single exp(-2|x|); XLA's float64 tanh is slow."""
    ax = jnp.abs(x)
    e = jnp.exp(-2.0 * ax)
    return ax + jnp.log1p(e), jnp.sign(x) * (1.0 - e) / (1.0 + e)


@sigma_tanh.defjvp
def _sigma_tanh_jvp(primals, tangents):
    (x,), (dx,) = primals, tangents
    s, t = sigma_tanh(x)
    return (s, t), (t * dx, (1.0 - t * t) * dx)


def sigma(x):
    return sigma_tanh(x)[0]


def _potential(theta, S, cfg: NetConfig):
    """(phi, grad_s, lap_z) for a batch of points S = [Z, t], shape (n, d+1).

    Written batch-first so every contraction is a single (n, .) @ (., m) product.
    """
    p = unpack(theta, cfg)
    d, h = cfg.d, cfg.resnet_step
    K0 = p["K0"]

    # forward pass, keeping pre-activations
    u, t0 = sigma_tanh(S @ K0.T + p["b0"])
    tanhs = []
    for j in range(1, cfg.n_resblocks + 1):
        sj, tj = sigma_tanh(u @ p[f"K{j}"].T + p[f"b{j}"])
        tanhs.append(tj)
        u = u + h * sj

    AtA = p["A"].T @ p["A"]
    SA = S @ AtA
    phi = u @ p["w"] + 0.5 * jnp.sum(SA * S, axis=1) + S @ p["b"] + p["c"][0]

    # reverse pass for dPhi/du_j
    g = jnp.broadcast_to(p["w"], u.shape)
    g_after = []  # cotangent on each block's output, in block order
    for j in range(cfg.n_resblocks, 0, -1):
        g_after.append(g)
        g = g + h * ((tanhs[j - 1] * g) @ p[f"K{j}"])
    g_after.reverse()
    grad_s = (t0 * g) @ K0 + SA + p["b"]

    # trace of the z-block of the Hessian:
    #   sum over activation sites of (dPhi/dsigma) * sigma'' * ||d(pre-act)/dz||^2
    E = K0[:, :d]
    lap = (g * (1.0 - t0 ** 2)) @ jnp.sum(E ** 2, axis=1)
    J = t0[:, None, :] * E.T[None, :, :]  # du_0/dz stored as (n, d, m)
    for j in range(1, cfg.n_resblocks + 1):
        KJ = J @ p[f"K{j}"].T
        tj = tanhs[j - 1]
        lap = lap + h * jnp.sum(g_after[j - 1] * (1.0 - tj ** 2) * jnp.sum(KJ ** 2, axis=1), axis=1)
        J = J + h * tj[:, None, :] * KJ
    lap = lap + jnp.trace(AtA[:d, :d])
    return phi, grad_s, lap


@partial(jax.jit, static_argnums=(2,))
def _potential_jit(theta, S, cfg):
    return _potential(theta, S, cfg)


def potential_batch(theta, Z, t, cfg: NetConfig):
    """Batched (phi, grad_s, lap_z) for rows of Z at a shared time t (jax arrays)."""
    S = jnp.concatenate([Z, jnp.full((Z.shape[0], 1), t, dtype=Z.dtype)], axis=1)
    return _potential(theta, S, cfg)


def velocity_batch(theta, Z, t, cfg: NetConfig):
    """Velocity v = -grad_z Phi and its divergence, trace(grad_z v) = -lap_z."""
    _, grad_s, lap = potential_batch(theta, Z, t, cfg)
    return -grad_s[:, :cfg.d], -lap


class PotentialEval(NamedTuple):
    phi: float
    grad_s: np.ndarray
    lap_z: float


def _as_point(z, t):
    return np.concatenate([np.atleast_1d(np.asarray(z, dtype=np.float64)), [float(t)]])


def potential(theta, z, t, cfg: NetConfig) -> PotentialEval:
    phi, grad_s, lap = _potential_jit(jnp.asarray(theta), jnp.asarray(_as_point(z, t))[None], cfg)
    out = PotentialEval(float(phi[0]), np.asarray(grad_s[0]), float(lap[0]))
    if not (np.isfinite(out.phi) and np.all(np.isfinite(out.grad_s)) and np.isfinite(out.lap_z)):
        raise NumericalOverflowError(f"non-finite potential at z={z}, t={t}")
    return out


def velocity(theta, z, t, cfg: NetConfig) -> np.ndarray:
    return -potential(theta, z, t, cfg).grad_s[:cfg.d]


@partial(jax.jit, static_argnums=(2,))
def _vjp_params(theta, s, cfg, cotangents):
    _, pullback = jax.vjp(lambda th: _potential(th, s[None], cfg), theta)
    return pullback(tuple(c[None] for c in cotangents))[0]


def vjp_params(theta, z, t, cfg: NetConfig, cot_phi=0.0, cot_grad=None, cot_lap=0.0) -> np.ndarray:
    """Gradient of <cotangents, (phi, grad_s, lap_z)> with respect to theta."""
    if cot_grad is None:
        cot_grad = np.zeros(cfg.d + 1)
    cot = (jnp.float64(cot_phi), jnp.asarray(cot_grad, dtype=jnp.float64), jnp.float64(cot_lap))
    return np.asarray(_vjp_params(jnp.asarray(theta), jnp.asarray(_as_point(z, t)), cfg, cot))


# -- serialization -------------------------------------------------------------

def params_to_bytes(theta, cfg: NetConfig) -> bytes:
    """Length-prefixed JSON header followed by little-endian float64 data."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (param_count(cfg),):
        raise ValueError(f"theta has shape {theta.shape}, expected ({param_count(cfg)},)")
    header = json.dumps({
        "d": cfg.d,
        "m": cfg.m,
        "n_resblocks": cfg.n_resblocks,
        "resnet_step": cfg.resnet_step,
        "layout_version": LAYOUT_VERSION,
    }, sort_keys=True).encode()
    return struct.pack("<Q", len(header)) + header + theta.astype("<f8").tobytes()


def params_from_bytes(blob: bytes) -> tuple[np.ndarray, NetConfig]:
    if len(blob) < 8:
        raise ValueError("truncated parameter blob")
    (n,) = struct.unpack("<Q", blob[:8])
    header = json.loads(blob[8:8 + n])
    if header.get("layout_version") != LAYOUT_VERSION:
        raise ValueError(f"unsupported layout_version {header.get('layout_version')}")
    cfg = NetConfig(header["d"], header["m"], header["n_resblocks"], header.get("resnet_step", 1.0))
    data = blob[8 + n:]
    if len(data) != 8 * param_count(cfg):
        raise ValueError(f"parameter blob holds {len(data) // 8} values, expected {param_count(cfg)}")
    return np.frombuffer(data, dtype="<f8").astype(np.float64), cfg


def save_params(path, theta, cfg: NetConfig) -> None:
    Path(path).write_bytes(params_to_bytes(theta, cfg))


def load_params(path) -> tuple[np.ndarray, NetConfig]:
    return params_from_bytes(Path(path).read_bytes())
