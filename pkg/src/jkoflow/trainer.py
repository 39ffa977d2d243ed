"""Adam minimization of the OT-regularized objective for one JKO subproblem."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jax.numpy as jnp
import numpy as np

from jkoflow.flow_integrator import IntegratorConfig
from jkoflow.objective import LossBreakdown, loss_and_grad, ot_loss
from jkoflow.potential_net import NetConfig, NumericalOverflowError, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 5.0
    lr: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    eps_adam: float = 1e-8
    batch_size: int = 512
    n_iters: int = 1500
    nt_train: int = 8
    T: float = 1.0
    seed: int = 0
    lr_decay: float = 0.5
    decay_every: int = 500
    val_every: int = 100

    def __post_init__(self):
        bad = [
            name for name in ("alpha", "lr", "eps_adam", "batch_size", "n_iters", "nt_train",
                              "T", "lr_decay", "decay_every", "val_every")
            if not getattr(self, name) > 0
        ]
        if not all(0 <= b < 1 for b in self.betas):
            bad.append("betas")
        if bad:
            raise ValueError(f"TrainConfig fields must be positive: {', '.join(bad)}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, theta):
        return cls(np.zeros_like(theta), np.zeros_like(theta), 0)


def adam_step(theta, grad, state: AdamState, lr, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update. Returns (theta', state')."""
    b1, b2 = betas
    step = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** step)
    v_hat = v / (1.0 - b2 ** step)
    theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta, AdamState(m, v, step)


class TrainingError(RuntimeError):
    """Non-finite objective during training; carries the step and last finite parameters."""

    def __init__(self, msg, step, theta):
        super().__init__(msg)
        self.step = step
        self.theta = theta


@dataclass
class TrainReport:
    theta: np.ndarray
    net: NetConfig
    config: TrainConfig
    curve: list[LossBreakdown]
    val_curve: list[tuple[int, LossBreakdown]] = field(default_factory=list)
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return {
            "config": asdict(self.config),
            "net": asdict(self.net),
            "wall_time": self.wall_time,
            "final": self.curve[-1]._asdict() if self.curve else None,
            "validation": [{"step": s, **lb._asdict()} for s, lb in self.val_curve],
            "theta": [float(x) for x in self.theta],
        }

    def save(self, json_path, csv_path=None) -> None:
        Path(json_path).write_text(json.dumps(self.to_json(), indent=2))
        if csv_path is not None:
            write_loss_csv(csv_path, self.curve)


def write_loss_csv(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "kinetic", "nll", "total"])
        for i, lb in enumerate(curve):
            w.writerow([i, *(format(v, ".17g") for v in (lb.kinetic, lb.nll, lb.total))])


def train_subproblem(samples, cfg: TrainConfig, net: NetConfig | None = None,
                     val_samples=None, theta0=None) -> TrainReport:
    """Run ``cfg.n_iters`` Adam steps on minibatches drawn with replacement."""
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("samples must be a non-empty (n, d) array")
    net = net or NetConfig(d=X.shape[1], m=8)
    if net.d != X.shape[1]:
        raise ValueError(f"network dimension {net.d} does not match samples ({X.shape[1]})")

    init_seq, batch_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    theta = init_params(net, init_seq) if theta0 is None else np.array(theta0, dtype=np.float64)
    batch_rng = np.random.default_rng(batch_seq)
    state = AdamState.zeros_like(theta)
    integ = IntegratorConfig(T=cfg.T, nt=cfg.nt_train)

    curve, val_curve = [], []
    t_start = time.perf_counter()
    for step in range(cfg.n_iters):
        idx = batch_rng.integers(0, X.shape[0], size=cfg.batch_size)
        (total, (kinetic, nll, bad)), grad = loss_and_grad(
            jnp.asarray(theta), jnp.asarray(X[idx]), float(cfg.alpha), net, float(cfg.T), int(cfg.nt_train)
        )
        total = float(total)
        if int(bad) >= 0 or not np.isfinite(total):
            raise TrainingError(f"non-finite loss at step {step}", step, theta)
        grad = np.asarray(grad)
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient at step {step}", step, theta)
        curve.append(LossBreakdown(float(kinetic), float(nll), total, float(cfg.alpha)))

        lr = cfg.lr * cfg.lr_decay ** (step // cfg.decay_every)
        theta, state = adam_step(theta, grad, state, lr, cfg.betas, cfg.eps_adam)

        if val_samples is not None and ((step + 1) % cfg.val_every == 0 or step + 1 == cfg.n_iters):
            try:
                lb = ot_loss(theta, val_samples, cfg.alpha, integ, net)
            except NumericalOverflowError as exc:
                raise TrainingError(f"non-finite validation loss after step {step}", step, theta) from exc
            val_curve.append((step + 1, lb))
            log.info("step %d  train %.5g  val %.5g (kin %.4g, nll %.4g)",
                     step + 1, total, lb.total, lb.kinetic, lb.nll)

    return TrainReport(theta, net, cfg, curve, val_curve, time.perf_counter() - t_start)
