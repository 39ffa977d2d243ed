"""JKO outer loop: a sequence of OT-regularized flow subproblems, each one
started from the previous stage's pushforward of the samples.

Stage k is trained on rho^(k-1), the training set pushed through stages
1..k-1.  Generation runs the stage inverses in reverse order starting from
standard normal draws; density evaluation runs the stages forward and adds up
the log-determinants.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from jkoflow.datasets import SampleMatrix
from jkoflow.flow_integrator import IntegratorConfig, flow_forward_batch, flow_inverse_batch
from jkoflow.metrics import mmd2_slice, mmd2_unbiased
from jkoflow.objective import gaussian_logpdf
from jkoflow.potential_net import NetConfig, load_params, save_params
from jkoflow.trainer import TrainConfig, TrainingError, train_subproblem

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CHECKPOINT_FORMAT = "jkoflow-stage-stack"


@dataclass(frozen=True)
class JkoConfig:
    alpha: float = 5.0
    K: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    integ_eval: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(nt=64))
    warm_start: bool = False
    width: int = 8
    n_resblocks: int = 1
    holdout_frac: float = 0.2
    n_eval: int = 2000
    eval_seed: int = 12345

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.holdout_frac < 1:
            raise ValueError(f"holdout_frac must lie in (0, 1), got {self.holdout_frac}")

    def stage_config(self, k: int) -> TrainConfig:
        """Trainer settings for stage k (1-based); stage 1 keeps the configured seed."""
        seed = self.train.seed if k == 1 else int(np.random.SeedSequence([self.train.seed, k]).generate_state(1)[0])
        return replace(self.train, alpha=self.alpha, seed=seed)

    def to_json(self) -> dict:
        out = asdict(self)
        out["train"]["betas"] = list(self.train.betas)
        return out


@dataclass
class StageStack:
    net: NetConfig
    thetas: list[np.ndarray] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    complete: bool = True

    @property
    def K(self) -> int:
        return len(self.thetas)

    def prefix(self, k: int) -> StageStack:
        """The model made of the first k stages."""
        return StageStack(self.net, self.thetas[:k], self.metrics[:k], self.config, self.complete)

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for k, theta in enumerate(self.thetas, start=1):
            name = f"stage_{k:02d}.bin"
            save_params(directory / name, theta, self.net)
            names.append(name)
        manifest = {
            "format": CHECKPOINT_FORMAT,
            "version": 1,
            "net": asdict(self.net),
            "stages": names,
            "metrics": self.metrics,
            "config": self.config,
            "complete": self.complete,
            "single_shot": self.K == 1,
        }
        (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return directory

    @classmethod
    def load(cls, directory) -> StageStack:
        directory = Path(directory)
        try:
            manifest = json.loads((directory / MANIFEST).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"corrupt checkpoint {directory}: unreadable {MANIFEST} ({exc})") from exc
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"corrupt checkpoint {directory}: not a stage stack")
        net = NetConfig(**manifest["net"])
        thetas = []
        for name in manifest["stages"]:
            try:
                theta, stage_net = load_params(directory / name)
            except (OSError, ValueError) as exc:
                raise ValueError(f"corrupt checkpoint {directory}: stage {name} ({exc})") from exc
            if stage_net != net:
                raise ValueError(f"corrupt checkpoint {directory}: stage {name} has {stage_net}, expected {net}")
            thetas.append(theta)
        if not thetas:
            raise ValueError(f"corrupt checkpoint {directory}: no stages")
        return cls(net, thetas, manifest.get("metrics", []), manifest.get("config", {}),
                   manifest.get("complete", True))


def push_forward_samples(theta, X, integ_cfg: IntegratorConfig, net: NetConfig) -> np.ndarray:
    return flow_forward_batch(theta, np.asarray(X), replace(integ_cfg, direction="forward"), net).z


def _normal_draws(n, d, seed):
    return np.random.default_rng(seed).standard_normal((n, d))


def generate(stack: StageStack, n: int, seed, integ_cfg: IntegratorConfig | None = None,
             stages: list[int] | None = None) -> SampleMatrix:
    """Push standard normal draws back through the stage inverses, last stage first.

    ``stages`` restricts the composition to the given (1-based) stage indices.
    """
    if stack.K == 0:
        raise ValueError("empty stage stack")
    cfg = replace(integ_cfg or IntegratorConfig(nt=64), direction="inverse")
    Y = _normal_draws(n, stack.net.d, seed)
    ks = range(stack.K, 0, -1) if stages is None else sorted(stages, reverse=True)
    for k in ks:
        Y = flow_inverse_batch(stack.thetas[k - 1], Y, cfg, stack.net)
    return SampleMatrix(Y, {"generated_by": "jkoflow.generate", "seed": seed, "n": n,
                            "stages": list(ks), "nt": cfg.nt, "T": cfg.T})


def forward_through(stack: StageStack, X, integ_cfg: IntegratorConfig | None = None):
    """Run X through every stage; returns (z, summed log-determinant)."""
    cfg = replace(integ_cfg or IntegratorConfig(nt=64), direction="forward")
    Z = np.atleast_2d(np.asarray(X, dtype=np.float64))
    ell = np.zeros(Z.shape[0])
    for theta in stack.thetas:
        state = flow_forward_batch(theta, Z, cfg, stack.net)
        Z, ell = state.z, ell + state.ell
    return Z, ell


def log_density(stack: StageStack, x, integ_cfg: IntegratorConfig | None = None):
    """log rho_0(x) = log rho_1(f(x)) + sum_k ell_k(x); scalar for one point, array for a batch."""
    if stack.K == 0:
        raise ValueError("empty stage stack")
    x = np.asarray(x, dtype=np.float64)
    Z, ell = forward_through(stack, x, integ_cfg)
    out = gaussian_logpdf(Z) + ell
    return float(out[0]) if x.ndim == 1 else out


def mmd_trajectory(stack: StageStack, X_data, integ_cfg: IntegratorConfig | None = None,
                   dims=None, n: int | None = None, seed=0):
    """MMD^2 against X_data of samples generated through the last k stages, k = 0..K.

    Entry 0 compares raw normal draws; entry K is the full model.  With
    ``dims`` every entry is a list of per-slice values instead of a float.
    """
    if stack.K == 0:
        raise ValueError("empty stage stack")
    X_data = np.asarray(X_data, dtype=np.float64)
    n = n or X_data.shape[0]
    out = []
    for k in range(stack.K + 1):
        if k == 0:
            Y = _normal_draws(n, stack.net.d, seed)
        else:
            Y = generate(stack, n, seed, integ_cfg, stages=list(range(stack.K - k + 1, stack.K + 1))).data
        if dims is None:
            out.append(mmd2_unbiased(X_data, Y).value)
        else:
            out.append([r.value for r in mmd2_slice(X_data, Y, dims)])
    return out


def _split_holdout(X, frac, seed):
    perm = np.random.default_rng(np.random.SeedSequence([seed, 7919])).permutation(X.shape[0])
    n_ref = max(2, int(round(frac * X.shape[0])))
    return X[perm[n_ref:]], X[perm[:n_ref]]


def run_jko(samples, cfg: JkoConfig, reference=None, callback=None) -> StageStack:
    """Train K stages; returns the stack (tagged incomplete if a stage fails).

    Without ``reference`` a ``cfg.holdout_frac`` slice of the samples is held
    out: it is pushed along with the training set for validation and serves as
    the MMD^2 reference for the per-stage metrics.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("run_jko needs at least two samples")
    if reference is None:
        X, ref = _split_holdout(X, cfg.holdout_frac, cfg.train.seed)
    else:
        ref = np.asarray(reference, dtype=np.float64)
    net = NetConfig(d=X.shape[1], m=cfg.width, n_resblocks=cfg.n_resblocks)
    push_cfg = IntegratorConfig(T=cfg.train.T, nt=cfg.train.nt_train)
    target = _normal_draws(ref.shape[0], net.d, cfg.eval_seed + 1)

    stack = StageStack(net, config=cfg.to_json())
    current, current_ref = X, ref
    for k in range(1, cfg.K + 1):
        theta0 = stack.thetas[-1] if cfg.warm_start and stack.thetas else None
        try:
            report = train_subproblem(current, cfg.stage_config(k), net, val_samples=current_ref, theta0=theta0)
        except TrainingError as exc:
            log.error("stage %d failed: %s", k, exc)
            stack.complete = False
            stack.metrics.append({"stage": k, "error": str(exc), "failed_step": exc.step})
            return stack
        stack.thetas.append(report.theta)
        current = push_forward_samples(report.theta, current, push_cfg, net)
        current_ref = push_forward_samples(report.theta, current_ref, push_cfg, net)

        generated = generate(stack, cfg.n_eval, cfg.eval_seed, cfg.integ_eval).data
        final = report.curve[-1]
        metrics = {
            "stage": k,
            "train_total": final.total,
            "train_kinetic": final.kinetic,
            "train_nll": final.nll,
            "val_total": report.val_curve[-1][1].total if report.val_curve else None,
            "mmd2_generated": mmd2_unbiased(ref, generated).value,
            "mmd2_to_target": mmd2_unbiased(current_ref, target).value,
            "wall_time": report.wall_time,
        }
        stack.metrics.append(metrics)
        log.info("stage %d/%d: mmd2 %.3g (to target %.3g)", k, cfg.K,
                 metrics["mmd2_generated"], metrics["mmd2_to_target"])
        if callback is not None:
            callback(k, report, metrics)
    return stack
