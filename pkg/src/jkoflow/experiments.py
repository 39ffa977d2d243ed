"""Training runs, evaluation and the alpha / width sweeps, writing artifacts to disk."""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from jkoflow import datasets
from jkoflow.config import RunConfig, with_overrides
from jkoflow.flow_integrator import IntegratorConfig
from jkoflow.jko import StageStack, generate, log_density, mmd_trajectory, run_jko
from jkoflow.metrics import mmd2_noise_floor, mmd2_slice, mmd2_unbiased
from jkoflow.potential_net import NetConfig, param_count
from jkoflow.trainer import write_loss_csv

log = logging.getLogger(__name__)

STAGE_COLUMNS = ["stage", "train_total", "train_kinetic", "train_nll", "val_total", "mmd2_generated", "mmd2_to_target"]
SWEEP_COLUMNS = ["dataset", "approach", "K", "alpha", "width", "n_params", "mmd2", "noise_floor", "status"]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(out_dir, command, cfg: RunConfig | None, outputs, wall_time, extra=None) -> Path:
    """Run manifest; merged into an existing checkpoint manifest if one is present."""
    out_dir = Path(out_dir)
    path = out_dir / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest["run"] = {
        "command": command,
        "config": cfg.to_dict() if cfg else None,
        "input_hash": cfg.content_hash() if cfg else None,
        "seeds": ({"data": cfg.data_seed, "trainer": cfg.jko.train.seed, "eval": cfg.jko.eval_seed,
                   "test": cfg.eval.test_seed, "perm": cfg.eval.perm_seed} if cfg else None),
        "wall_time": wall_time,
        "outputs": sorted(str(o) for o in outputs),
        "python": platform.python_version(),
        **(extra or {}),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


# -- data ---------------------------------------------------------------------

def training_data(cfg: RunConfig) -> np.ndarray:
    return datasets.load_dataset(cfg.dataset, cfg.n, cfg.data_seed).data


def test_data(cfg: RunConfig) -> np.ndarray:
    """Held-out data for evaluation: fresh draws, or the tabular test split."""
    if cfg.dataset.kind == "tabular":
        return datasets.load_tabular(cfg.dataset.path, cfg.dataset.params.get("standardize", True),
                                     seed=cfg.data_seed)[2].data
    return datasets.sample(cfg.dataset, cfg.eval.n_test, cfg.eval.test_seed).data


def data_noise_floor(cfg: RunConfig, n: int) -> float:
    """95th percentile of MMD^2 between two same-distribution halves of size n."""
    if cfg.dataset.kind == "tabular":
        pool = test_data(cfg)
    else:
        pool = datasets.sample(cfg.dataset, 2 * n, cfg.eval.test_seed + 1).data
    return mmd2_noise_floor(pool, cfg.eval.n_perms, cfg.eval.perm_seed)


# -- single run ---------------------------------------------------------------

def train_run(cfg: RunConfig, out_dir=None) -> StageStack:
    """run_jko on the configured dataset; optionally write the checkpoint and CSVs."""
    t0 = time.perf_counter()
    X = training_data(cfg)
    outputs = []
    losses = {}

    def keep_curve(k, report, metrics):
        losses[k] = report

    stack = run_jko(X, cfg.jko, callback=keep_curve)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stack.save(out)
        outputs += [f"stage_{k:02d}.bin" for k in range(1, stack.K + 1)]
        for k, report in losses.items():
            write_loss_csv(out / f"loss_stage_{k:02d}.csv", report.curve)
            (out / f"report_stage_{k:02d}.json").write_text(json.dumps(report.to_json(), indent=2))
            outputs += [f"loss_stage_{k:02d}.csv", f"report_stage_{k:02d}.json"]
        write_rows(out / "stage_metrics.csv", STAGE_COLUMNS, stack.metrics)
        outputs.append("stage_metrics.csv")
        write_manifest(out, "train", cfg, outputs, time.perf_counter() - t0,
                       {"label": "single-shot" if cfg.jko.K == 1 else f"jko-{cfg.jko.K}", "complete": stack.complete})
    return stack


def evaluate_stack(stack: StageStack, X_test, n_perms=50, perm_seed=0, gen_seed=12345, dims=None,
                   nt=64, trajectory=True) -> dict:
    """MMD^2 of generated samples vs held-out data, plus a permutation threshold."""
    X_test = np.asarray(X_test, dtype=np.float64)
    integ = IntegratorConfig(nt=nt)
    gen = generate(stack, X_test.shape[0], gen_seed, integ).data
    out = {
        "full": mmd2_unbiased(X_test, gen).to_json(),
        "noise_floor": mmd2_noise_floor(np.vstack([X_test, gen]), n_perms, perm_seed),
        "nt": nt,
        "stages": stack.K,
    }
    if dims:
        out["slices"] = [r.to_json() for r in mmd2_slice(X_test, gen, dims)]
    if trajectory:
        out["trajectory"] = mmd_trajectory(stack, X_test, integ, seed=gen_seed)
        if dims:
            out["slice_trajectory"] = mmd_trajectory(stack, X_test, integ, dims=dims, seed=gen_seed)
    return out


def trajectory_rows(result: dict, dims=None) -> tuple[list[str], list[dict]]:
    """Columns and rows for trajectory.csv: full MMD^2 and one column per slice."""
    dims = dims or []
    slice_cols = [f"mmd2_{a}_{b}" for a, b in dims]
    rows = []
    for k, v in enumerate(result["trajectory"]):
        row = {"stages_used": k, "mmd2": v}
        if dims:
            row.update(zip(slice_cols, result["slice_trajectory"][k]))
        rows.append(row)
    return ["stages_used", "mmd2", *slice_cols], rows


# -- sweeps -------------------------------------------------------------------

def _cell(cfg: RunConfig, approach, out_dir, X_test, floor):
    row = {"dataset": cfg.dataset.kind, "approach": approach, "K": cfg.jko.K, "alpha": cfg.jko.alpha,
           "width": cfg.jko.width, "n_params": param_count(NetConfig(2 if cfg.dataset.kind != "tabular"
                                                                         else X_test.shape[1], cfg.jko.width)),
           "noise_floor": floor}
    try:
        stack = train_run(cfg, out_dir)
        if not stack.complete:
            raise RuntimeError(stack.metrics[-1].get("error", "incomplete stack"))
        gen = generate(stack, X_test.shape[0], cfg.jko.eval_seed, cfg.jko.integ_eval).data
        row.update(mmd2=mmd2_unbiased(X_test, gen).value, status="ok")
    except Exception as exc:  # a failed cell must not stop the sweep
        log.error("sweep cell %s failed: %s", row, exc)
        row.update(mmd2=None, status=f"failed: {exc}")
    return row


def sweep(cfg: RunConfig, values, field, out_dir=None, stages=None) -> list[dict]:
    """Train single-shot (K=1) and JKO (K=stages) for each value of ``field``."""
    stages = stages or cfg.jko.K
    X_test = test_data(cfg)
    floor = data_noise_floor(cfg, X_test.shape[0])
    rows = []
    for v in values:
        for approach, K in (("single_shot", 1), (f"jko_{stages}", stages)):
            cell = with_overrides(cfg, jko__K=K, **{field: v})
            cell_dir = None if out_dir is None else Path(out_dir) / f"{field.split('__')[1]}_{v}_{approach}"
            rows.append(_cell(cell, approach, cell_dir, X_test, floor))
    return rows


def sweep_alpha(cfg: RunConfig, alphas, out_dir=None) -> list[dict]:
    return _sweep_and_write(cfg, [float(a) for a in alphas], "jko__alpha", out_dir)


def sweep_width(cfg: RunConfig, widths, out_dir=None) -> list[dict]:
    return _sweep_and_write(cfg, [int(w) for w in widths], "net__width", out_dir)


def _sweep_and_write(cfg, values, field, out_dir):
    t0 = time.perf_counter()
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    rows = sweep(cfg, values, field, out_dir)
    if out_dir is not None:
        write_rows(Path(out_dir) / "summary.csv", SWEEP_COLUMNS, rows)
        write_manifest(out_dir, f"sweep-{field.split('__')[1]}", cfg, ["summary.csv"], time.perf_counter() - t0,
                       {"values": values})
    return rows


def floored_ratio(values, floor) -> float:
    """max/min of MMD^2 values after raising each to the estimator's noise floor.

    Values below the floor are statistically indistinguishable from zero, so
    an unfloored ratio would be dominated by noise (or be negative).
    """
    v = np.maximum(np.asarray(values, dtype=np.float64), floor)
    return float(v.max() / v.min())


# -- density grids ------------------------------------------------------------

def density_grid(stack: StageStack, bounds, resolution, nt=64):
    """log density on a resolution x resolution grid over [lo1, hi1] x [lo2, hi2]."""
    if stack.net.d != 2:
        raise ValueError(f"density grids need a 2D model, got d={stack.net.d}")
    lo1, hi1, lo2, hi2 = bounds
    g1, g2 = np.linspace(lo1, hi1, resolution), np.linspace(lo2, hi2, resolution)
    X1, X2 = np.meshgrid(g1, g2, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
    logp = log_density(stack, pts, IntegratorConfig(nt=nt))
    return g1, g2, logp.reshape(resolution, resolution)


def trapezoid_mass(g1, g2, logp) -> float:
    return float(trapezoid(trapezoid(np.exp(logp), g2, axis=1), g1))


def write_ppm(path, logp) -> None:
    """Grayscale binary PPM of exp(logp) scaled to [0, 255]; x1 left-to-right, x2 bottom-to-top."""
    dens = np.exp(logp - logp.max())
    img = np.round(255 * dens).astype(np.uint8).T[::-1]
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())

