"""Command-line entry point: ``jkoflow <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 sweep finished with failed cells.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
SEQUENTIAL_XLA_FLAGS = "--xla_cpu_multi_thread_eigen=false"

log = logging.getLogger("jkoflow")


def _csv_list(typ):
    def parse(text):
        return [typ(v) for v in text.split(",") if v.strip()]
    return parse


def _pair(text):
    dims = tuple(int(v) for v in text.split(","))
    if len(dims) != 2:
        raise argparse.ArgumentTypeError(f"expected an index pair like 0,1, got {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML or JSON run configuration")
    common.add_argument("--seed", type=int, help="trainer seed (initialization and minibatches)")
    common.add_argument("--alpha", type=float, help="terminal-cost weight / JKO step size")
    common.add_argument("--stages", type=int, help="number of JKO stages K")
    common.add_argument("--width", type=int, help="hidden width m of the potential network")
    common.add_argument("--nt", type=int, help="RK4 steps for generation and evaluation")
    common.add_argument("--sequential", action="store_true", help="single-threaded, bit-reproducible execution")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="jkoflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="run the JKO outer loop and write a checkpoint")

    g = sub.add_parser("generate", parents=[common], help="sample from a trained stack")
    g.add_argument("--checkpoint", type=Path, required=True)
    g.add_argument("--n", type=int, default=2000)

    d = sub.add_parser("density-grid", parents=[common], help="log density on a 2D grid")
    d.add_argument("--checkpoint", type=Path, required=True)
    d.add_argument("--bounds", type=float, nargs="+", default=[-5.0, 5.0],
                   help="lo hi (square) or lo1 hi1 lo2 hi2")
    d.add_argument("--resolution", type=int, default=200)
    d.add_argument("--ppm", action="store_true", help="also write a grayscale PPM image")

    e = sub.add_parser("evaluate", parents=[common], help="MMD^2 of generated samples against data")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--data", type=Path, help="CSV of reference samples (default: the run's dataset)")
    e.add_argument("--dims", type=_pair, action="append", help="2D slice, e.g. --dims 16,17 (repeatable)")
    e.add_argument("--n-perms", type=int)

    a = sub.add_parser("sweep-alpha", parents=[common], help="single-shot vs JKO across alpha values")
    a.add_argument("--alphas", type=_csv_list(float), default=[1.0, 5.0, 10.0, 50.0])

    w = sub.add_parser("sweep-width", parents=[common], help="single-shot vs JKO across network widths")
    w.add_argument("--widths", type=_csv_list(int), default=[3, 4, 5, 8, 16])
    return p


def _overrides(args) -> dict:
    pairs = {"trainer.seed": args.seed, "jko.alpha": args.alpha, "jko.K": args.stages,
             "net.width": args.width, "integrator.nt": args.nt}
    return {k: v for k, v in pairs.items() if v is not None}


def _run_config(args, checkpoint=None):
    from jkoflow.config import build, load_config, merge

    if args.config is not None or checkpoint is None:
        return load_config(args.config, _overrides(args))
    manifest = json.loads((Path(checkpoint) / "manifest.json").read_text())
    raw = (manifest.get("run") or {}).get("config")
    if raw is None:
        return None
    return build(merge(raw, _overrides(args)))


def cmd_train(args) -> int:
    from jkoflow.experiments import train_run

    cfg = _run_config(args)
    stack = train_run(cfg, args.out)
    for m in stack.metrics:
        print(json.dumps({k: m.get(k) for k in ("stage", "train_total", "mmd2_generated", "error") if k in m}))
    return EXIT_OK if stack.complete else EXIT_NUMERIC


def cmd_generate(args) -> int:
    from jkoflow.datasets import save_samples
    from jkoflow.experiments import write_manifest
    from jkoflow.flow_integrator import IntegratorConfig
    from jkoflow.jko import StageStack, generate

    t0 = time.perf_counter()
    stack = StageStack.load(args.checkpoint)
    seed = 0 if args.seed is None else args.seed
    sm = generate(stack, args.n, seed, IntegratorConfig(nt=args.nt or 64))
    sm.provenance["checkpoint"] = str(args.checkpoint)
    args.out.mkdir(parents=True, exist_ok=True)
    sidecar = save_samples(args.out / "samples.csv", sm)
    write_manifest(args.out, "generate", None, ["samples.csv", sidecar.name], time.perf_counter() - t0,
                   {"checkpoint": str(args.checkpoint), "n": args.n, "seed": seed, "nt": args.nt or 64})
    return EXIT_OK


def cmd_density_grid(args) -> int:
    from jkoflow.datasets import write_csv
    from jkoflow.experiments import density_grid, trapezoid_mass, write_manifest, write_ppm
    from jkoflow.jko import StageStack

    t0 = time.perf_counter()
    stack = StageStack.load(args.checkpoint)
    if len(args.bounds) == 2:
        bounds = (*args.bounds, *args.bounds)
    elif len(args.bounds) == 4:
        bounds = tuple(args.bounds)
    else:
        raise ValueError("--bounds takes 2 or 4 numbers")
    if stack.net.d != 2:
        raise ValueError(f"density grids are 2D only; checkpoint has d={stack.net.d}")
    g1, g2, logp = density_grid(stack, bounds, args.resolution, nt=args.nt or 64)
    args.out.mkdir(parents=True, exist_ok=True)
    X1, X2 = np.meshgrid(g1, g2, indexing="ij")
    write_csv(args.out / "grid.csv", np.stack([X1.ravel(), X2.ravel(), logp.ravel()], axis=1),
              header=["x1", "x2", "logp"])
    outputs = ["grid.csv"]
    if args.ppm:
        write_ppm(args.out / "density.ppm", logp)
        outputs.append("density.ppm")
    mass = trapezoid_mass(g1, g2, logp)
    print(json.dumps({"mass": mass, "max_logp": float(logp.max())}))
    write_manifest(args.out, "density-grid", None, outputs, time.perf_counter() - t0,
                   {"checkpoint": str(args.checkpoint), "bounds": list(bounds), "resolution": args.resolution,
                    "mass": mass, "nt": args.nt or 64})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from jkoflow.datasets import read_csv
    from jkoflow.experiments import evaluate_stack, test_data, trajectory_rows, write_manifest, write_rows
    from jkoflow.jko import StageStack

    t0 = time.perf_counter()
    stack = StageStack.load(args.checkpoint)
    cfg = _run_config(args, args.checkpoint)
    if args.data is not None:
        X_test = read_csv(args.data)
    elif cfg is not None:
        X_test = test_data(cfg)
    else:
        raise ValueError("no reference data: pass --data or --config")
    n_perms = args.n_perms or (cfg.eval.n_perms if cfg else 50)
    gen_seed = cfg.jko.eval_seed if cfg else (args.seed or 0)
    result = evaluate_stack(stack, X_test, n_perms=n_perms, perm_seed=cfg.eval.perm_seed if cfg else 0,
                            gen_seed=gen_seed, dims=args.dims, nt=args.nt or 64)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "metrics.json").write_text(json.dumps(result, indent=2, sort_keys=True))
    write_rows(args.out / "trajectory.csv", *trajectory_rows(result, args.dims))
    print(json.dumps({"mmd2": result["full"]["value"], "noise_floor": result["noise_floor"]}))
    write_manifest(args.out, "evaluate", cfg, ["metrics.json", "trajectory.csv"], time.perf_counter() - t0,
                   {"checkpoint": str(args.checkpoint)})
    return EXIT_OK


def _sweep(args, values, fn) -> int:
    cfg = _run_config(args)
    rows = fn(cfg, values, args.out)
    for r in rows:
        print(f"{r['approach']:>12}  alpha={r['alpha']:<6g} m={r['width']:<3d} mmd2={r['mmd2']}  {r['status']}")
    return EXIT_PARTIAL if any(r["status"] != "ok" for r in rows) else EXIT_OK


def cmd_sweep_alpha(args) -> int:
    from jkoflow.experiments import sweep_alpha

    return _sweep(args, args.alphas, sweep_alpha)


def cmd_sweep_width(args) -> int:
    from jkoflow.experiments import sweep_width

    return _sweep(args, args.widths, sweep_width)


COMMANDS = {
    "train": cmd_train,
    "generate": cmd_generate,
    "density-grid": cmd_density_grid,
    "evaluate": cmd_evaluate,
    "sweep-alpha": cmd_sweep_alpha,
    "sweep-width": cmd_sweep_width,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.sequential:
        # read when the XLA backend starts, which happens on first computation
        os.environ["XLA_FLAGS"] = (os.environ.get("XLA_FLAGS", "") + " " + SEQUENTIAL_XLA_FLAGS).strip()

    from jkoflow.config import ConfigError
    from jkoflow.potential_net import NumericalOverflowError
    from jkoflow.trainer import TrainingError

    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"jkoflow: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalOverflowError, TrainingError, FloatingPointError) as exc:
        print(f"jkoflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"jkoflow: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
