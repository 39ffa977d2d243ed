"""Single shot vs JKO on checkerboard across hidden widths (alpha = 5)."""

import argparse
from pathlib import Path

from jkoflow.config import load_config
from jkoflow.experiments import sweep_width

ROOT = Path(__file__).resolve().parents[1]

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config", type=Path, default=ROOT / "configs" / "checkerboard.toml")
p.add_argument("--widths", type=int, nargs="+", default=[3, 4, 5, 8, 16])
p.add_argument("--out", type=Path, default=ROOT / "runs" / "width_sweep")
args = p.parse_args()

rows = sweep_width(load_config(args.config), args.widths, args.out)
print(f"{'m':>3} {'params':>6} {'single shot':>13} {'JKO':>13}")
for w in args.widths:
    cell = {r["K"]: r for r in rows if r["width"] == w}
    single, jko = cell[1], cell[max(cell)]
    print(f"{w:>3} {single['n_params']:>6} {single['mmd2']:>13.3e} {jko['mmd2']:>13.3e}")
print(f"noise floor {rows[0]['noise_floor']:.3e}")
