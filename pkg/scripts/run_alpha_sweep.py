"""Single shot vs JKO on checkerboard across alpha; prints the summary table and floored ratios."""

import argparse
from pathlib import Path

from jkoflow.config import load_config
from jkoflow.experiments import floored_ratio, sweep_alpha

ROOT = Path(__file__).resolve().parents[1]

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config", type=Path, default=ROOT / "configs" / "checkerboard.toml")
p.add_argument("--alphas", type=float, nargs="+", default=[1.0, 5.0, 10.0, 50.0])
p.add_argument("--out", type=Path, default=ROOT / "runs" / "alpha_sweep")
args = p.parse_args()

rows = sweep_alpha(load_config(args.config), args.alphas, args.out)
floor = rows[0]["noise_floor"]
print(f"{'approach':>12} " + " ".join(f"alpha={a:<8g}" for a in args.alphas) + "  floored max/min")
for approach in dict.fromkeys(r["approach"] for r in rows):
    vals = [r["mmd2"] for r in rows if r["approach"] == approach]
    print(f"{approach:>12} " + " ".join(f"{v:<14.3e}" for v in vals) + f"  {floored_ratio(vals, floor):.1f}")
print(f"noise floor {floor:.3e}; table written to {args.out / 'summary.csv'}")
