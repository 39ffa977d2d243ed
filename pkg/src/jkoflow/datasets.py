"""Seeded 2D benchmark densities, a CSV tabular loader, and SampleMatrix I/O.

The toy constructions follow the usual CNF benchmark suite (FFJORD-style),
with curve positions drawn uniformly at random so every generator is an
i.i.d. sampler.  Points outside [-5, 5]^2 are redrawn.
"""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYNTHETIC_KINDS = ("checkerboard", "two_spirals", "swiss_roll", "eight_gaussians", "circles", "pinwheel", "moons",
                   "gaussian")
KINDS = SYNTHETIC_KINDS + ("tabular",)
BOX = 5.0

# Generator constants; echoed into every provenance record.
DEFAULT_PARAMS = {
    "checkerboard": {"scale": 2.0},
    "two_spirals": {"max_angle_deg": 540.0, "jitter": 0.5, "divide": 3.0, "noise": 0.1},
    "swiss_roll": {"t_min": 1.5 * np.pi, "t_max": 4.5 * np.pi, "noise": 1.0, "divide": 5.0},
    "eight_gaussians": {"radius": 4.0, "std": 0.5, "divide": float(np.sqrt(2.0))},
    "circles": {"radius": 3.0, "factor": 0.5, "noise": 0.24},
    "pinwheel": {"radial_std": 0.3, "tangential_std": 0.1, "num_classes": 5, "rate": 0.25, "scale": 2.0},
    "moons": {"noise": 0.1, "scale": 2.0, "shift": (-1.0, -0.2)},
    "gaussian": {"mean": (0.0, 0.0), "std": 1.0},
    "tabular": {},
}
# sanity-check densities, drawn without the box restriction
UNBOXED = frozenset({"gaussian"})


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    path: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "tabular" and not self.path:
            raise ValueError("tabular datasets need a path")

    def resolved_params(self) -> dict:
        out = copy.deepcopy(DEFAULT_PARAMS[self.kind])
        out.update(self.params)
        return out

    def to_json(self) -> dict:
        return {"kind": self.kind, "path": self.path, "params": _jsonable(self.resolved_params())}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (tuple, list)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class SampleMatrix:
    """An (n, d) float64 batch of points plus where it came from."""

    data: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError("SampleMatrix needs at least one row")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("SampleMatrix entries must be finite")

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __len__(self):
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


# -- generators ---------------------------------------------------------------

def _checkerboard(rng, n, p):
    x1 = rng.random(n) * 4 - 2
    x2 = rng.random(n) - rng.integers(0, 2, n) * 2
    x2 = x2 + np.floor(x1) % 2
    return np.stack([x1, x2], axis=1) * p["scale"]


def _two_spirals(rng, n, p):
    half = n // 2 + 1
    t = np.sqrt(rng.random((half, 1))) * p["max_angle_deg"] * (2 * np.pi) / 360
    dx = -np.cos(t) * t + rng.random((half, 1)) * p["jitter"]
    dy = np.sin(t) * t + rng.random((half, 1)) * p["jitter"]
    x = np.vstack([np.hstack([dx, dy]), np.hstack([-dx, -dy])]) / p["divide"]
    x = x + rng.normal(size=x.shape) * p["noise"]
    return rng.permutation(x)[:n]


def _swiss_roll(rng, n, p):
    t = p["t_min"] + (p["t_max"] - p["t_min"]) * rng.random(n)
    x = np.stack([t * np.cos(t), t * np.sin(t)], axis=1)
    return (x + p["noise"] * rng.normal(size=x.shape)) / p["divide"]


def _eight_gaussians(rng, n, p):
    angles = np.arange(8) * np.pi / 4
    centers = p["radius"] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    x = rng.normal(size=(n, 2)) * p["std"] + centers[rng.integers(0, 8, n)]
    return x / p["divide"]


def _circles(rng, n, p):
    angle = rng.random(n) * 2 * np.pi
    radius = np.where(rng.random(n) < 0.5, 1.0, p["factor"]) * p["radius"]
    x = radius[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    return x + rng.normal(size=x.shape) * p["noise"]


def _pinwheel(rng, n, p):
    k = p["num_classes"]
    rads = np.linspace(0, 2 * np.pi, k, endpoint=False)
    feats = rng.normal(size=(n, 2)) * np.array([p["radial_std"], p["tangential_std"]])
    feats[:, 0] += 1.0
    angles = rads[rng.integers(0, k, n)] + p["rate"] * np.exp(feats[:, 0])
    c, s = np.cos(angles), np.sin(angles)
    x = np.stack([feats[:, 0] * c + feats[:, 1] * s, -feats[:, 0] * s + feats[:, 1] * c], axis=1)
    return p["scale"] * x


def _moons(rng, n, p):
    angle = rng.random(n) * np.pi
    upper = rng.random(n) < 0.5
    x = np.where(upper[:, None],
                 np.stack([np.cos(angle), np.sin(angle)], axis=1),
                 np.stack([1 - np.cos(angle), 0.5 - np.sin(angle)], axis=1))
    x = x + rng.normal(size=x.shape) * p["noise"]
    return x * p["scale"] + np.asarray(p["shift"])


def _gaussian(rng, n, p):
    return np.asarray(p["mean"], dtype=np.float64) + p["std"] * rng.standard_normal((n, 2))


_GENERATORS = {
    "checkerboard": _checkerboard,
    "two_spirals": _two_spirals,
    "swiss_roll": _swiss_roll,
    "eight_gaussians": _eight_gaussians,
    "circles": _circles,
    "pinwheel": _pinwheel,
    "moons": _moons,
    "gaussian": _gaussian,
}


def sample(spec: DatasetSpec, n: int, seed) -> SampleMatrix:
    """Draw n i.i.d. points from a synthetic 2D density."""
    if spec.kind not in _GENERATORS:
        raise ValueError(f"sample() supports synthetic kinds only, got {spec.kind!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    p = spec.resolved_params()
    gen = _GENERATORS[spec.kind]
    out = np.empty((0, 2))
    while out.shape[0] < n:
        x = gen(rng, n - out.shape[0], p)
        keep = slice(None) if spec.kind in UNBOXED else np.max(np.abs(x), axis=1) <= BOX
        out = np.vstack([out, x[keep]])
    seed_rec = seed if isinstance(seed, (int, np.integer)) else repr(seed)
    return SampleMatrix(out, {"dataset": spec.to_json(), "seed": seed_rec, "n": n, "split": "all"})


# -- tabular data --------------------------------------------------------------

def _parse_csv(path):
    rows, bad = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append((lineno, [float(c) for c in row]))
            except ValueError:
                bad.append(lineno)
    # a single non-numeric first line is a header
    if bad and bad[0] == 1 and (not rows or rows[0][0] > 1):
        bad = bad[1:]
    if bad:
        raise ValueError(f"{path}: non-numeric values on line(s) {bad[:20]}")
    if not rows:
        raise ValueError(f"{path}: no numeric rows")
    width = len(rows[0][1])
    ragged = [ln for ln, r in rows if len(r) != width]
    if ragged:
        raise ValueError(f"{path}: expected {width} columns, wrong count on line(s) {ragged[:20]}")
    return np.array([r for _, r in rows], dtype=np.float64)


def load_tabular(path, standardize: bool = True, split=(0.8, 0.1, 0.1), seed=0):
    """Shuffle, split and optionally standardize a numeric CSV.

    Returns (train, val, test) SampleMatrix objects (None for an empty split);
    standardization uses the training split's per-column mean and std.
    """
    if len(split) != 3 or any(f < 0 for f in split) or not np.isclose(sum(split), 1.0):
        raise ValueError(f"split fractions must be three nonnegative numbers summing to 1, got {split}")
    X = _parse_csv(path)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite values")
    n = X.shape[0]
    X = X[np.random.default_rng(seed).permutation(n)]
    n_train = int(round(split[0] * n))
    n_val = int(round(split[1] * n))
    parts = [X[:n_train], X[n_train:n_train + n_val], X[n_train + n_val:]]

    stats = None
    if standardize:
        mu, sd = parts[0].mean(axis=0), parts[0].std(axis=0)
        const = np.flatnonzero(~(sd > 0))
        if const.size:
            raise ValueError(f"{path}: zero-variance column(s) {const.tolist()} cannot be standardized")
        parts = [(p - mu) / sd for p in parts]
        stats = {"mean": mu.tolist(), "std": sd.tolist()}

    out = []
    for name, part in zip(("train", "val", "test"), parts):
        prov = {"dataset": {"kind": "tabular", "path": str(path)}, "seed": seed, "split": name,
                "standardize": standardize, "stats": stats}
        out.append(SampleMatrix(part, prov) if part.shape[0] else None)
    return tuple(out)


def load_dataset(spec: DatasetSpec, n: int, seed, split=(0.8, 0.1, 0.1)) -> SampleMatrix:
    """Training samples for either kind of spec."""
    if spec.kind == "tabular":
        return load_tabular(spec.path, standardize=spec.params.get("standardize", True),
                            split=split, seed=seed)[0]
    return sample(spec, n, seed)


# -- CSV I/O ------------------------------------------------------------------

def write_csv(path, X, header=None) -> None:
    """float64 text with 17 significant digits (round-trips exactly)."""
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in X:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def read_csv(path) -> np.ndarray:
    return _parse_csv(path)


def save_samples(path, sm: SampleMatrix) -> Path:
    """Write samples CSV plus a provenance sidecar; returns the sidecar path."""
    path = Path(path)
    write_csv(path, sm.data)
    sidecar = path.with_suffix(".provenance.json")
    sidecar.write_text(json.dumps(_jsonable(sm.provenance), indent=2, sort_keys=True))
    return sidecar


def load_samples(path) -> SampleMatrix:
    path = Path(path)
    sidecar = path.with_suffix(".provenance.json")
    prov = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return SampleMatrix(read_csv(path), prov)
