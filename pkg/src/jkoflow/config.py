"""Run configuration: file (TOML/JSON) < JKOFLOW_* environment < command line.

A config file has up to six sections::

    [dataset]     kind, n, seed, path, params, standardize
    [jko]         alpha, K, warm_start, holdout_frac, n_eval, eval_seed
    [net]         width, n_resblocks
    [trainer]     lr, betas, eps_adam, batch_size, n_iters, nt_train, T, seed,
                  lr_decay, decay_every, val_every
    [integrator]  nt
    [eval]        n_test, test_seed, n_perms, perm_seed

Only ``dataset.kind`` is required.  Environment overrides use
``JKOFLOW_<SECTION>_<KEY>``, e.g. ``JKOFLOW_TRAINER_N_ITERS=200``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from jkoflow.datasets import KINDS, DatasetSpec
from jkoflow.flow_integrator import IntegratorConfig
from jkoflow.jko import JkoConfig
from jkoflow.trainer import TrainConfig

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

ENV_PREFIX = "JKOFLOW_"

# section -> key -> (type, default)
SCHEMA = {
    "dataset": {"kind": (str, None), "n": (int, 10000), "seed": (int, 1), "path": (str, None),
                "params": (dict, {}), "standardize": (bool, True)},
    "jko": {"alpha": (float, 5.0), "K": (int, 5), "warm_start": (bool, False), "holdout_frac": (float, 0.2),
            "n_eval": (int, 2000), "eval_seed": (int, 12345)},
    "net": {"width": (int, 8), "n_resblocks": (int, 1)},
    "trainer": {"lr": (float, 0.05), "betas": (list, [0.9, 0.999]), "eps_adam": (float, 1e-8),
                "batch_size": (int, 512), "n_iters": (int, 1500), "nt_train": (int, 8), "T": (float, 1.0),
                "seed": (int, 0), "lr_decay": (float, 0.5), "decay_every": (int, 500), "val_every": (int, 100)},
    "integrator": {"nt": (int, 64)},
    "eval": {"n_test": (int, 2000), "test_seed": (int, 2024), "n_perms": (int, 50), "perm_seed": (int, 0)},
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {e}" for e in self.errors))


@dataclass(frozen=True)
class EvalConfig:
    n_test: int = 2000
    test_seed: int = 2024
    n_perms: int = 50
    perm_seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec
    n: int
    data_seed: int
    jko: JkoConfig
    eval: EvalConfig = field(default_factory=EvalConfig)
    raw: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def content_hash(self) -> str:
        h = hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode())
        if self.dataset.kind == "tabular" and self.dataset.path and Path(self.dataset.path).exists():
            h.update(Path(self.dataset.path).read_bytes())
        return h.hexdigest()


def read_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def env_overrides(environ=None) -> dict:
    """{'section.key': value} from JKOFLOW_* variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        section, _, key = rest.partition("_")
        keys = {k.lower(): k for k in SCHEMA.get(section, {})}
        if key not in keys:
            log.warning("ignoring unrecognized environment variable %s", name)
            continue
        out[f"{section}.{keys[key]}"] = _parse_scalar(value)
    return out


def _check_type(path, value, typ, errors):
    if value is None:
        return
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return
    if typ is int and isinstance(value, bool):
        errors.append(f"{path}: expected int, got {value!r}")
    elif not isinstance(value, typ):
        errors.append(f"{path}: expected {typ.__name__}, got {value!r}")


def merge(file_cfg: dict, overrides: dict | None = None, environ=None) -> dict:
    """Resolve every field: defaults < file < environment < overrides."""
    errors = []
    merged = {s: {k: copy.deepcopy(d) for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for section, values in (file_cfg or {}).items():
        if section not in SCHEMA:
            errors.append(f"{section}: unknown section")
            continue
        if not isinstance(values, dict):
            errors.append(f"{section}: expected a table")
            continue
        for key, value in values.items():
            if key not in SCHEMA[section]:
                errors.append(f"{section}.{key}: unknown field")
            else:
                merged[section][key] = value
    for source in (env_overrides(environ), overrides or {}):
        for dotted, value in source.items():
            section, _, key = dotted.partition(".")
            if key not in SCHEMA.get(section, {}):
                errors.append(f"{dotted}: unknown field")
            elif value is not None:
                merged[section][key] = value
    for section, keys in SCHEMA.items():
        for key, (typ, default) in keys.items():
            if merged[section][key] is None and default is not None:
                errors.append(f"{section}.{key}: must not be null")
            _check_type(f"{section}.{key}", merged[section][key], typ, errors)
    if errors:
        raise ConfigError(errors)
    return merged


def build(merged: dict) -> RunConfig:
    """Turn a resolved dict into config objects, reporting every violated field."""
    errors = []
    ds, tr = merged["dataset"], merged["trainer"]
    if ds["kind"] is None:
        errors.append("dataset.kind: missing")
    elif ds["kind"] not in KINDS:
        errors.append(f"dataset.kind: must be one of {list(KINDS)}, got {ds['kind']!r}")
    elif ds["kind"] == "tabular" and not ds["path"]:
        errors.append("dataset.path: required for tabular data")
    if ds["n"] < 2:
        errors.append("dataset.n: must be >= 2")

    positive = {
        "jko.alpha": merged["jko"]["alpha"], "jko.K": merged["jko"]["K"], "jko.n_eval": merged["jko"]["n_eval"],
        "net.width": merged["net"]["width"], "net.n_resblocks": merged["net"]["n_resblocks"],
        "integrator.nt": merged["integrator"]["nt"], "eval.n_test": merged["eval"]["n_test"],
        "eval.n_perms": merged["eval"]["n_perms"],
    }
    positive.update({f"trainer.{k}": tr[k] for k in ("lr", "eps_adam", "batch_size", "n_iters", "nt_train", "T",
                                                      "lr_decay", "decay_every", "val_every")})
    errors += [f"{name}: must be positive, got {v!r}" for name, v in positive.items() if not v > 0]
    if not 0 < merged["jko"]["holdout_frac"] < 1:
        errors.append("jko.holdout_frac: must lie in (0, 1)")
    betas = tr["betas"]
    if len(betas) != 2 or not all(isinstance(b, (int, float)) and 0 <= b < 1 for b in betas):
        errors.append(f"trainer.betas: expected two numbers in [0, 1), got {betas!r}")
    if errors:
        raise ConfigError(errors)

    train = TrainConfig(alpha=float(merged["jko"]["alpha"]), lr=float(tr["lr"]), betas=tuple(float(b) for b in betas),
                        eps_adam=float(tr["eps_adam"]), batch_size=tr["batch_size"], n_iters=tr["n_iters"],
                        nt_train=tr["nt_train"], T=float(tr["T"]), seed=tr["seed"], lr_decay=float(tr["lr_decay"]),
                        decay_every=tr["decay_every"], val_every=tr["val_every"])
    j = merged["jko"]
    jko = JkoConfig(alpha=float(j["alpha"]), K=j["K"], train=train,
                    integ_eval=IntegratorConfig(T=float(tr["T"]), nt=merged["integrator"]["nt"]),
                    warm_start=j["warm_start"], width=merged["net"]["width"],
                    n_resblocks=merged["net"]["n_resblocks"], holdout_frac=float(j["holdout_frac"]),
                    n_eval=j["n_eval"], eval_seed=j["eval_seed"])
    params = dict(ds["params"])
    if ds["kind"] == "tabular":
        params["standardize"] = ds["standardize"]
    spec = DatasetSpec(ds["kind"], ds["path"], params)
    return RunConfig(spec, ds["n"], ds["seed"], jko, EvalConfig(**merged["eval"]), raw=merged)


def load_config(path=None, overrides=None, environ=None) -> RunConfig:
    file_cfg = read_config_file(path) if path else {}
    return build(merge(file_cfg, overrides, environ))


def with_overrides(cfg: RunConfig, **dotted) -> RunConfig:
    """Copy of cfg with 'section.key' fields replaced (keys use '__' for '.')."""
    raw = copy.deepcopy(cfg.raw)
    for name, value in dotted.items():
        section, key = name.split("__", 1)
        raw[section][key] = value
    return build(merge(raw, environ={}))
