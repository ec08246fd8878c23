"""Run configuration for the ``uq`` command line: JSON schema, loading and dataset resolution."""
from dataclasses import dataclass
import json
from pathlib import Path

import jsonschema
import numpy as np

from . import data as ds
from .errors import ConfigError
from .laplace import LaplaceConfig
from .predictive import PredictiveConfig
from .train import TrainConfig
from .tune import TuneConfig

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "dataset": _obj({
        "kind": {"enum": ["toy_binary", "toy_multiclass", "csv", "idx"]},
        "n_per_class": _POS_INT,
        "std": {"type": "number", "minimum": 0},
        "dim": _POS_INT,
        "seed": _INT,
        "n_val": _POS_INT,
        "train_csv": {"type": "string"},
        "test_csv": {"type": "string"},
        "train_images": {"type": "string"},
        "train_labels": {"type": "string"},
        "test_images": {"type": "string"},
        "test_labels": {"type": "string"},
        "classes": {"type": "array", "items": _INT, "minItems": 2, "maxItems": 2},
        "limit": _POS_INT,
    }, required=["kind"]),
    "network": _obj({
        "hidden": {"type": "array", "items": _POS_INT},
        "bias": {"type": "boolean"},
    }),
    "train": _obj({
        "epochs": _POS_INT,
        "batch_size": _POS_INT,
        "learning_rate": {"type": "number", "minimum": 0},
        "weight_decay": {"type": "number", "minimum": 0},
        "momentum": {"type": "number", "minimum": 0},
    }),
    "laplace": _obj({
        "sigma0_sq": _POS,
        "rho": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "batch_size": _POS_INT,
        "n_label_samples": _POS_INT,
        "max_last_layer_dim": _POS_INT,
        "max_params": _POS_INT,
    }),
    "predictive": _obj({
        "mode": {"enum": ["probit", "mc"]},
        "n_samples": _POS_INT,
    }),
    "tune": _obj({
        "lambda_tradeoff": {"type": "number", "minimum": 0, "maximum": 1},
        "grid": {"type": "array", "items": _POS, "minItems": 1},
    }),
    "delta_grid": {"type": "array", "items": _POS, "minItems": 1},
    "grid": _obj({"radius": _POS, "resolution": {"type": "integer", "minimum": 2}, "zoom": _POS}),
    "ood": _obj({
        "n": _POS_INT,
        "delta": _POS,
        "baselines": {"type": "array", "items": {"enum": ["map", "temperature"]}},
    }),
    "verify": _obj({"n_rays": _POS_INT, "n_points": _POS_INT, "sigma0_grid": {"type": "array", "items": _POS}}),
    "scan": _obj({"n_points": _POS_INT}),
    "out": {"type": "string"},
    "seed": _INT,
}, required=["dataset"])

DEFAULTS = {
    "network": {"hidden": [50, 50], "bias": True},
    "delta_grid": [float(d) for d in np.logspace(0, 6, 61)],
    "grid": {"radius": 6.0, "resolution": 101, "zoom": 10.0},
    "ood": {"n": 2000, "delta": 100.0, "baselines": ["map", "temperature"]},
    "verify": {"n_rays": 100, "n_points": 20, "sigma0_grid": [float(s) for s in np.logspace(-4, 4, 30)]},
    "scan": {"n_points": 10},
    "out": "out",
    "seed": 0,
}


def parse_json(text, source="<config>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def validate(doc):
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}")
    return doc


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    @classmethod
    def load(cls, path, seed=None, out=None):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_dict(parse_json(text, str(path)), seed=seed, out=out)

    @classmethod
    def from_dict(cls, doc, seed=None, out=None):
        validate(doc)
        merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULTS.items()}
        for k, v in doc.items():
            merged[k] = {**merged[k], **v} if isinstance(v, dict) and isinstance(merged.get(k), dict) else v
        if seed is not None:
            merged["seed"] = int(seed)
        if out is not None:
            merged["out"] = str(out)
        return cls(merged)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def seed(self):
        return int(self.raw["seed"])

    @property
    def out_dir(self):
        return Path(self.raw["out"])

    def train_config(self):
        return TrainConfig(seed=self.seed, **self.raw.get("train", {}))

    def laplace_config(self):
        return LaplaceConfig(seed=self.seed, **self.raw.get("laplace", {}))

    def predictive_config(self):
        return PredictiveConfig(seed=self.seed, **self.raw.get("predictive", {}))

    def tune_config(self):
        return TuneConfig(seed=self.seed, **self.raw.get("tune", {}))

    def delta_grid(self):
        g = np.asarray(self.raw["delta_grid"], dtype=float)
        if np.any(np.diff(g) <= 0):
            raise ConfigError("delta_grid must be increasing")
        return g

    def network_sizes(self, dim, k):
        return [dim, *self.raw["network"]["hidden"], 1 if k == 2 else k]


@dataclass(frozen=True)
class Splits:
    train: ds.LabeledDataset
    val: ds.LabeledDataset
    test: ds.LabeledDataset
    name: str


def _need(d, *keys):
    missing = [k for k in keys if k not in d]
    if missing:
        raise ConfigError(f"dataset kind {d['kind']!r} needs {', '.join(missing)}")


def _limit(data, n):
    return data if n is None or n >= len(data) else data.subset(np.arange(n))


def load_splits(cfg):
    """Train, validation and test sets; validation is split off the test set."""
    d = cfg["dataset"]
    seed = int(d.get("seed", 0))
    kind = d["kind"]
    if kind == "toy_binary":
        n, std = d.get("n_per_class", 250), d.get("std", 0.6)
        train, test = ds.toy_binary(n, std, seed), ds.toy_binary(n, std, seed + 1)
    elif kind == "toy_multiclass":
        n, std, dim = d.get("n_per_class", 250), d.get("std", 0.7), d.get("dim", 2)
        try:
            train, test = ds.toy_multiclass(n, std, seed, dim), ds.toy_multiclass(n, std, seed + 1, dim)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif kind == "csv":
        _need(d, "train_csv", "test_csv")
        train, test = ds.load_csv(d["train_csv"]), ds.load_csv(d["test_csv"])
        k = max(train.k, test.k)
        train, test = ds.LabeledDataset(train.inputs, train.labels, k), ds.LabeledDataset(test.inputs, test.labels, k)
    else:
        _need(d, "train_images", "train_labels", "test_images", "test_labels")
        train = ds.load_idx(d["train_images"], d["train_labels"])
        test = ds.load_idx(d["test_images"], d["test_labels"])
    if "classes" in d:
        a, b = d["classes"]
        train, test = ds.binarize(train, a, b), ds.binarize(test, a, b)
    train, test = _limit(train, d.get("limit")), _limit(test, d.get("limit"))
    n_val = d.get("n_val", min(50, len(test) // 2))
    test, val = ds.train_val_split(test, n_val, seed)
    return Splits(train, val, test, kind)
