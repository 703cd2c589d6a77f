"""Experiment configuration (JSON, ``schema_version`` 1).

Top-level keys (all optional except ``schema_version``)::

    schema_version  1
    data            {"source": "synthetic" | "cohort" | "dataset",
                     "path": str, "label_column": "label",
                     "benchmark": "default" | "no_shift" | "gaussian_1d",
                     "synthetic": <SyntheticShiftSpec dict, overrides benchmark>,
                     "n_train": int, "n_test": int}
    shift           {"kind": "synthetic" | "spectral" | "provided" | "random",
                     "feature_pair": [a, b], "bandwidth": float | null,
                     "split_path": str, "test_fraction": float}
    corrections     subset of none, kmm, rulsif, classifier_lr, classifier_rf
    families        subset of logistic, random_forest, mlp
    grids           {family: {param: [values]} | [{param: value}, ...]}
    learner_params  {family: {param: value}}  fixed, non-searched parameters
    ratio           {"kmm": {...}, "rulsif": {...}, "classifier_lr": {...},
                     "classifier_rf": {...}}  estimator settings
    cv_folds        int (5)
    seed            int master seed
    interval        {"mode": "bootstrap" | "seeds", "n_boot": 1000,
                     "level": 0.95, "n_seeds": 10}
    prior_shift     {"rates": [0.459, 0.556], "test_fraction": 0.15}
    synthetic       {"mc_samples": 10000, "repeats": 1}
    explain         {"max_rows": 200, "background": 100, "features": [...]}
    threads         int
    output_dir      str
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..exceptions import ConfigError
from ..learners import FAMILIES, LearnerSpec
from ..ratio import METHODS, ClassifierRatioConfig, KMMConfig, RuLSIFConfig
from ..shift import SyntheticShiftSpec, default_benchmark, gaussian_1d_shift, no_shift_benchmark

SCHEMA_VERSION = 1
CORRECTIONS = ("none",) + METHODS

DEFAULT_GRIDS = {
    "logistic": {"l1": [0.0, 1e-3, 1e-2, 1e-1], "l2": [0.0, 1e-3, 1e-2, 1e-1]},
    "random_forest": {"n_trees": [100, 300], "max_depth": [4, 8, None]},
    "mlp": {"learning_rate": [0.01, 0.001]},
}

BENCHMARKS = {
    "default": default_benchmark,
    "no_shift": no_shift_benchmark,
    "gaussian_1d": gaussian_1d_shift,
}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "data": {"source": "synthetic", "benchmark": "default", "n_train": 1000, "n_test": 1000, "label_column": "label"},
    "shift": {"kind": "synthetic", "feature_pair": ["sbp", "dbp"], "bandwidth": None, "test_fraction": 0.3},
    "corrections": list(CORRECTIONS),
    "families": list(FAMILIES),
    "grids": DEFAULT_GRIDS,
    "learner_params": {},
    "ratio": {},
    "cv_folds": 5,
    "seed": 0,
    "interval": {"mode": "bootstrap", "n_boot": 1000, "level": 0.95, "n_seeds": 10},
    "prior_shift": {"rates": [0.459, 0.556], "test_fraction": 0.15},
    "synthetic": {"mc_samples": 10000, "repeats": 1},
    "explain": {"max_rows": 200, "background": 100, "features": None},
    "threads": 1,
    "output_dir": "covshift-out",
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("grids",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, d, base_dir=None) -> ExperimentConfig:
        if "schema_version" not in d:
            raise ConfigError("config is missing schema_version")
        if d["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d['schema_version']!r} (expected {SCHEMA_VERSION})")
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        cfg = cls(_merge(DEFAULTS, d), Path(base_dir) if base_dir else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(d, path.parent)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.raw, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def override(self, **kw) -> ExperimentConfig:
        return ExperimentConfig.from_dict(_merge(self.raw, kw), self.base_dir)

    # -- accessors -------------------------------------------------------

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def families(self):
        return list(self.raw["families"])

    @property
    def corrections(self):
        return list(self.raw["corrections"])

    def resolve_path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def grid(self, family):
        g = self.raw["grids"].get(family, DEFAULT_GRIDS[family])
        return g

    def learner_params(self, family) -> dict:
        return dict(self.raw["learner_params"].get(family, {}))

    def synthetic_spec(self) -> SyntheticShiftSpec:
        data = self.raw["data"]
        if "synthetic" in data and data["synthetic"] is not None:
            return SyntheticShiftSpec.from_dict(data["synthetic"])
        return BENCHMARKS[data.get("benchmark", "default")](self.seed)

    def ratio_config(self, method):
        opts = dict(self.raw["ratio"].get(method, {}))
        if method == "kmm":
            return KMMConfig(**opts)
        if method == "rulsif":
            for k in ("lambdas", "sigma_scales", "sigmas"):
                if opts.get(k) is not None:
                    opts[k] = tuple(opts[k])
            return RuLSIFConfig(**opts)
        kind = "logistic_elastic_net" if method == "classifier_lr" else "random_forest"
        return ClassifierRatioConfig(kind=kind, **opts)

    def validate(self):
        r = self.raw
        if not r["families"] or not r["corrections"]:
            raise ConfigError("families and corrections must be nonempty")
        bad = set(r["families"]) - set(FAMILIES)
        if bad:
            raise ConfigError(f"unknown learner families: {sorted(bad)}")
        bad = set(r["corrections"]) - set(CORRECTIONS)
        if bad:
            raise ConfigError(f"unknown corrections: {sorted(bad)}")
        src = r["data"].get("source")
        if src not in ("synthetic", "cohort", "dataset"):
            raise ConfigError(f"unknown data source {src!r}")
        if src != "synthetic":
            if not r["data"].get("path"):
                raise ConfigError("data.path is required for non-synthetic sources")
            if not self.resolve_path(r["data"]["path"]).exists():
                raise ConfigError(f"data file not found: {r['data']['path']}")
        elif r["data"].get("benchmark", "default") not in BENCHMARKS and not r["data"].get("synthetic"):
            raise ConfigError(f"unknown benchmark {r['data'].get('benchmark')!r}")
        kind = r["shift"].get("kind")
        if kind not in ("synthetic", "spectral", "provided", "random"):
            raise ConfigError(f"unknown shift kind {kind!r}")
        if kind == "synthetic" and src != "synthetic":
            raise ConfigError("shift.kind 'synthetic' requires data.source 'synthetic'")
        if kind == "provided":
            sp = r["shift"].get("split_path")
            if not sp or not self.resolve_path(sp).exists():
                raise ConfigError("shift.split_path must name an existing split CSV")
        if r["interval"]["mode"] not in ("bootstrap", "seeds"):
            raise ConfigError("interval.mode must be 'bootstrap' or 'seeds'")
        if int(r["cv_folds"]) < 2:
            raise ConfigError("cv_folds must be >= 2")
        for fam in r["families"]:
            LearnerSpec(fam, self.learner_params(fam))
        for m in r["corrections"]:
            if m != "none":
                try:
                    self.ratio_config(m)
                except TypeError as e:
                    raise ConfigError(f"ratio.{m}: {e}") from None
        if src == "synthetic" and r["data"].get("synthetic"):
            try:
                self.synthetic_spec()
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"data.synthetic: {e}") from None


def default_config() -> ExperimentConfig:
    return ExperimentConfig.from_dict({"schema_version": SCHEMA_VERSION})
