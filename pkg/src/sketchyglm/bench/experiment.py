"""Experiment configuration and the CSV-emitting benchmark runner.

A single JSON document describes the data source, preprocessing, the
regularization rule, and a list of optimizer runs. Unknown keys anywhere in
the document are rejected so configs stay reproducible. Each run writes one
CSV of per-epoch records; a summary CSV reports epochs/passes until the
suboptimality drops within 1e-4 of the reference minimum.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..glm import LOGISTIC, SQUARED, Dataset, GlmModel
from ..optim import METHODS, OptimizerConfig, RunRecord, run
from . import data as data_mod
from .reference import reference_minimum

SOLVE_TOL = 1e-4
SUMMARY_HEADER = (
    "run,method,preconditioner,solved,epochs_to_tol,passes_to_tol,final_subopt"
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _require_keys(d, allowed, context):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in {context}; "
            f"allowed: {sorted(allowed)}"
        )


@dataclass
class RunSpec:
    method: str
    preconditioner: str = "nyssn"
    overrides: dict = field(default_factory=dict)

    _OVERRIDE_KEYS = (
        "b_g", "b_H", "rank", "rho", "update_freq", "alpha", "m", "theta2",
        "pi", "mu", "eta", "max_epochs", "seed", "svrg_option",
    )

    @classmethod
    def from_dict(cls, d, idx):
        _require_keys(
            d, ("method", "preconditioner") + cls._OVERRIDE_KEYS, f"runs[{idx}]"
        )
        if "method" not in d:
            raise ConfigError(f"runs[{idx}] is missing 'method'")
        method = d["method"]
        if method not in METHODS:
            raise ConfigError(
                f"runs[{idx}]: unknown method {method!r}; valid: {METHODS}"
            )
        overrides = {k: d[k] for k in cls._OVERRIDE_KEYS if k in d}
        return cls(
            method=method,
            preconditioner=d.get("preconditioner", "nyssn"),
            overrides=overrides,
        )

    def label(self):
        return f"{self.method}_{self.preconditioner}"


@dataclass
class ExperimentConfig:
    task: str
    data: dict
    runs: list
    preprocessing: str = "none"
    random_features: dict = None
    split: dict = None
    nu: dict = None
    b_g: int = 256
    max_epochs: int = 50
    seed: int = 0
    output_dir: str = "results"

    _TOP_KEYS = (
        "task", "data", "runs", "preprocessing", "random_features", "split",
        "nu", "b_g", "max_epochs", "seed", "output_dir",
    )

    @classmethod
    def from_dict(cls, d):
        _require_keys(d, cls._TOP_KEYS, "experiment config")
        for key in ("task", "data", "runs"):
            if key not in d:
                raise ConfigError(f"experiment config is missing {key!r}")
        if d["task"] not in ("ridge", "logistic"):
            raise ConfigError(f"task must be 'ridge' or 'logistic', got {d['task']!r}")
        data = d["data"]
        _require_keys(data, ("path", "n_features", "synthetic"), "data")
        if ("path" in data) == ("synthetic" in data):
            raise ConfigError("data needs exactly one of 'path' or 'synthetic'")
        if "synthetic" in data:
            _require_keys(
                data["synthetic"],
                ("n", "p", "decay", "noise", "seed"),
                "data.synthetic",
            )
        if d.get("preprocessing", "none") not in data_mod.PREPROCESS_MODES:
            raise ConfigError(
                f"preprocessing must be one of {data_mod.PREPROCESS_MODES}"
            )
        rf = d.get("random_features")
        if rf is not None:
            _require_keys(rf, ("kind", "dim", "bandwidth"), "random_features")
            if rf.get("kind") not in ("gaussian", "relu"):
                raise ConfigError("random_features.kind must be gaussian or relu")
            if rf.get("dim", 0) < 1:
                raise ConfigError("random_features.dim must be >= 1")
        split = d.get("split")
        if split is not None:
            _require_keys(split, ("holdout", "seed"), "split")
            holdout = split.get("holdout", 0.0)
            if not 0.0 <= holdout < 1.0:
                raise ConfigError("split.holdout must lie in [0, 1)")
        nu = d.get("nu")
        if nu is not None:
            _require_keys(nu, ("absolute", "scaled"), "nu")
            if ("absolute" in nu) == ("scaled" in nu):
                raise ConfigError("nu needs exactly one of 'absolute' or 'scaled'")
        runs = [RunSpec.from_dict(r, i) for i, r in enumerate(d["runs"])]
        return cls(
            task=d["task"],
            data=data,
            runs=runs,
            preprocessing=d.get("preprocessing", "none"),
            random_features=rf,
            split=split,
            nu=nu,
            b_g=d.get("b_g", 256),
            max_epochs=d.get("max_epochs", 50),
            seed=d.get("seed", 0),
            output_dir=d.get("output_dir", "results"),
        )

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _load_dataset(config):
    data = config.data
    if "path" in data:
        ds = data_mod.parse_svmlight(data["path"], n_features=data.get("n_features"))
    else:
        spec = dict(data["synthetic"])
        ds = data_mod.synthetic_instance(
            n=spec["n"],
            p=spec["p"],
            task=config.task,
            decay=spec.get("decay", 1.0),
            noise=spec.get("noise", 1e-3),
            seed=spec.get("seed", config.seed),
        )
    return ds


def _split_train(ds, split, default_seed):
    if not split or split.get("holdout", 0.0) == 0.0:
        return ds
    holdout = split["holdout"]
    rng = np.random.default_rng(split.get("seed", default_seed))
    perm = rng.permutation(ds.n)
    n_train = ds.n - int(round(holdout * ds.n))
    idx = np.sort(perm[:n_train])
    return Dataset(A=ds.A[idx], labels=ds.labels[idx])


def prepare_model(config):
    """Load, preprocess, featurize, split, and wrap the data in a GlmModel."""
    ds = _load_dataset(config)
    ds = data_mod.preprocess(ds, config.preprocessing)
    if config.random_features is not None:
        rf = config.random_features
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7]))
        ds = data_mod.random_features(
            ds, rf["kind"], rf["dim"], rng, bandwidth=rf.get("bandwidth", 1.0)
        )
    ds = _split_train(ds, config.split, config.seed)
    if config.task == "logistic":
        labels = ds.labels
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            labels = data_mod.binarize_labels(labels)
            ds = Dataset(A=ds.A, labels=labels)
        loss = LOGISTIC
    else:
        loss = SQUARED
    if config.nu is None:
        nu = 1e-2 / ds.n
    elif "absolute" in config.nu:
        nu = float(config.nu["absolute"])
    else:
        nu = float(config.nu["scaled"]) / ds.n
    return GlmModel(ds, loss, nu)


def write_records_csv(records, path):
    with open(path, "w") as fh:
        fh.write(RunRecord.HEADER + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")
    return path


def _epochs_to_tolerance(records, tol=SOLVE_TOL):
    for rec in records:
        if math.isfinite(rec.subopt) and rec.subopt <= tol:
            return rec.epoch, rec.passes
    return None, None


def run_experiment(config, seed=None):
    """Execute every configured run and write per-run plus summary CSVs.

    Returns a dict mapping run labels to (csv_path, RunResult); the summary
    path is stored under the ``"summary"`` key. Deterministic for a fixed
    (config, seed) up to wall-clock timings.
    """
    if seed is not None:
        config = ExperimentConfig(
            **{**config.__dict__, "seed": seed}
        )
    model = prepare_model(config)
    reference = reference_minimum(model)
    os.makedirs(config.output_dir, exist_ok=True)
    results = {}
    summary_rows = []
    counts = {}
    for spec in config.runs:
        opt_config = OptimizerConfig(
            method=spec.method,
            b_g=config.b_g,
            precond=spec.preconditioner,
            max_epochs=config.max_epochs,
            seed=config.seed,
        ).with_overrides(**spec.overrides)
        result = run(model, opt_config, f_star=reference.f_star)
        label = spec.label()
        counts[label] = counts.get(label, 0) + 1
        if counts[label] > 1:
            label = f"{label}_{counts[label]}"
        path = os.path.join(config.output_dir, f"{label}.csv")
        write_records_csv(result.records, path)
        results[label] = (path, result)
        epochs, passes = _epochs_to_tolerance(result.records)
        final = result.records[-1].subopt if result.records else math.nan
        summary_rows.append(
            ",".join(
                [
                    label,
                    spec.method,
                    spec.preconditioner,
                    "1" if epochs is not None else "0",
                    "" if epochs is None else str(epochs),
                    "" if passes is None else repr(float(passes)),
                    repr(float(final)),
                ]
            )
        )
    summary_path = os.path.join(config.output_dir, "summary.csv")
    with open(summary_path, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for row in summary_rows:
            fh.write(row + "\n")
    results["summary"] = (summary_path, None)
    return results
