"""Experiment runner: config parsing, the method x dataset grid, result
tables, the run manifest, and particle-path exports.

Config files use INI sections (see the README for the full grammar):
one ``[experiment]`` section, one ``[dataset:<name>]`` section per dataset,
and one ``[method:<key>]`` section per method column.
"""

from __future__ import annotations

import configparser
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .data import Dataset, generate_synth, parse_arff, parse_csv
from .evaluation import avg_rank, cross_validate
from .methods import DEFAULT_CONFIG, MethodConfig, parse_method_key
from .smc import normalize_log_weights


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


METRIC_NAMES = ("mse", "mae", "zero_one")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    kind: str                      # synth | csv | arff
    path: Optional[str] = None
    n_targets: Optional[int] = None
    has_header: bool = True
    synth_n: int = 1000
    synth_noise: float = 0.03

    def load(self, seed: int) -> Dataset:
        if self.kind == "synth":
            return generate_synth(self.synth_n, self.synth_noise, seed)
        text = Path(self.path).read_text()
        if self.kind == "arff":
            return parse_arff(text, self.n_targets).dataset
        return parse_csv(text, self.n_targets, has_header=self.has_header)


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple
    methods: tuple                 # (key string, MethodConfig) pairs
    folds: int = 10
    seed: int = 0
    c: float = 0.1
    output_dir: str = "results"
    export_paths: bool = False


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


_METHOD_KEYS_HELP = ("M", "eta", "ess", "mh_steps", "mh_sigma", "estimator", "bins",
                     "bin_mode", "prior_precision", "bandwidth", "rf_trees",
                     "krr_alphas", "krr_gammas", "order")


def _method_config(section) -> MethodConfig:
    cfg = DEFAULT_CONFIG
    updates = {}
    for key in section:
        value = section[key]
        if key == "m":
            updates["n_particles"] = int(value)
        elif key == "eta":
            updates["eta"] = float(value)
        elif key == "ess":
            updates["ess"] = value.strip()
        elif key == "mh_steps":
            updates["mh_steps"] = int(value)
        elif key == "mh_sigma":
            updates["mh_sigma"] = float(value)
        elif key == "estimator":
            updates["estimator"] = value.strip()
        elif key == "bins":
            updates["bins"] = int(value)
        elif key == "bin_mode":
            updates["bin_mode"] = value.strip()
        elif key == "prior_precision":
            updates["prior_precision"] = float(value)
        elif key == "bandwidth":
            updates["bandwidth"] = float(value)
        elif key == "rf_trees":
            updates["rf_trees"] = int(value)
        elif key == "krr_alphas":
            updates["krr_alphas"] = _parse_floats(value)
        elif key == "krr_gammas":
            updates["krr_gammas"] = _parse_floats(value)
        elif key == "order":
            updates["chain_order"] = tuple(int(t) for t in value.replace(",", " ").split())
        else:
            raise ConfigError(f"unknown method option {key!r} "
                              f"(known: {', '.join(_METHOD_KEYS_HELP)})")
    return replace(cfg, **updates) if updates else cfg


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")
    exp = parser["experiment"]
    folds = exp.getint("folds", 10)
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    datasets = []
    methods = []
    for section in parser.sections():
        if section.startswith("dataset:"):
            name = section.split(":", 1)[1]
            s = parser[section]
            kind = s.get("kind", "synth").strip()
            if kind not in ("synth", "csv", "arff"):
                raise ConfigError(f"dataset {name!r}: unknown kind {kind!r}")
            spec = DatasetSpec(
                name=name, kind=kind, path=s.get("path"),
                n_targets=s.getint("n_targets") if "n_targets" in s else None,
                has_header=_parse_bool(s.get("header", "true")),
                synth_n=s.getint("n", 1000),
                synth_noise=s.getfloat("noise_std", 0.03))
            if kind != "synth":
                if not spec.path:
                    raise ConfigError(f"dataset {name!r}: missing path")
                if not Path(spec.path).exists():
                    raise ConfigError(f"dataset {name!r}: file not found: {spec.path}")
                if spec.n_targets is None:
                    raise ConfigError(f"dataset {name!r}: missing n_targets")
            datasets.append(spec)
        elif section.startswith("method:"):
            key = section.split(":", 1)[1]
            parse_method_key(key)  # fail fast on unresolvable keys
            methods.append((key, _method_config(parser[section])))
        elif section != "experiment":
            raise ConfigError(f"unknown section [{section}]")
    if not datasets:
        raise ConfigError("no [dataset:...] sections")
    if not methods:
        raise ConfigError("no [method:...] sections")
    return ExperimentConfig(
        datasets=tuple(datasets), methods=tuple(methods),
        folds=folds, seed=exp.getint("seed", 0), c=exp.getfloat("c", 0.1),
        output_dir=exp.get("output_dir", "results"),
        export_paths=_parse_bool(exp.get("export_paths", "false")))


# ---------------------------------------------------------------------------
# Path export
# ---------------------------------------------------------------------------

def export_particle_paths(cloud, instance_id: int, sink) -> int:
    """Write one JSON record per particle to ``sink``; returns the count.

    Records carry the per-stage log-weights, the resampling stages with
    their log totals, and the instance-level log of the total final weight,
    so the final log-weights are recomputable from the file alone.
    """
    _, instance_log_norm = normalize_log_weights(cloud.log_weights)
    stages = [e.stage for e in cloud.resample_events]
    log_norms = [e.log_norm for e in cloud.resample_events]
    for m in range(cloud.n_particles):
        record = {
            "instance_id": int(instance_id),
            "particle_id": m,
            "n_particles": cloud.n_particles,
            "path": [float(v) for v in cloud.paths[m]],
            "log_weight": float(cloud.log_weights[m]),
            "stage_log_weights": [float(v) for v in cloud.per_stage_log_weights[m]],
            "resampled_at": stages,
            "resample_log_norms": log_norms,
            "instance_log_norm": float(instance_log_norm),
        }
        sink.write(json.dumps(record) + "\n")
    return cloud.n_particles


def replay_log_weight(record) -> float:
    """Recompute a record's final log-weight from its stage weights and
    resampling resets (the inverse of the export bookkeeping)."""
    stage_lw = record["stage_log_weights"]
    if not record["resampled_at"]:
        return float(sum(stage_lw))
    last_stage = record["resampled_at"][-1]
    base = record["resample_log_norms"][-1] - np.log(record["n_particles"])
    return float(base + sum(stage_lw[last_stage + 1:]))


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def render_table(results: dict, metric: str, fmt: str = "text") -> str:
    """Render one metric as a datasets x methods table with an Avg Rank row.

    ``results`` is the structure produced by ``run`` (also stored as
    results.json). Missing cells render as "missing" and their rows are
    excluded from the ranking.
    """
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}")
    dataset_rows = results["datasets"]
    methods = results["methods"]
    values = np.full((len(dataset_rows), len(methods)), np.nan)
    for i, ds in enumerate(dataset_rows):
        for j, mkey in enumerate(methods):
            cell = results["metrics"].get(ds["name"], {}).get(mkey)
            if cell is not None:
                values[i, j] = cell[metric]
    complete = np.isfinite(values).all(axis=1)
    ranks = avg_rank(values[complete]) if complete.any() else None

    def cell_text(v):
        return "missing" if not np.isfinite(v) else f"{v:.2f}"

    if fmt == "csv":
        lines = ["Dataset,L," + ",".join(methods)]
        for i, ds in enumerate(dataset_rows):
            lines.append(",".join([ds["name"], str(ds["L"])] +
                                  [cell_text(v) for v in values[i]]))
        if ranks is not None:
            lines.append("Avg Rank,," + ",".join(f"{r:.2f}" for r in ranks))
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    name_w = max([len("Dataset"), len("Avg Rank")] +
                 [len(ds["name"]) for ds in dataset_rows])
    col_w = max([8] + [len(m) for m in methods])
    header = f"{'Dataset':<{name_w}}  {'L':>3}  " + "  ".join(
        f"{m:>{col_w}}" for m in methods)
    lines = [header, "-" * len(header)]
    for i, ds in enumerate(dataset_rows):
        lines.append(f"{ds['name']:<{name_w}}  {ds['L']:>3}  " + "  ".join(
            f"{cell_text(v):>{col_w}}" for v in values[i]))
    if ranks is not None:
        lines.append("-" * len(header))
        lines.append(f"{'Avg Rank':<{name_w}}  {'':>3}  " + "  ".join(
            f"{r:>{col_w}.2f}" for r in ranks))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def _safe_name(method_key: str) -> str:
    return method_key.replace("/", "-")


def _export_for_cell(spec, key, cfg, data, folds, seed, out_dir):
    """Re-run the per-fold predictions capturing clouds, and export them."""
    from .data import Scaler, kfold, scale_dataset
    from .evaluation import _fold_seed_sequence
    from .methods import fit_method

    plan = kfold(data.n_instances, folds, seed)
    path = out_dir / "paths" / f"{spec.name}__{_safe_name(key)}.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w") as sink:
        for fold in range(plan.k):
            tr = data.subset(plan.train_indices(fold))
            te_idx = plan.test_indices(fold)
            te = data.subset(te_idx)
            xs, ys = Scaler.fit(tr.X), Scaler.fit(tr.Y)
            ss = _fold_seed_sequence(seed, key, fold)
            fit_ss, predict_ss = ss.spawn(2)
            fitted = fit_method(scale_dataset(tr, xs, ys), key, cfg,
                                seed=int(fit_ss.generate_state(1)[0]))
            _, clouds = fitted.predict_with_clouds(
                xs.transform(te.X), rng=np.random.default_rng(predict_ss))
            for instance_id, cloud in zip(te_idx, clouds):
                count += export_particle_paths(cloud, int(instance_id), sink)
    return path.name, count


def run(config: ExperimentConfig) -> int:
    """Run the full grid; write tables, results.json, and the manifest.

    Returns 0 on success and 1 if any dataset x method cell failed (failed
    cells are recorded in the manifest and excluded from the tables).
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = {
        "datasets": [],
        "methods": [str(parse_method_key(k)) for k, _ in config.methods],
        "c": config.c,
        "folds": config.folds,
        "seed": config.seed,
        "metrics": {},
    }
    cells = {}
    failed = False
    for spec in config.datasets:
        results["metrics"][spec.name] = {}
        cells[spec.name] = {}
        try:
            data = spec.load(config.seed)
        except Exception as exc:  # a bad file fails the whole row
            failed = True
            results["datasets"].append({"name": spec.name, "L": 0})
            for key, _ in config.methods:
                cells[spec.name][str(parse_method_key(key))] = f"error: {exc}"
            continue
        results["datasets"].append({"name": spec.name, "L": data.n_targets})
        for key, cfg in config.methods:
            canonical = str(parse_method_key(key))
            try:
                report = cross_validate(data, key, k=config.folds,
                                        seed=config.seed, config=cfg, c=config.c)
            except Exception as exc:  # record and continue the grid
                failed = True
                cells[spec.name][canonical] = f"error: {exc}"
                continue
            cells[spec.name][canonical] = "ok"
            results["metrics"][spec.name][canonical] = {
                "mse": report.mse, "mae": report.mae, "zero_one": report.zero_one,
                "per_fold": [[f.mse, f.mae, f.zero_one] for f in report.per_fold],
            }
            if config.export_paths and parse_method_key(key).family in ("MC", "PF"):
                name, count = _export_for_cell(spec, key, cfg, data, config.folds,
                                               config.seed, out_dir)
                cells[spec.name][canonical] = f"ok ({count} path records in {name})"

    (out_dir / "results.json").write_text(json.dumps(results, indent=2) + "\n")
    for metric in METRIC_NAMES:
        (out_dir / f"{metric}.csv").write_text(render_table(results, metric, "csv"))
        (out_dir / f"{metric}.txt").write_text(render_table(results, metric, "text"))
    import sklearn

    manifest = {
        "package_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scikit_learn": sklearn.__version__,
        "seed": config.seed,
        "folds": config.folds,
        "c": config.c,
        "export_paths": config.export_paths,
        "datasets": [vars(s) for s in config.datasets],
        "methods": {k: _config_echo(c) for k, c in config.methods},
        "cells": cells,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return 1 if failed else 0


def _config_echo(cfg: MethodConfig) -> dict:
    echo = dict(vars(cfg))
    return echo
