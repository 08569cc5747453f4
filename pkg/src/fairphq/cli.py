"""Command-line interface.

Subcommands:

  generate  sample a synthetic cohort and write it as JSONL
  train     fit one model per seed on a split of a dataset
  evaluate  score a trained run on a dataset split
  compare   aggregate evaluated runs into a table and Pareto CSVs
  analyze   export difficulty profiles and rank-agreement reports

Configuration can come from a JSON or TOML file (--config) with
individual flags overriding file values. Every training run directory
receives a manifest.json holding the fully resolved semantic
configuration; pointing --config at a manifest reproduces the run
bit for bit. Hashes rather than paths tie artifacts together, so two
pipeline runs into different directories produce byte-identical
datasets, traces, checkpoints, and metrics files.

Exit codes: 0 success, 2 configuration or input problem, 3 numeric
failure during training, 4 unreadable or malformed files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__, analysis, evaluation, losses, net, synth, train as train_mod
from .core import N_CLASSES, N_TASKS
from .errors import (
    ConfigError,
    FairPHQError,
    FileFormatError,
    InputError,
    NumericError,
)
from .evaluation import FAIRNESS_METRICS, ParetoPoint
from .losses import MODES, LossSpec
from .synth import CohortConfig, file_sha256, hash_canonical
from .train import TrainConfig

MANIFEST_FORMAT = "fairphq-manifest"
EVAL_FORMAT = "fairphq-eval"
FORMAT_VERSION = 1

DEFAULT_VAL_FRACTION = 0.15
DEFAULT_TEST_FRACTION = 0.15
SPLITS = ("train", "val", "test", "all")

# metadata keys tolerated (and ignored) when a manifest is reused as --config
_META_KEYS = {"format", "version", "command", "dataset_hash", "config_hash"}

_GENERATE_KEYS = {
    "n",
    "seed",
    "out",
    "group_fraction_s0",
    "feature_dims",
    "signal_scale",
    "noise_scale",
    "score_marginals",
}
_TRAIN_KEYS = {
    "dataset",
    "out",
    "mode",
    "seed",
    "seeds",
    "lr",
    "batch_size",
    "max_epochs",
    "patience",
    "sigma_g",
    "epsilon_q",
    "task_weights",
    "hidden_dim",
    "stop_metric",
    "val_fraction",
    "test_fraction",
}


def _fmt(value) -> str:
    """Deterministic CSV cell: floats via repr, None as empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))  # plain float repr, even for numpy scalars
    return str(value)


def _dump_json(doc: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _read_json(path: str, expected_format: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        raise FileFormatError(f"{path} is not a {expected_format} file")
    return doc


def _load_config_file(path: str) -> dict:
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".toml":
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        elif ext == ".json":
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        else:
            raise ConfigError(f"config file must end in .json or .toml, got {path}")
    except OSError as exc:
        raise FileFormatError(f"cannot read config {path}: {exc}") from exc
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise FileFormatError(f"config {path} failed to parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise FileFormatError(f"config {path} must contain a table/object at top level")
    return doc


def _merge_config(args, allowed: set[str]) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        raw = _load_config_file(args.config)
        unknown = set(raw) - allowed - _META_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = {k: raw[k] for k in raw if k in allowed}
    return cfg


def _override(cfg: dict, args, names: dict[str, str]) -> dict:
    for attr, key in names.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    return cfg


# ---------------------------------------------------------------- generate


def _parse_feature_dims(value) -> tuple[int, int, int]:
    if isinstance(value, str):
        parts = value.split(",")
        if len(parts) != 3:
            raise ConfigError(f"feature dims must be three comma-separated ints, got {value!r}")
        value = [int(p) for p in parts]
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"feature_dims must be three ints, got {value!r}")
    return tuple(int(v) for v in value)


def cmd_generate(args) -> int:
    cfg = _merge_config(args, _GENERATE_KEYS)
    _override(
        cfg,
        args,
        {
            "n": "n",
            "seed": "seed",
            "out": "out",
            "group_fraction_s0": "group_fraction_s0",
            "signal_scale": "signal_scale",
            "feature_dims": "feature_dims",
        },
    )
    if args.noise_scale_s0 is not None or args.noise_scale_s1 is not None:
        base = list(cfg.get("noise_scale", (1.0, 1.0)))
        if args.noise_scale_s0 is not None:
            base[0] = args.noise_scale_s0
        if args.noise_scale_s1 is not None:
            base[1] = args.noise_scale_s1
        cfg["noise_scale"] = base
    if "out" not in cfg:
        raise ConfigError("generate requires --out (or 'out' in the config file)")
    if "n" not in cfg:
        raise ConfigError("generate requires --n (or 'n' in the config file)")
    out = cfg.pop("out")
    kwargs = {
        "n": int(cfg["n"]),
        "seed": int(cfg.get("seed", 0)),
        "group_fraction_s0": float(cfg.get("group_fraction_s0", 0.5)),
        "signal_scale": float(cfg.get("signal_scale", 1.0)),
        "noise_scale": tuple(float(x) for x in cfg.get("noise_scale", (1.0, 1.0))),
        "feature_dims": _parse_feature_dims(cfg.get("feature_dims", (20, 20, 20))),
    }
    if "score_marginals" in cfg:
        kwargs["score_marginals"] = np.asarray(cfg["score_marginals"], dtype=np.float64)
    config = CohortConfig(**kwargs)
    cohort = synth.generate_cohort(config)
    parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(parent, exist_ok=True)
    synth.write_dataset(cohort, out)

    counts = cohort.group_counts()
    positives = sum(r.outcome for r in cohort.records)
    print(f"wrote {out}")
    print(
        f"n={len(cohort)} s0={counts['s0']} s1={counts['s1']} "
        f"positive_rate={positives / len(cohort)!r} config_hash={cohort.config_hash}"
    )
    hist = np.zeros((N_TASKS, N_CLASSES), dtype=np.int64)
    for r in cohort.records:
        for t in range(N_TASKS):
            hist[t, r.scores[t]] += 1
    for t in range(N_TASKS):
        cells = " ".join(f"{k}:{hist[t, k]}" for k in range(N_CLASSES))
        print(f"t{t + 1} scores {cells}")
    return 0


# ------------------------------------------------------------------- train


def _resolve_train(args) -> tuple[dict, list[int]]:
    cfg = _merge_config(args, _TRAIN_KEYS)
    _override(
        cfg,
        args,
        {
            "dataset": "dataset",
            "out": "out",
            "mode": "mode",
            "lr": "lr",
            "batch_size": "batch_size",
            "max_epochs": "max_epochs",
            "patience": "patience",
            "sigma_g": "sigma_g",
            "hidden_dim": "hidden_dim",
            "stop_metric": "stop_metric",
            "val_fraction": "val_fraction",
            "test_fraction": "test_fraction",
        },
    )
    if args.seed:
        seeds = [int(s) for s in args.seed]
    elif "seeds" in cfg:
        seeds = [int(s) for s in cfg["seeds"]]
    elif "seed" in cfg:
        seeds = [int(cfg["seed"])]
    else:
        seeds = [0]
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds: {seeds}")
    if "dataset" not in cfg:
        raise ConfigError("train requires --dataset (or 'dataset' in the config file)")
    if "out" not in cfg:
        raise ConfigError("train requires --out (or 'out' in the config file)")
    return cfg, seeds


def _semantic_train_config(cfg: dict, seed: int) -> dict:
    weights = cfg.get("task_weights", [1.0] * N_TASKS)
    semantic = {
        "mode": str(cfg.get("mode", "mtl")),
        "seed": seed,
        "lr": float(cfg.get("lr", net.DEFAULT_LR)),
        "batch_size": int(cfg.get("batch_size", train_mod.DEFAULT_BATCH_SIZE)),
        "max_epochs": int(cfg.get("max_epochs", train_mod.DEFAULT_MAX_EPOCHS)),
        "patience": int(cfg.get("patience", train_mod.DEFAULT_PATIENCE)),
        "sigma_g": float(cfg.get("sigma_g", losses.LossSpec().sigma_g)),
        "epsilon_q": float(cfg.get("epsilon_q", losses.DEFAULT_EPSILON_Q)),
        "task_weights": [float(w) for w in weights],
        "hidden_dim": int(cfg.get("hidden_dim", net.DEFAULT_HIDDEN_DIM)),
        "stop_metric": str(cfg.get("stop_metric", "val_loss")),
        "val_fraction": float(cfg.get("val_fraction", DEFAULT_VAL_FRACTION)),
        "test_fraction": float(cfg.get("test_fraction", DEFAULT_TEST_FRACTION)),
    }
    if semantic["mode"] not in MODES:
        raise ConfigError(f"unknown mode {semantic['mode']!r}, expected one of {MODES}")
    return semantic


def _fractions(semantic: dict) -> tuple[float, float, float]:
    val, test = semantic["val_fraction"], semantic["test_fraction"]
    train_frac = 1.0 - val - test
    if val < 0 or test < 0 or train_frac <= 0:
        raise ConfigError(f"invalid split fractions: val={val} test={test}")
    return (train_frac, val, test)


def _loss_spec(semantic: dict, task: int | None = None) -> LossSpec:
    return LossSpec(
        mode=semantic["mode"],
        task=task,
        task_weights=tuple(semantic["task_weights"]),
        sigma_g=semantic["sigma_g"],
        epsilon_q=semantic["epsilon_q"],
    )


def _train_config(semantic: dict, spec: LossSpec) -> TrainConfig:
    return TrainConfig(
        loss=spec,
        lr=semantic["lr"],
        batch_size=semantic["batch_size"],
        max_epochs=semantic["max_epochs"],
        patience=semantic["patience"],
        seed=semantic["seed"],
        hidden_dim=semantic["hidden_dim"],
        stop_metric=semantic["stop_metric"],
    )


def _sigma_columns(mode: str) -> list[str]:
    if mode == "uw":
        return [f"ivs_t{t + 1}" for t in range(N_TASKS)]
    if mode == "ufair":
        return [f"ivs_{g}_t{t + 1}" for g in ("s0", "s1") for t in range(N_TASKS)]
    return []


def _write_trace(path: str, trace: train_mod.TrainTrace, mode: str, config_hash: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", *_sigma_columns(mode)])
        for row in trace.epochs:
            extra = [] if row.inv_sigma_sq is None else [_fmt(float(v)) for v in row.inv_sigma_sq.ravel()]
            writer.writerow([row.epoch, _fmt(row.train_loss), _fmt(row.val_loss), *extra])


def _run_one_seed(cohort, dataset_path: str, dataset_hash: str, cfg: dict, seed: int, run_dir: str) -> None:
    semantic = _semantic_train_config(cfg, seed)
    fractions = _fractions(semantic)
    config_hash = hash_canonical({"command": "train", "dataset_hash": dataset_hash, **semantic})
    os.makedirs(run_dir, exist_ok=True)

    manifest = {
        "format": MANIFEST_FORMAT,
        "version": FORMAT_VERSION,
        "command": "train",
        "dataset": dataset_path,
        "dataset_hash": dataset_hash,
        "config_hash": config_hash,
        **semantic,
    }
    _dump_json(manifest, os.path.join(run_dir, "manifest.json"))

    cohort_train, cohort_val, _ = train_mod.split_cohort(cohort, seed, fractions)
    meta_base = {
        "mode": semantic["mode"],
        "seed": seed,
        "dataset_hash": dataset_hash,
        "config_hash": config_hash,
    }
    if semantic["mode"] == "unitask":
        base_config = _train_config(semantic, _loss_spec(semantic))
        models, traces = train_mod.train_unitask_suite(cohort_train, cohort_val, base_config)
        for t, (params, trace) in enumerate(zip(models, traces)):
            net.save_checkpoint(
                os.path.join(run_dir, f"checkpoint_t{t + 1}.json"),
                params,
                meta={**meta_base, "task": t},
            )
            _write_trace(
                os.path.join(run_dir, f"trace_t{t + 1}.csv"), trace, semantic["mode"], config_hash
            )
        best = [tr.best_epoch for tr in traces]
        print(f"trained unitask suite seed={seed} best_epochs={best} dir={run_dir}")
    else:
        spec = _loss_spec(semantic)
        params, trace = train_mod.train(cohort_train, cohort_val, _train_config(semantic, spec))
        net.save_checkpoint(os.path.join(run_dir, "checkpoint.json"), params, meta=meta_base)
        _write_trace(os.path.join(run_dir, "trace.csv"), trace, semantic["mode"], config_hash)
        best_val = trace.epochs[trace.best_epoch - 1].val_loss
        print(
            f"trained {semantic['mode']} seed={seed} best_epoch={trace.best_epoch} "
            f"stopped_epoch={trace.stopped_epoch} best_val_loss={best_val!r} dir={run_dir}"
        )


def cmd_train(args) -> int:
    cfg, seeds = _resolve_train(args)
    dataset_path = str(cfg["dataset"])
    cohort = synth.read_dataset(dataset_path)
    dataset_hash = file_sha256(dataset_path)
    out = str(cfg["out"])
    for seed in seeds:
        run_dir = out if len(seeds) == 1 else os.path.join(out, f"seed_{seed}")
        _run_one_seed(cohort, dataset_path, dataset_hash, cfg, seed, run_dir)
    return 0


# ---------------------------------------------------------------- evaluate


def _load_run_models(run_dir: str, mode: str) -> list[net.ModelParams]:
    if mode == "unitask":
        paths = [os.path.join(run_dir, f"checkpoint_t{t + 1}.json") for t in range(N_TASKS)]
    else:
        paths = [os.path.join(run_dir, "checkpoint.json")]
    return [net.load_checkpoint(p)[0] for p in paths]


def _predict_run(models: list[net.ModelParams], mode: str, cohort) -> train_mod.Prediction:
    if mode == "unitask":
        return train_mod.predict_unitask_suite(models, cohort)
    return train_mod.predict(models[0], cohort)


def _fairness_doc(report: evaluation.FairnessReport) -> dict:
    doc = {}
    for name in FAIRNESS_METRICS:
        r = report.ratio(name)
        doc[name] = {"raw": r.raw, "normalized": r.normalized, "bounded": r.bounded}
    doc["eodd_components"] = {"y1": report.eodd_y1, "y0": report.eodd_y0}
    return doc


def cmd_evaluate(args) -> int:
    run_dir = args.run
    manifest = _read_json(os.path.join(run_dir, "manifest.json"), MANIFEST_FORMAT)
    dataset_path = args.dataset or manifest.get("dataset")
    if not dataset_path:
        raise ConfigError("no dataset recorded in the manifest; pass --dataset")
    cohort = synth.read_dataset(dataset_path)
    dataset_hash = file_sha256(dataset_path)
    split = args.split
    if dataset_hash != manifest.get("dataset_hash") and split != "all":
        raise ConfigError(
            "dataset differs from the one the run was trained on; "
            "its train/val/test split is undefined, use --split all"
        )
    semantic_keys = ("mode", "seed", "val_fraction", "test_fraction")
    missing = [k for k in semantic_keys if k not in manifest]
    if missing:
        raise FileFormatError(f"manifest lacks fields {missing}")
    mode = manifest["mode"]
    if split == "all":
        part = cohort
    else:
        fractions = _fractions(manifest)
        parts = train_mod.split_cohort(cohort, int(manifest["seed"]), fractions)
        part = dict(zip(("train", "val", "test"), parts))[split]
    if not part.records:
        raise InputError(f"split {split!r} of {dataset_path} is empty")

    models = _load_run_models(run_dir, mode)
    pred = _predict_run(models, mode, part)
    labeled = evaluation.label_predictions(part, pred.binary_hat)
    perf = evaluation.performance_metrics(labeled)
    true_scores = np.stack([r.scores for r in part.records])
    task_acc = evaluation.subscore_accuracy(true_scores, pred.score_hat)
    fairness = evaluation.fairness_ratios(labeled, eodd_aggregate=args.eodd_aggregate)

    out_dir = args.out or run_dir
    os.makedirs(out_dir, exist_ok=True)
    doc = {
        "format": EVAL_FORMAT,
        "version": FORMAT_VERSION,
        "command": "evaluate",
        "mode": mode,
        "seed": manifest["seed"],
        "split": split,
        "eodd_aggregate": args.eodd_aggregate,
        "dataset_hash": dataset_hash,
        "config_hash": manifest.get("config_hash", ""),
        "n_records": len(part),
        "performance": perf.as_dict(),
        "per_task_accuracy": [float(a) for a in task_acc],
        "fairness": _fairness_doc(fairness),
    }
    _dump_json(doc, os.path.join(out_dir, "eval.json"))

    with open(os.path.join(out_dir, "eval.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={doc['config_hash']} dataset_hash={dataset_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for key, value in perf.as_dict().items():
            writer.writerow([key, _fmt(value)])
        for t in range(N_TASKS):
            writer.writerow([f"acc_t{t + 1}", _fmt(float(task_acc[t]))])
        for name in FAIRNESS_METRICS:
            r = fairness.ratio(name)
            writer.writerow([f"{name}_raw", _fmt(r.raw)])
            writer.writerow([f"{name}_normalized", _fmt(r.normalized)])
            writer.writerow([f"{name}_bounded", _fmt(r.bounded)])
        writer.writerow(["eodd_y1", _fmt(fairness.eodd_y1)])
        writer.writerow(["eodd_y0", _fmt(fairness.eodd_y0)])

    print(
        f"evaluated {mode} seed={manifest['seed']} split={split} n={len(part)} "
        f"accuracy={perf.accuracy!r} -> {os.path.join(out_dir, 'eval.json')}"
    )
    return 0


# ----------------------------------------------------------------- compare


def _median_iqr(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    q1, q3 = np.percentile(arr, (25.0, 75.0))
    return float(np.median(arr)), float(q3 - q1)


def cmd_compare(args) -> int:
    runs = []
    for run_dir in args.runs:
        manifest = _read_json(os.path.join(run_dir, "manifest.json"), MANIFEST_FORMAT)
        eval_doc = _read_json(os.path.join(run_dir, "eval.json"), EVAL_FORMAT)
        runs.append((run_dir, manifest, eval_doc))
    hashes = {doc["dataset_hash"] for _, _, doc in runs}
    if len(hashes) != 1:
        raise ConfigError(f"runs were evaluated on {len(hashes)} different datasets; refusing to compare")
    dataset_hash = hashes.pop()

    runs.sort(key=lambda r: (MODES.index(r[2]["mode"]), int(r[2]["seed"]), r[0]))
    rows = []
    for run_dir, _, doc in runs:
        perf = doc["performance"]
        fair = doc["fairness"]
        rows.append(
            {
                "method": doc["mode"],
                "seed": int(doc["seed"]),
                "method_id": f"{doc['mode']}:s{doc['seed']}",
                "accuracy": perf["accuracy"],
                "f1": perf["f1"],
                "precision": perf["precision"],
                "recall": perf["recall"],
                "uar": perf["uar"],
                **{name: fair[name]["raw"] for name in FAIRNESS_METRICS},
                **{f"{name}_normalized": fair[name]["normalized"] for name in FAIRNESS_METRICS},
            }
        )

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    metric_cols = ["accuracy", "f1", "precision", "recall", "uar", *FAIRNESS_METRICS]

    aggregates: dict[str, dict] = {}
    for mode in MODES:
        mode_rows = [r for r in rows if r["method"] == mode]
        if not mode_rows:
            continue
        aggregates[mode] = {}
        for col in metric_cols:
            defined = [r[col] for r in mode_rows if r[col] is not None]
            med, iqr = _median_iqr(defined)
            aggregates[mode][col] = {"median": med, "iqr": iqr, "n_defined": len(defined)}

    table_path = os.path.join(out_dir, "comparison.csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# dataset_hash={dataset_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "seed", *metric_cols])
        for r in rows:
            writer.writerow([r["method"], r["seed"], *[_fmt(r[c]) for c in metric_cols]])
        for mode, agg in aggregates.items():
            writer.writerow([mode, "median", *[_fmt(agg[c]["median"]) for c in metric_cols]])
            writer.writerow([mode, "iqr", *[_fmt(agg[c]["iqr"]) for c in metric_cols]])

    _dump_json(
        {
            "format": "fairphq-comparison",
            "version": FORMAT_VERSION,
            "dataset_hash": dataset_hash,
            "rows": rows,
            "aggregates": aggregates,
        },
        os.path.join(out_dir, "comparison.json"),
    )

    skipped = []
    for name in FAIRNESS_METRICS:
        points = []
        for r in rows:
            if r[f"{name}_normalized"] is None:
                skipped.append(
                    {"method_id": r["method_id"], "metric": name, "reason": "undefined ratio"}
                )
                continue
            points.append(ParetoPoint(r["method_id"], r["accuracy"], r[f"{name}_normalized"]))
        frontier_ids = set()
        if points:
            frontier_ids = {p.method_id for p in evaluation.pareto_frontier(points)}
        path = os.path.join(out_dir, f"pareto_{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# dataset_hash={dataset_hash}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["method_id", "accuracy", "fairness_metric", "raw_ratio", "normalized", "on_frontier"]
            )
            for r in rows:
                if r[f"{name}_normalized"] is None:
                    continue
                writer.writerow(
                    [
                        r["method_id"],
                        _fmt(r["accuracy"]),
                        name,
                        _fmt(r[name]),
                        _fmt(r[f"{name}_normalized"]),
                        _fmt(r["method_id"] in frontier_ids),
                    ]
                )
    _dump_json({"skipped": skipped}, os.path.join(out_dir, "skipped.json"))
    print(f"compared {len(rows)} runs -> {table_path}")
    return 0


# ----------------------------------------------------------------- analyze


def _analysis_rows_path(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, name)


def _write_dc_report(report: analysis.DCReport, out_dir: str, suffix: str, config_hash: str) -> None:
    tag = f"_{suffix}" if suffix else ""
    _dump_json(report.as_dict(), _analysis_rows_path(out_dir, f"dc_report{tag}.json"))
    with open(
        _analysis_rows_path(out_dir, f"dc_report{tag}.csv"), "w", encoding="utf-8", newline=""
    ) as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["task", "reference", "profile", "reference_mark", "profile_mark"])
        for row in report.rows():
            task, ref, prof, ref_mark, prof_mark = row
            writer.writerow([task, _fmt(ref), _fmt(prof), ref_mark, prof_mark])


def cmd_analyze(args) -> int:
    if args.checkpoint:
        ckpt_path = args.checkpoint
        default_out = os.path.dirname(os.path.abspath(ckpt_path))
    elif args.run:
        ckpt_path = os.path.join(args.run, "checkpoint.json")
        default_out = args.run
    else:
        raise ConfigError("analyze requires --run or --checkpoint")
    params, _, meta = net.load_checkpoint(ckpt_path)
    config_hash = str(meta.get("config_hash", ""))
    profile = analysis.difficulty_profile(params)
    out_dir = args.out or default_out
    os.makedirs(out_dir, exist_ok=True)

    with open(
        _analysis_rows_path(out_dir, "difficulty.csv"), "w", encoding="utf-8", newline=""
    ) as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        if profile.per_group:
            writer.writerow(["task", "group", "inv_sigma_sq"])
            for task, group, value in profile.rows():
                writer.writerow([task, group, _fmt(value)])
        else:
            writer.writerow(["task", "inv_sigma_sq"])
            for task, value in profile.rows():
                writer.writerow([task, _fmt(value)])

    if profile.per_group:
        for g, tag in enumerate(("s0", "s1")):
            report = analysis.dc_report(profile.values[g])
            _write_dc_report(report, out_dir, tag, config_hash)
            print(f"group {tag}: spearman_rho={report.rho!r}")
    else:
        report = analysis.dc_report(profile.values)
        _write_dc_report(report, out_dir, "", config_hash)
        print(f"spearman_rho={report.rho!r}")
    print(f"wrote difficulty profile and rank reports to {out_dir}")
    return 0


# -------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairphq",
        description="Group-aware uncertainty-weighted multitask screening experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic cohort to JSONL")
    p.add_argument("--config", help="JSON or TOML config file")
    p.add_argument("--n", type=int, help="number of records")
    p.add_argument("--seed", type=int, help="generation seed")
    p.add_argument("--out", help="output dataset path")
    p.add_argument("--group-fraction-s0", type=float, dest="group_fraction_s0")
    p.add_argument("--signal-scale", type=float, dest="signal_scale")
    p.add_argument("--noise-scale-s0", type=float, dest="noise_scale_s0")
    p.add_argument("--noise-scale-s1", type=float, dest="noise_scale_s1")
    p.add_argument("--feature-dims", dest="feature_dims", help="three comma-separated ints")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit one model per seed")
    p.add_argument("--config", help="JSON or TOML config file (a manifest works)")
    p.add_argument("--dataset", help="JSONL cohort path")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int, action="append", help="repeatable experiment seed")
    p.add_argument("--out", help="output run directory")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--sigma-g", type=float, dest="sigma_g")
    p.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    p.add_argument("--stop-metric", choices=train_mod.STOP_METRICS, dest="stop_metric")
    p.add_argument("--val-fraction", type=float, dest="val_fraction")
    p.add_argument("--test-fraction", type=float, dest="test_fraction")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained run on a dataset split")
    p.add_argument("--run", required=True, help="run directory with manifest and checkpoints")
    p.add_argument("--dataset", help="override the dataset recorded in the manifest")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--eodd-aggregate", choices=evaluation.EODD_AGGREGATES, default="mean",
                   dest="eodd_aggregate")
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="aggregate evaluated runs")
    p.add_argument("runs", nargs="+", help="run directories (each needs manifest and eval)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="export difficulty profile and rank reports")
    p.add_argument("--run", help="run directory holding checkpoint.json")
    p.add_argument("--checkpoint", help="explicit checkpoint path")
    p.add_argument("--out", help="output directory (default: next to the checkpoint)")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except FairPHQError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
