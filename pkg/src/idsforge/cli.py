"""Command-line front end: preprocess, select, evaluate, stats.

Every command takes an optional properties-style config file ("key = value"
per line, '#' comments); command-line flags win over config values. With a
fixed seed all primary outputs are byte-identical across runs; only the
timing fields and timestamps vary.

Exit codes: 0 success, 2 input or validation error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from datetime import datetime, timezone

from . import __version__
from .dataset import (encode, filter_table, load_csv, normalize,
                      read_dataset_artifact, write_dataset_artifact)
from .ensemble import CombinationRule
from .errors import InputError, InvariantError
from .evaluation import ClassifierSpec, cross_validate
from .featsel import (BatSwarmConfig, cfs_ba_select, ig_rank, igr_rank,
                      selection_report)
from .stats import (ALPHAS, RankTable, friedman_from_mean_ranks, friedman_test,
                    load_metric_table, nemenyi_cd, rank_algorithms)
from .trees import TreeParams

SELECTORS = ("cfs-ba", "ig", "igr", "none", "list")


def _load_config(path) -> dict[str, str]:
    config: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise InputError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                config[key.strip()] = value.strip()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    return config


class Options:
    """Flag values with config-file fallback; flags win."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(args.config) if getattr(args, "config", None) else {}

    def get(self, key: str, default=None, cast=str):
        flag = getattr(self.args, key.replace("-", "_"), None)
        if flag is not None:
            return flag
        if key in self.config:
            raw = self.config[key]
            try:
                if cast is bool:
                    return raw.lower() in ("1", "true", "yes", "on")
                return cast(raw)
            except ValueError:
                raise InputError(f"config key {key!r}: cannot parse {raw!r}") from None
        return default

    def require(self, key: str, cast=str):
        value = self.get(key, None, cast)
        if value is None:
            raise InputError(f"missing required option --{key}")
        return value


def _thread_count(opts: Options) -> int:
    explicit = opts.get("threads", None, int)
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("IDSFORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"IDSFORGE_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _write_json(path, payload) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def cmd_preprocess(opts: Options) -> int:
    path = opts.require("input")
    label = opts.require("label-column")
    has_header = not opts.get("no-header", False, bool)
    out_dir = opts.get("out", "preprocessed")

    raw = load_csv(path, label, has_header=has_header)
    filtered, report = filter_table(raw)
    ds = encode(filtered, normal_class_name=opts.get("normal-class"))
    ds = normalize(ds)
    write_dataset_artifact(ds, out_dir, report=report,
                           label_name=filtered.column_names[filtered.label_column])
    _write_json(os.path.join(out_dir, "preprocess_report.json"), report.to_dict())
    print(f"wrote {ds.n_rows} rows x {ds.n_features} features "
          f"({ds.n_classes} classes) to {out_dir}")
    return 0


def _parse_feature_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise InputError(f"cannot parse feature list {text!r}") from None


def _read_subset_file(path) -> list[int]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read subset file {path}: {exc}") from exc
    if path.endswith(".json"):
        doc = json.loads(text)
        return [int(i) for i in doc["selected"]]
    return _parse_feature_list(text)


def _run_selector(ds, opts: Options):
    """Returns a dict with selected/names plus selector-specific fields."""
    selector = opts.get("selector", "cfs-ba")
    if selector not in SELECTORS:
        raise InputError(f"unknown selector {selector!r}; expected one of {SELECTORS}")
    bins = opts.get("bins", 10, int)
    if selector == "cfs-ba":
        config = BatSwarmConfig(
            n_bats=opts.get("n-bats", 30, int),
            f_min=opts.get("f-min", 0.0, float),
            f_max=opts.get("f-max", 2.0, float),
            alpha=opts.get("alpha", 0.9, float),
            gamma=opts.get("gamma", 0.9, float),
            max_iterations=opts.get("iterations", 100, int),
            seed=opts.get("seed", 0, int),
        )
        subset, trace = cfs_ba_select(ds, config, bins=bins)
        payload = selection_report(subset, trace, ds)
        payload["selector"] = selector
        return payload
    if selector in ("ig", "igr"):
        ranked = ig_rank(ds, bins) if selector == "ig" else igr_rank(ds, bins)
        top = opts.get("top", 10, int)
        if top < 1:
            raise InputError("--top must be at least 1")
        top = min(top, ds.n_features)
        chosen = ranked[:top]  # kept in rank order, best first
        indices = [i for i, _ in chosen]
        return {
            "selector": selector,
            "selected": indices,
            "names": [ds.feature_meta[i].name for i in indices],
            "merit": None,
            "scores": [s for _, s in chosen],
            "seconds": 0.0,
        }
    if selector == "none":
        indices = list(range(ds.n_features))
    else:  # list
        text = opts.get("features")
        if text is None:
            raise InputError("selector 'list' needs --features")
        indices = sorted(set(_parse_feature_list(text)))
    return {
        "selector": selector,
        "selected": indices,
        "names": [ds.feature_meta[i].name for i in indices],
        "merit": None,
        "seconds": 0.0,
    }


def cmd_select(opts: Options) -> int:
    ds = read_dataset_artifact(opts.require("input"))
    start = time.perf_counter()
    payload = _run_selector(ds, opts)
    if payload.get("seconds") == 0.0:
        payload["seconds"] = time.perf_counter() - start
    out_dir = opts.get("out", "selection")
    _write_json(os.path.join(out_dir, "subset.json"), payload)
    with open(os.path.join(out_dir, "subset.txt"), "w", encoding="utf-8") as fh:
        fh.write(",".join(str(i) for i in payload["selected"]))
        fh.write("\n")
    merit = payload.get("merit")
    summary = f"selected {len(payload['selected'])} features"
    if merit is not None:
        summary += f" (merit {merit:.5f})"
    print(summary + f" -> {out_dir}")
    return 0


def _classifier_specs(opts: Options) -> list[ClassifierSpec]:
    text = opts.get("classifiers", "c45,rf,forest_pa")
    kinds = [tok.strip() for tok in text.split(",") if tok.strip()]
    if not kinds:
        raise InputError("no classifiers configured")
    params = TreeParams(
        min_leaf=opts.get("min-leaf", 2, int),
        max_depth=opts.get("max-depth", None, int),
        min_gain=opts.get("min-gain", 1e-6, float),
    )
    n_trees = opts.get("n-trees", 100, int)
    rho = opts.get("rho", 1e-4, float)
    return [ClassifierSpec(kind=k, params=params, n_trees=n_trees, rho=rho)
            for k in kinds]


def _resolve_features(ds, opts: Options):
    subset_file = opts.get("subset-file")
    features = opts.get("features")
    selector = opts.get("selector")
    if subset_file:
        indices = _read_subset_file(subset_file)
        return indices, {"selector": "file", "selected": indices,
                         "names": [ds.feature_meta[i].name for i in indices]}
    if features:
        indices = sorted(set(_parse_feature_list(features)))
        return indices, {"selector": "list", "selected": indices,
                         "names": [ds.feature_meta[i].name for i in indices]}
    if selector and selector != "none":
        payload = _run_selector(ds, opts)
        return payload["selected"], payload
    return None, None


def _confusion_to_csv(cm, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\predicted"] + cm.class_names)
        for i, name in enumerate(cm.class_names):
            writer.writerow([name] + [int(v) for v in cm.counts[i]])


def cmd_evaluate(opts: Options) -> int:
    ds = read_dataset_artifact(opts.require("input"))
    rule = CombinationRule.from_string(opts.get("rule", "average-of-probabilities"))
    k = opts.get("k", 10, int)
    repeats = opts.get("repeats", 1, int)
    seed = opts.get("seed", 0, int)
    threads = _thread_count(opts)
    adr_mode = opts.get("adr-mode", "exact_class")
    out_dir = opts.get("out", "evaluation")

    specs = _classifier_specs(opts)
    indices, selection = _resolve_features(ds, opts)

    results = {}
    per_repeat = {}
    for spec in specs:
        cv = cross_validate(ds, [spec], k=k, repeats=repeats, seed=seed, rule=rule,
                            feature_indices=indices, threads=threads, adr_mode=adr_mode)
        results[spec.kind] = cv.report.to_dict()
        per_repeat[spec.kind] = [r.to_dict() for r in cv.per_repeat]
    ensemble_cv = cross_validate(ds, specs, k=k, repeats=repeats, seed=seed, rule=rule,
                                 feature_indices=indices, threads=threads, adr_mode=adr_mode)
    results["ensemble"] = ensemble_cv.report.to_dict()
    per_repeat["ensemble"] = [r.to_dict() for r in ensemble_cv.per_repeat]

    report = {
        "tool": {"name": "idsforge", "version": __version__},
        "created_utc": _utc_now(),
        "config": {
            "input": opts.require("input"),
            "classifiers": [s.kind for s in specs],
            "rule": rule.value,
            "k": k,
            "repeats": repeats,
            "seed": seed,
            "threads": threads,
            "adr_mode": adr_mode,
            "n_trees": specs[0].n_trees,
            "min_leaf": specs[0].params.min_leaf,
            "max_depth": specs[0].params.max_depth,
            "min_gain": specs[0].params.min_gain,
            "rho": specs[0].rho,
        },
        "selection": selection,
        "majority_caveat": (rule is CombinationRule.MAJORITY_VOTING
                            and len(specs) < ds.n_classes),
        "results": results,
        "per_repeat": per_repeat,
        "confusion": {
            "class_names": ensemble_cv.confusion.class_names,
            "counts": [[int(v) for v in row] for row in ensemble_cv.confusion.counts],
        },
    }
    _write_json(os.path.join(out_dir, "report.json"), report)
    _confusion_to_csv(ensemble_cv.confusion, os.path.join(out_dir, "confusion.csv"))
    print(f"ensemble accuracy {ensemble_cv.report.accuracy:.4f}, "
          f"FAR {ensemble_cv.report.far:.4f} -> {out_dir}")
    return 0


def _parse_alphas(opts: Options) -> list[float]:
    text = opts.get("alpha-list", None)
    if text is None:
        return list(ALPHAS)
    alphas = []
    for tok in str(text).replace(",", " ").split():
        try:
            alphas.append(float(tok))
        except ValueError:
            raise InputError(f"cannot parse alpha {tok!r}") from None
    return alphas or list(ALPHAS)


def cmd_stats(opts: Options) -> int:
    path = opts.require("input")
    values, algorithms, datasets = load_metric_table(path)
    alphas = _parse_alphas(opts)
    out_dir = opts.get("out", "stats")

    if opts.get("mean-ranks", False, bool):
        if values.shape[0] != 1:
            raise InputError("--mean-ranks expects a single row of mean ranks")
        n = opts.require("n-datasets", int)
        mean_ranks = values[0]
        friedman = friedman_from_mean_ranks(mean_ranks, n)
    elif opts.get("ranks", False, bool):
        table = RankTable(algorithms=algorithms, datasets=datasets, ranks=values,
                          higher_is_better=False)
        n = table.n
        friedman = friedman_test(table)
        mean_ranks = table.mean_ranks()
    else:
        higher = not opts.get("lower-is-better", False, bool)
        table = rank_algorithms(values, higher_is_better=higher,
                                algorithms=algorithms, datasets=datasets)
        n = table.n
        friedman = friedman_test(table)
        mean_ranks = table.mean_ranks()

    nemenyi = {}
    for alpha in alphas:
        nemenyi[str(alpha)] = nemenyi_cd(mean_ranks, n, alpha,
                                         algorithms=algorithms).to_dict()

    payload = {
        "algorithms": algorithms,
        "n_datasets": n,
        "mean_ranks": {name: float(r) for name, r in zip(algorithms, mean_ranks)},
        "friedman": friedman.to_dict(),
        "nemenyi": nemenyi,
    }
    _write_json(os.path.join(out_dir, "stats.json"), payload)

    if opts.get("cd-summary", False, bool):
        lines = []
        for alpha in alphas:
            entry = nemenyi[str(alpha)]
            lines.append(f"alpha={alpha}: CD={entry['cd']:.4f}")
            if entry["significant_pairs"]:
                for pair in entry["significant_pairs"]:
                    lines.append(f"  {pair['first']} vs {pair['second']}: "
                                 f"rank gap {pair['rank_difference']:.3f}")
            else:
                lines.append("  no significant pairs")
        with open(os.path.join(out_dir, "cd_summary.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    print(f"F-statistic {friedman.f_statistic:.4f}, p {friedman.p_value:.4f} -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="idsforge",
        description="Feature selection and tree-ensemble evaluation for intrusion detection CSVs.",
    )
    parser.add_argument("--version", action="version", version=f"idsforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="properties-style config file; flags win")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--threads", type=int,
                       help="worker threads (default: IDSFORGE_THREADS or machine parallelism)")

    p = sub.add_parser("preprocess", help="clean, encode and scale a raw CSV")
    common(p)
    p.add_argument("--input", help="raw CSV file")
    p.add_argument("--label-column", help="label column name or 0-based index")
    p.add_argument("--normal-class", help="class name treated as benign traffic")
    p.add_argument("--no-header", action="store_const", const=True, default=None,
                   help="input CSV has no header row")

    p = sub.add_parser("select", help="pick a feature subset from a preprocessed dataset")
    common(p)
    p.add_argument("--input", help="dataset artifact directory")
    p.add_argument("--selector", choices=SELECTORS)
    p.add_argument("--top", type=int, help="feature count for ig / igr")
    p.add_argument("--features", help="comma list of feature indices (selector 'list')")
    p.add_argument("--bins", type=int, help="discretization bins (default 10)")
    p.add_argument("--n-bats", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--alpha", type=float, help="loudness decay in (0,1)")
    p.add_argument("--gamma", type=float, help="pulse-rate growth > 0")
    p.add_argument("--f-min", type=float)
    p.add_argument("--f-max", type=float)

    p = sub.add_parser("evaluate", help="cross-validate classifiers and their ensemble")
    common(p)
    p.add_argument("--input", help="dataset artifact directory")
    p.add_argument("--selector", choices=SELECTORS)
    p.add_argument("--top", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--n-bats", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--features", help="comma list of feature indices")
    p.add_argument("--subset-file", help="subset.json or subset.txt from 'select'")
    p.add_argument("--classifiers", help="comma list from: c45, rf, forest_pa")
    p.add_argument("--rule", choices=[r.value for r in CombinationRule])
    p.add_argument("--k", type=int, help="fold count (default 10)")
    p.add_argument("--repeats", type=int, help="repetitions (default 1)")
    p.add_argument("--n-trees", type=int, help="trees per forest (default 100)")
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-gain", type=float)
    p.add_argument("--rho", type=float, help="weight-band separation (default 1e-4)")
    p.add_argument("--adr-mode", choices=["exact_class", "binary"])

    p = sub.add_parser("stats", help="Friedman / Nemenyi analysis of a metric table")
    common(p)
    p.add_argument("--input", help="metric table CSV")
    p.add_argument("--alpha-list", help="significance levels, e.g. '0.05,0.1'")
    p.add_argument("--lower-is-better", action="store_const", const=True, default=None,
                   help="rank smaller metric values as better")
    p.add_argument("--ranks", action="store_const", const=True, default=None,
                   help="input rows are already rank rows")
    p.add_argument("--mean-ranks", action="store_const", const=True, default=None,
                   help="input is a single row of mean ranks (needs --n-datasets)")
    p.add_argument("--n-datasets", type=int, help="dataset count behind mean ranks")
    p.add_argument("--cd-summary", action="store_const", const=True, default=None,
                   help="also write a plain-text critical-difference summary")
    return parser


COMMANDS = {
    "preprocess": cmd_preprocess,
    "select": cmd_select,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = Options(args)
        return COMMANDS[args.command](opts)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - map unexpected failures to exit 3
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
