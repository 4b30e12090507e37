"""Command-line interface for the staged pipeline.

Every pipeline subcommand runs its prerequisite stages first (idempotently,
via the run manifest), so `eegmotor eval -c run.yaml` takes a fresh cache
all the way to metrics.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import yaml

from . import pipeline as pl
from .dataset import fetch_subject
from .evaluation import DEFAULT_SWEEP, intra_subject_evaluate, window_sweep
from .persist import read_csv
from .report import write_subject_csv, write_sweep_csv


def _parse_subjects(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"no subjects in {text!r}")
    return out


def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("-c", "--config", help="YAML pipeline config file")
    p.add_argument("--seed", type=int, help="global seed override")
    p.add_argument("--subjects", type=_parse_subjects,
                   help="subjects, e.g. '1' or '1-9' or '1,3,5'")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--source", help="corpus URL or local directory")
    p.add_argument("--cache-dir", help="download cache directory")
    return p


def _filter_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--notch-hz", type=float)
    p.add_argument("--notch-q", type=float)
    p.add_argument("--bp-low", type=float)
    p.add_argument("--bp-high", type=float)
    p.add_argument("--bp-order", type=int)
    p.add_argument("--ica-hp-hz", type=float)
    return p


def _ica_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--n-components", type=int)
    p.add_argument("--zscore-limit", type=float)
    p.add_argument("--abs-kurtosis-limit", type=float)
    p.add_argument("--central-moment-limit", type=float)
    p.add_argument("--pearson-limit", type=float)
    p.add_argument("--use-abs-kurtosis", action="store_true", default=None)
    p.add_argument("--use-central-moments", action="store_true", default=None)
    p.add_argument("--use-pearson", action="store_true", default=None)
    return p


def _window_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--window-sec", type=float)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--stride", type=int)
    group.add_argument("--overlap-pct", type=float)
    return p


def _train_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--split", type=float, help="train fraction, e.g. 0.8")
    p.add_argument("--split-mode", choices=["window-random", "trial-wise"])
    p.add_argument("--feature-mode", choices=["time", "frequency", "both"])
    p.add_argument("--paper-protocol", action="store_true", default=None,
                   help="fit the normalizer on the full matrix")
    return p


def _set(raw: dict, section: str, key: str, value) -> None:
    if value is not None:
        raw.setdefault(section, {})[key] = value


def build_config(args) -> pl.PipelineConfig:
    if getattr(args, "config", None):
        raw = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(raw, dict):
            raise pl.ConfigError(f"{args.config}: top level must be a mapping")
    else:
        raw = {}
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "subjects", None):
        raw["subjects"] = args.subjects
    if getattr(args, "out", None):
        raw["out_dir"] = args.out
    _set(raw, "data", "source", getattr(args, "source", None))
    _set(raw, "data", "cache_dir", getattr(args, "cache_dir", None))
    _set(raw, "filters", "notch_hz", getattr(args, "notch_hz", None))
    _set(raw, "filters", "notch_q", getattr(args, "notch_q", None))
    _set(raw, "filters", "bp_low", getattr(args, "bp_low", None))
    _set(raw, "filters", "bp_high", getattr(args, "bp_high", None))
    _set(raw, "filters", "bp_order", getattr(args, "bp_order", None))
    _set(raw, "filters", "ica_hp_hz", getattr(args, "ica_hp_hz", None))
    _set(raw, "ica", "n_components", getattr(args, "n_components", None))
    _set(raw, "ica", "zscore_limit", getattr(args, "zscore_limit", None))
    _set(raw, "ica", "abs_kurtosis_limit", getattr(args, "abs_kurtosis_limit", None))
    _set(raw, "ica", "central_moment_limit",
         getattr(args, "central_moment_limit", None))
    _set(raw, "ica", "pearson_limit", getattr(args, "pearson_limit", None))
    _set(raw, "ica", "use_abs_kurtosis", getattr(args, "use_abs_kurtosis", None))
    _set(raw, "ica", "use_central_moments",
         getattr(args, "use_central_moments", None))
    _set(raw, "ica", "use_pearson", getattr(args, "use_pearson", None))
    if getattr(args, "window_sec", None) is not None:
        _set(raw, "window", "window_sec", args.window_sec)
    if getattr(args, "stride", None) is not None:
        raw.setdefault("window", {}).pop("overlap_pct", None)
        raw["window"]["stride"] = args.stride
    if getattr(args, "overlap_pct", None) is not None:
        raw.setdefault("window", {}).pop("stride", None)
        raw["window"]["overlap_pct"] = args.overlap_pct
    _set(raw, "train", "epochs", getattr(args, "epochs", None))
    _set(raw, "train", "batch_size", getattr(args, "batch", None))
    _set(raw, "split", "ratio", getattr(args, "split", None))
    _set(raw, "split", "mode", getattr(args, "split_mode", None))
    _set(raw, "features", "mode", getattr(args, "feature_mode", None))
    _set(raw, "features", "full_matrix_normalization",
         getattr(args, "paper_protocol", None))
    return pl.config_from_dict(raw)


def _run_through(args, through: str) -> int:
    config = build_config(args)
    manifest, outcomes = pl.run_pipeline(config, through=through)
    print(f"completed through stage '{through}' for subjects "
          f"{list(config.subjects)}; manifest: {manifest.path}")
    for outcome in outcomes:
        print(
            f"  S{outcome.subject:03d}: train {outcome.train_accuracy:.4f}  "
            f"eval({config.split.mode}) {outcome.eval_accuracy:.4f}  "
            f"trial-wise {outcome.trialwise_accuracy:.4f}"
        )
    return 0


def _cmd_train(args) -> int:
    rc = _run_through(args, "train")
    if rc == 0 and args.checkpoint:
        config = build_config(args)
        for sid in config.subjects:
            src = Path(config.out_dir) / f"S{sid:03d}" / "train" / "model.emc"
            dest = Path(args.checkpoint)
            if len(config.subjects) > 1:
                dest = dest.with_name(f"S{sid:03d}_{dest.name}")
            shutil.copyfile(src, dest)
            print(f"checkpoint copied to {dest}")
    return rc


def _cmd_eval(args) -> int:
    config = build_config(args)
    if len(config.subjects) > 1:
        results, aggregate = intra_subject_evaluate(config.subjects, config)
        path = Path(config.out_dir) / "per_subject.csv"
        write_subject_csv(path, results, aggregate)
        for r in results:
            status = r.error or (
                f"train {r.train_accuracy:.4f}  eval {r.eval_accuracy:.4f}  "
                f"trial-wise {r.trialwise_accuracy:.4f}"
            )
            print(f"  S{r.subject:03d}: {status}")
        print(
            f"mean eval accuracy over {aggregate['n_completed']} subjects: "
            f"{aggregate['mean_accuracy']:.4f} "
            f"(std {aggregate['std_accuracy']:.4f}); report: {path}"
        )
    else:
        _run_through(args, "evaluate")
    if args.check:
        return _run_checks(args.check, Path(config.out_dir))
    return 0


def _cmd_sweep(args) -> int:
    config = build_config(args)
    if args.grid:
        configs = []
        for item in args.grid.split(","):
            w, o = item.split(":")
            configs.append((float(w), float(o)))
    else:
        configs = list(DEFAULT_SWEEP)
    subject = config.subjects[0]
    rows = window_sweep(configs, subject, config)
    path = Path(config.out_dir) / "sweep.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(path, rows)
    print(f"{'win(s)':>7} {'ovl%':>6} {'stride':>6} {'train':>7} {'eval':>7} "
          f"{'windows':>8} {'sec':>8}")
    for r in rows:
        print(f"{r.window_sec:7.2f} {r.overlap_pct:6.1f} {r.stride:6d} "
              f"{r.train_accuracy:7.4f} {r.eval_accuracy:7.4f} "
              f"{r.n_windows:8d} {r.wall_time_sec:8.1f}")
    print(f"sweep report: {path}")
    return 0


def _cmd_fetch(args) -> int:
    config = build_config(args)
    for sid in config.subjects:
        paths = fetch_subject(sid, source=config.data.source,
                              cache_dir=config.cache_dir())
        print(f"S{sid:03d}: {len(paths)} run files in {paths[0].parent}")
    return 0


def _cmd_config(args) -> int:
    if args.config_action == "print-defaults":
        sys.stdout.write(pl.default_config_yaml())
        return 0
    raise SystemExit(f"unknown config action {args.config_action!r}")


def _run_checks(manifest_path: str, out_dir: Path) -> int:
    spec = yaml.safe_load(Path(manifest_path).read_text())
    checks = spec.get("checks", []) if isinstance(spec, dict) else []
    if not checks:
        print(f"no checks found in {manifest_path}")
        return 1
    failures = 0
    for check in checks:
        name = check.get("name", "unnamed")
        try:
            value = _lookup_value(out_dir, check)
            ok, detail = _compare(value, check)
        except Exception as exc:
            ok, detail = False, f"error: {exc}"
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failures += 0 if ok else 1
    return 1 if failures else 0


def _lookup_value(out_dir: Path, check: dict) -> float:
    header, rows = read_csv(out_dir / check["file"])
    match = check.get("match", {})
    column = check["column"]
    col_idx = header.index(column)
    for row in rows:
        if all(row[header.index(k)] == str(v) for k, v in match.items()):
            return float(row[col_idx])
    raise ValueError(f"no row matching {match} in {check['file']}")


def _compare(value: float, check: dict) -> tuple[bool, str]:
    if "min" in check:
        ok = value >= float(check["min"])
        return ok, f"value {value:.6g} >= {check['min']}" + ("" if ok else " FAILED")
    if "max" in check:
        ok = value <= float(check["max"])
        return ok, f"value {value:.6g} <= {check['max']}" + ("" if ok else " FAILED")
    if "equals" in check:
        tol = float(check.get("tol", 0.0))
        ok = abs(value - float(check["equals"])) <= tol
        return ok, f"value {value:.6g} == {check['equals']} +- {tol}"
    raise ValueError("check needs one of min/max/equals")


def _cmd_check(args) -> int:
    return _run_checks(args.manifest, Path(args.out or "."))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="eegmotor",
        description="Four-class motor execution/imagery EEG classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common, filt, ica, win, tr = (_common_parent(), _filter_parent(),
                                  _ica_parent(), _window_parent(),
                                  _train_parent())
    all_parents = [common, filt, ica, win, tr]

    sub.add_parser("fetch", parents=[common],
                   help="download/copy run files into the cache"
                   ).set_defaults(func=_cmd_fetch)
    sub.add_parser("preprocess", parents=[common, filt],
                   help="notch + band-pass + ICA high-pass streams"
                   ).set_defaults(func=lambda a: _run_through(a, "preprocess"))

    ica_cmd = sub.add_parser("ica", help="ICA decomposition stages")
    ica_sub = ica_cmd.add_subparsers(dest="ica_action", required=True)
    ica_sub.add_parser("fit", parents=[common, filt, ica]
                       ).set_defaults(func=lambda a: _run_through(a, "ica_fit"))
    ica_sub.add_parser("detect", parents=[common, filt, ica]
                       ).set_defaults(func=lambda a: _run_through(a, "ica_detect"))
    ica_sub.add_parser("apply", parents=[common, filt, ica]
                       ).set_defaults(func=lambda a: _run_through(a, "ica_apply"))

    sub.add_parser("segment", parents=[common, filt, ica, win],
                   help="window + label the cleaned runs"
                   ).set_defaults(func=lambda a: _run_through(a, "segment"))
    sub.add_parser("features", parents=all_parents,
                   help="assemble the per-window feature matrix"
                   ).set_defaults(func=lambda a: _run_through(a, "features"))

    train_cmd = sub.add_parser("train", parents=all_parents,
                               help="train the classifier")
    train_cmd.add_argument("--checkpoint", help="copy the best model here")
    train_cmd.set_defaults(func=_cmd_train)

    eval_cmd = sub.add_parser("eval", parents=all_parents,
                              help="evaluate; multi-subject runs aggregate")
    eval_cmd.add_argument("--check", help="acceptance manifest to verify")
    eval_cmd.set_defaults(func=_cmd_eval)

    sweep_cmd = sub.add_parser("sweep", parents=all_parents,
                               help="window size / overlap sweep")
    sweep_cmd.add_argument("--grid",
                           help="win_sec:overlap pairs, e.g. '2:75,3.5:99'")
    sweep_cmd.set_defaults(func=_cmd_sweep)

    sub.add_parser("report", parents=all_parents,
                   help="plots + summary tables"
                   ).set_defaults(func=lambda a: _run_through(a, "report"))

    config_cmd = sub.add_parser("config", help="configuration helpers")
    config_cmd.add_argument("config_action", choices=["print-defaults"])
    config_cmd.set_defaults(func=_cmd_config)

    check_cmd = sub.add_parser("check", help="verify an acceptance manifest")
    check_cmd.add_argument("manifest")
    check_cmd.add_argument("--out", help="report directory the checks refer to")
    check_cmd.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (pl.ConfigError, pl.PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
