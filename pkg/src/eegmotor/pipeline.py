"""Pipeline orchestration: config file, staged execution, run manifest.

Stages per subject: fetch -> preprocess -> ica_fit -> ica_detect ->
ica_apply -> segment -> features -> train -> evaluate -> report. Each stage
persists its artifacts under the output directory and records a hash of its
inputs in the manifest; a rerun skips stages whose recorded hash and
artifact checksums still match, so editing one config field recomputes only
the stages downstream of it.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import os
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import report as report_mod
from .dataset import (PAPER_MONTAGE, TaskClass, default_cache_dir,
                      fetch_subject, read_run, run_filename, runs_for_task,
                      select_channels)
from .edf import Event
from .evaluation import (MetricsReport, SplitMode, SplitSpec,
                         confusion_and_metrics, split_dataset)
from .features import (FEATURE_MODES, FeatureNormalizer,
                       assemble_feature_matrix)
from .filters import FilterSpec, design_filter, filter_zero_phase
from .ica import (ArtifactThresholds, ComponentStats, FastIcaConfig,
                  IcaDecomposition, Whitening, component_stats,
                  detect_artifact_components, fit_ica, remove_components)
from .mlp import DEFAULT_HIDDEN, TrainConfig, predict, train
from .persist import (load_feature_csv, load_model, load_signal, read_arrays,
                      read_csv, save_feature_csv, save_model, save_signal,
                      write_arrays, write_csv)
from .windows import LabeledWindow, MotionClass, WindowSpec, label_windows, segment

STAGES = ("fetch", "preprocess", "ica_fit", "ica_detect", "ica_apply",
          "segment", "features", "train", "evaluate", "report")

TASK_ORDER = (TaskClass.MOTOR_EXECUTION, TaskClass.MOTOR_IMAGERY)


class PipelineError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DataConfig:
    source: str = "https://physionet.org/files/eegmmidb/1.0.0/"
    cache_dir: str | None = None


@dataclass(frozen=True)
class FilterConfig:
    notch_hz: float = 50.0
    notch_q: float = 30.0
    bp_low: float = 0.5
    bp_high: float = 40.0
    bp_order: int = 4
    ica_hp_hz: float = 1.0
    ica_hp_order: int = 4


@dataclass(frozen=True)
class IcaSettings:
    n_components: int = 30
    max_iter: int = 200
    tol: float = 1e-4
    zscore_limit: float = 0.23
    abs_kurtosis_limit: float = 8.83
    central_moment_limit: float = 3.05
    pearson_limit: float = 0.5
    use_zscore: bool = True
    use_abs_kurtosis: bool = False
    use_central_moments: bool = False
    use_pearson: bool = False

    def thresholds(self) -> ArtifactThresholds:
        return ArtifactThresholds(
            zscore_limit=self.zscore_limit,
            abs_kurtosis_limit=self.abs_kurtosis_limit,
            central_moment_limit=self.central_moment_limit,
            pearson_limit=self.pearson_limit,
            use_zscore=self.use_zscore,
            use_abs_kurtosis=self.use_abs_kurtosis,
            use_central_moments=self.use_central_moments,
            use_pearson=self.use_pearson,
        )


@dataclass(frozen=True)
class WindowConfig:
    window_sec: float = 3.5
    stride: int | None = 1
    overlap_pct: float | None = None

    def spec(self, fs: float) -> WindowSpec:
        return WindowSpec.from_seconds(
            self.window_sec, fs, stride=self.stride, overlap_pct=self.overlap_pct
        )


@dataclass(frozen=True)
class FeatureConfig:
    mode: str = "both"
    welch_segment: int = 256
    welch_overlap: int = 128
    population_moments: bool = False
    full_matrix_normalization: bool = False

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ConfigError(f"feature mode must be one of {FEATURE_MODES}")


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    shuffle: bool = True
    hidden: tuple[int, ...] = DEFAULT_HIDDEN


@dataclass(frozen=True)
class SplitConfig:
    ratio: float = 0.8
    mode: str = "window-random"

    def spec(self, seed: int) -> SplitSpec:
        return SplitSpec(ratio=self.ratio, mode=SplitMode(self.mode), seed=seed)


@dataclass(frozen=True)
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    filters: FilterConfig = field(default_factory=FilterConfig)
    ica: IcaSettings = field(default_factory=IcaSettings)
    window: WindowConfig = field(default_factory=WindowConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    split: SplitConfig = field(default_factory=SplitConfig)
    montage: tuple[str, ...] = PAPER_MONTAGE
    subjects: tuple[int, ...] = (1,)
    seed: int = 0
    out_dir: str = "eegmotor-out"

    def cache_dir(self) -> Path:
        if self.data.cache_dir:
            return Path(self.data.cache_dir)
        return default_cache_dir()


_SECTION_TYPES = {
    "data": DataConfig,
    "filters": FilterConfig,
    "ica": IcaSettings,
    "window": WindowConfig,
    "features": FeatureConfig,
    "train": TrainSettings,
    "split": SplitConfig,
}


def _build_section(cls, raw: dict, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must be a mapping")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) under {path}: {sorted(unknown)}")
    # a null value means "use the default"
    raw = {k: v for k, v in raw.items() if v is not None}
    if cls is WindowConfig and "stride" in raw and "overlap_pct" in raw:
        raise ConfigError("window.stride and window.overlap_pct are mutually exclusive")
    kwargs = dict(raw)
    if cls is WindowConfig and "overlap_pct" in raw:
        kwargs.setdefault("stride", None)
    if cls is TrainSettings and "hidden" in kwargs:
        kwargs["hidden"] = tuple(int(h) for h in kwargs["hidden"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path} section: {exc}") from exc


def config_from_dict(raw: dict) -> PipelineConfig:
    raw = dict(raw or {})
    allowed = set(_SECTION_TYPES) | {"montage", "subjects", "seed", "out_dir"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTION_TYPES.items():
        if name in raw:
            kwargs[name] = _build_section(cls, raw[name], name)
    if "montage" in raw:
        montage = raw["montage"]
        if montage != "paper46":
            if not isinstance(montage, (list, tuple)) or not montage:
                raise ConfigError("montage must be 'paper46' or a channel list")
            kwargs["montage"] = tuple(str(m) for m in montage)
    if "subjects" in raw:
        subjects = raw["subjects"]
        if isinstance(subjects, int):
            subjects = [subjects]
        kwargs["subjects"] = tuple(int(s) for s in subjects)
    if "seed" in raw:
        kwargs["seed"] = int(raw["seed"])
    if "out_dir" in raw:
        kwargs["out_dir"] = str(raw["out_dir"])
    try:
        config = PipelineConfig(**kwargs)
        # eagerly validate derived specs (stride/overlap, ratio, mode)
        config.window.spec(fs=160.0)
        config.split.spec(seed=0)
        config.ica.thresholds()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def load_config(path) -> PipelineConfig:
    """Read a YAML config file; omitted fields take the documented defaults."""
    text = Path(path).read_text()
    raw = yaml.safe_load(text)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def config_to_dict(config: PipelineConfig) -> dict:
    out = dataclasses.asdict(config)
    out["montage"] = list(config.montage)
    out["subjects"] = list(config.subjects)
    out["train"]["hidden"] = list(config.train.hidden)
    return out


def default_config_yaml() -> str:
    return yaml.safe_dump(config_to_dict(PipelineConfig()), sort_keys=False)


# ---------------------------------------------------------------------------
# hashing / manifest


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _hash_obj(*objs) -> str:
    h = hashlib.sha256()
    for obj in objs:
        h.update(_canonical(obj).encode())
    return h.hexdigest()


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def derived_seed(seed: int, tag: str) -> int:
    return int(
        np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())])
        .generate_state(1)[0]
    )


class RunManifest:
    """Stage ledger persisted as JSON in the output directory."""

    FILENAME = "manifest.json"

    def __init__(self, out_dir: Path, config_hash: str):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / self.FILENAME
        self.data = {
            "format": 1,
            "config_hash": config_hash,
            "created": _now(),
            "updated": _now(),
            "stages": {},
        }
        if self.path.is_file():
            try:
                existing = json.loads(self.path.read_text())
                if isinstance(existing, dict) and "stages" in existing:
                    existing["config_hash"] = config_hash
                    self.data = existing
            except json.JSONDecodeError:
                pass

    def stage_current(self, key: str, stage_hash: str) -> bool:
        entry = self.data["stages"].get(key)
        if not entry or entry.get("hash") != stage_hash:
            return False
        for rel, digest in entry.get("artifacts", {}).items():
            path = self.out_dir / rel
            if not path.is_file() or _hash_file(path) != digest:
                return False
        return True

    def record(self, key: str, stage_hash: str, artifact_paths) -> None:
        artifacts = {}
        for path in artifact_paths:
            path = Path(path)
            rel = str(path.relative_to(self.out_dir))
            artifacts[rel] = _hash_file(path)
        self.data["stages"][key] = {"hash": stage_hash, "artifacts": artifacts}
        self.data["updated"] = _now()
        self.save()

    def save(self) -> None:
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True))
        os.replace(tmp, self.path)

    def referenced_files(self) -> set[str]:
        refs = {self.FILENAME}
        for entry in self.data["stages"].values():
            refs.update(entry.get("artifacts", {}))
        return refs


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


class _Lock:
    """Exclusive per-output-directory lock file."""

    def __init__(self, out_dir: Path):
        self.path = Path(out_dir) / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise PipelineError(
                f"output directory is locked by another run ({self.path}); "
                "remove the stale .lock file if no run is active"
            ) from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc_info):
        self.path.unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# stage implementations (all file -> file, so any stage can be regenerated)

RUN_IDS = tuple(sorted(runs_for_task(TaskClass.MOTOR_EXECUTION)
                       | runs_for_task(TaskClass.MOTOR_IMAGERY)))


def _subject_dir(config: PipelineConfig, subject: int) -> Path:
    return Path(config.out_dir) / f"S{subject:03d}"


def _events_to_meta(events) -> list[list]:
    return [[e.label, e.onset, e.duration] for e in events]


def _events_from_meta(meta_events) -> list[Event]:
    return [Event(label=l, onset=float(o), duration=float(d))
            for l, o, d in meta_events]


def _stage_fetch(config: PipelineConfig, subject: int) -> list[Path]:
    return fetch_subject(subject, source=config.data.source,
                         cache_dir=config.cache_dir())


def _stage_preprocess(config: PipelineConfig, subject: int, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    cache = config.cache_dir() / f"S{subject:03d}"
    fc = config.filters
    artifacts = []
    for run_id in RUN_IDS:
        rec = read_run(cache / run_filename(subject, run_id),
                       subject_id=subject, run_id=run_id)
        rec = select_channels(rec, config.montage)
        notch = design_filter(FilterSpec.notch(fc.notch_hz, rec.fs, q=fc.notch_q))
        band = design_filter(FilterSpec.bandpass(fc.bp_low, fc.bp_high, rec.fs,
                                                 order=fc.bp_order))
        high = design_filter(FilterSpec.highpass(fc.ica_hp_hz, rec.fs,
                                                 order=fc.ica_hp_order))
        notched = filter_zero_phase(rec.data, notch)
        meta = {
            "fs": rec.fs,
            "channels": rec.channels,
            "events": _events_to_meta(rec.events),
            "subject": subject,
            "run": run_id,
        }
        bp_path = out / f"bp_R{run_id:02d}.emc"
        hp_path = out / f"hp_R{run_id:02d}.emc"
        save_signal(bp_path, filter_zero_phase(notched, band), meta)
        save_signal(hp_path, filter_zero_phase(notched, high), meta)
        artifacts += [bp_path, hp_path]
    return artifacts


def _load_task_hp(pre_dir: Path, task: TaskClass) -> tuple[np.ndarray, dict]:
    blocks, meta = [], None
    for run_id in sorted(runs_for_task(task)):
        signal, m = load_signal(pre_dir / f"hp_R{run_id:02d}.emc")
        blocks.append(signal)
        meta = m
    return np.concatenate(blocks, axis=1), meta


def _stage_ica_fit(config: PipelineConfig, subject: int, out: Path,
                   pre_dir: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    ica_seed = derived_seed(config.seed, "ica")
    artifacts = []
    for task in TASK_ORDER:
        X, meta = _load_task_hp(pre_dir, task)
        fast_cfg = FastIcaConfig(max_iter=config.ica.max_iter,
                                 tol=config.ica.tol, seed=ica_seed)
        whitening, decomposition = fit_ica(
            X, n_components=config.ica.n_components, config=fast_cfg
        )
        stats = component_stats(decomposition.S)
        path = out / f"ica_{task.value}.emc"
        write_arrays(
            path,
            {
                "channel_means": whitening.channel_means,
                "whitening_matrix": whitening.matrix,
                "eigenvalues": whitening.eigenvalues,
                "W": decomposition.W,
                "A": decomposition.A,
                "stat_variance": stats.variance,
                "stat_skewness": stats.skewness,
                "stat_kurtosis": stats.kurtosis,
                "stat_kurtosis_zscore": stats.kurtosis_zscore,
                "stat_entropy": stats.entropy,
                "stat_max_abs_pearson": stats.max_abs_pearson,
                "stat_degenerate": stats.degenerate.astype(np.int64),
            },
            meta={
                "task": task.value,
                "converged": decomposition.converged,
                "n_iter": decomposition.n_iter,
                "n_components": config.ica.n_components,
                "max_iter": config.ica.max_iter,
                "tol": config.ica.tol,
                "seed": ica_seed,
                "channels": meta["channels"],
                "fs": meta["fs"],
            },
        )
        artifacts.append(path)
    return artifacts


def _load_decomposition(path: Path) -> tuple[Whitening, IcaDecomposition,
                                             ComponentStats, dict]:
    arrays, meta = read_arrays(path)
    whitening = Whitening(
        channel_means=arrays["channel_means"],
        matrix=arrays["whitening_matrix"],
        eigenvalues=arrays["eigenvalues"],
    )
    decomposition = IcaDecomposition(
        W=arrays["W"], S=np.empty((arrays["W"].shape[0], 0)),
        converged=bool(meta.get("converged", True)),
        n_iter=int(meta.get("n_iter", 0)), A=arrays.get("A"),
    )
    stats = ComponentStats(
        variance=arrays["stat_variance"],
        skewness=arrays["stat_skewness"],
        kurtosis=arrays["stat_kurtosis"],
        kurtosis_zscore=arrays["stat_kurtosis_zscore"],
        entropy=arrays["stat_entropy"],
        max_abs_pearson=arrays["stat_max_abs_pearson"],
        degenerate=arrays["stat_degenerate"].astype(bool),
    )
    return whitening, decomposition, stats, meta


def _stage_ica_detect(config: PipelineConfig, subject: int, out: Path,
                      fit_dir: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    thresholds = config.ica.thresholds()
    exclusions = {}
    artifacts = []
    for task in TASK_ORDER:
        _, _, stats, _ = _load_decomposition(fit_dir / f"ica_{task.value}.emc")
        exclude = detect_artifact_components(stats, thresholds)
        exclusions[task.value] = exclude
        csv_path = out / f"components_{task.value}.csv"
        report_mod.write_component_stats_csv(csv_path, stats, exclude)
        artifacts.append(csv_path)
    path = out / "exclusions.json"
    path.write_text(json.dumps(exclusions, indent=2, sort_keys=True))
    artifacts.append(path)
    return artifacts


def _stage_ica_apply(config: PipelineConfig, subject: int, out: Path,
                     pre_dir: Path, fit_dir: Path, detect_dir: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    exclusions = json.loads((detect_dir / "exclusions.json").read_text())
    artifacts = []
    for task in TASK_ORDER:
        whitening, decomposition, _, _ = _load_decomposition(
            fit_dir / f"ica_{task.value}.emc"
        )
        exclude = exclusions[task.value]
        for run_id in sorted(runs_for_task(task)):
            signal, meta = load_signal(pre_dir / f"bp_R{run_id:02d}.emc")
            cleaned = remove_components(signal, whitening, decomposition, exclude)
            path = out / f"cleaned_R{run_id:02d}.emc"
            meta["excluded_components"] = list(exclude)
            save_signal(path, cleaned, meta)
            artifacts.append(path)
    return artifacts


def _stage_segment(config: PipelineConfig, subject: int, out: Path,
                   pre_dir: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    window_rows = []
    counter_rows = []
    spec = None
    for task in TASK_ORDER:
        for run_id in sorted(runs_for_task(task)):
            _, meta = load_signal(pre_dir / f"bp_R{run_id:02d}.emc")
            fs = float(meta["fs"])
            n_samples = _signal_length(pre_dir / f"bp_R{run_id:02d}.emc")
            spec = config.window.spec(fs)
            starts = segment(n_samples, spec)
            events = _events_from_meta(meta["events"])
            windows, counters = label_windows(
                starts, events, task, fs, spec.window_len,
                subject=subject, run=run_id,
            )
            for w in windows:
                window_rows.append([w.subject, w.run, w.start, int(w.label),
                                    w.event_index])
            counter_rows.append([
                run_id, counters["kept"], counters["dropped_rest"],
                counters["dropped_tie"], counters["dropped_uncovered"],
            ])
    window_rows.sort(key=lambda r: (r[0], r[1], r[2]))
    windows_path = out / "windows.csv"
    write_csv(windows_path, ["subject", "run", "start", "label", "event_index"],
              window_rows)
    counters_path = out / "window_counts.csv"
    write_csv(counters_path,
              ["run", "kept", "dropped_rest", "dropped_tie", "dropped_uncovered"],
              counter_rows)
    spec_path = out / "window_spec.json"
    spec_path.write_text(json.dumps(
        {"window_len": spec.window_len, "stride": spec.stride}, sort_keys=True
    ))
    return [windows_path, counters_path, spec_path]


def _signal_length(path: Path) -> int:
    signal, _ = load_signal(path)
    return signal.shape[1]


def _read_windows_csv(path: Path) -> list[LabeledWindow]:
    _, rows = read_csv(path)
    return [
        LabeledWindow(subject=int(r[0]), run=int(r[1]), start=int(r[2]),
                      label=MotionClass(int(r[3])), event_index=int(r[4]))
        for r in rows
    ]


def _stage_features(config: PipelineConfig, subject: int, out: Path,
                    apply_dir: Path, seg_dir: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    windows = _read_windows_csv(seg_dir / "windows.csv")
    spec_meta = json.loads((seg_dir / "window_spec.json").read_text())
    signals = {}
    fs = None
    channels = None
    for task in TASK_ORDER:
        for run_id in sorted(runs_for_task(task)):
            signal, meta = load_signal(apply_dir / f"cleaned_R{run_id:02d}.emc")
            signals[(subject, run_id)] = signal
            fs = float(meta["fs"])
            channels = meta["channels"]
    matrix = assemble_feature_matrix(
        windows, signals, channels, fs, spec_meta["window_len"],
        mode=config.features.mode,
        segment=config.features.welch_segment,
        overlap=config.features.welch_overlap,
        population_moments=config.features.population_moments,
    )
    path = out / "features.csv"
    save_feature_csv(path, matrix)
    return [path]


def _load_matrix(features_dir: Path, seg_dir: Path):
    X, labels, columns = load_feature_csv(features_dir / "features.csv")
    windows = _read_windows_csv(seg_dir / "windows.csv")
    if len(windows) != len(labels):
        raise PipelineError(
            f"feature rows ({len(labels)}) and window rows ({len(windows)}) disagree"
        )
    trial_keys = np.array([[w.subject, w.run, w.event_index] for w in windows],
                          dtype=np.int64)
    return X, labels, columns, trial_keys


def _train_once(config: PipelineConfig, X, labels, trial_keys, mode: str,
                split_seed: int, train_seed: int):
    spl = SplitSpec(ratio=config.split.ratio, mode=SplitMode(mode),
                    seed=split_seed)
    train_idx, eval_idx = split_dataset(len(labels), spl, trial_keys=trial_keys)
    normalizer = FeatureNormalizer()
    if config.features.full_matrix_normalization:
        normalizer.fit(X)
    else:
        normalizer.fit(X[train_idx])
    Xn = normalizer.transform(X)
    tc = TrainConfig(epochs=config.train.epochs,
                     batch_size=config.train.batch_size,
                     seed=train_seed, shuffle=config.train.shuffle)
    params, history = train(
        Xn, labels, train_idx, eval_idx, config=tc,
        hidden=config.train.hidden, n_classes=len(MotionClass),
        lr=config.train.lr, beta1=config.train.beta1,
        beta2=config.train.beta2, epsilon=config.train.epsilon,
    )
    y_pred = predict(params, Xn[eval_idx])
    matrix, metrics = confusion_and_metrics(labels[eval_idx], y_pred,
                                            n_classes=len(MotionClass))
    return params, history, normalizer, (train_idx, eval_idx), matrix, metrics


def _stage_train(config: PipelineConfig, subject: int, out: Path,
                 features_dir: Path, seg_dir: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    X, labels, _, trial_keys = _load_matrix(features_dir, seg_dir)
    params, history, normalizer, (train_idx, eval_idx), _, _ = _train_once(
        config, X, labels, trial_keys, config.split.mode,
        split_seed=derived_seed(config.seed, "split"),
        train_seed=derived_seed(config.seed, "train"),
    )
    # the embedded hash covers only the training-relevant config (no
    # machine-local paths), so identical configs give identical bytes
    cfg = config_to_dict(config)
    train_hash = _hash_obj(cfg["train"], cfg["split"], config.seed)
    model_path = out / "model.emc"
    save_model(model_path, params, meta={
        "subject": subject,
        "split_mode": config.split.mode,
        "best_epoch": history.best_epoch,
        "train_config_hash": train_hash,
    })
    split_path = out / "split.emc"
    write_arrays(split_path, {"train_idx": train_idx, "eval_idx": eval_idx},
                 meta={"mode": config.split.mode, "ratio": config.split.ratio})
    norm_path = out / "normalizer.txt"
    norm_path.write_text(normalizer.to_text())
    hist_path = out / "history.csv"
    report_mod.write_history_csv(hist_path, history)
    return [model_path, split_path, norm_path, hist_path]


def _stage_evaluate(config: PipelineConfig, subject: int, out: Path,
                    features_dir: Path, seg_dir: Path, train_dir: Path,
                    ) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    X, labels, _, trial_keys = _load_matrix(features_dir, seg_dir)
    params, _ = load_model(train_dir / "model.emc")
    split_arrays, _ = read_arrays(train_dir / "split.emc")
    normalizer = FeatureNormalizer.from_text(
        (train_dir / "normalizer.txt").read_text()
    )
    eval_idx = split_arrays["eval_idx"]
    Xn = normalizer.transform(X)
    y_pred = predict(params, Xn[eval_idx])
    matrix, metrics = confusion_and_metrics(labels[eval_idx], y_pred,
                                            n_classes=len(MotionClass))
    mode = config.split.mode
    artifacts = []
    metrics_path = out / f"metrics_{mode}.csv"
    report_mod.write_metrics_csv(metrics_path, metrics, mode)
    confusion_path = out / f"confusion_{mode}.csv"
    report_mod.write_confusion_csv(confusion_path, matrix)
    artifacts += [metrics_path, confusion_path]

    # the honest split is always reported alongside the window-random one
    if mode == SplitMode.WINDOW_RANDOM.value:
        _, tw_history, _, _, tw_matrix, tw_metrics = _train_once(
            config, X, labels, trial_keys, SplitMode.TRIAL_WISE.value,
            split_seed=derived_seed(config.seed, "split-trialwise"),
            train_seed=derived_seed(config.seed, "train-trialwise"),
        )
        tw_metrics_path = out / "metrics_trial-wise.csv"
        report_mod.write_metrics_csv(tw_metrics_path, tw_metrics, "trial-wise")
        tw_confusion_path = out / "confusion_trial-wise.csv"
        report_mod.write_confusion_csv(tw_confusion_path, tw_matrix)
        tw_hist_path = out / "history_trial-wise.csv"
        report_mod.write_history_csv(tw_hist_path, tw_history)
        artifacts += [tw_metrics_path, tw_confusion_path, tw_hist_path]
    return artifacts


def _stage_report(config: PipelineConfig, subject: int, out: Path,
                  train_dir: Path, eval_dir: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    history = _history_from_csv(train_dir / "history.csv")
    artifacts = list(report_mod.plot_history(out, history, stem="training"))
    summary_path = out / "summary.csv"
    summary = _subject_summary(config, subject, train_dir, eval_dir)
    write_csv(summary_path,
              ["subject", "train_accuracy", "eval_accuracy",
               "trialwise_accuracy", "best_epoch", "split_mode"],
              [summary])
    artifacts.append(summary_path)
    return artifacts


def _history_from_csv(path: Path):
    from .mlp import TrainHistory

    _, rows = read_csv(path)
    history = TrainHistory()
    for r in rows:
        history.loss.append(float(r[1]))
        history.accuracy.append(float(r[2]))
        history.mse.append(float(r[3]))
        history.val_loss.append(float(r[4]))
        history.val_accuracy.append(float(r[5]))
    return history


def _metrics_accuracy(path: Path) -> float:
    _, rows = read_csv(path)
    for r in rows:
        if r[1] == "accuracy":
            return float(r[4])
    raise PipelineError(f"no accuracy row in {path}")


def _subject_summary(config: PipelineConfig, subject: int, train_dir: Path,
                     eval_dir: Path) -> list:
    history = _history_from_csv(train_dir / "history.csv")
    mode = config.split.mode
    eval_acc = _metrics_accuracy(eval_dir / f"metrics_{mode}.csv")
    tw_path = eval_dir / "metrics_trial-wise.csv"
    tw_acc = _metrics_accuracy(tw_path) if tw_path.is_file() else eval_acc
    train_acc = history.accuracy[-1] if len(history) else float("nan")
    best_epoch = int(np.argmax(history.val_accuracy)) if len(history) else -1
    return [subject, train_acc, eval_acc, tw_acc, best_epoch, mode]


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class SubjectOutcome:
    subject: int
    train_accuracy: float
    eval_accuracy: float
    trialwise_accuracy: float
    report: MetricsReport | None
    window_spec: WindowSpec
    n_windows: int
    stage_hashes: dict[str, str]


def _config_dict_no_out(config: PipelineConfig) -> dict:
    d = config_to_dict(config)
    d.pop("out_dir", None)
    return d


def _stage_hashes(config: PipelineConfig, subject: int) -> dict[str, str]:
    cfg = config_to_dict(config)
    h: dict[str, str] = {}
    h["fetch"] = _hash_obj({"subject": subject, "data": cfg["data"]})
    h["preprocess"] = _hash_obj(h["fetch"], cfg["filters"], cfg["montage"])
    ica_fit_cfg = {k: cfg["ica"][k] for k in ("n_components", "max_iter", "tol")}
    h["ica_fit"] = _hash_obj(h["preprocess"], ica_fit_cfg,
                             derived_seed(config.seed, "ica"))
    h["ica_detect"] = _hash_obj(h["ica_fit"], cfg["ica"])
    h["ica_apply"] = _hash_obj(h["ica_fit"], h["ica_detect"])
    h["segment"] = _hash_obj(h["preprocess"], cfg["window"])
    h["features"] = _hash_obj(h["ica_apply"], h["segment"], cfg["features"])
    h["train"] = _hash_obj(h["features"], cfg["train"], cfg["split"], config.seed)
    h["evaluate"] = _hash_obj(h["train"], "evaluate")
    h["report"] = _hash_obj(h["evaluate"], "report")
    return h


def run_subject(config: PipelineConfig, subject: int,
                through: str = "report",
                manifest: RunManifest | None = None) -> SubjectOutcome | None:
    """Run stages fetch..through for one subject, skipping current ones.

    Returns a SubjectOutcome once the evaluate stage has run, else None.
    """
    if through not in STAGES:
        raise ValueError(f"unknown stage {through!r}; expected one of {STAGES}")
    out_root = Path(config.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    own_manifest = manifest is None
    if own_manifest:
        manifest = RunManifest(out_root, _hash_obj(_config_dict_no_out(config)))

    sdir = _subject_dir(config, subject)
    hashes = _stage_hashes(config, subject)
    last = STAGES.index(through)

    dirs = {name: sdir / name for name in STAGES}

    def need(name: str) -> bool:
        return not manifest.stage_current(f"S{subject:03d}/{name}", hashes[name])

    def record(name: str, artifacts) -> None:
        manifest.record(f"S{subject:03d}/{name}", hashes[name], artifacts)

    runners = {
        "fetch": lambda: _record_fetch(config, subject, manifest, hashes),
        "preprocess": lambda: record(
            "preprocess", _stage_preprocess(config, subject, dirs["preprocess"])),
        "ica_fit": lambda: record(
            "ica_fit", _stage_ica_fit(config, subject, dirs["ica_fit"],
                                      dirs["preprocess"])),
        "ica_detect": lambda: record(
            "ica_detect", _stage_ica_detect(config, subject, dirs["ica_detect"],
                                            dirs["ica_fit"])),
        "ica_apply": lambda: record(
            "ica_apply", _stage_ica_apply(config, subject, dirs["ica_apply"],
                                          dirs["preprocess"], dirs["ica_fit"],
                                          dirs["ica_detect"])),
        "segment": lambda: record(
            "segment", _stage_segment(config, subject, dirs["segment"],
                                      dirs["preprocess"])),
        "features": lambda: record(
            "features", _stage_features(config, subject, dirs["features"],
                                        dirs["ica_apply"], dirs["segment"])),
        "train": lambda: record(
            "train", _stage_train(config, subject, dirs["train"],
                                  dirs["features"], dirs["segment"])),
        "evaluate": lambda: record(
            "evaluate", _stage_evaluate(config, subject, dirs["evaluate"],
                                        dirs["features"], dirs["segment"],
                                        dirs["train"])),
        "report": lambda: record(
            "report", _stage_report(config, subject, dirs["report"],
                                    dirs["train"], dirs["evaluate"])),
    }

    for name in STAGES[: last + 1]:
        if need(name):
            runners[name]()

    if last < STAGES.index("evaluate"):
        return None
    return _outcome(config, subject, sdir, hashes)


def _record_fetch(config: PipelineConfig, subject: int, manifest: RunManifest,
                  hashes: dict[str, str]) -> None:
    paths = _stage_fetch(config, subject)
    # fetched files live in the cache, outside the output directory; record
    # the stage hash with no in-tree artifacts
    manifest.data["stages"][f"S{subject:03d}/fetch"] = {
        "hash": hashes["fetch"],
        "artifacts": {},
        "cache_files": [str(p) for p in paths],
    }
    manifest.data["updated"] = _now()
    manifest.save()


def _outcome(config: PipelineConfig, subject: int, sdir: Path,
             hashes: dict[str, str]) -> SubjectOutcome:
    summary = _subject_summary(config, subject, sdir / "train", sdir / "evaluate")
    mode = config.split.mode
    _, rows = read_csv(sdir / "evaluate" / f"metrics_{mode}.csv")
    per_class = [r for r in rows if r[1] != "accuracy"]
    metrics = MetricsReport(
        precision=np.array([float(r[2]) for r in per_class]),
        recall=np.array([float(r[3]) for r in per_class]),
        f1=np.array([float(r[4]) for r in per_class]),
        support=np.array([int(r[5]) for r in per_class]),
        accuracy=summary[2],
    )
    _, window_rows = read_csv(sdir / "segment" / "windows.csv")
    spec_meta = json.loads((sdir / "segment" / "window_spec.json").read_text())
    return SubjectOutcome(
        subject=subject,
        train_accuracy=summary[1],
        eval_accuracy=summary[2],
        trialwise_accuracy=summary[3],
        report=metrics,
        window_spec=WindowSpec(window_len=spec_meta["window_len"],
                               stride=spec_meta["stride"]),
        n_windows=len(window_rows),
        stage_hashes=hashes,
    )


def run_pipeline(config: PipelineConfig, through: str = "report",
                 ) -> tuple[RunManifest, list[SubjectOutcome]]:
    """Run the staged pipeline for every configured subject."""
    from .evaluation import subject_seed

    out_root = Path(config.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    with _Lock(out_root):
        manifest = RunManifest(out_root, _hash_obj(_config_dict_no_out(config)))
        outcomes = []
        for sid in config.subjects:
            sub_config = replace(config, seed=subject_seed(config.seed, sid))
            outcome = run_subject(sub_config, sid, through=through,
                                  manifest=manifest)
            if outcome is not None:
                outcomes.append(outcome)
        if through == "report" and len(config.subjects) > 1 and outcomes:
            _aggregate_report(config, manifest, outcomes)
    return manifest, outcomes


def _aggregate_report(config: PipelineConfig, manifest: RunManifest,
                      outcomes: list[SubjectOutcome]) -> None:
    accs = [o.eval_accuracy for o in outcomes]
    rows = [[o.subject, o.train_accuracy, o.eval_accuracy,
             o.trialwise_accuracy, ""] for o in outcomes]
    rows.append(["mean", float(np.mean([o.train_accuracy for o in outcomes])),
                 float(np.mean(accs)),
                 float(np.mean([o.trialwise_accuracy for o in outcomes])), ""])
    path = Path(config.out_dir) / "per_subject.csv"
    write_csv(path, ["subject", "train_accuracy", "eval_accuracy",
                     "trialwise_accuracy", "error"], rows)
    stage_hash = _hash_obj([o.stage_hashes["evaluate"] for o in outcomes])
    manifest.record("per_subject_report", stage_hash, [path])
