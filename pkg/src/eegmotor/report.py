"""Report emission: metric tables as CSV and self-contained SVG line plots."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .evaluation import MetricsReport, class_names
from .persist import write_csv

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min(s for s in (1 * mag, 2 * mag, 5 * mag, 10 * mag) if s >= raw)
    start = np.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(float(t))
        t += step
    return ticks


def svg_line_plot(path, series: dict[str, tuple], title: str,
                  xlabel: str, ylabel: str,
                  width: int = 640, height: int = 400) -> None:
    """Write a minimal standalone SVG containing one polyline per series."""
    margin_l, margin_r, margin_t, margin_b = 64, 16, 36, 48
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    xs_all = np.concatenate([np.asarray(x, float) for x, _ in series.values()]) \
        if series else np.array([0.0, 1.0])
    ys_all = np.concatenate([np.asarray(y, float) for _, y in series.values()]) \
        if series else np.array([0.0, 1.0])
    ys_all = ys_all[np.isfinite(ys_all)]
    if ys_all.size == 0:
        ys_all = np.array([0.0, 1.0])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return margin_t + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(y_lo, y_hi):
        y = py(t)
        parts.append(
            f'<line x1="{margin_l}" y1="{y:.2f}" x2="{margin_l + plot_w}" '
            f'y2="{y:.2f}" stroke="#ddd"/>'
        )
        parts.append(
            f'<text x="{margin_l - 6}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{t:g}</text>'
        )
    for t in _ticks(x_lo, x_hi):
        x = px(t)
        parts.append(
            f'<line x1="{x:.2f}" y1="{margin_t + plot_h}" x2="{x:.2f}" '
            f'y2="{margin_t + plot_h + 4}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{margin_t + plot_h + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{t:g}</text>'
        )
    parts.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 10}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {margin_t + plot_h / 2:.1f})">{ylabel}</text>'
    )

    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        ok = np.isfinite(ys)
        points = " ".join(
            f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs[ok], ys[ok])
        )
        if points:
            parts.append(
                f'<polyline points="{points}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
        ly = margin_t + 14 + 14 * i
        parts.append(
            f'<line x1="{margin_l + plot_w - 110}" y1="{ly - 4}" '
            f'x2="{margin_l + plot_w - 90}" y2="{ly - 4}" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{margin_l + plot_w - 85}" y="{ly}" '
            f'font-family="sans-serif" font-size="10">{name}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def write_metrics_csv(path, report: MetricsReport, split_name: str) -> None:
    rows = []
    for i, name in enumerate(class_names()):
        rows.append([
            split_name, name, report.precision[i], report.recall[i],
            report.f1[i], int(report.support[i]),
        ])
    rows.append([split_name, "accuracy", "", "", report.accuracy,
                 int(report.support.sum())])
    write_csv(path, ["split", "class", "precision", "recall", "f1", "support"],
              rows)


def write_confusion_csv(path, matrix: np.ndarray) -> None:
    names = class_names()
    header = ["true\\pred"] + names
    rows = [[names[i]] + [int(v) for v in matrix[i]] for i in range(len(names))]
    write_csv(path, header, rows)


def write_history_csv(path, history) -> None:
    header = ["epoch", "loss", "accuracy", "mse", "val_loss", "val_accuracy"]
    rows = [
        [e, history.loss[e], history.accuracy[e], history.mse[e],
         history.val_loss[e], history.val_accuracy[e]]
        for e in range(len(history))
    ]
    write_csv(path, header, rows)


def plot_history(out_dir, history, stem: str = "training") -> list[Path]:
    out_dir = Path(out_dir)
    epochs = np.arange(1, len(history) + 1)
    acc_path = out_dir / f"{stem}_accuracy.svg"
    loss_path = out_dir / f"{stem}_loss.svg"
    svg_line_plot(
        acc_path,
        {"train": (epochs, history.accuracy),
         "validation": (epochs, history.val_accuracy)},
        title="Accuracy vs epochs", xlabel="epoch", ylabel="accuracy",
    )
    svg_line_plot(
        loss_path,
        {"train": (epochs, history.loss),
         "validation": (epochs, history.val_loss)},
        title="Loss vs epochs", xlabel="epoch", ylabel="cross-entropy",
    )
    return [acc_path, loss_path]


def write_subject_csv(path, results, aggregate) -> None:
    header = ["subject", "train_accuracy", "eval_accuracy",
              "trialwise_accuracy", "error"]
    rows = [
        [r.subject, r.train_accuracy, r.eval_accuracy, r.trialwise_accuracy,
         r.error or ""]
        for r in results
    ]
    rows.append(["mean", aggregate["mean_accuracy"], "", "", ""])
    rows.append(["std", aggregate["std_accuracy"], "", "", ""])
    write_csv(path, header, rows)


def write_sweep_csv(path, rows) -> None:
    header = ["window_sec", "overlap_pct", "stride", "train_accuracy",
              "eval_accuracy", "n_windows", "wall_time_sec"]
    write_csv(path, header, [
        [r.window_sec, r.overlap_pct, r.stride, r.train_accuracy,
         r.eval_accuracy, r.n_windows, r.wall_time_sec]
        for r in rows
    ])


def write_component_stats_csv(path, stats, exclude) -> None:
    header = ["component", "variance", "skewness", "kurtosis",
              "kurtosis_zscore", "entropy", "max_abs_pearson", "excluded"]
    excluded = set(exclude)
    rows = [
        [i, stats.variance[i], stats.skewness[i], stats.kurtosis[i],
         stats.kurtosis_zscore[i], stats.entropy[i], stats.max_abs_pearson[i],
         i in excluded]
        for i in range(stats.n_components)
    ]
    write_csv(path, header, rows)
