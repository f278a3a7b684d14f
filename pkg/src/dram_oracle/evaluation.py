"""Leave-one-workload-out cross-validation, MPE reporting and model comparison."""
from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .dataset import Dataset
from .features import select_features  # noqa: F401  (re-exported)
from .models import ModelConfig, TrainedModel, predict, predict_many, train

KNN_SWEEP = (1, 3, 5, 7)
LATENCY_QUERIES = 100


class EvaluationError(ValueError):
    pass


def percentage_errors(predictions, actuals) -> tuple[np.ndarray, int]:
    """Absolute percentage errors of samples with a nonzero actual, and the count excluded."""
    p = np.asarray(predictions, dtype=np.float64)
    a = np.asarray(actuals, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1 or len(p) == 0:
        raise EvaluationError("predictions and actuals must be equal-length, non-empty vectors")
    keep = a > 0
    return 100.0 * np.abs(p[keep] - a[keep]) / a[keep], int((~keep).sum())


def mpe(predictions, actuals) -> float:
    """100 x mean(|pred - actual| / actual) over samples whose actual is positive."""
    err, _ = percentage_errors(predictions, actuals)
    if len(err) == 0:
        raise EvaluationError("every actual is zero; MPE undefined")
    return float(err.mean())


@dataclass(frozen=True, eq=False)
class CrossValReport:
    kind: str
    feature_set: int
    target_kind: str
    per_workload_mpe: dict[str, float]
    per_device_mpe: dict[str, float]
    overall_mpe: float
    # mean of the per-device MPEs, the alternative aggregation
    device_mean_mpe: float
    n_samples: int
    n_excluded: int
    n_folds: int
    train_seconds: float
    predict_median_ms: float
    workloads: np.ndarray = field(repr=False)
    devices: np.ndarray = field(repr=False)
    predictions: np.ndarray = field(repr=False)
    actuals: np.ndarray = field(repr=False)
    k: int | None = None

    @property
    def label(self) -> str:
        k = f"(k={self.k})" if self.kind == "knn" and self.k is not None else ""
        return f"{self.kind}{k}/set{self.feature_set}/{self.target_kind}"

    def summary(self) -> str:
        lines = [
            f"{self.label}: overall MPE {self.overall_mpe:.2f}% "
            f"(device-mean {self.device_mean_mpe:.2f}%), {self.n_samples} samples, "
            f"{self.n_excluded} zero-actual excluded, {self.n_folds} folds",
            f"  train {self.train_seconds:.2f}s total, predict median {self.predict_median_ms:.3f} ms/query",
        ]
        for name, v in self.per_workload_mpe.items():
            lines.append(f"  workload {name:<16} {v:8.2f}%")
        for name, v in self.per_device_mpe.items():
            lines.append(f"  device   {name:<16} {v:8.2f}%")
        return "\n".join(lines)


def _group_mpe(names: np.ndarray, err_names: np.ndarray, err: np.ndarray) -> dict[str, float]:
    out = {}
    for name in dict.fromkeys(names.tolist()):
        sel = err_names == name
        out[name] = float(err[sel].mean()) if sel.any() else float("nan")
    return out


def fold_models(
    dataset: Dataset, config: ModelConfig, feature_set: int
) -> Iterator[tuple[str, np.ndarray, TrainedModel, float]]:
    """Yield (held-out workload, its sample indices, model trained without it, train seconds)."""
    index = dataset.workload_index
    if len(index) < 2:
        raise EvaluationError("leave-one-workload-out needs at least 2 distinct workloads")
    for w, test_idx in index.items():
        train_idx = np.flatnonzero(dataset.workloads != w)
        t0 = time.perf_counter()
        model = train(dataset.subset(train_idx), feature_set, config)
        yield w, np.asarray(test_idx), model, time.perf_counter() - t0


def query_latency_ms(model: TrainedModel, fvs: Sequence, n: int = LATENCY_QUERIES) -> float:
    """Median wall-clock of ``n`` single-sample predictions, in milliseconds."""
    times = []
    for i in range(n):
        fv = fvs[i % len(fvs)]
        t0 = time.perf_counter()
        predict(model, fv)
        times.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(times))


def loo_by_workload(
    dataset: Dataset, config: ModelConfig, feature_set: int = 1, latency_queries: int = 0
) -> CrossValReport:
    """Train on all other workloads, test on each workload in turn, then aggregate.

    ``latency_queries > 0`` times that many single queries against the last fold's model.
    """
    pred = np.empty(len(dataset))
    train_s = 0.0
    folds = 0
    last = None
    for _, idx, model, secs in fold_models(dataset, config, feature_set):
        pred[idx] = predict_many(model, [dataset.features[i] for i in idx])
        train_s += secs
        folds += 1
        last = (model, idx)
    actual = dataset.targets
    err, excluded = percentage_errors(pred, actual)
    if len(err) == 0:
        raise EvaluationError("every actual is zero; MPE undefined")
    keep = actual > 0
    wl, dv = dataset.workloads, dataset.devices
    per_dev = _group_mpe(dv, dv[keep], err)
    latency = float("nan")
    if latency_queries > 0 and last is not None:
        model, idx = last
        latency = query_latency_ms(model, [dataset.features[i] for i in idx], latency_queries)
    return CrossValReport(
        kind=config.kind,
        feature_set=feature_set,
        target_kind=dataset.target_kind,
        per_workload_mpe=_group_mpe(wl, wl[keep], err),
        per_device_mpe=per_dev,
        overall_mpe=float(err.mean()),
        device_mean_mpe=float(np.nanmean(list(per_dev.values()))),
        n_samples=len(dataset),
        n_excluded=excluded,
        n_folds=folds,
        train_seconds=train_s,
        predict_median_ms=latency,
        workloads=wl,
        devices=dv,
        predictions=pred,
        actuals=actual,
        k=config.k if config.kind == "knn" else None,
    )


def knn_sweep(
    dataset: Dataset, feature_set: int = 1, ks: Sequence[int] = KNN_SWEEP, base: ModelConfig | None = None
) -> tuple[CrossValReport, list[CrossValReport]]:
    """Cross-validate KNN for each k; return the best report and all of them."""
    base = base or ModelConfig(kind="knn")
    reports = [
        loo_by_workload(dataset, ModelConfig(**{**base.__dict__, "kind": "knn", "k": k}), feature_set)
        for k in ks
    ]
    best = min(reports, key=lambda r: (r.overall_mpe, r.k))
    return best, reports


COMPARISON_HEADER = (
    "model", "feature_set", "target", "k", "overall_mpe", "device_mean_mpe",
    "n_samples", "n_excluded", "train_seconds", "predict_median_ms",
)


def compare_models(
    datasets: Mapping[str, Dataset] | Dataset,
    configs: Sequence[tuple[ModelConfig, int]],
    latency_queries: int = 0,
) -> list[CrossValReport]:
    """One cross-validation per (config, feature set) for each target dataset."""
    if isinstance(datasets, Dataset):
        datasets = {datasets.target_kind: datasets}
    out = []
    for ds in datasets.values():
        for cfg, fs in configs:
            out.append(loo_by_workload(ds, cfg, fs, latency_queries))
    return out


def comparison_csv(reports: Sequence[CrossValReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_HEADER)
    for r in reports:
        w.writerow([
            r.kind, r.feature_set, r.target_kind, "" if r.k is None else r.k,
            f"{r.overall_mpe:.6g}", f"{r.device_mean_mpe:.6g}", r.n_samples, r.n_excluded,
            f"{r.train_seconds:.6g}", "" if np.isnan(r.predict_median_ms) else f"{r.predict_median_ms:.6g}",
        ])
    return buf.getvalue()


def report_csv(report: CrossValReport) -> str:
    """Per-group and overall MPE rows for one report."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "name", "mpe"])
    for name, v in report.per_workload_mpe.items():
        w.writerow(["workload", name, f"{v:.6g}"])
    for name, v in report.per_device_mpe.items():
        w.writerow(["device", name, f"{v:.6g}"])
    w.writerow(["overall", "samples", f"{report.overall_mpe:.6g}"])
    w.writerow(["overall", "device_mean", f"{report.device_mean_mpe:.6g}"])
    return buf.getvalue()


def bar_chart_svg(values: Mapping[str, float], title: str, unit: str = "%") -> str:
    """Minimal vertical bar chart (rect/line/text only)."""
    names = list(values)
    vals = [0.0 if not np.isfinite(values[n]) else float(values[n]) for n in names]
    bar, gap, left, top, height = 28, 12, 50, 30, 200
    width = left + len(names) * (bar + gap) + gap
    vmax = max(vals + [1e-12])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{top + height + 110}">',
        f'<text x="{left}" y="18" font-size="14" font-family="sans-serif">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + height}" x2="{width}" y2="{top + height}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + height}" stroke="black"/>',
        f'<text x="4" y="{top + 10}" font-size="10" font-family="sans-serif">{vmax:.3g}{unit}</text>',
    ]
    for i, (n, v) in enumerate(zip(names, vals)):
        h = height * v / vmax
        x = left + gap + i * (bar + gap)
        y = top + height - h
        parts.append(f'<rect x="{x}" y="{y:.2f}" width="{bar}" height="{h:.2f}" fill="steelblue"/>')
        parts.append(
            f'<text x="{x + bar / 2}" y="{y - 3:.2f}" font-size="9" text-anchor="middle" '
            f'font-family="sans-serif">{v:.1f}</text>'
        )
        ty = top + height + 12
        parts.append(
            f'<text x="{x + bar / 2}" y="{ty}" font-size="10" font-family="sans-serif" '
            f'transform="rotate(60 {x + bar / 2} {ty})">{escape(n)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(report: CrossValReport, out_dir: str | os.PathLike, stem: str = "crossval") -> list[str]:
    """CSV, text summary and two SVG charts; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        f"{stem}.csv": report_csv(report),
        f"{stem}.txt": report.summary() + "\n",
        f"{stem}_workloads.svg": bar_chart_svg(report.per_workload_mpe, f"MPE per workload, {report.label}"),
        f"{stem}_devices.svg": bar_chart_svg(report.per_device_mpe, f"MPE per device, {report.label}"),
    }
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        paths.append(path)
    return paths
