import csv
import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from dram_oracle.dataset import Dataset
from dram_oracle.evaluation import (
    COMPARISON_HEADER,
    EvaluationError,
    bar_chart_svg,
    compare_models,
    comparison_csv,
    fold_models,
    knn_sweep,
    loo_by_workload,
    mpe,
    percentage_errors,
    report_csv,
    write_report,
)
from dram_oracle.features import FeatureVector
from dram_oracle.models import ModelConfig, model_to_bytes


def _toy(n_workloads=4, per=12, seed=0, kind="wer", same_target=None):
    rng = np.random.default_rng(seed)
    rows = []
    for w in range(n_workloads):
        rate = rng.random() * 1e-3
        for i in range(per):
            fv = FeatureVector(
                workload=f"w{w}", t_reuse=float(rng.random()), h_dp=float(rng.random() * 4),
                mem_accesses_per_cycle=rate, wait_cycles_ratio=float(rng.random()),
                t_refp=[0.618, 1.173, 1.727, 2.283][i % 4], v_dd=1.428,
                temp=[50.0, 60.0, 70.0][i % 3], device=f"d{i % 2}",
                nuisance=(("n0", float(rng.normal())),),
            )
            y = same_target if same_target is not None else float(1e-6 * (1 + 1e3 * rate) * fv.t_refp * (1 + i % 2))
            rows.append((fv, y))
    return Dataset(rows, kind)


# -- mpe -----------------------------------------------------------------------


def test_mpe_examples():
    assert mpe([1.0, 2.0], [1.0, 2.0]) == 0.0
    a = np.array([1e-6, 3e-4, 0.2])
    assert mpe(1.1 * a, a) == pytest.approx(10.0, rel=1e-12)
    pred, act = [2.0, 1.5, 0.1], [1.0, 3.0, 0.4]
    hand = 100 * (abs(2 - 1) / 1 + abs(1.5 - 3) / 3 + abs(0.1 - 0.4) / 0.4) / 3
    assert mpe(pred, act) == pytest.approx(hand, rel=1e-12)


def test_mpe_zero_actuals():
    err, excluded = percentage_errors([1.0, 5.0, 2.0], [0.0, 5.0, 0.0])
    assert excluded == 2 and list(err) == [0.0]
    with pytest.raises(EvaluationError):
        mpe([1.0], [0.0])
    with pytest.raises(EvaluationError):
        mpe([1.0, 2.0], [1.0])


# -- leave-one-workload-out ----------------------------------------------------


def test_fold_count_and_membership():
    ds = _toy(5)
    folds = list(fold_models(ds, ModelConfig(kind="knn", k=3), 1))
    assert [w for w, *_ in folds] == ["w0", "w1", "w2", "w3", "w4"]
    for w, idx, _, _ in folds:
        assert set(ds.workloads[idx]) == {w} and len(idx) == 12
    assert loo_by_workload(ds, ModelConfig(kind="knn", k=3)).n_folds == 5


def test_single_workload_rejected():
    with pytest.raises(EvaluationError):
        loo_by_workload(_toy(1), ModelConfig(kind="baseline"))


def test_two_workload_baseline_identical_targets():
    r = loo_by_workload(_toy(2, same_target=0.5, kind="p_ue"), ModelConfig(kind="baseline"))
    assert r.overall_mpe == 0.0


@pytest.mark.parametrize("kind", ["knn", "rdf", "svr", "baseline"])
def test_fold_isolation(kind):
    ds = _toy(4)
    y = ds.targets.copy()
    y[ds.workloads == "w2"] *= 7.5
    perturbed = ds.with_targets(y)
    cfg = ModelConfig(kind=kind, k=3, n_trees=8, seed=2)
    a = {w: model_to_bytes(m) for w, _, m, _ in fold_models(ds, cfg, 3)}
    b = {w: model_to_bytes(m) for w, _, m, _ in fold_models(perturbed, cfg, 3)}
    assert a["w2"] == b["w2"]
    assert a["w0"] != b["w0"]


def test_per_device_weighted_aggregation():
    ds = _toy(5)
    r = loo_by_workload(ds, ModelConfig(kind="knn", k=3))
    keep = r.actuals > 0
    counts = {d: int(((r.devices == d) & keep).sum()) for d in r.per_device_mpe}
    weighted = sum(r.per_device_mpe[d] * counts[d] for d in counts) / sum(counts.values())
    assert weighted == pytest.approx(r.overall_mpe, abs=1e-9)
    per_sample = 100 * np.abs(r.predictions[keep] - r.actuals[keep]) / r.actuals[keep]
    assert r.overall_mpe == pytest.approx(per_sample.mean(), rel=1e-12)
    assert r.device_mean_mpe == pytest.approx(np.mean(list(r.per_device_mpe.values())))


def test_report_deterministic():
    ds = _toy(4)
    cfg = ModelConfig(kind="rdf", n_trees=10, seed=3)
    a, b = loo_by_workload(ds, cfg, 3), loo_by_workload(ds, cfg, 3)
    assert np.array_equal(a.predictions, b.predictions)
    assert report_csv(a) == report_csv(b)


def test_knn_sweep_picks_minimum():
    best, reports = knn_sweep(_toy(4), 1, ks=(1, 3))
    assert [r.k for r in reports] == [1, 3]
    assert best.overall_mpe == min(r.overall_mpe for r in reports)


# -- comparison and output -----------------------------------------------------


def test_compare_models_rows_and_csv():
    ds = _toy(3)
    one = compare_models(ds, [(ModelConfig(kind="knn", k=3), 1)])
    assert len(one) == 1
    reps = compare_models(
        ds, [(ModelConfig(kind="knn", k=3), 1), (ModelConfig(kind="baseline"), 1)], latency_queries=5
    )
    rows = list(csv.reader(io.StringIO(comparison_csv(reps))))
    assert tuple(rows[0]) == COMPARISON_HEADER
    assert [r[0] for r in rows[1:]] == ["knn", "baseline"]
    assert all(float(r[9]) >= 0 for r in rows[1:])


def test_write_report_files(tmp_path):
    r = loo_by_workload(_toy(3), ModelConfig(kind="knn", k=3))
    paths = write_report(r, tmp_path / "out")
    assert len(paths) == 4
    text = {p.rsplit("/", 1)[-1]: open(p).read() for p in paths}
    assert "overall MPE" in text["crossval.txt"]
    rows = list(csv.reader(io.StringIO(text["crossval.csv"])))
    assert rows[0] == ["group", "name", "mpe"] and rows[-2][:2] == ["overall", "samples"]
    for name in ("crossval_workloads.svg", "crossval_devices.svg"):
        root = ET.fromstring(text[name])
        tags = {el.tag.split("}")[-1] for el in root.iter()}
        assert tags <= {"svg", "rect", "line", "text"}


def test_svg_escapes_names():
    svg = bar_chart_svg({"a<b": 1.0, "c&d": float("nan")}, "t")
    ET.fromstring(svg)
