import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dram_oracle.dataset import Dataset
from dram_oracle.features import FeatureVector
from dram_oracle.models import (
    ConvergenceError,
    EmptyDatasetError,
    ModelConfig,
    ModelError,
    ModelFormatError,
    ModelKindError,
    ModelVersionError,
    SchemaMismatchError,
    fit_scaler,
    load_model,
    model_from_bytes,
    model_to_bytes,
    predict,
    predict_many,
    save_model,
    standardize,
    train,
    train_baseline,
    train_knn,
    train_rdf,
    train_svr,
)
from dram_oracle.models.baseline import EmptyCellError, baseline_predict, fit_baseline
from dram_oracle.models.forest import grow_forest, tree_predictions
from dram_oracle.models.knn import knn_predict
from dram_oracle.models.svr import fit_svr, rbf_kernel, svr_predict

from oracles import knn_oracle, svr_dual_oracle, tree_oracle, tree_oracle_predict


def _fv(i, rng, workload=None, device=None, t_refp=None, temp=None):
    return FeatureVector(
        workload=workload or f"w{i % 5}",
        t_reuse=float(rng.random()),
        h_dp=float(rng.random() * 10),
        mem_accesses_per_cycle=float(rng.random() * 1e-3),
        wait_cycles_ratio=float(rng.random()),
        t_refp=float(t_refp if t_refp is not None else rng.choice([0.618, 1.173, 1.727, 2.283])),
        v_dd=1.428,
        temp=float(temp if temp is not None else rng.choice([50.0, 60.0, 70.0])),
        device=device or f"d{i % 3}",
        nuisance=(("nz", float(rng.normal())),),
    )


def _dataset(n=60, kind="p_ue", seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        fv = _fv(i, rng)
        y = 1 / (1 + np.exp(-(fv.h_dp - 5) - 3 * (fv.t_refp - 1.4)))
        rows.append((fv, float(y) if kind == "p_ue" else float(y) * 1e-4))
    return Dataset(rows, kind)


def _transform_column(ds, name, f):
    out = []
    for fv, t in ds:
        d = fv.__dict__.copy()
        d[name] = f(d[name])
        out.append((FeatureVector(**d), t))
    return Dataset(out, ds.target_kind)


# -- standardization -----------------------------------------------------------


def test_scaler_examples():
    s = fit_scaler(np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]))
    z = s.transform(np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]))
    assert np.allclose(z[:, 0], [-1.224744871391589, 0, 1.224744871391589], atol=1e-9)
    assert list(s.constant) == [False, True]
    assert np.all(z[:, 1] == 7.0)


@settings(max_examples=100)
@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=2, max_size=20))
def test_scaler_roundtrip(rows):
    x = np.array(rows)
    s = fit_scaler(x)
    assert np.allclose(s.inverse(s.transform(x)), x, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max()) * 10)


def test_standardize_dataset():
    ds = _dataset(20)
    scaler, z = standardize(ds, 1)
    assert z.shape == (20, 6)
    assert np.allclose(z.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(z.std(axis=0)[~scaler.constant], 1, atol=1e-12)
    with pytest.raises(EmptyDatasetError):
        standardize(Dataset([], "wer"), 1)


# -- KNN -----------------------------------------------------------------------


def test_knn_interpolates_with_k1():
    ds = _dataset(40)
    m = train_knn(ds, 1, k=1)
    assert np.array_equal(predict_many(m, ds.features), ds.targets)


def test_knn_equidistant_mean():
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    y = np.array([1.0, 2.0, 3.0])
    assert knn_predict(x, y, np.zeros((1, 2)), 3)[0] == pytest.approx(2.0, abs=1e-12)


def test_knn_handcrafted_five_points():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0], [-1.0, -1.0]])
    y = np.array([0.1, 0.5, 0.9, 0.3, 0.7])
    q = np.array([[0.4, 0.3], [2.0, 2.0]])
    got = knn_predict(x, y, q, 3)
    for qi, g in zip(q, got):
        assert g == pytest.approx(knn_oracle(x, list(y), qi, 3), rel=1e-12)


def test_knn_tie_break_by_index():
    x = np.array([[1.0], [-1.0], [1.0]])
    y = np.array([0.2, 0.4, 0.9])
    # all at distance 1 from the origin; k=2 keeps samples 0 and 1
    assert knn_predict(x, y, np.zeros((1, 1)), 2)[0] == pytest.approx(0.3)


def test_knn_affine_invariance():
    ds = _dataset(50)
    scaled = _transform_column(ds, "h_dp", lambda v: 1000 * v + 3)
    q = _dataset(10, seed=5)
    q_scaled = _transform_column(q, "h_dp", lambda v: 1000 * v + 3)
    a = predict_many(train_knn(ds, 1, 3), q.features)
    b = predict_many(train_knn(scaled, 1, 3), q_scaled.features)
    assert np.allclose(a, b, rtol=0, atol=1e-9)


def test_knn_k_range():
    ds = _dataset(5)
    with pytest.raises(ModelError):
        train_knn(ds, 1, 0)
    with pytest.raises(ModelError):
        train_knn(ds, 1, 6)


# -- random forest -------------------------------------------------------------


def test_single_tree_perfect_split():
    x = np.array([[0.1], [0.2], [0.3], [0.7], [0.8], [0.9]])
    y = np.array([1.0, 1.0, 1.0, 5.0, 5.0, 5.0])
    f = grow_forest(x, y, 1, -1, 1, 1, False, 0)
    assert np.array_equal(tree_predictions(f, x)[0], y)


def test_forest_constant_targets():
    rng = np.random.default_rng(1)
    x = rng.random((30, 3))
    f = grow_forest(x, np.full(30, 0.25), 10, -1, 2, 0, True, 3)
    assert np.all(tree_predictions(f, rng.random((8, 3))) == 0.25)


def test_single_tree_matches_exhaustive_oracle():
    rng = np.random.default_rng(7)
    x = rng.random((20, 2))
    y = np.sin(4 * x[:, 0]) + x[:, 1] ** 2 + 0.1 * rng.standard_normal(20)
    f = grow_forest(x, y, 1, -1, 1, 2, False, 0)
    tree = tree_oracle(x, list(y), min_leaf=1)
    # off-sample queries can land on either side of equal-cost splits on different features
    got = tree_predictions(f, x)[0]
    assert np.allclose(got, [tree_oracle_predict(tree, row) for row in x], rtol=0, atol=1e-12)


def test_single_tree_oracle_one_feature_off_sample():
    rng = np.random.default_rng(8)
    x = rng.random((40, 1))
    y = np.cos(6 * x[:, 0]) + 0.2 * rng.standard_normal(40)
    f = grow_forest(x, y, 1, -1, 3, 1, False, 0)
    tree = tree_oracle(x, list(y), min_leaf=3)
    q = np.vstack([x, rng.random((60, 1))])
    got = tree_predictions(f, q)[0]
    assert np.allclose(got, [tree_oracle_predict(tree, row) for row in q], rtol=0, atol=1e-12)


def test_rdf_monotone_transform_invariance():
    ds = _dataset(60)
    q = _dataset(15, seed=9)
    f = np.exp
    a = predict_many(train_rdf(ds, 1, n_trees=20, seed=4), q.features)
    b = predict_many(
        train_rdf(_transform_column(ds, "h_dp", f), 1, n_trees=20, seed=4),
        _transform_column(q, "h_dp", f).features,
    )
    assert np.array_equal(a, b)


def test_rdf_deterministic_and_seed_sensitive():
    ds = _dataset(60)
    a = predict_many(train_rdf(ds, 3, n_trees=15, seed=1), ds.features)
    b = predict_many(train_rdf(ds, 3, n_trees=15, seed=1), ds.features)
    c = predict_many(train_rdf(ds, 3, n_trees=15, seed=2), ds.features)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_rdf_rejects_empty():
    with pytest.raises(EmptyDatasetError):
        train_rdf(Dataset([], "wer"), 1)


# -- SVR -----------------------------------------------------------------------


def _dual(kernel, z, beta, eps):
    return 0.5 * beta @ kernel @ beta + eps * np.abs(beta).sum() - z @ beta


def test_svr_tube_containment():
    x = np.linspace(0, 1, 25)[:, None]
    y = x[:, 0].copy()
    fit = fit_svr(x, y, c=10.0, epsilon=0.05, gamma=1.0)
    resid = np.abs(svr_predict(fit, x) - y)
    assert resid.max() <= 0.05 + 1e-3


def test_svr_reflection_symmetric():
    # the RBF kernel depends only on distances, so mirroring inputs mirrors the fit
    rng = np.random.default_rng(3)
    x = rng.standard_normal((15, 2))
    y = np.sin(x[:, 0]) * 0.5
    q = rng.standard_normal((10, 2))
    a = svr_predict(fit_svr(x, y, c=5.0, epsilon=0.01, gamma=0.5), q)
    b = svr_predict(fit_svr(-x, y, c=5.0, epsilon=0.01, gamma=0.5), -q)
    assert np.allclose(a, b, rtol=0, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_svr_feasibility_and_kkt(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((40, 3))
    y = np.tanh(x[:, 0]) + 0.3 * x[:, 1] + 0.05 * rng.standard_normal(40)
    c, eps, tol = 2.0, 0.05, 1e-3
    fit = fit_svr(x, y, c=c, epsilon=eps, gamma=0.5, tol=tol)
    b = fit["beta"]
    assert np.all(b >= -c - 1e-12) and np.all(b <= c + 1e-12)
    assert abs(b.sum()) <= 1e-6
    r = y - svr_predict(fit, x)
    inner = (np.abs(b) > 1e-12) & (np.abs(b) < c - 1e-12)
    zero = np.abs(b) <= 1e-12
    bound = np.abs(b) >= c - 1e-12
    assert np.all(np.abs(np.abs(r[inner]) - eps) <= tol + 1e-9)
    assert np.all(np.abs(r[zero]) <= eps + tol + 1e-9)
    assert np.all(np.abs(r[bound]) >= eps - tol - 1e-9)
    assert np.all(np.sign(r[inner | bound]) == np.sign(b[inner | bound]))


@pytest.mark.parametrize("seed", range(3))
def test_svr_objective_matches_projected_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.standard_normal((10, 2))
    y = x[:, 0] - 0.5 * x[:, 1] ** 2
    c, eps, gamma = 1.0, 0.1, 0.5
    fit = fit_svr(x, y, c=c, epsilon=eps, gamma=gamma)
    k = rbf_kernel(x, x, gamma)
    ours = _dual(k, y, fit["beta"], eps)
    oracle = _dual(k, y, svr_dual_oracle(k, y, c, eps, iters=3000), eps)
    assert abs(ours - oracle) <= 1e-2
    assert ours <= oracle + 1e-6


def test_svr_non_convergence_carries_gap():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((30, 2))
    y = rng.standard_normal(30)
    with pytest.raises(ConvergenceError) as info:
        fit_svr(x, y, c=100.0, epsilon=0.0, gamma=2.0, max_iter=3)
    assert info.value.gap >= 0 and info.value.violation > 1e-3


def test_svr_parameter_validation():
    with pytest.raises(ModelError):
        ModelConfig(kind="svr", c=0.0).validate()
    with pytest.raises(ModelError):
        ModelConfig(kind="svr", epsilon=-1.0).validate()
    with pytest.raises(ModelError):
        ModelConfig(kind="nope").validate()


# -- baseline ------------------------------------------------------------------


def _cell_dataset(values, devices=("dA",), kind="wer"):
    rng = np.random.default_rng(0)
    rows = []
    for i, (w, v) in enumerate(values):
        for d in devices:
            rows.append((_fv(i, rng, workload=w, device=d, t_refp=1.173, temp=60.0), v))
    return Dataset(rows, kind)


def test_baseline_uniform_cell():
    ds = _cell_dataset([("a", 3e-5), ("b", 3e-5), ("c", 3e-5)])
    m = train_baseline(ds)
    assert predict(m, ds.features[0]) == pytest.approx(3e-5, rel=1e-9)


def test_baseline_eightfold_spread():
    ds = _cell_dataset([("low", 1e-5), ("high", 8e-5)])
    p = predict(train_baseline(ds), ds.features[0])
    assert p / 1e-5 == pytest.approx(8**0.5, rel=1e-6)
    assert 8e-5 / p == pytest.approx(8**0.5, rel=1e-6)
    assert 2.5 < p / 1e-5 < 2.9


def test_baseline_unseen_device_uses_env_cell_mean():
    ds = _cell_dataset([("a", 0.2), ("b", 0.4)], devices=("d1", "d2"), kind="p_ue")
    m = train_baseline(ds)
    q = FeatureVector(**{**ds.features[0].__dict__, "device": "dnew"})
    assert predict(m, q) == pytest.approx(0.3)


def test_baseline_empty_fallback():
    table = fit_baseline(np.array(["d"]), np.array([1.0]), np.array([50.0]), np.array([0.1]))
    assert baseline_predict(table, ["d"], [1.0], [50.0])[0] == pytest.approx(0.1)
    with pytest.raises(EmptyCellError):
        baseline_predict(table, ["d"], [2.0], [70.0])


# -- prediction contract -------------------------------------------------------


@pytest.mark.parametrize("kind", ["knn", "rdf", "svr", "baseline"])
@pytest.mark.parametrize("target", ["wer", "p_ue"])
def test_predictions_finite_and_bounded(kind, target):
    ds = _dataset(40, kind=target)
    m = train(ds, 1, ModelConfig(kind=kind, n_trees=10))
    p = predict_many(m, _dataset(20, kind=target, seed=3).features)
    assert np.all(np.isfinite(p)) and np.all(p >= 0) and np.all(p <= 1)


def test_schema_mismatch():
    ds = _dataset(20)
    m = train_knn(ds, 3, 3)
    other = FeatureVector(**{**ds.features[0].__dict__, "nuisance": ()})
    with pytest.raises(SchemaMismatchError):
        predict(m, other)


# -- persistence ---------------------------------------------------------------


@pytest.mark.parametrize("kind", ["knn", "rdf", "svr", "baseline"])
def test_model_roundtrip_each_kind(kind, tmp_path):
    ds = _dataset(40, kind="wer")
    m = train(ds, 1, ModelConfig(kind=kind, n_trees=10, k=3))
    q = _dataset(25, kind="wer", seed=11).features
    path = tmp_path / f"{kind}.doml"
    n = save_model(m, path)
    assert n == path.stat().st_size
    back = load_model(path, expected_kind=kind)
    assert back.kind == kind and back.columns == m.columns and back.scaler == m.scaler
    assert np.array_equal(predict_many(back, q), predict_many(m, q))


def test_truncated_and_corrupt_model():
    m = train_knn(_dataset(20), 1, 3)
    blob = model_to_bytes(m)
    assert blob[:4] == b"DOML"
    for cut in (3, 10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(ModelFormatError):
            model_from_bytes(blob[:cut])
    corrupt = bytearray(blob)
    corrupt[len(blob) // 2] ^= 0xFF
    with pytest.raises(ModelFormatError):
        model_from_bytes(bytes(corrupt))
    with pytest.raises(ModelVersionError):
        model_from_bytes(blob[:4] + b"\x63\x00" + blob[6:])


def test_cross_kind_load_guard():
    blob = model_to_bytes(train_knn(_dataset(20), 1, 3))
    with pytest.raises(ModelKindError):
        model_from_bytes(blob, expected_kind="svr")
    with pytest.raises(ModelKindError):
        load_model(io.BytesIO(blob), expected_kind="rdf")


model_kinds = st.sampled_from(["knn", "rdf", "svr", "baseline"])


@settings(max_examples=500)
@given(model_kinds, st.integers(0, 2**16), st.sampled_from(["wer", "p_ue"]), st.sampled_from([1, 2, 3]))
def test_model_roundtrip_property(kind, seed, target, fs):
    ds = _dataset(12, kind=target, seed=seed)
    m = train(ds, fs, ModelConfig(kind=kind, k=2, n_trees=3, seed=seed))
    back = model_from_bytes(model_to_bytes(m))
    q = ds.features if kind == "baseline" else _dataset(6, kind=target, seed=seed + 1).features
    assert np.array_equal(predict_many(back, q), predict_many(m, q))
    assert model_to_bytes(back) == model_to_bytes(m)


@pytest.mark.parametrize("kind", ["knn", "rdf", "svr", "baseline"])
def test_trainers_deterministic(kind):
    ds = _dataset(40)
    cfg = ModelConfig(kind=kind, n_trees=10, seed=5)
    assert model_to_bytes(train(ds, 3, cfg)) == model_to_bytes(train(ds, 3, cfg))
