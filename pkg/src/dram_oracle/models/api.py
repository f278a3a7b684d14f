"""Training entry points and prediction for every model kind."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..features import FeatureVector
from .baseline import baseline_predict, fit_baseline
from .common import (
    EmptyDatasetError,
    ModelConfig,
    ModelError,
    TrainedModel,
    fit_scaler,
    from_model_space,
    raw_matrix,
    to_model_space,
    training_matrix,
)
from .forest import forest_predict, grow_forest
from .knn import knn_predict
from .svr import fit_svr, svr_predict


def _fit_common(dataset, feature_set: int, encoding: str):
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset is empty")
    return training_matrix(dataset, feature_set, encoding)


def train_knn(dataset, feature_set: int = 1, k: int = 5, device_encoding: str = "ordinal") -> TrainedModel:
    columns, devices, scaler, x, y = _fit_common(dataset, feature_set, device_encoding)
    if not 1 <= k <= len(x):
        raise ModelError(f"k: must lie in [1, {len(x)}], got {k}")
    return TrainedModel(
        "knn", feature_set, dataset.target_kind, columns, devices, device_encoding, scaler,
        {"k": int(k), "x": x, "y": y},
    )


def train_rdf(
    dataset,
    feature_set: int = 1,
    n_trees: int = 100,
    max_depth: int = -1,
    min_leaf: int = 2,
    seed: int = 0,
    max_features: int = 0,
    bootstrap: bool = True,
    device_encoding: str = "ordinal",
) -> TrainedModel:
    columns, devices, scaler, x, y = _fit_common(dataset, feature_set, device_encoding)
    forest = grow_forest(x, y, n_trees, max_depth, min_leaf, max_features, bootstrap, seed)
    return TrainedModel(
        "rdf", feature_set, dataset.target_kind, columns, devices, device_encoding, scaler, forest
    )


def train_svr(
    dataset,
    feature_set: int = 1,
    c: float = 10.0,
    epsilon: float = 0.01,
    gamma: float = 0.0,
    tol: float = 1e-3,
    max_iter: int = 0,
    device_encoding: str = "ordinal",
) -> TrainedModel:
    columns, devices, scaler, x, y = _fit_common(dataset, feature_set, device_encoding)
    fit = fit_svr(x, y, c, epsilon, gamma, tol, max_iter)
    params = {k: fit[k] for k in ("support", "coef", "bias", "gamma")}
    return TrainedModel(
        "svr", feature_set, dataset.target_kind, columns, devices, device_encoding, scaler, params
    )


def train_baseline(dataset, feature_set: int = 1) -> TrainedModel:
    """The baseline ignores program features; ``feature_set`` is recorded only."""
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset is empty")
    y = to_model_space(dataset.targets, dataset.target_kind)
    table = fit_baseline(dataset.devices, dataset.column("t_refp"), dataset.column("temp"), y)
    devices = tuple(sorted(set(dataset.devices.tolist())))
    scaler_cols = ("t_refp", "temp")
    raw = np.column_stack([dataset.column(c) for c in scaler_cols])
    return TrainedModel(
        "baseline", feature_set, dataset.target_kind, scaler_cols, devices, "none",
        fit_scaler(raw), table,
    )


def train(dataset, feature_set: int, config: ModelConfig) -> TrainedModel:
    config.validate()
    if config.kind == "knn":
        return train_knn(dataset, feature_set, config.k, config.device_encoding)
    if config.kind == "rdf":
        return train_rdf(
            dataset, feature_set, config.n_trees, config.max_depth, config.min_leaf, config.seed,
            config.max_features, config.bootstrap, config.device_encoding,
        )
    if config.kind == "svr":
        return train_svr(
            dataset, feature_set, config.c, config.epsilon, config.gamma, config.tol,
            config.max_iter, config.device_encoding,
        )
    return train_baseline(dataset, feature_set)


def predict_model_space(model: TrainedModel, fvs: Sequence[FeatureVector]) -> np.ndarray:
    """Raw model outputs (log10 space for WER) for a batch of feature vectors."""
    if model.kind == "baseline":
        return baseline_predict(
            model.params, [fv.device for fv in fvs], [fv.t_refp for fv in fvs], [fv.temp for fv in fvs]
        )
    q = model.scaler.transform(raw_matrix(fvs, model.columns, model.devices, model.device_encoding))
    if model.kind == "knn":
        return knn_predict(model.params["x"], model.params["y"], q, model.params["k"])
    if model.kind == "rdf":
        return forest_predict(model.params, q)
    if model.kind == "svr":
        return svr_predict(model.params, q)
    raise ModelError(f"unknown model kind {model.kind!r}")


def predict_many(model: TrainedModel, fvs: Sequence[FeatureVector]) -> np.ndarray:
    fvs = list(fvs)
    if not fvs:
        return np.zeros(0)
    out = from_model_space(predict_model_space(model, fvs), model.target_kind)
    if not np.all(np.isfinite(out)):
        raise ModelError("prediction is not finite")
    return out


def predict(model: TrainedModel, fv: FeatureVector) -> float:
    """Estimate for one feature vector: WER, or P_UE clamped to [0, 1]."""
    return float(predict_many(model, [fv])[0])

