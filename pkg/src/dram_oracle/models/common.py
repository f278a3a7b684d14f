"""Shared model plumbing: column scaling, target transforms, the TrainedModel record."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..features import FeatureVector, select_features

KINDS = ("knn", "rdf", "svr", "baseline")
DEVICE_ENCODINGS = ("ordinal", "onehot", "none")
WER_FLOOR = 1e-12


class ModelError(ValueError):
    pass


class EmptyDatasetError(ModelError):
    pass


class SchemaMismatchError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-column centre and scale. Flagged (zero-variance) columns pass through."""

    mean: np.ndarray
    sd: np.ndarray
    constant: np.ndarray

    @property
    def _centre(self) -> np.ndarray:
        return np.where(self.constant, 0.0, self.mean)

    @property
    def _scale(self) -> np.ndarray:
        return np.where(self.constant, 1.0, self.sd)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self._centre) / self._scale

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self._scale + self._centre

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scaler):
            return NotImplemented
        return (
            np.array_equal(self.mean, other.mean)
            and np.array_equal(self.sd, other.sd)
            and np.array_equal(self.constant, other.constant)
        )


def fit_scaler(x: np.ndarray) -> Scaler:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a scaler on an empty matrix")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    # a tiny spread can underflow the variance to zero
    constant = (np.ptp(x, axis=0) == 0) | ~(sd > 0) | ~np.isfinite(sd)
    return Scaler(mean, np.where(constant, 0.0, sd), constant)


def standardize(dataset, feature_set: int) -> tuple[Scaler, np.ndarray]:
    """Fit a scaler on the ``feature_set`` columns of ``dataset``; return it and the scaled matrix."""
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset is empty")
    if len(dataset) < 2:
        raise ModelError("standardize needs at least 2 samples")
    cols = select_features(feature_set, dataset.schema)
    x = np.column_stack([dataset.column(c) for c in cols])
    scaler = fit_scaler(x)
    return scaler, scaler.transform(x)


def to_model_space(targets: np.ndarray, target_kind: str) -> np.ndarray:
    t = np.asarray(targets, dtype=np.float64)
    return np.log10(t + WER_FLOOR) if target_kind == "wer" else t


def from_model_space(values: np.ndarray, target_kind: str) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if target_kind == "wer":
        v = np.power(10.0, v) - WER_FLOOR
    return np.clip(v, 0.0, 1.0)


@dataclass(frozen=True)
class ModelConfig:
    """Trainer choice and hyperparameters. ``gamma = 0`` means 1/d; ``max_depth = -1`` is unlimited."""

    kind: str = "knn"
    k: int = 5
    n_trees: int = 100
    max_depth: int = -1
    min_leaf: int = 2
    max_features: int = 0
    bootstrap: bool = True
    c: float = 10.0
    epsilon: float = 0.01
    gamma: float = 0.0
    tol: float = 1e-3
    max_iter: int = 0
    seed: int = 0
    device_encoding: str = "ordinal"

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ModelError(f"kind: expected one of {KINDS}, got {self.kind!r}")
        if self.device_encoding not in DEVICE_ENCODINGS:
            raise ModelError(f"device_encoding: expected one of {DEVICE_ENCODINGS}")
        if self.n_trees < 1:
            raise ModelError("n_trees: must be >= 1")
        if self.min_leaf < 1:
            raise ModelError("min_leaf: must be >= 1")
        if not self.c > 0 or self.epsilon < 0 or self.gamma < 0:
            raise ModelError("svr: need c > 0, epsilon >= 0, gamma >= 0")


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """An immutable fitted model; ``params`` holds kind-specific arrays and scalars."""

    kind: str
    feature_set: int
    target_kind: str
    columns: tuple[str, ...]
    devices: tuple[str, ...]
    device_encoding: str
    scaler: Scaler
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def input_columns(self) -> tuple[str, ...]:
        """Scaled columns: feature columns followed by device columns."""
        return self.columns + device_columns(self.devices, self.device_encoding)


def device_columns(devices: Sequence[str], encoding: str) -> tuple[str, ...]:
    if encoding == "ordinal":
        return ("device_ordinal",)
    if encoding == "onehot":
        return tuple(f"device={d}" for d in devices)
    return ()


def device_block(names: Sequence[str], devices: Sequence[str], encoding: str) -> np.ndarray:
    """Device columns for ``names`` relative to the training devices.

    An unseen device gets the mean ordinal (or an all-zero one-hot row).
    """
    index = {d: i for i, d in enumerate(devices)}
    if encoding == "ordinal":
        centre = (len(devices) - 1) / 2.0
        return np.array([[float(index.get(n, centre))] for n in names], dtype=np.float64).reshape(-1, 1)
    if encoding == "onehot":
        out = np.zeros((len(names), len(devices)))
        for r, n in enumerate(names):
            if n in index:
                out[r, index[n]] = 1.0
        return out
    return np.zeros((len(names), 0))


def raw_matrix(
    fvs: Sequence[FeatureVector], columns: Sequence[str], devices: Sequence[str], encoding: str
) -> np.ndarray:
    rows = []
    for fv in fvs:
        d = fv.as_dict()
        try:
            rows.append([d[c] for c in columns])
        except KeyError as exc:
            raise SchemaMismatchError(f"feature vector lacks column {exc.args[0]!r}") from None
    x = np.asarray(rows, dtype=np.float64).reshape(len(fvs), len(columns))
    return np.hstack([x, device_block([fv.device for fv in fvs], devices, encoding)])


def training_matrix(dataset, feature_set: int, encoding: str):
    """(columns, devices, scaler, scaled X, model-space y) for a training set."""
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset is empty")
    columns = select_features(feature_set, dataset.schema)
    devices = tuple(sorted(set(dataset.devices.tolist())))
    raw = raw_matrix(dataset.features, columns, devices, encoding)
    scaler = fit_scaler(raw)
    y = to_model_space(dataset.targets, dataset.target_kind)
    return columns, devices, scaler, scaler.transform(raw), y
