"""Error-rate regressors (KNN, random forest, SVR) and the workload-unaware baseline."""
from .api import (
    predict,
    predict_many,
    predict_model_space,
    train,
    train_baseline,
    train_knn,
    train_rdf,
    train_svr,
)
from .common import (
    KINDS,
    EmptyDatasetError,
    ModelConfig,
    ModelError,
    Scaler,
    SchemaMismatchError,
    TrainedModel,
    fit_scaler,
    standardize,
)
from .persist import (
    ModelFormatError,
    ModelKindError,
    ModelVersionError,
    load_model,
    model_from_bytes,
    model_to_bytes,
    save_model,
)
from .svr import ConvergenceError

__all__ = [
    "KINDS",
    "ConvergenceError",
    "EmptyDatasetError",
    "ModelConfig",
    "ModelError",
    "ModelFormatError",
    "ModelKindError",
    "ModelVersionError",
    "Scaler",
    "SchemaMismatchError",
    "TrainedModel",
    "fit_scaler",
    "load_model",
    "model_from_bytes",
    "model_to_bytes",
    "predict",
    "predict_many",
    "predict_model_space",
    "save_model",
    "standardize",
    "train",
    "train_baseline",
    "train_knn",
    "train_rdf",
    "train_svr",
]
