"""
Fitting, scoring and persistence for every model kind.

    model = fit(MLPSpec(shape="d2", seed=7), X_train, y_train)
    scores = predict_score(model, X_test)
    save_model(model, "model.json")
"""
import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from .config_learners import ModelSpec, UnavailableSpec
from .errors import ModelError, NotImplementedVariantError
from .forest import DecisionTree, RandomForest
from .nets import (
    DenseAutoencoder,
    DenseSiamese,
    GradientModel,
    LinearSVM,
    LogisticRegression,
    MLPClassifier,
    autoencoder_layer_plan,
)

logger = logging.getLogger(__name__)

TrainedModel = Union[GradientModel, RandomForest]

MODEL_CLASSES: dict[str, type] = {
    "logreg": LogisticRegression,
    "linear_svm": LinearSVM,
    "mlp": MLPClassifier,
    "autoencoder": DenseAutoencoder,
    "siamese_dense": DenseSiamese,
    "random_forest": RandomForest,
}

__all__ = [
    "MODEL_CLASSES",
    "TrainedModel",
    "autoencoder_encode",
    "autoencoder_layer_plan",
    "fit",
    "load_model",
    "predict_score",
    "save_model",
    "siamese_forward",
]


def _model_class(spec: ModelSpec) -> type:
    if isinstance(spec, UnavailableSpec) or spec.type not in MODEL_CLASSES:
        raise NotImplementedVariantError(
            f"model kind {spec.type!r} is not implemented (available: {sorted(MODEL_CLASSES)})"
        )
    return MODEL_CLASSES[spec.type]


def fit(spec: ModelSpec, X: np.ndarray, y: np.ndarray | None = None) -> TrainedModel:
    """
    Train a model of kind `spec.type` on X (one sample per row; (n, 2, l) pairs for Siamese).

    Args:
        spec: model specification; its seed fixes initialization, shuffling and dropout
        X: finite feature matrix
        y: binary labels in {0, 1}; ignored by the autoencoder

    Returns:
        Trained model, deterministic for a fixed seed
    """
    cls = _model_class(spec)
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ModelError("cannot fit a model on zero samples")
    if not np.all(np.isfinite(X)):
        raise ModelError("features contain NaN or infinite values")
    expected_ndim = getattr(cls, "sample_ndim", 1) + 1
    if X.ndim != expected_ndim:
        raise ModelError(f"{spec.type} expects a {expected_ndim}-d input array, got {X.ndim}-d")

    if spec.supervised:
        if y is None:
            raise ModelError(f"{spec.type} needs labels")
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ModelError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if not np.isin(y, (0, 1)).all():
            raise ModelError("labels must be 0 or 1")
        if np.unique(y).size < 2:
            raise ModelError(f"training labels contain a single class ({int(y[0])})")
        y = y.astype(float)

    model = cls(spec, X.shape[-1])
    model.train(X, y if spec.supervised else None)
    logger.debug(f"Fitted {spec.type} on {X.shape[0]} samples of {X.shape[-1]} features")
    return model


def predict_score(model: TrainedModel, x: np.ndarray) -> float | np.ndarray:
    """
    Score in [0, 1] for one sample (returns a float) or a batch of samples (returns an array).

    Sigmoid output for logreg, mlp and Siamese, mean tree vote for the forest, squashed
    margin for the linear SVM. Dropout is never applied here.
    """
    if isinstance(model, DenseAutoencoder):
        raise ModelError("an autoencoder does not score samples; use autoencoder_encode()")
    x = np.asarray(x, dtype=float)
    single = x.ndim == model.sample_ndim
    scores = model.predict_score(x[None] if single else x)
    return float(scores[0]) if single else scores


def siamese_forward(model: DenseSiamese, a: np.ndarray, b: np.ndarray) -> float:
    """Same-person score of two vectors; symmetric in (a, b)."""
    if not isinstance(model, DenseSiamese):
        raise ModelError(f"siamese_forward needs a siamese_dense model, got {model.spec.type}")
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ModelError(f"pair sides differ in shape: {a.shape} vs {b.shape}")
    return predict_score(model, np.stack([a, b]))


def autoencoder_encode(model: DenseAutoencoder, x: np.ndarray) -> np.ndarray:
    """Bottleneck (l3) representation of one vector or of every row of a matrix."""
    if not isinstance(model, DenseAutoencoder):
        raise ModelError(f"autoencoder_encode needs an autoencoder, got {model.spec.type}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return model.encode(x[None])[0]
    return model.encode(x)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _encode_array(array: np.ndarray) -> dict:
    return {"dtype": str(array.dtype), "shape": list(array.shape), "data": array.ravel().tolist()}


def _decode_array(data: dict) -> np.ndarray:
    return np.asarray(data["data"], dtype=data.get("dtype", "float64")).reshape(data["shape"])


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Self-describing JSON: the spec (with its `type`) plus every learned array."""
    payload = {
        "spec": model.spec.to_dict(),
        "n_features": model.n_features,
        "history": list(model.history),
    }
    if isinstance(model, RandomForest):
        payload["trees"] = [tree.to_dict() for tree in model.trees]
    else:
        payload["params"] = {name: _encode_array(p) for name, p in model.params.items()}
    Path(path).write_text(json.dumps(payload) + "\n")
    logger.info(f"✓ Saved {model.spec.type} model to {path}")


def load_model(path: str | Path) -> TrainedModel:
    payload = json.loads(Path(path).read_text())
    try:
        spec = ModelSpec.from_dict(payload["spec"])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelError(f"{path}: invalid model spec: {e}") from e

    model = _model_class(spec)(spec, payload["n_features"])
    model.history = list(payload.get("history", []))
    if isinstance(model, RandomForest):
        model.trees = [DecisionTree.from_dict(t) for t in payload["trees"]]
        return model

    params = model.params
    stored = payload.get("params", {})
    if set(stored) != set(params):
        raise ModelError(f"{path}: parameters {sorted(stored)} do not match {sorted(params)}")
    for name, target in params.items():
        value = _decode_array(stored[name])
        if value.shape != target.shape:
            raise ModelError(f"{path}: {name} has shape {value.shape}, expected {target.shape}")
        target[...] = value
    return model

