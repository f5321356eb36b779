"""
Processor pipelines for feature matrices.

This module provides the fitted preprocessing steps applied between feature extraction
and model fitting: the three normalizations, the low-variance feature filter and the
dense autoencoder bottleneck. Every step is fitted on training rows only and then
applied unchanged to test rows.
"""
from typing import Any

import numpy as np

from .config_learners import AutoencoderSpec
from .errors import FeatureError


class ProcessorStep:
    """
    One fitted transformation of a feature matrix (one vector per row).
    """

    def fit(self, matrix: np.ndarray) -> "ProcessorStep":
        """Learn the step's state from training rows."""
        return self

    def forward(self, matrix: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_dict(self) -> dict[str, Any]:
        """Fitted state, for provenance in results and saved models."""
        return {}


class IdentityStep(ProcessorStep):
    def forward(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(matrix, dtype=float)


class FeatureWiseNormalizer(ProcessorStep):
    """
    Divide each column by its maximum over the training rows.

    Columns whose training maximum is 0 are left untouched. Test rows can exceed 1.
    """

    def __init__(self):
        self.maxima: np.ndarray | None = None

    def fit(self, matrix: np.ndarray) -> "FeatureWiseNormalizer":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape[0] == 0:
            raise FeatureError("cannot fit feature-wise normalization on zero rows")
        self.maxima = matrix.max(axis=0)
        return self

    def forward(self, matrix: np.ndarray) -> np.ndarray:
        if self.maxima is None:
            raise FeatureError("FeatureWiseNormalizer used before fit()")
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape[1] != self.maxima.size:
            raise FeatureError(
                f"expected {self.maxima.size} features, got {matrix.shape[1]}"
            )
        scale = np.where(self.maxima > 0, self.maxima, 1.0)
        return matrix / scale

    def state_dict(self) -> dict[str, Any]:
        return {"maxima": self.maxima}


class VectorWiseNormalizer(ProcessorStep):
    """
    Divide each row by its own largest element (rows with max 0 stay as they are).
    """

    def forward(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.size == 0:
            return matrix
        peak = matrix.max(axis=1, keepdims=True)
        return matrix / np.where(peak > 0, peak, 1.0)


class ProbDistNormalizer(ProcessorStep):
    """
    Divide each row by the sum of its elements, giving a probability vector.
    """

    def forward(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.size == 0:
            return matrix
        total = matrix.sum(axis=1, keepdims=True)
        return matrix / np.where(total > 0, total, 1.0)


class VarianceFilter(ProcessorStep):
    """
    Drop features whose training variance is below `threshold`.
    """

    def __init__(self, threshold: float = 1e-3):
        """
        Args:
            threshold: features with population variance strictly below this are dropped
        """
        self.threshold = threshold
        self.mask: np.ndarray | None = None
        self.variances: np.ndarray | None = None

    def fit(self, matrix: np.ndarray) -> "VarianceFilter":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape[0] < 2:
            raise FeatureError("variance filter needs at least 2 training vectors")
        self.variances = matrix.var(axis=0)
        self.mask = self.variances >= self.threshold
        if not self.mask.any():
            raise FeatureError(
                f"all {matrix.shape[1]} features have variance below {self.threshold}"
            )
        return self

    def forward(self, matrix: np.ndarray) -> np.ndarray:
        if self.mask is None:
            raise FeatureError("VarianceFilter used before fit()")
        return np.asarray(matrix, dtype=float)[:, self.mask]

    def state_dict(self) -> dict[str, Any]:
        return {"threshold": self.threshold, "mask": self.mask}


class AutoencoderStep(ProcessorStep):
    """
    Replace rows by the bottleneck of a dense autoencoder trained on the training rows.
    """

    def __init__(self, spec: AutoencoderSpec | None = None):
        self.spec = spec or AutoencoderSpec()
        self.model = None

    def fit(self, matrix: np.ndarray) -> "AutoencoderStep":
        from .learners import fit

        self.model = fit(self.spec, np.asarray(matrix, dtype=float))
        return self

    def forward(self, matrix: np.ndarray) -> np.ndarray:
        from .learners import autoencoder_encode

        if self.model is None:
            raise FeatureError("AutoencoderStep used before fit()")
        return autoencoder_encode(self.model, np.asarray(matrix, dtype=float))

    def state_dict(self) -> dict[str, Any]:
        return {"layer_plan": list(self.model.plan) if self.model is not None else None}


class ProcessorPipeline:
    """
    Ordered processor steps; `fit` fits each step on the output of the previous one.
    """

    def __init__(self, steps: list[ProcessorStep] | None = None):
        self.steps = list(steps or [])

    def fit(self, matrix: np.ndarray) -> "ProcessorPipeline":
        self.fit_forward(matrix)
        return self

    def fit_forward(self, matrix: np.ndarray) -> np.ndarray:
        current = np.asarray(matrix, dtype=float)
        for step in self.steps:
            current = step.fit(current).forward(current)
        return current

    def forward(self, matrix: np.ndarray) -> np.ndarray:
        current = np.asarray(matrix, dtype=float)
        for step in self.steps:
            current = step.forward(current)
        return current

    def state_dict(self) -> dict[str, Any]:
        return {type(step).__name__: step.state_dict() for step in self.steps}


def create_normalizer(mode: str) -> ProcessorStep:
    """Processor step for a normalization mode name."""
    if mode == "feature_wise":
        return FeatureWiseNormalizer()
    if mode == "vector_wise":
        return VectorWiseNormalizer()
    if mode == "prob_dist":
        return ProbDistNormalizer()
    if mode == "none":
        return IdentityStep()
    raise FeatureError(f"Unknown normalization: {mode}")


def create_feature_processor(
    normalization: str,
    variance_threshold: float | None = None,
    autoencoder: AutoencoderSpec | None = None,
) -> ProcessorPipeline:
    """
    Create the standard preprocessing pipeline for an attack.

    Args:
        normalization: one of none, feature_wise, vector_wise, prob_dist
        variance_threshold: drop low-variance features after normalizing (None disables)
        autoencoder: when given, encode the normalized rows with a dense autoencoder

    Returns:
        Unfitted processor pipeline
    """
    steps: list[ProcessorStep] = []

    if normalization != "none":
        steps.append(create_normalizer(normalization))

    if variance_threshold is not None:
        steps.append(VarianceFilter(threshold=variance_threshold))

    if autoencoder is not None:
        steps.append(AutoencoderStep(autoencoder))

    return ProcessorPipeline(steps=steps)
