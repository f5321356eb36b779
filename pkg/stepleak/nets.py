"""
Dense neural networks trained with Adam on minibatches.

Every network keeps its parameters in `params`, a name -> array mapping ("hidden0.W",
"out.b", ...). Optimizer updates and `load_model` write into these arrays in place, and
`loss_and_grads` returns gradients under the same names, so a finite-difference check
only has to perturb `params[name]` and call `loss_and_grads` again.
"""
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit

from .config_learners import (
    MLP_SHAPES,
    GradientSpec,
    MLPSpec,
    SiameseSpec,
)
from .errors import ModelError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

@dataclass
class Dense:
    """Fully connected layer with optional ReLU and inverted dropout on its output."""

    name: str
    n_in: int
    n_out: int
    activation: str = "linear"
    dropout: float = 0.0
    W: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_in < 1 or self.n_out < 1:
            raise ModelError(
                f"layer {self.name}: sizes must be >= 1, got {self.n_in}x{self.n_out}"
            )
        if self.activation not in ("linear", "relu"):
            raise ModelError(f"layer {self.name}: unknown activation {self.activation}")
        self.W = np.zeros((self.n_in, self.n_out))
        self.b = np.zeros(self.n_out)

    def init(self, rng: np.random.Generator) -> None:
        # He-style uniform init scaled by fan-in
        limit = np.sqrt(6.0 / self.n_in)
        self.W[...] = rng.uniform(-limit, limit, size=self.W.shape)
        self.b[...] = 0.0

    def forward(
        self, X: np.ndarray, train: bool = False, rng: np.random.Generator | None = None
    ) -> tuple[np.ndarray, tuple]:
        z = X @ self.W + self.b
        out = np.maximum(z, 0.0) if self.activation == "relu" else z
        mask = None
        if train and self.dropout > 0:
            keep = 1.0 - self.dropout
            mask = (rng.random(out.shape) < keep) / keep
            out = out * mask
        return out, (X, z, mask)

    def backward(
        self, grad_out: np.ndarray, cache: tuple
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        X, z, mask = cache
        if mask is not None:
            grad_out = grad_out * mask
        grad_z = grad_out * (z > 0) if self.activation == "relu" else grad_out
        return grad_z @ self.W.T, X.T @ grad_z, grad_z.sum(axis=0)


class DenseStack:
    """Layers applied in order."""

    def __init__(self, layers: list[Dense]):
        self.layers = layers

    def forward(self, X, train=False, rng=None) -> tuple[np.ndarray, list]:
        caches = []
        for layer in self.layers:
            X, cache = layer.forward(X, train, rng)
            caches.append(cache)
        return X, caches

    def backward(self, grad: np.ndarray, caches: list, grads: dict[str, np.ndarray]) -> np.ndarray:
        """Backpropagate `grad`, adding parameter gradients into `grads`."""
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad, dW, db = layer.backward(grad, cache)
            grads[f"{layer.name}.W"] += dW
            grads[f"{layer.name}.b"] += db
        return grad


class Adam:
    def __init__(
        self,
        params: dict[str, np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


# ---------------------------------------------------------------------------
# Losses (each returns mean loss and d loss / d output)
# ---------------------------------------------------------------------------

def bce_with_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    n = z.shape[0]
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return loss, (expit(z) - y) / n


def hinge(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    n = z.shape[0]
    signed = 2.0 * y - 1.0
    slack = 1.0 - signed * z
    loss = float(np.mean(np.maximum(slack, 0.0)))
    return loss, -signed * (slack > 0) / n


def mse(out: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = out - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class GradientModel:
    """Base class of the Adam-trained networks."""

    # Number of array axes of one input sample
    sample_ndim = 1

    def __init__(self, spec: GradientSpec, n_features: int):
        self.spec = spec
        self.n_features = int(n_features)
        self.history: list[float] = []
        self.stacks: list[DenseStack] = []
        self._build()

    def _build(self) -> None:
        raise NotImplementedError

    @property
    def layers(self) -> list[Dense]:
        return [layer for stack in self.stacks for layer in stack.layers]

    @property
    def params(self) -> dict[str, np.ndarray]:
        params = {}
        for layer in self.layers:
            params[f"{layer.name}.W"] = layer.W
            params[f"{layer.name}.b"] = layer.b
        return params

    def init_params(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init(rng)

    def _zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def _add_l2(self, loss: float, grads: dict[str, np.ndarray]) -> float:
        l2 = self.spec.l2
        if l2 > 0:
            for layer in self.layers:
                loss += 0.5 * l2 * float(np.sum(layer.W * layer.W))
                grads[f"{layer.name}.W"] += l2 * layer.W
        return loss

    def loss_and_grads(
        self, X: np.ndarray, y: np.ndarray | None = None, train: bool = False, rng=None
    ) -> tuple[float, dict[str, np.ndarray]]:
        raise NotImplementedError

    def train(self, X: np.ndarray, y: np.ndarray | None = None) -> "GradientModel":
        """Minibatch Adam; every random draw comes from `spec.seed`."""
        spec = self.spec
        rng = np.random.default_rng(spec.seed)
        self.init_params(rng)
        optimizer = Adam(self.params, learning_rate=spec.learning_rate)
        n = X.shape[0]
        batch = min(spec.batch_size, n)
        for epoch in range(spec.epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                loss, grads = self.loss_and_grads(
                    X[idx], None if y is None else y[idx], train=True, rng=rng
                )
                optimizer.step(grads)
                total += loss * idx.size
            self.history.append(total / n)
            if epoch % 10 == 0 or epoch == spec.epochs - 1:
                logger.debug(
                    f"{type(self).__name__} epoch {epoch + 1}/{spec.epochs} "
                    f"loss {self.history[-1]:.6f}"
                )
        return self

    def check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != self.sample_ndim + 1 or X.shape[-1] != self.n_features:
            raise ModelError(
                f"{type(self).__name__} expects samples of {self.n_features} features, "
                f"got array of shape {X.shape}"
            )
        return X

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision(X))

    def decision(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict[str, Any]:
        return {"n_features": self.n_features}


class LogisticRegression(GradientModel):
    def _build(self):
        self.stacks = [DenseStack([Dense("out", self.n_features, 1)])]

    def decision(self, X):
        X = self.check_input(X)
        z, _ = self.stacks[0].forward(X)
        return z[:, 0]

    def _loss(self, z, y):
        return bce_with_logits(z, y)

    def loss_and_grads(self, X, y=None, train=False, rng=None):
        stack = self.stacks[0]
        out, caches = stack.forward(X, train, rng)
        loss, grad = self._loss(out[:, 0], np.asarray(y, dtype=float))
        grads = self._zero_grads()
        stack.backward(grad[:, None], caches, grads)
        return self._add_l2(loss, grads), grads


class LinearSVM(LogisticRegression):
    """Linear max-margin classifier; the score is the squashed margin, useful for ranking only."""

    def _loss(self, z, y):
        return hinge(z, y)


class MLPClassifier(LogisticRegression):
    """Dense classifier with one of the d1 / d2 / d3 hidden layouts."""

    def _build(self):
        spec: MLPSpec = self.spec
        layers = []
        n_in = self.n_features
        for i, (fraction, dropout_after) in enumerate(MLP_SHAPES[spec.shape]):
            n_out = max(spec.min_hidden, int(np.floor(fraction * self.n_features)))
            layers.append(
                Dense(f"hidden{i}", n_in, n_out, "relu", spec.dropout if dropout_after else 0.0)
            )
            n_in = n_out
        layers.append(Dense("out", n_in, 1))
        self.stacks = [DenseStack(layers)]

    def describe(self):
        return {"n_features": self.n_features, "layers": [layer.n_out for layer in self.layers]}


def autoencoder_layer_plan(l1: int) -> tuple[int, int, int, int, int]:
    """Layer sizes (l1, l2, l3, l4, l5) of the dense autoencoder for inputs of length l1."""
    if l1 < 4:
        raise ModelError(f"autoencoder input of length {l1} is too short to compress (need >= 4)")
    l2 = min(2048, l1 // 4) if l1 > 255 else l1 // 2
    l3 = l2 // 4 if l2 > 127 else l2 // 2
    if l3 < 1:
        raise ModelError(f"autoencoder input of length {l1} is too short to compress")
    return l1, l2, l3, l2, l1


class DenseAutoencoder(GradientModel):
    """Five dense layers; the third (bottleneck) layer is the learned feature vector."""

    def _build(self):
        self.plan = autoencoder_layer_plan(self.n_features)
        l1, l2, l3, l4, l5 = self.plan
        self.stacks = [
            DenseStack([Dense("enc1", l1, l2, "relu"), Dense("enc2", l2, l3)]),
            DenseStack([Dense("dec1", l3, l4, "relu"), Dense("dec2", l4, l5)]),
        ]

    def encode(self, X: np.ndarray) -> np.ndarray:
        code, _ = self.stacks[0].forward(self.check_input(X))
        return code

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        out, _ = self.stacks[1].forward(self.encode(X))
        return out

    def reconstruction_error(self, X: np.ndarray) -> float:
        X = self.check_input(X)
        return float(np.mean((self.reconstruct(X) - X) ** 2))

    def loss_and_grads(self, X, y=None, train=False, rng=None):
        encoder, decoder = self.stacks
        code, enc_caches = encoder.forward(X, train, rng)
        out, dec_caches = decoder.forward(code, train, rng)
        loss, grad = mse(out, X)
        grads = self._zero_grads()
        grad = decoder.backward(grad, dec_caches, grads)
        encoder.backward(grad, enc_caches, grads)
        return self._add_l2(loss, grads), grads

    def decision(self, X):
        raise ModelError("an autoencoder has no decision function; use encode()")

    def describe(self):
        return {"n_features": self.n_features, "plan": list(self.plan)}


class DenseSiamese(GradientModel):
    """
    Two weight-shared dense subnetworks (l/2 then l/4 units) whose embeddings are compared by
    element-wise absolute difference, followed by one sigmoid unit.

    Samples are (2, l) arrays holding the two sides of a pair.
    """

    sample_ndim = 2

    def _build(self):
        spec: SiameseSpec = self.spec
        d = self.n_features
        h1, h2 = max(1, d // 2), max(1, d // 4)
        self.stacks = [
            DenseStack(
                [Dense("embed1", d, h1, "relu", spec.dropout), Dense("embed2", h1, h2, "relu")]
            ),
            DenseStack([Dense("out", h2, 1)]),
        ]

    def embed(self, X: np.ndarray) -> np.ndarray:
        out, _ = self.stacks[0].forward(np.asarray(X, dtype=float))
        return out

    def check_input(self, X):
        X = super().check_input(X)
        if X.shape[1] != 2:
            raise ModelError(
                f"siamese samples must have shape (2, {self.n_features}), got {X.shape[1:]}"
            )
        return X

    def decision(self, X):
        X = self.check_input(X)
        embed, head = self.stacks
        ea, _ = embed.forward(X[:, 0])
        eb, _ = embed.forward(X[:, 1])
        z, _ = head.forward(np.abs(ea - eb))
        return z[:, 0]

    def loss_and_grads(self, X, y=None, train=False, rng=None):
        embed, head = self.stacks
        ea, cache_a = embed.forward(X[:, 0], train, rng)
        eb, cache_b = embed.forward(X[:, 1], train, rng)
        diff = ea - eb
        out, head_caches = head.forward(np.abs(diff))
        loss, grad = bce_with_logits(out[:, 0], np.asarray(y, dtype=float))
        grads = self._zero_grads()
        grad_abs = head.backward(grad[:, None], head_caches, grads)
        grad_diff = grad_abs * np.sign(diff)
        embed.backward(grad_diff, cache_a, grads)
        embed.backward(-grad_diff, cache_b, grads)
        return self._add_l2(loss, grads), grads

