"""Small affine-ReLU embedding networks with manual gradients and momentum SGD.

Networks are stacks of (weight, bias) layers with ReLU between layers and
row-wise L2 normalization after the last layer, so any nonzero input maps to
a unit vector. All math is float64. Gradients are exact (checked against
central finite differences in the test suite); the ReLU subgradient at 0 is
taken as 0 and a pre-normalization norm below 1e-12 makes normalization a
pass-through for that row.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .errors import DegenerateInputError, DimensionMismatchError

log = logging.getLogger(__name__)

NORM_EPS = 1e-12


def _as_batch(x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :]
    return x


class EmbeddingNet:
    """Affine-ReLU stack with final L2 normalization.

    weights[i] has shape (in_i, out_i) with out_i == in_{i+1}; the forward pass
    computes relu(x @ W + b) for every layer but the last, then normalizes rows
    of the final affine output.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise DimensionMismatchError("layer lists", len(weights), len(biases))
        for i in range(len(weights) - 1):
            if weights[i].shape[1] != weights[i + 1].shape[0]:
                raise DimensionMismatchError(
                    f"layer {i}->{i + 1} dims", weights[i].shape[1], weights[i + 1].shape[0]
                )
        for w, b in zip(weights, biases):
            if w.shape[1] != b.shape[0]:
                raise DimensionMismatchError("bias dim", w.shape[1], b.shape[0])
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @classmethod
    def create(cls, layer_dims: list[int], rng: np.random.Generator) -> "EmbeddingNet":
        """Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def forward_batch(self, x: np.ndarray, want_cache: bool = False):
        """Embed a batch of rows; optionally return the cache needed by backward."""
        x = _as_batch(x)
        if x.shape[1] != self.input_dim:
            raise DimensionMismatchError("input dim", self.input_dim, x.shape[1])
        inputs = [x]
        h = x
        for i in range(self.num_layers - 1):
            h = K.relu_forward(K.affine_forward(h, self.weights[i], self.biases[i]))
            inputs.append(h)
        z = K.affine_forward(h, self.weights[-1], self.biases[-1])
        y, norms, skipped = K.l2norm_rows(z, NORM_EPS)
        if skipped.any():
            log.warning(
                "l2 normalization skipped for %d/%d rows (norm < %.0e)",
                int(skipped.sum()), len(norms), NORM_EPS,
            )
        if want_cache:
            return y, (inputs, y, norms, skipped)
        return y

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Embed a single vector."""
        return self.forward_batch(x)[0]

    def backward_batch(self, cache, g: np.ndarray):
        """Gradients of sum(g * forward(x)) w.r.t. parameters and input.

        Returns (grads, gx) where grads is a list of (gW, gb) per layer.
        """
        inputs, y, norms, skipped = cache
        g = _as_batch(g)
        if g.shape != y.shape:
            raise DimensionMismatchError("upstream grad shape", y.shape, g.shape)
        gz = K.l2norm_rows_backward(g, y, norms, skipped)
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * self.num_layers  # type: ignore[list-item]
        for i in range(self.num_layers - 1, -1, -1):
            gx, gw, gb = K.affine_backward(inputs[i], self.weights[i], gz)
            grads[i] = (gw, gb)
            if i > 0:
                gz = K.relu_backward(gx, inputs[i])
        return grads, gx

    def zero_grads(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(self.weights, self.biases)]


def accumulate_grads(acc, extra, scale: float = 1.0) -> None:
    """acc[i] += scale * extra[i], layer by layer, in place."""
    for (aw, ab), (ew, eb) in zip(acc, extra):
        aw += scale * ew
        ab += scale * eb


@dataclass
class SgdState:
    """Momentum SGD over a set of named parameter tensors.

    velocity buffers are created lazily and always match parameter shapes.
    """

    learning_rate: float
    momentum: float
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")

    def step(self, named_params, named_grads) -> None:
        """v <- m*v - lr*g; p <- p + v, per tensor, in place."""
        for key, param in named_params.items():
            grad = named_grads[key]
            if grad.shape != param.shape:
                raise DimensionMismatchError(f"grad shape for {key}", param.shape, grad.shape)
            vel = self.velocity.get(key)
            if vel is None:
                vel = np.zeros_like(param)
                self.velocity[key] = vel
            K.momentum_update(param.ravel(), np.ascontiguousarray(grad).ravel(),
                              vel.ravel(), self.learning_rate, self.momentum)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b) in [0, 2]; raises on zero-norm input or dim mismatch."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError("vector dims", a.shape, b.shape)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_EPS or nb < NORM_EPS:
        raise DegenerateInputError(f"cosine distance needs nonzero vectors (norms {na:g}, {nb:g})")
    d = 1.0 - float(a @ b) / (na * nb)
    return min(max(d, 0.0), 2.0)


def pairwise_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(n, m) cosine distance matrix; validates that every row is nonzero."""
    a = _as_batch(a)
    b = _as_batch(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError("vector dims", a.shape[1], b.shape[1])
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if (na < NORM_EPS).any() or (nb < NORM_EPS).any():
        raise DegenerateInputError("pairwise cosine distance got a zero-norm row")
    return K.pairwise_cosine(a, b)
