"""
services/tensor_core.py - Dense feed-forward evaluation and input gradients

Evaluates a generator made of dense and pointwise activation layers and
back-propagates a cotangent to the latent input. Weights are constants;
nothing here trains a network.
"""
from dataclasses import dataclass, field
import logging
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from services.errors import DimensionMismatchError, InvariantViolationError, ShapeMismatchError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "identity")


def _frozen(values, ndim):
    array = np.array(values, dtype=np.float64)
    if array.ndim != ndim:
        raise InvariantViolationError("dense parameter rank", f"expected {ndim}-D array, got {array.ndim}-D")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """
    One generator layer.

    A dense layer carries an (out x in) weight matrix and a bias of length
    out; an activation layer carries the activation name and, for
    leaky_relu, its negative slope.
    """
    kind: str
    weight: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    activation: Optional[str] = None
    slope: Optional[float] = None

    @classmethod
    def dense(cls, weight, bias):
        layer = cls("dense", weight=_frozen(weight, 2), bias=_frozen(bias, 1))
        layer.validate()
        return layer

    @classmethod
    def act(cls, name, slope=None):
        if name == "leaky_relu" and slope is None:
            slope = 0.2
        layer = cls("activation", activation=name, slope=None if slope is None else float(slope))
        layer.validate()
        return layer

    @property
    def in_width(self):
        return None if self.kind != "dense" else self.weight.shape[1]

    @property
    def out_width(self):
        return None if self.kind != "dense" else self.weight.shape[0]

    def validate(self):
        if self.kind == "dense":
            if self.weight.shape[0] != self.bias.shape[0]:
                raise InvariantViolationError(
                    "dense weight row count equals bias length",
                    f"{self.weight.shape[0]} rows, bias length {self.bias.shape[0]}",
                )
            if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
                raise InvariantViolationError("dense parameters are finite")
        elif self.kind == "activation":
            if self.activation not in ACTIVATIONS:
                raise InvariantViolationError("activation is known", repr(self.activation))
            if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
                raise InvariantViolationError("leaky_relu slope in (0, 1)", f"slope={self.slope}")
        else:
            raise InvariantViolationError("layer kind is dense or activation", repr(self.kind))

    def __eq__(self, other):
        if not isinstance(other, LayerSpec):
            return NotImplemented
        if self.kind != other.kind:
            return False
        if self.kind == "dense":
            return np.array_equal(self.weight, other.weight) and np.array_equal(self.bias, other.bias)
        return self.activation == other.activation and self.slope == other.slope

    __hash__ = None

    def apply(self, x, index):
        """Evaluate the layer on a single input or on a batch (one row per input)."""
        if self.kind == "dense":
            if x.shape[-1] != self.in_width:
                raise DimensionMismatchError(index, self.in_width, x.shape[-1])
            return x @ self.weight.T + self.bias
        name = self.activation
        if name == "relu":
            return np.maximum(x, 0.0)
        if name == "leaky_relu":
            return np.where(x > 0.0, x, self.slope * x)
        if name == "tanh":
            return np.tanh(x)
        if name == "sigmoid":
            return expit(x)
        return x.copy()

    def backward(self, x, y, cotangent):
        """Pull a cotangent on the layer output back to its input."""
        if self.kind == "dense":
            return cotangent @ self.weight
        name = self.activation
        if name == "relu":
            # subgradient at exactly 0 is 0
            return cotangent * (x > 0.0)
        if name == "leaky_relu":
            return cotangent * np.where(x > 0.0, 1.0, self.slope)
        if name == "tanh":
            return cotangent * (1.0 - y * y)
        if name == "sigmoid":
            return cotangent * y * (1.0 - y)
        return cotangent.copy()


def _as_latent(z):
    z = np.array(z, dtype=np.float64)
    if z.ndim not in (1, 2):
        raise ShapeMismatchError(f"latent input must be 1-D or a 2-D batch, got shape {z.shape}")
    return z


def _trace(layers: Sequence[LayerSpec], z):
    """Run the forward pass, keeping every layer input for the backward pass."""
    activations = [_as_latent(z)]
    for index, layer in enumerate(layers):
        activations.append(layer.apply(activations[-1], index))
    return activations


def forward(layers: Sequence[LayerSpec], z):
    """
    Evaluate G(z).

    Args:
        layers: Ordered layer list.
        z: Latent vector, or a 2-D batch with one latent per row.

    Returns:
        np.ndarray: Generator output (one row per latent for a batch).
    """
    return _trace(layers, z)[-1]


def grad_input(layers: Sequence[LayerSpec], z, cotangent):
    """
    Compute J^T . cotangent where J is the Jacobian of G at z.

    Args:
        layers: Ordered layer list.
        z: Latent vector (1-D).
        cotangent: Array with the shape of G(z).

    Returns:
        np.ndarray: Gradient with the shape of z.
    """
    activations = _trace(layers, z)
    cotangent = np.asarray(cotangent, dtype=np.float64)
    if cotangent.shape != activations[-1].shape:
        raise ShapeMismatchError(
            f"cotangent shape {cotangent.shape} does not match output shape {activations[-1].shape}"
        )
    grad = cotangent
    for index in range(len(layers) - 1, -1, -1):
        grad = layers[index].backward(activations[index], activations[index + 1], grad)
    return grad


def objective_and_grad(layers: Sequence[LayerSpec], z, target):
    """
    MSE between G(z) and target, and its gradient with respect to z.

    Returns:
        tuple: (mse, gradient) with gradient = (2/numel) J^T (G(z) - target).
    """
    activations = _trace(layers, z)
    output = activations[-1]
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.shape != output.shape:
        raise ShapeMismatchError(f"target shape {target.shape} does not match output shape {output.shape}")

    residual = output - target
    numel = residual.size
    value = float(np.dot(residual, residual) / numel)

    grad = (2.0 / numel) * residual
    for index in range(len(layers) - 1, -1, -1):
        grad = layers[index].backward(activations[index], activations[index + 1], grad)
    return value, grad
