"""
Network module for Leverage Bidder.
Dense feed-forward networks with backpropagation, Adam and soft target updates.
"""

from __future__ import annotations

import os
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

ACTIVATIONS = ('relu', 'tanh', 'softmax', 'linear')

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NetworkError(Exception):
    """Network construction or evaluation error."""
    pass


class DivergenceError(NetworkError):
    """Raised when training produces non-finite gradients or losses."""
    pass


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == 'relu':
        return np.maximum(z, 0.0)
    if name == 'tanh':
        return np.tanh(z)
    if name == 'softmax':
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    return z


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Map a gradient w.r.t. activations back to preactivations."""
    if name == 'relu':
        return grad * (z > 0.0)
    if name == 'tanh':
        return grad * (1.0 - a * a)
    if name == 'softmax':
        return a * (grad - (grad * a).sum(axis=1, keepdims=True))
    return grad


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class GradientSet:
    """Per-layer weight and bias gradients plus the gradient w.r.t. the input."""
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.arrays()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.arrays())


@dataclass
class ForwardCache:
    """Activation trace of a forward pass, bound to one network version."""
    owner: int
    version: int
    batched: bool
    inputs: list[np.ndarray] = field(default_factory=list)
    preactivations: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)


class Network:
    """
    Dense feed-forward network with Adam optimizer state.

    Inputs may be a single vector or a 2-D batch with one row per sample.
    """

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise NetworkError("Network needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise NetworkError(
                    f"Layer {i} expects {layers[i].in_dim} inputs, "
                    f"previous layer produces {layers[i - 1].out_dim}"
                )
        for layer in layers:
            if layer.activation not in ACTIVATIONS:
                raise NetworkError(f"Unknown activation: {layer.activation}")
        self.layers = layers
        self.step = 0
        self.version = 0
        self.first_moments = [np.zeros_like(p) for p in self.parameters()]
        self.second_moments = [np.zeros_like(p) for p in self.parameters()]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise NetworkError(f"Expected {self.n_params} parameters, got {flat.size}")
        offset = 0
        for p in self.parameters():
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        self.version += 1

    def copy(self) -> Network:
        clone = Network([
            Layer(layer.weight.copy(), layer.bias.copy(), layer.activation)
            for layer in self.layers
        ])
        clone.step = self.step
        clone.first_moments = [m.copy() for m in self.first_moments]
        clone.second_moments = [v.copy() for v in self.second_moments]
        return clone

    def same_architecture(self, other: Network) -> bool:
        return self.layer_sizes == other.layer_sizes and self.activations == other.activations

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        """
        Evaluate the network.

        Args:
            x: Input vector or batch of input rows

        Returns:
            Tuple of (output, cache); output has the same batching as x

        Raises:
            NetworkError: If the input width does not match the first layer
        """
        x = np.asarray(x, dtype=np.float64)
        batched = x.ndim == 2
        a = x if batched else x.reshape(1, -1)
        if a.ndim != 2 or a.shape[1] != self.layers[0].in_dim:
            raise NetworkError(
                f"Input dimension {x.shape} does not match network input {self.layers[0].in_dim}"
            )
        cache = ForwardCache(owner=id(self), version=self.version, batched=batched)
        for layer in self.layers:
            cache.inputs.append(a)
            z = a @ layer.weight.T + layer.bias
            a = _activate(layer.activation, z)
            cache.preactivations.append(z)
            cache.outputs.append(a)
        return (a if batched else a[0]), cache

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, output_grad: np.ndarray) -> GradientSet:
        """
        Backpropagate an output gradient through a cached forward pass.

        Parameter gradients are summed over the batch rows.

        Args:
            cache: Cache returned by forward on this network
            output_grad: Gradient of the scalar objective w.r.t. the output

        Returns:
            GradientSet with parameter and input gradients

        Raises:
            NetworkError: If the cache is stale or belongs to another network
        """
        if cache.owner != id(self) or cache.version != self.version:
            raise NetworkError("Stale or mismatched forward cache")
        grad = np.asarray(output_grad, dtype=np.float64)
        grad = grad if cache.batched else grad.reshape(1, -1)
        if grad.shape != cache.outputs[-1].shape:
            raise NetworkError(
                f"Output gradient shape {grad.shape} does not match output {cache.outputs[-1].shape}"
            )
        weights: list[np.ndarray] = [None] * len(self.layers)
        biases: list[np.ndarray] = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            delta = _activation_grad(
                layer.activation, cache.preactivations[i], cache.outputs[i], grad
            )
            weights[i] = delta.T @ cache.inputs[i]
            biases[i] = delta.sum(axis=0)
            grad = delta @ layer.weight
        inputs = grad if cache.batched else grad[0]
        return GradientSet(weights=weights, biases=biases, inputs=inputs)

    def adam_step(self, grads: GradientSet, lr: float, l2_coeff: float = 0.0) -> None:
        """
        Apply one Adam update.

        Args:
            grads: Gradients congruent with this network
            lr: Learning rate (> 0)
            l2_coeff: Coefficient of the L2 term added to the gradient

        Raises:
            DivergenceError: If any gradient is not finite
            NetworkError: If shapes do not match
        """
        if lr <= 0:
            raise NetworkError(f"Learning rate must be positive, got {lr}")
        if l2_coeff < 0:
            raise NetworkError(f"L2 coefficient must be nonnegative, got {l2_coeff}")
        arrays = grads.arrays()
        params = self.parameters()
        if len(arrays) != len(params) or any(g.shape != p.shape for g, p in zip(arrays, params)):
            raise NetworkError("Gradient set is not congruent with the network")
        if not grads.is_finite():
            raise DivergenceError("Non-finite gradient encountered")

        self.step += 1
        correction1 = 1.0 - ADAM_BETA1 ** self.step
        correction2 = 1.0 - ADAM_BETA2 ** self.step
        for p, g, m, v in zip(params, arrays, self.first_moments, self.second_moments):
            if l2_coeff:
                g = g + l2_coeff * p
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)
        self.version += 1


def mlp_new(
    layer_sizes: list[int],
    hidden_activation: str = 'relu',
    output_activation: str = 'linear',
    seed: int = 0,
    final_bound: Optional[float] = None
) -> Network:
    """
    Build a network with uniform(+-1/sqrt(fan_in)) initialization.

    Args:
        layer_sizes: Widths from input to output, at least two entries
        hidden_activation: Activation of every hidden layer
        output_activation: Activation of the output layer
        seed: Seed for parameter initialization
        final_bound: Uniform bound of the output layer (default: 1/sqrt(fan_in))

    Returns:
        Freshly initialized Network with zeroed optimizer state

    Raises:
        NetworkError: If sizes, activations or final_bound are invalid
    """
    if len(layer_sizes) < 2:
        raise NetworkError(f"Need at least two layer sizes, got {layer_sizes}")
    if any(int(s) < 1 for s in layer_sizes):
        raise NetworkError(f"Layer sizes must be positive, got {layer_sizes}")
    for activation in (hidden_activation, output_activation):
        if activation not in ACTIVATIONS:
            raise NetworkError(f"Unknown activation: {activation}")
    if final_bound is not None and final_bound <= 0:
        raise NetworkError(f"final_bound must be positive, got {final_bound}")

    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(layer_sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = int(layer_sizes[i]), int(layer_sizes[i + 1])
        last = i == n_layers - 1
        bound = final_bound if last and final_bound is not None else 1.0 / np.sqrt(fan_in)
        layers.append(Layer(
            weight=rng.uniform(-bound, bound, size=(fan_out, fan_in)),
            bias=rng.uniform(-bound, bound, size=fan_out),
            activation=output_activation if last else hidden_activation,
        ))
    return Network(layers)


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    return net.forward(x)


def backward(net: Network, cache: ForwardCache, output_grad: np.ndarray) -> GradientSet:
    return net.backward(cache, output_grad)


def adam_step(net: Network, grads: GradientSet, lr: float, l2_coeff: float = 0.0) -> None:
    net.adam_step(grads, lr, l2_coeff)


def soft_update(target: Network, source: Network, tau: float) -> None:
    """
    Move target parameters toward source: target = tau*source + (1-tau)*target.

    Raises:
        NetworkError: If architectures differ or tau is outside [0, 1]
    """
    if not 0.0 <= tau <= 1.0:
        raise NetworkError(f"tau must lie in [0, 1], got {tau}")
    if not target.same_architecture(source):
        raise NetworkError("Cannot soft-update networks with different architectures")
    for t, s in zip(target.parameters(), source.parameters()):
        t *= 1.0 - tau
        t += tau * s
    target.version += 1


def _relu_pattern(net: Network, x: np.ndarray) -> list[np.ndarray]:
    _, cache = net.forward(x)
    return [
        z > 0.0
        for z, layer in zip(cache.preactivations, net.layers)
        if layer.activation == 'relu'
    ]


def finite_diff_check(net: Network, x: np.ndarray, eps: float = 1e-5) -> float:
    """
    Compare backpropagated gradients of sum(output) with central differences.

    Coordinates whose +-eps perturbation flips any relu unit are skipped.

    Args:
        net: Network to check (left unchanged)
        x: Single input vector
        eps: Perturbation size

    Returns:
        Worst relative error over parameters and inputs
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    output, cache = net.forward(x)
    grads = net.backward(cache, np.ones_like(output))

    def objective() -> float:
        return float(np.sum(net.predict(x)))

    def relative(analytic: float, numeric: float) -> float:
        return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))

    worst = 0.0
    for p, g in zip(net.parameters(), grads.arrays()):
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        for i in range(flat_p.size):
            original = flat_p[i]
            flat_p[i] = original + eps
            up, up_pattern = objective(), _relu_pattern(net, x)
            flat_p[i] = original - eps
            down, down_pattern = objective(), _relu_pattern(net, x)
            flat_p[i] = original
            if any(np.any(a != b) for a, b in zip(up_pattern, down_pattern)):
                continue
            worst = max(worst, relative(flat_g[i], (up - down) / (2.0 * eps)))

    for i in range(x.size):
        shifted = x.copy()
        shifted[i] += eps
        up, up_pattern = float(np.sum(net.predict(shifted))), _relu_pattern(net, shifted)
        shifted[i] -= 2.0 * eps
        down, down_pattern = float(np.sum(net.predict(shifted))), _relu_pattern(net, shifted)
        if any(np.any(a != b) for a, b in zip(up_pattern, down_pattern)):
            continue
        worst = max(worst, relative(grads.inputs[i], (up - down) / (2.0 * eps)))
    return worst


def save_network(net: Network, path: str) -> str:
    """
    Save parameters and optimizer moments.

    Format: one JSON header line, then little-endian float64 values
    (parameters, first moments, second moments). Written atomically.

    Returns:
        Path to the saved file
    """
    header = {
        'layer_sizes': net.layer_sizes,
        'activations': net.activations,
        'step': net.step,
        'n_params': net.n_params,
    }
    body = np.concatenate([
        net.get_flat(),
        np.concatenate([m.ravel() for m in net.first_moments]),
        np.concatenate([v.ravel() for v in net.second_moments]),
    ]).astype('<f8')
    tmp_path = f"{path}.tmp"
    try:
        with open(tmp_path, 'wb') as f:
            f.write(json.dumps(header).encode('utf-8') + b'\n')
            f.write(body.tobytes())
        os.replace(tmp_path, path)
    except OSError as e:
        raise NetworkError(f"Failed to save network to {path}: {e}")
    logger.debug(f"Saved network to {path}")
    return path


def load_network(path: str) -> Network:
    """
    Load a network written by save_network.

    Raises:
        NetworkError: If the file is missing or malformed
    """
    try:
        with open(path, 'rb') as f:
            header = json.loads(f.readline().decode('utf-8'))
            body = np.frombuffer(f.read(), dtype='<f8').astype(np.float64)
    except (OSError, ValueError) as e:
        raise NetworkError(f"Failed to load network from {path}: {e}")

    sizes, activations = header['layer_sizes'], header['activations']
    n = header['n_params']
    if body.size != 3 * n or len(activations) != len(sizes) - 1:
        raise NetworkError(f"Corrupt network file: {path}")

    if any(a not in ACTIVATIONS for a in activations):
        raise NetworkError(f"Unknown activation in network file: {path}")
    net = mlp_new(sizes, 'linear', 'linear', seed=0)
    for layer, activation in zip(net.layers, activations):
        layer.activation = activation
    net.set_flat(body[:n])
    offset = n
    for moments in (net.first_moments, net.second_moments):
        for m in moments:
            m[...] = body[offset:offset + m.size].reshape(m.shape)
            offset += m.size
    net.step = int(header['step'])
    return net

