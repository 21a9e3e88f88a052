"""Dense-network numerical engine: float64 MLPs with hand-written backprop.

Everything runs on plain 2-D numpy arrays, batch-first (rows are samples).
The networks used here are tiny (a few hundred units, two hidden layers), so
exact analytic gradients plus a central-difference checker are cheap and keep
every update step verifiable in 64-bit arithmetic.

Hidden layers use ReLU (subgradient 0 at 0); the output head is either a
row-wise softmax or the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

OUTPUT_ACTIVATIONS = ("softmax", "identity")


@dataclass
class Mlp:
    """Fully connected network parameters.

    ``weights[k]`` has shape ``(layer_sizes[k+1], layer_sizes[k])`` and
    ``biases[k]`` has length ``layer_sizes[k+1]``.
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: str

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> Iterator[np.ndarray]:
        """All parameter arrays in a fixed order (weights, bias per layer)."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self) -> "Mlp":
        return Mlp(
            layer_sizes=tuple(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            output_activation=self.output_activation,
        )


@dataclass
class ForwardCache:
    """Per-layer pre- and post-activation matrices from one forward pass."""

    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]


@dataclass
class GradientSet:
    """Parameter gradients shaped exactly like the owning network."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]


def init_network(
    layer_sizes: Sequence[int],
    output_activation: str,
    rng: np.random.Generator,
) -> Mlp:
    """Build a network with uniform fan-based weights and zero biases.

    Weights are drawn from U(-s, s) with s = sqrt(6 / (fan_in + fan_out)),
    layer by layer, so a fixed seed gives bit-identical parameters. Zero
    biases keep an initial softmax head close to the uniform distribution.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and an output width")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer widths must all be >= 1, got {sizes}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ValueError(f"unknown output activation {output_activation!r}")
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, output_activation)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted for overflow safety."""
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run a batch through the network; the cache feeds `backward`."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layer_sizes[0]:
        raise ValueError(
            f"input shape {x.shape} does not match input width {net.layer_sizes[0]}"
        )
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []
    a = x
    last = net.n_layers - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pre.append(z)
        if k < last:
            a = np.maximum(z, 0.0)
        elif net.output_activation == "softmax":
            a = softmax(z)
        else:
            a = z
        post.append(a)
    return post[-1], ForwardCache(inputs=x, pre=pre, post=post)


def backward(
    net: Mlp, cache: ForwardCache, output_grad: np.ndarray
) -> tuple[GradientSet, np.ndarray]:
    """Exact gradients of a scalar whose per-output partials are `output_grad`.

    Returns the parameter gradients and the gradient with respect to the
    forward input (same shape as the input batch).
    """
    gout = np.asarray(output_grad, dtype=np.float64)
    if len(cache.pre) != net.n_layers:
        raise ValueError("cache does not match network depth")
    if any(z.shape[1] != s for z, s in zip(cache.pre, net.layer_sizes[1:])):
        raise ValueError("cache layer widths do not match network")
    if gout.shape != cache.post[-1].shape:
        raise ValueError(
            f"output_grad shape {gout.shape} does not match forward output "
            f"{cache.post[-1].shape}"
        )

    if net.output_activation == "softmax":
        p = cache.post[-1]
        dz = p * (gout - (gout * p).sum(axis=1, keepdims=True))
    else:
        dz = gout

    weight_grads: list[np.ndarray] = [np.empty(0)] * net.n_layers
    bias_grads: list[np.ndarray] = [np.empty(0)] * net.n_layers
    da_prev = np.empty(0)
    for k in range(net.n_layers - 1, -1, -1):
        a_prev = cache.post[k - 1] if k > 0 else cache.inputs
        weight_grads[k] = dz.T @ a_prev
        bias_grads[k] = dz.sum(axis=0)
        da_prev = dz @ net.weights[k]
        if k > 0:
            dz = da_prev * (cache.pre[k - 1] > 0.0)
    return GradientSet(weight_grads, bias_grads), da_prev


def sgd_step(net: Mlp, grads: GradientSet, learning_rate: float) -> Mlp:
    """In-place update p <- p - learning_rate * grad(p)."""
    if learning_rate < 0.0:
        raise ValueError(f"learning_rate must be >= 0, got {learning_rate}")
    if len(grads.weight_grads) != net.n_layers:
        raise ValueError("gradient set does not match network depth")
    for k in range(net.n_layers):
        gw, gb = grads.weight_grads[k], grads.bias_grads[k]
        if gw.shape != net.weights[k].shape or gb.shape != net.biases[k].shape:
            raise ValueError(f"gradient shapes do not match network at layer {k}")
        if not np.isfinite(gw).all() or not np.isfinite(gb).all():
            raise FloatingPointError(f"non-finite gradient in layer {k}")
        net.weights[k] -= learning_rate * gw
        net.biases[k] -= learning_rate * gb
    return net


def mse_loss(prediction: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries, plus its gradient wrt prediction."""
    diff = prediction - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def numeric_gradient(
    net: Mlp, scalar_fn: Callable[[], float], epsilon: float = 1e-5
) -> GradientSet:
    """Central-difference gradient of ``scalar_fn()`` wrt every parameter.

    ``scalar_fn`` is re-evaluated with parameters perturbed in place; the
    network is restored exactly afterwards. Slow by design: use on tiny nets.
    """
    _check_epsilon(epsilon)
    weight_grads = [np.zeros_like(w) for w in net.weights]
    bias_grads = [np.zeros_like(b) for b in net.biases]
    for k in range(net.n_layers):
        pairs = ((net.weights[k], weight_grads[k]), (net.biases[k], bias_grads[k]))
        for arr, out in pairs:
            flat = arr.reshape(-1)
            gflat = out.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + epsilon
                hi = scalar_fn()
                flat[idx] = orig - epsilon
                lo = scalar_fn()
                flat[idx] = orig
                gflat[idx] = (hi - lo) / (2.0 * epsilon)
    return GradientSet(weight_grads, bias_grads)


def max_relative_error(a: GradientSet, b: GradientSet, floor: float = 1e-12) -> float:
    """max |a - b| / max(|a|, |b|, floor) over all parameters.

    The default floor only guards zero-by-zero comparisons. Suites that
    compare against central differences on losses of magnitude O(1) should
    raise it to ~1e-6: below that, the difference quotient is dominated by
    float64 cancellation noise (~|loss| * 1e-16 / (2 * epsilon)) and the
    ratio stops measuring gradient correctness.
    """
    worst = 0.0
    for ga, gb in zip(
        a.weight_grads + a.bias_grads, b.weight_grads + b.bias_grads
    ):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gb)), floor)
        err = np.abs(ga - gb) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


def gradient_check(
    net: Mlp,
    x: np.ndarray,
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    epsilon: float = 1e-5,
    floor: float = 1e-12,
) -> float:
    """Compare analytic vs central-difference gradients of ``loss_fn``.

    ``loss_fn`` maps the forward output to (scalar value, gradient wrt
    output). Returns the max relative error over all parameters.
    """
    _check_epsilon(epsilon)
    out, cache = forward(net, x)
    _, gout = loss_fn(out)
    analytic, _ = backward(net, cache, gout)
    numeric = numeric_gradient(net, lambda: loss_fn(forward(net, x)[0])[0], epsilon)
    return max_relative_error(analytic, numeric, floor)


def _check_epsilon(epsilon: float) -> None:
    if not (0.0 < epsilon <= 1e-2):
        raise ValueError(f"epsilon must be in (0, 1e-2], got {epsilon}")
