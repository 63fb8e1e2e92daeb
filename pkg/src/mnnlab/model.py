"""Multilayer network with piecewise-linear activations and multiplicative noise.

The network maps an input column ``x`` through ``L`` weight layers:
``u_l = W_l v_{l-1}`` and ``v_l = a_l * u_l``, where the slope ``a_l`` of a
hidden unit is ``eps`` on the non-negative branch (``u >= 0``, including
exactly 0) and ``eps * s`` on the negative branch, with ``eps`` a per-unit
per-sample multiplicative noise factor and ``s`` the leaky slope.  The output
layer has unit slope and width 1.  Bias terms are omitted throughout.

Randomness is pinned to numpy's default generator (PCG64); every sampling
function is a pure function of its parameters and a 64-bit seed.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, as_vector

__all__ = [
    "MnnConfig",
    "Weights",
    "NoiseTensors",
    "ForwardTrace",
    "init_weights",
    "sample_noise",
    "activation_slopes",
    "forward",
    "output_error",
    "mse",
    "mce",
]

_NOISE_MODES = ("off", "gaussian", "explicit")


@dataclass(frozen=True)
class MnnConfig:
    """Architecture and activation parameters.

    ``widths`` is ``(d_0, ..., d_L)`` with scalar output ``d_L == 1`` and at
    least one hidden layer.  ``leaky_slope`` is the negative-branch slope
    multiplier (0 gives plain ReLU).  ``noise_mode`` selects how hidden-layer
    noise tensors are produced: ``off`` (all ones), ``gaussian`` (i.i.d.
    normal with ``noise_mean``/``noise_std``) or ``explicit`` (caller supplies
    the tensors).
    """

    widths: tuple[int, ...]
    leaky_slope: float = 0.0
    noise_mode: str = "off"
    noise_mean: float = 0.0
    noise_std: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(d) for d in self.widths))
        if len(self.widths) < 3:
            raise ValueError("need at least one hidden layer: widths = (d_0, d_1, ..., d_L)")
        if any(d < 1 for d in self.widths):
            raise ValueError(f"layer widths must be positive, got {self.widths}")
        if self.widths[-1] != 1:
            raise ValueError(f"output width must be 1, got {self.widths[-1]}")
        if self.noise_mode not in _NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {_NOISE_MODES}, got {self.noise_mode!r}")
        if self.noise_std < 0.0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")

    @property
    def depth(self) -> int:
        """Number of weight layers L."""
        return len(self.widths) - 1

    @property
    def weight_count(self) -> int:
        """Total parameter count: sum of d_{l-1} * d_l over layers."""
        return sum(a * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def layer_shape(self, layer: int) -> tuple[int, int]:
        """Shape (d_l, d_{l-1}) of weight layer ``layer`` (1-based)."""
        if not 1 <= layer <= self.depth:
            raise ValueError(f"layer must be in 1..{self.depth}, got {layer}")
        return self.widths[layer], self.widths[layer - 1]


@dataclass(frozen=True)
class Weights:
    """Per-layer weight matrices ``W_l`` of shape ``(d_l, d_{l-1})``.

    ``flatten`` concatenates the row-major flattenings of W_1..W_L; the
    round-trip through ``from_flat`` is exact.
    """

    layers: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "layers", tuple(as_matrix(w, f"W_{i + 1}") for i, w in enumerate(self.layers))
        )

    @property
    def depth(self) -> int:
        return len(self.layers)

    def flatten(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.layers])

    @classmethod
    def from_flat(cls, config: MnnConfig, flat) -> "Weights":
        flat = as_vector(flat, "flat weights")
        if flat.size != config.weight_count:
            raise ValueError(
                f"flat weight vector has {flat.size} entries, expected {config.weight_count}"
            )
        layers = []
        offset = 0
        for layer in range(1, config.depth + 1):
            rows, cols = config.layer_shape(layer)
            layers.append(flat[offset : offset + rows * cols].reshape(rows, cols).copy())
            offset += rows * cols
        return cls(tuple(layers))

    def check_shapes(self, config: MnnConfig) -> None:
        if self.depth != config.depth:
            raise ValueError(f"expected {config.depth} weight layers, got {self.depth}")
        for layer, w in enumerate(self.layers, start=1):
            if w.shape != config.layer_shape(layer):
                raise ValueError(
                    f"W_{layer} has shape {w.shape}, expected {config.layer_shape(layer)}"
                )


@dataclass(frozen=True)
class NoiseTensors:
    """Multiplicative noise matrices ``E_l`` (d_l x N), one per hidden layer.

    The output layer carries no noise (its slope is identically 1).
    """

    tensors: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "tensors", tuple(as_matrix(e, f"E_{i + 1}") for i, e in enumerate(self.tensors))
        )

    @property
    def sample_count(self) -> int:
        return self.tensors[0].shape[1]

    def columns(self, idx) -> "NoiseTensors":
        """Noise restricted to the given sample columns (for mini-batches)."""
        return NoiseTensors(tuple(e[:, idx] for e in self.tensors))

    def check_shapes(self, config: MnnConfig, n_samples: int) -> None:
        if len(self.tensors) != config.depth - 1:
            raise ValueError(
                f"expected {config.depth - 1} noise tensors, got {len(self.tensors)}"
            )
        for i, e in enumerate(self.tensors):
            expected = (config.widths[i + 1], n_samples)
            if e.shape != expected:
                raise ValueError(f"E_{i + 1} has shape {e.shape}, expected {expected}")


@dataclass(frozen=True)
class ForwardTrace:
    """Everything the forward pass computes, layer by layer.

    ``layer_outputs`` holds ``(V_0, ..., V_L)`` with ``V_0 = X``;
    ``pre_activations`` holds ``(U_1, ..., U_L)``; ``slopes`` holds
    ``(A_1, ..., A_L)`` with ``A_L`` all ones; ``sign_patterns`` records the
    realized activation pattern ``U_l >= 0`` for each hidden layer.
    """

    layer_outputs: tuple[np.ndarray, ...]
    pre_activations: tuple[np.ndarray, ...]
    slopes: tuple[np.ndarray, ...]
    sign_patterns: tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.pre_activations)

    @property
    def sample_count(self) -> int:
        return self.layer_outputs[0].shape[1]

    @property
    def output(self) -> np.ndarray:
        """Network output V_L, shape (1, N)."""
        return self.layer_outputs[-1]

    @property
    def min_abs_hidden_preactivation(self) -> float:
        """min over hidden layers and samples of |u|; the differentiability margin."""
        return min(float(np.abs(u).min()) for u in self.pre_activations[:-1])


def init_weights(config: MnnConfig, seed: int) -> Weights:
    """Draw initial weights uniformly with mean zero and variance 2 / fan-in.

    Each entry of ``W_l`` is uniform on ``[-sqrt(6/d_{l-1}), +sqrt(6/d_{l-1})]``.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for layer in range(1, config.depth + 1):
        rows, cols = config.layer_shape(layer)
        bound = np.sqrt(6.0 / cols)
        layers.append(rng.uniform(-bound, bound, size=(rows, cols)))
    return Weights(tuple(layers))


def sample_noise(config: MnnConfig, n_samples: int, seed: int) -> NoiseTensors:
    """Draw one noise realization for ``n_samples`` columns.

    ``off`` gives all-ones tensors regardless of seed; ``gaussian`` gives
    i.i.d. normal entries.  ``explicit`` mode has no sampling rule: build
    ``NoiseTensors`` directly instead.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if config.noise_mode == "explicit":
        raise ValueError("explicit noise mode: construct NoiseTensors directly")
    rng = np.random.default_rng(seed)
    tensors = []
    for width in config.widths[1:-1]:
        if config.noise_mode == "off":
            tensors.append(np.ones((width, n_samples)))
        else:
            tensors.append(rng.normal(config.noise_mean, config.noise_std, size=(width, n_samples)))
    return NoiseTensors(tuple(tensors))


def activation_slopes(u, eps, s: float) -> np.ndarray:
    """Slope matrix: ``eps`` where ``u >= 0`` (including exactly 0), ``eps * s`` below."""
    u = as_matrix(u, "pre-activations")
    eps = as_matrix(eps, "noise")
    if u.shape != eps.shape:
        raise ValueError(f"shape mismatch: pre-activations {u.shape} vs noise {eps.shape}")
    return np.where(u >= 0.0, eps, s * eps)


def forward(weights: Weights, x, noise: NoiseTensors, config: MnnConfig) -> ForwardTrace:
    """Run the network on input columns ``x`` (shape d_0 x N)."""
    x = as_matrix(x, "input")
    weights.check_shapes(config)
    if x.shape[0] != config.widths[0]:
        raise ValueError(f"input has {x.shape[0]} rows, expected d_0 = {config.widths[0]}")
    n = x.shape[1]
    noise.check_shapes(config, n)

    outputs = [x]
    pre_activations = []
    slopes = []
    sign_patterns = []
    v = x
    for layer in range(1, config.depth + 1):
        u = weights.layers[layer - 1] @ v
        if layer < config.depth:
            a = activation_slopes(u, noise.tensors[layer - 1], config.leaky_slope)
            sign_patterns.append(u >= 0.0)
        else:
            a = np.ones_like(u)
        v = a * u
        pre_activations.append(u)
        slopes.append(a)
        outputs.append(v)
    return ForwardTrace(
        layer_outputs=tuple(outputs),
        pre_activations=tuple(pre_activations),
        slopes=tuple(slopes),
        sign_patterns=tuple(sign_patterns),
    )


def output_error(trace: ForwardTrace, y) -> np.ndarray:
    """Error vector ``e = v_L - y`` as a length-N array."""
    y = as_vector(y, "targets")
    v = trace.output.ravel()
    if y.size != v.size:
        raise ValueError(f"got {y.size} targets for {v.size} outputs")
    return v - y


def mse(e) -> float:
    """Mean square error ``|e|^2 / (2N)``."""
    e = as_vector(e, "error")
    return float(e @ e) / (2.0 * e.size)


def mce(v_out, y) -> float:
    """Mean classification error against +-1 targets.

    An output of exactly 0 counts as misclassified.
    """
    v = as_vector(v_out, "outputs")
    y = as_vector(y, "targets")
    if v.size != y.size:
        raise ValueError(f"got {y.size} targets for {v.size} outputs")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValueError("classification targets must be -1 or +1")
    return float(np.mean(np.sign(v) != y))
