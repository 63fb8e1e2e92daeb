"""Exact first- and second-order structure of the mean square error.

Away from activation boundaries the slope matrices are locally constant, so
the network is locally multilinear in its weight layers.  The per-sample
error gradient with respect to the row-major flattening of ``W_l`` is the
Kronecker product ``delta_l (x) v_{l-1}`` of the back-propagated delta signal
and the layer input.  Collecting samples as columns gives the per-layer
gradient matrix ``G_l = Delta_l (*) V_{l-1}`` (Khatri-Rao), the stacked
``G``, the gradient ``(1/N) G_l e``, and the Hessian decomposition

    H = Ehat[e * Lambda] + G G^T / N

whose first term has identically zero diagonal blocks (hence zero trace).

``fd_gradient`` and ``fd_hessian`` are central-difference oracles; both
carry a differentiability-margin flag that trips when a finite-difference
step could cross an activation boundary.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, as_vector, khatri_rao
from .model import (
    ForwardTrace,
    MnnConfig,
    NoiseTensors,
    Weights,
    forward,
    mse,
    output_error,
)

__all__ = [
    "GradientBundle",
    "HessianBundle",
    "FdResult",
    "compute_deltas",
    "g_matrix",
    "stacked_g",
    "last_hidden_g",
    "gradient",
    "fd_gradient",
    "lambda_block",
    "hessian",
    "fd_hessian",
    "differentiability_margin_ok",
]

# Central-difference step and the margin factor guarding against slope flips.
FD_STEP = 1e-5
MARGIN_FACTOR = 10.0


def compute_deltas(weights: Weights, trace: ForwardTrace) -> tuple[np.ndarray, ...]:
    """Delta signals ``Delta_l`` (d_l x N), error factored out.

    ``delta_L = a_L = 1``; below that ``delta_l = a_l * (W_{l+1}^T delta_{l+1})``.
    """
    depth = trace.depth
    deltas: list[np.ndarray] = [np.empty(0)] * depth
    deltas[depth - 1] = trace.slopes[depth - 1].copy()
    for l in range(depth - 1, 0, -1):
        deltas[l - 1] = trace.slopes[l - 1] * (weights.layers[l].T @ deltas[l])
    return tuple(deltas)


def g_matrix(layer: int, trace: ForwardTrace, deltas) -> np.ndarray:
    """Per-layer gradient matrix ``G_l = Delta_l (*) V_{l-1}`` (d_{l-1} d_l x N)."""
    if not 1 <= layer <= trace.depth:
        raise ValueError(f"layer must be in 1..{trace.depth}, got {layer}")
    return khatri_rao(deltas[layer - 1], trace.layer_outputs[layer - 1])


def stacked_g(trace: ForwardTrace, deltas) -> np.ndarray:
    """Vertical stack of G_1..G_L, aligned with the flattened weight vector."""
    return np.vstack([g_matrix(l, trace, deltas) for l in range(1, trace.depth + 1)])


def last_hidden_g(trace: ForwardTrace) -> np.ndarray:
    """Gradient matrix of the last hidden layer with the output weights absorbed.

    ``A_{L-1} (*) V_{L-2}``: the object whose full column rank certifies zero
    error at differentiable minima.  For a single hidden layer this is
    ``A_1 (*) X``.
    """
    depth = trace.depth
    return khatri_rao(trace.slopes[depth - 2], trace.layer_outputs[depth - 2])


@dataclass(frozen=True)
class GradientBundle:
    """Gradient of the MSE at one point, in every useful shape."""

    trace: ForwardTrace
    deltas: tuple[np.ndarray, ...]
    error: np.ndarray
    per_layer: tuple[np.ndarray, ...]  # d_l x d_{l-1}, matching W_l
    flat: np.ndarray  # length omega, row-major per layer

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.flat))

    def g_matrices(self) -> tuple[np.ndarray, ...]:
        return tuple(g_matrix(l, self.trace, self.deltas) for l in range(1, self.trace.depth + 1))

    def stacked(self) -> np.ndarray:
        return stacked_g(self.trace, self.deltas)


def gradient(
    weights: Weights,
    x,
    y,
    noise: NoiseTensors,
    config: MnnConfig,
    trace: ForwardTrace | None = None,
) -> GradientBundle:
    """Analytic MSE gradient ``(1/N) G_l e`` for every layer.

    The per-layer matrix form ``(Delta_l * e) V_{l-1}^T / N`` is used, which
    equals the reshaped ``(1/N) G_l e`` entry for entry.
    """
    if trace is None:
        trace = forward(weights, x, noise, config)
    e = output_error(trace, y)
    n = e.size
    deltas = compute_deltas(weights, trace)
    per_layer = tuple(
        (deltas[l] * e) @ trace.layer_outputs[l].T / n for l in range(trace.depth)
    )
    flat = np.concatenate([g.ravel() for g in per_layer])
    return GradientBundle(trace=trace, deltas=deltas, error=e, per_layer=per_layer, flat=flat)


def differentiability_margin_ok(trace: ForwardTrace, weights: Weights, h: float) -> bool:
    """True when every hidden pre-activation clears ``MARGIN_FACTOR * h * |w|``.

    Finite-difference probes inside that margin may flip an activation branch
    and sample a different linear piece.
    """
    w_norm = float(np.linalg.norm(weights.flatten()))
    return trace.min_abs_hidden_preactivation > MARGIN_FACTOR * h * w_norm


@dataclass(frozen=True)
class FdResult:
    """A finite-difference estimate plus its differentiability-margin flag."""

    values: np.ndarray
    margin_ok: bool


def fd_gradient(
    weights: Weights, x, y, noise: NoiseTensors, config: MnnConfig, h: float = FD_STEP
) -> FdResult:
    """Central-difference gradient of the MSE over each flattened coordinate."""
    if h <= 0.0:
        raise ValueError(f"step must be positive, got {h}")
    x = as_matrix(x, "input")
    y = as_vector(y, "targets")
    base = forward(weights, x, noise, config)
    margin_ok = differentiability_margin_ok(base, weights, h)

    w0 = weights.flatten()
    grad = np.empty_like(w0)

    def loss_at(w_flat):
        trace = forward(Weights.from_flat(config, w_flat), x, noise, config)
        return mse(output_error(trace, y))

    for k in range(w0.size):
        wp = w0.copy()
        wp[k] += h
        wm = w0.copy()
        wm[k] -= h
        grad[k] = (loss_at(wp) - loss_at(wm)) / (2.0 * h)
    return FdResult(values=grad, margin_ok=margin_ok)


def lambda_block(
    m: int,
    l: int,
    weights: Weights,
    trace: ForwardTrace,
    sample: int,
    deltas=None,
) -> np.ndarray:
    """Second-derivative block ``Lambda_ml`` of the error for one sample.

    For ``l < m`` this is ``delta_m (x) M (x) v_{l-1}^T`` with the middle
    factor ``M = (prod_{l'=l+1..m-1} diag(a_{l'}) W_{l'}) diag(a_l)``; the
    diagonal blocks are identically zero and ``Lambda_ml = Lambda_lm^T``.
    Shape is ``(d_{m-1} d_m, d_{l-1} d_l)``.
    """
    depth = trace.depth
    if not (1 <= m <= depth and 1 <= l <= depth):
        raise ValueError(f"layers must be in 1..{depth}, got m={m}, l={l}")
    dims = [w.shape for w in weights.layers]
    rows = dims[m - 1][0] * dims[m - 1][1]
    cols = dims[l - 1][0] * dims[l - 1][1]
    if m == l:
        return np.zeros((rows, cols))
    if m < l:
        return lambda_block(l, m, weights, trace, sample, deltas).T

    if deltas is None:
        deltas = compute_deltas(weights, trace)
    delta_m = deltas[m - 1][:, sample]
    v_in = trace.layer_outputs[l - 1][:, sample]
    # middle factor, built right to left starting from diag(a_l)
    middle = np.diag(trace.slopes[l - 1][:, sample])
    for lp in range(l + 1, m):
        middle = trace.slopes[lp - 1][:, sample, None] * (weights.layers[lp - 1] @ middle)
    block = np.einsum("a,bc,d->abcd", delta_m, middle, v_in)
    return block.reshape(rows, cols)


@dataclass(frozen=True)
class HessianBundle:
    """The assembled Hessian and its two components.

    ``matrix = curvature_term + gram_term`` where ``gram_term = G G^T / N``
    and ``curvature_term = Ehat[e * Lambda]`` has zero diagonal blocks.
    ``margin_ok`` is False when the evaluation point sits too close to an
    activation boundary for local smoothness to be trusted.
    """

    matrix: np.ndarray
    curvature_term: np.ndarray
    gram_term: np.ndarray
    margin_ok: bool

    @property
    def omega(self) -> int:
        return self.matrix.shape[0]


def hessian(
    weights: Weights, x, y, noise: NoiseTensors, config: MnnConfig
) -> HessianBundle:
    """Analytic MSE Hessian, assembled blockwise and exactly symmetric."""
    trace = forward(weights, as_matrix(x, "input"), noise, config)
    e = output_error(trace, y)
    n = e.size
    deltas = compute_deltas(weights, trace)
    g = stacked_g(trace, deltas)
    gram = g @ g.T / n
    gram = 0.5 * (gram + gram.T)  # kill matmul roundoff asymmetry

    omega = config.weight_count
    curvature = np.zeros((omega, omega))
    offsets = np.concatenate(([0], np.cumsum([w.size for w in weights.layers])))
    for m in range(2, trace.depth + 1):
        for l in range(1, m):
            block = np.zeros((weights.layers[m - 1].size, weights.layers[l - 1].size))
            for sample in range(n):
                block += e[sample] * lambda_block(m, l, weights, trace, sample, deltas)
            block /= n
            curvature[offsets[m - 1] : offsets[m], offsets[l - 1] : offsets[l]] = block
            curvature[offsets[l - 1] : offsets[l], offsets[m - 1] : offsets[m]] = block.T

    margin_ok = differentiability_margin_ok(trace, weights, FD_STEP)
    return HessianBundle(
        matrix=curvature + gram,
        curvature_term=curvature,
        gram_term=gram,
        margin_ok=margin_ok,
    )


def fd_hessian(
    weights: Weights, x, y, noise: NoiseTensors, config: MnnConfig, h: float = FD_STEP
) -> FdResult:
    """Central differences of the analytic gradient; output symmetrized."""
    if h <= 0.0:
        raise ValueError(f"step must be positive, got {h}")
    x = as_matrix(x, "input")
    y = as_vector(y, "targets")
    base = forward(weights, x, noise, config)
    margin_ok = differentiability_margin_ok(base, weights, h)

    w0 = weights.flatten()
    omega = w0.size
    hess = np.empty((omega, omega))

    def grad_at(w_flat):
        w = Weights.from_flat(config, w_flat)
        return gradient(w, x, y, noise, config).flat

    for k in range(omega):
        wp = w0.copy()
        wp[k] += h
        wm = w0.copy()
        wm[k] -= h
        hess[:, k] = (grad_at(wp) - grad_at(wm)) / (2.0 * h)
    return FdResult(values=0.5 * (hess + hess.T), margin_ok=margin_ok)
