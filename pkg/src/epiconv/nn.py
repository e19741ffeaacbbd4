"""The network: 1-d convolution over binned signals, max-pool, small MLP.

All math is written directly against numpy arrays.  A single sample is a
(marks x bins) matrix; the forward pass caches every intermediate needed by
the hand-derived backward pass in a :class:`ForwardTrace`.

Shapes for the default configuration: (5, 100) input -> conv (50, 91) ->
pool (50, 18) -> flat 900 -> 625 -> 125 -> 2 softmax outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .validation import check_finite, class_index

#: Probabilities are clamped at this floor before taking the log.
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    """Architecture and optimization settings.

    Derived sizes: ``conv_width = bins - kernel + 1`` (valid positions of a
    width-``kernel`` window) and ``pooled_width = conv_width // pool``
    (non-overlapping windows; a trailing remainder narrower than ``pool`` is
    dropped).
    """

    n_marks: int = 5
    bins: int = 100
    kernel: int = 10
    filters: int = 50
    pool: int = 5
    hidden: tuple[int, ...] = (625, 125)
    dropout: float = 0.5
    lr: float = 0.001
    epochs: int = 100
    batch: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.n_marks < 1:
            raise ValueError("n_marks must be >= 1")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not 1 <= self.kernel <= self.bins:
            raise ValueError(
                f"kernel must lie in [1, bins={self.bins}], got {self.kernel}"
            )
        if self.filters < 1:
            raise ValueError("filters must be >= 1")
        if not 1 <= self.pool <= self.conv_width:
            raise ValueError(
                f"pool must lie in [1, conv_width={self.conv_width}], got {self.pool}"
            )
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("hidden must be a non-empty tuple of positive sizes")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")

    @property
    def conv_width(self) -> int:
        return self.bins - self.kernel + 1

    @property
    def pooled_width(self) -> int:
        return self.conv_width // self.pool

    @property
    def flat_size(self) -> int:
        return self.filters * self.pooled_width

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """Unit counts through the MLP: flat input, hidden layers, 2 outputs."""
        return (self.flat_size, *self.hidden, 2)


@dataclass(frozen=True, eq=False)
class ConvParams:
    """weights: (filters, marks, kernel); bias: (filters,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 3:
            raise DimensionError(f"conv weights must be 3-d, got {w.ndim}-d")
        if b.shape != (w.shape[0],):
            raise DimensionError(
                f"conv bias shape {b.shape} does not match {w.shape[0]} filters"
            )
        check_finite("conv weights", w)
        check_finite("conv bias", b)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def filters(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class LinearParams:
    """weights: (out_dim, in_dim); bias: (out_dim,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError(f"linear weights must be 2-d, got {w.ndim}-d")
        if b.shape != (w.shape[0],):
            raise DimensionError(
                f"linear bias shape {b.shape} does not match out_dim {w.shape[0]}"
            )
        check_finite("linear weights", w)
        check_finite("linear bias", b)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """All trainable parameters: one conv stage plus the MLP stack."""

    conv: ConvParams
    mlp: tuple[LinearParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "mlp", tuple(self.mlp))
        if not self.mlp:
            raise DimensionError("the MLP needs at least one layer")
        for prev, nxt in zip(self.mlp, self.mlp[1:]):
            if nxt.in_dim != prev.out_dim:
                raise DimensionError(
                    f"MLP chain broken: layer expects {nxt.in_dim} inputs after "
                    f"a layer producing {prev.out_dim}"
                )
        if self.mlp[-1].out_dim != 2:
            raise DimensionError(
                f"final layer must have 2 outputs, got {self.mlp[-1].out_dim}"
            )

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            conv=ConvParams(self.conv.weights.copy(), self.conv.bias.copy()),
            mlp=tuple(
                LinearParams(l.weights.copy(), l.bias.copy()) for l in self.mlp
            ),
        )


def init_params(hyper: Hyperparams, rng: np.random.Generator) -> NetworkParams:
    """Draw weights and biases uniformly from +-1/sqrt(fan_in) per stage."""
    def uniform(bound, shape):
        return rng.uniform(-bound, bound, shape)

    bound = 1.0 / np.sqrt(hyper.n_marks * hyper.kernel)
    conv = ConvParams(
        weights=uniform(bound, (hyper.filters, hyper.n_marks, hyper.kernel)),
        bias=uniform(bound, hyper.filters),
    )
    layers = []
    sizes = hyper.layer_sizes
    for in_dim, out_dim in zip(sizes, sizes[1:]):
        bound = 1.0 / np.sqrt(in_dim)
        layers.append(
            LinearParams(
                weights=uniform(bound, (out_dim, in_dim)),
                bias=uniform(bound, out_dim),
            )
        )
    return NetworkParams(conv=conv, mlp=tuple(layers))


# ---------------------------------------------------------------------------
# Layer forward passes


def conv_forward(x: np.ndarray, conv: ConvParams) -> np.ndarray:
    """Valid 1-d convolution along bins: out (filters, bins - kernel + 1).

    out[i, p] = bias[i] + sum_{j, r} weights[i, j, r] * x[j, p + r]
    """
    x = np.asarray(x, dtype=np.float64)
    filters, marks, kernel = conv.weights.shape
    if x.ndim != 2 or x.shape[0] != marks:
        raise DimensionError(
            f"conv expects (marks={marks}, bins) input, got shape {x.shape}"
        )
    bins = x.shape[1]
    if bins < kernel:
        raise DimensionError(f"kernel {kernel} wider than input ({bins} bins)")
    width = bins - kernel + 1
    out = np.broadcast_to(conv.bias[:, None], (filters, width)).copy()
    for r in range(kernel):
        out += conv.weights[:, :, r] @ x[:, r : r + width]
    return out


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def maxpool(z: np.ndarray, pool: int) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping max over windows of ``pool`` columns.

    A trailing remainder shorter than ``pool`` is dropped.  Returns the
    pooled matrix and, for backprop, the absolute column index of each
    window's max (ties resolve to the first position).
    """
    filters, width = z.shape
    if not 1 <= pool <= width:
        raise DimensionError(f"pool must lie in [1, {width}], got {pool}")
    pooled_width = width // pool
    windows = z[:, : pooled_width * pool].reshape(filters, pooled_width, pool)
    within = windows.argmax(axis=2)
    pooled = np.take_along_axis(windows, within[:, :, None], axis=2)[:, :, 0]
    argmax = within + np.arange(pooled_width) * pool
    return pooled, argmax


def maxpool_backward(
    grad_pooled: np.ndarray, argmax: np.ndarray, width: int
) -> np.ndarray:
    """Route each pooled gradient back to the column that won its window."""
    filters = grad_pooled.shape[0]
    out = np.zeros((filters, width))
    out[np.arange(filters)[:, None], argmax] = grad_pooled
    return out


def dropout_forward(
    v: np.ndarray, p: float, mode: str, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout on a vector; returns (output, scaled keep mask).

    Train mode zeroes entries with probability ``p`` and scales survivors by
    1/(1-p) so the expected value matches eval mode, where this is the
    identity (mask of ones).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        mask = np.ones_like(v)
        return v.copy(), mask
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(v.shape) >= p) / (1.0 - p)
    return v * mask, mask


def linear_forward(v: np.ndarray, layer: LinearParams) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (layer.in_dim,):
        raise DimensionError(
            f"linear layer expects ({layer.in_dim},) input, got shape {v.shape}"
        )
    return layer.weights @ v + layer.bias


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max-shifted before exponentiation)."""
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def nll_loss(probs: np.ndarray, label: int) -> float:
    """Negative log-likelihood of the true class, floored at PROB_FLOOR."""
    return float(-np.log(max(probs[class_index(label)], PROB_FLOOR)))


# ---------------------------------------------------------------------------
# Whole-network forward / backward


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Every intermediate of one forward pass, cached for backprop."""

    conv_pre: np.ndarray        # (filters, conv_width), before ReLU
    conv_post: np.ndarray       # after ReLU
    pooled: np.ndarray          # (filters, pooled_width)
    pool_argmax: np.ndarray     # absolute column of each window max
    flat: np.ndarray            # pooled, flattened row-major
    drop_mask: np.ndarray       # scaled keep mask (ones in eval mode)
    dropped: np.ndarray         # flat * drop_mask, the MLP input
    hidden_pre: tuple[np.ndarray, ...]   # per hidden layer, before ReLU
    hidden_post: tuple[np.ndarray, ...]  # per hidden layer, after ReLU
    logits: np.ndarray          # (2,)
    probs: np.ndarray           # (2,), sums to 1


def forward(
    x: np.ndarray,
    params: NetworkParams,
    hyper: Hyperparams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    """Run one sample through the network, caching all intermediates."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (hyper.n_marks, hyper.bins):
        raise DimensionError(
            f"expected input of shape ({hyper.n_marks}, {hyper.bins}), "
            f"got {x.shape}"
        )
    if params.conv.weights.shape != (hyper.filters, hyper.n_marks, hyper.kernel):
        raise DimensionError(
            f"conv weights {params.conv.weights.shape} do not match "
            f"hyperparameters {(hyper.filters, hyper.n_marks, hyper.kernel)}"
        )
    if params.mlp[0].in_dim != hyper.flat_size:
        raise DimensionError(
            f"first MLP layer expects {params.mlp[0].in_dim} inputs, but the "
            f"conv stage produces {hyper.flat_size}"
        )

    conv_pre = conv_forward(x, params.conv)
    conv_post = relu(conv_pre)
    pooled, pool_argmax = maxpool(conv_post, hyper.pool)
    flat = pooled.reshape(-1)
    dropped, drop_mask = dropout_forward(flat, hyper.dropout, mode, rng)

    hidden_pre, hidden_post = [], []
    v = dropped
    for layer in params.mlp[:-1]:
        pre = linear_forward(v, layer)
        v = relu(pre)
        hidden_pre.append(pre)
        hidden_post.append(v)
    logits = linear_forward(v, params.mlp[-1])
    probs = softmax(logits)
    if abs(float(probs.sum()) - 1.0) > 1e-12:
        raise FloatingPointError("softmax output does not sum to 1")
    return ForwardTrace(
        conv_pre=conv_pre,
        conv_post=conv_post,
        pooled=pooled,
        pool_argmax=pool_argmax,
        flat=flat,
        drop_mask=drop_mask,
        dropped=dropped,
        hidden_pre=tuple(hidden_pre),
        hidden_post=tuple(hidden_post),
        logits=logits,
        probs=probs,
    )


@dataclass(eq=False)
class Gradients:
    """Loss gradients for every parameter array plus the input matrix."""

    conv_weights: np.ndarray
    conv_bias: np.ndarray
    mlp_weights: list[np.ndarray]
    mlp_bias: list[np.ndarray]
    x: np.ndarray

    def add_(self, other: "Gradients") -> "Gradients":
        self.conv_weights += other.conv_weights
        self.conv_bias += other.conv_bias
        for mine, theirs in zip(self.mlp_weights, other.mlp_weights):
            mine += theirs
        for mine, theirs in zip(self.mlp_bias, other.mlp_bias):
            mine += theirs
        self.x += other.x
        return self

    def scale_(self, c: float) -> "Gradients":
        self.conv_weights *= c
        self.conv_bias *= c
        for w in self.mlp_weights:
            w *= c
        for b in self.mlp_bias:
            b *= c
        self.x *= c
        return self


def backward(
    trace: ForwardTrace, x: np.ndarray, label: int, params: NetworkParams
) -> Gradients:
    """Gradients of the NLL loss at ``trace`` with respect to everything.

    Uses the standard identity for softmax followed by NLL: the gradient at
    the logits is probs minus the one-hot true class.  The dropout mask and
    pooling argmax recorded in the trace are reused so the backward pass
    matches the exact forward randomness.
    """
    x = np.asarray(x, dtype=np.float64)
    filters, marks, kernel = params.conv.weights.shape
    if x.shape[0] != marks:
        raise DimensionError(
            f"input has {x.shape[0]} marks, conv expects {marks}"
        )
    width = trace.conv_pre.shape[1]
    if x.shape[1] - kernel + 1 != width:
        raise DimensionError("trace does not belong to this input")
    if trace.flat.shape[0] != params.mlp[0].in_dim:
        raise DimensionError("trace does not belong to these parameters")

    g = trace.probs.copy()
    g[class_index(label)] -= 1.0

    mlp_w: list[np.ndarray] = [None] * len(params.mlp)
    mlp_b: list[np.ndarray] = [None] * len(params.mlp)
    inputs = (trace.dropped, *trace.hidden_post)
    for i in range(len(params.mlp) - 1, -1, -1):
        mlp_w[i] = np.outer(g, inputs[i])
        mlp_b[i] = g.copy()
        g = params.mlp[i].weights.T @ g
        if i > 0:
            g = g * (trace.hidden_pre[i - 1] > 0)

    g_flat = g * trace.drop_mask
    g_pooled = g_flat.reshape(trace.pooled.shape)
    g_conv = maxpool_backward(g_pooled, trace.pool_argmax, width)
    g_z = g_conv * (trace.conv_pre > 0)

    conv_w = np.empty_like(params.conv.weights)
    for r in range(kernel):
        conv_w[:, :, r] = g_z @ x[:, r : r + width].T
    conv_b = g_z.sum(axis=1)
    g_x = np.zeros_like(x)
    for r in range(kernel):
        g_x[:, r : r + width] += params.conv.weights[:, :, r].T @ g_z

    return Gradients(
        conv_weights=conv_w,
        conv_bias=conv_b,
        mlp_weights=mlp_w,
        mlp_bias=mlp_b,
        x=g_x,
    )


def zero_gradients(params: NetworkParams, x_shape: tuple[int, int]) -> Gradients:
    return Gradients(
        conv_weights=np.zeros_like(params.conv.weights),
        conv_bias=np.zeros_like(params.conv.bias),
        mlp_weights=[np.zeros_like(l.weights) for l in params.mlp],
        mlp_bias=[np.zeros_like(l.bias) for l in params.mlp],
        x=np.zeros(x_shape),
    )


def sgd_step(params: NetworkParams, grads: Gradients, lr: float) -> NetworkParams:
    """One plain gradient-descent update; returns new params, mutates nothing."""
    return NetworkParams(
        conv=ConvParams(
            weights=params.conv.weights - lr * grads.conv_weights,
            bias=params.conv.bias - lr * grads.conv_bias,
        ),
        mlp=tuple(
            LinearParams(
                weights=layer.weights - lr * gw,
                bias=layer.bias - lr * gb,
            )
            for layer, gw, gb in zip(params.mlp, grads.mlp_weights, grads.mlp_bias)
        ),
    )


# ---------------------------------------------------------------------------
# Gradient self-check


@dataclass(frozen=True)
class GradCheckReport:
    max_param_rel_err: float
    max_input_rel_err: float
    eps: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.max_param_rel_err, self.max_input_rel_err) < self.tol


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(
    hyper: Hyperparams | None = None,
    seed: int = 0,
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients to central finite differences.

    Runs on a deliberately small network (overridable via ``hyper``) with
    dropout disabled, since the loss must be deterministic in the inputs for
    finite differences to be meaningful.
    """
    if hyper is None:
        hyper = Hyperparams(
            n_marks=2, bins=8, kernel=3, filters=2, pool=2, hidden=(4, 3),
            dropout=0.0,
        )
    rng = np.random.default_rng(seed)
    params = init_params(hyper, rng)
    x = rng.uniform(0.0, 1.0, (hyper.n_marks, hyper.bins))
    label = int(rng.choice([-1, 1]))

    def loss_at(p: NetworkParams, xi: np.ndarray) -> float:
        return nll_loss(forward(xi, p, hyper, mode="eval").probs, label)

    grads = backward(forward(x, params, hyper, mode="eval"), x, label, params)

    max_param = 0.0
    work = params.copy()
    arrays = [
        (work.conv.weights, grads.conv_weights),
        (work.conv.bias, grads.conv_bias),
    ]
    for layer, gw, gb in zip(work.mlp, grads.mlp_weights, grads.mlp_bias):
        arrays.append((layer.weights, gw))
        arrays.append((layer.bias, gb))
    for arr, analytic in arrays:
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            hi = loss_at(work, x)
            flat[idx] = orig - eps
            lo = loss_at(work, x)
            flat[idx] = orig
            numeric = (hi - lo) / (2 * eps)
            max_param = max(max_param, _rel_err(analytic.reshape(-1)[idx], numeric))

    max_input = 0.0
    xw = x.copy().reshape(-1)
    for idx in range(xw.size):
        orig = xw[idx]
        xw[idx] = orig + eps
        hi = loss_at(params, xw.reshape(x.shape))
        xw[idx] = orig - eps
        lo = loss_at(params, xw.reshape(x.shape))
        xw[idx] = orig
        numeric = (hi - lo) / (2 * eps)
        max_input = max(max_input, _rel_err(grads.x.reshape(-1)[idx], numeric))

    return GradCheckReport(
        max_param_rel_err=max_param,
        max_input_rel_err=max_input,
        eps=eps,
        tol=tol,
    )
