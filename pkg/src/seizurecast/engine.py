"""Minimal reverse-mode engine for the seizure-prediction CNN.

Every operation comes as a ``*_forward`` / ``*_backward`` pair working on
float64 numpy arrays.  Spatial operations accept either a single sample
``(C, H, W)`` or a batch ``(N, C, H, W)``; dense operations accept ``(F,)``
or ``(N, F)``.  Layer classes wrap the pairs, keep the forward context and
hold their parameters as :class:`Tensor` objects, so a network's backward
pass is just the layer list walked in reverse.

Inside a network the spatial layers run on channel-major batches
``(C, N, H, W)``: each convolution is then a single contiguous matmul.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64
PROB_CLAMP = 1e-12

# upper bound on im2col buffer size (elements) before batch chunking kicks in
_COLS_BUDGET = 1 << 24


class ShapeError(ValueError):
    """Operand shapes are incompatible; ``layer`` names the offender."""

    def __init__(self, message: str, layer: str | None = None):
        self.layer = layer
        super().__init__(f"{layer}: {message}" if layer else message)


class UsageError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class ParameterError(ValueError):
    """A hyper-parameter is outside its valid range."""


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, grad=None, name: str = ""):
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.name = name
        self.grad = None
        if grad is not None:
            self.grad = np.ascontiguousarray(grad, dtype=DTYPE)
            if self.grad.shape != self.data.shape:
                raise ShapeError(
                    f"grad shape {self.grad.shape} != data shape {self.data.shape}", name
                )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.shape})"


@dataclass(frozen=True)
class ConvSpec:
    kernel_h: int
    kernel_w: int
    out_channels: int
    padding_mode: str = "SAME"
    stride: int = 1

    def __post_init__(self):
        if self.kernel_h < 1 or self.kernel_w < 1 or self.out_channels < 1:
            raise ParameterError(f"invalid conv spec {self}")
        if self.padding_mode != "SAME" or self.stride != 1:
            raise ParameterError("only SAME padding with stride 1 is supported")


@dataclass(frozen=True)
class PoolSpec:
    pool_h: int
    pool_w: int

    def __post_init__(self):
        if self.pool_h < 1 or self.pool_w < 1:
            raise ParameterError(f"invalid pool spec {self}")


def _as_batch(x, ndim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=DTYPE)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError(f"expected {ndim - 1}-d sample or {ndim}-d batch, got shape {x.shape}")
    return x, False


def _unwrap(a) -> np.ndarray:
    return np.asarray(a.data if isinstance(a, Tensor) else a, dtype=DTYPE)


def same_padding(k: int) -> tuple[int, int]:
    """(before, after) zero padding that keeps the extent for kernel size ``k``."""
    before = (k - 1) // 2
    return before, k - 1 - before


# --------------------------------------------------------------------------
# convolution
# --------------------------------------------------------------------------

@dataclass
class ConvCache:
    padded: np.ndarray  # channel-major (C, N, H + kh - 1, W + kw - 1)
    weights: np.ndarray
    cols: np.ndarray | None  # im2col buffer, kept when it fits the budget
    out_hw: tuple[int, int]
    layout: str  # "sample", "batch" or "cnhw"


def _chunks(n: int, per_item: int):
    step = max(1, _COLS_BUDGET // max(per_item, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _im2col(padded: np.ndarray, kh: int, kw: int, ho: int, wo: int) -> np.ndarray:
    """(C, N, Hp, Wp) -> (C*kh*kw, N*ho*wo) with rows ordered (c, i, j)."""
    c, n = padded.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = padded[:, :, i:i + ho, j:j + wo]
    return cols.reshape(c * kh * kw, n * ho * wo)


def conv_cnhw_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """SAME convolution on a channel-major batch ``(C, N, H, W)``."""
    c, n, h, w = x.shape
    co, _, kh, kw = weights.shape
    padded = np.pad(x, ((0, 0), (0, 0), same_padding(kh), same_padding(kw)))
    wmat = weights.reshape(co, -1)
    per_item = h * w * c * kh * kw
    if n * per_item <= _COLS_BUDGET:
        cols = _im2col(padded, kh, kw, h, w)
        out = (wmat @ cols).reshape(co, n, h, w)
    else:
        cols = None
        out = np.empty((co, n, h, w), dtype=DTYPE)
        for sl in _chunks(n, per_item):
            out[:, sl] = (wmat @ _im2col(padded[:, sl], kh, kw, h, w)).reshape(co, -1, h, w)
    out += bias[:, None, None, None]
    return out, ConvCache(padded, weights, cols, (h, w), "cnhw")


def conv_cnhw_backward(grad_out: np.ndarray, cache: ConvCache, input_grad: bool = True):
    padded, weights = cache.padded, cache.weights
    h, w = cache.out_hw
    c, n = padded.shape[:2]
    co, _, kh, kw = weights.shape
    if grad_out.shape != (co, n, h, w):
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output {(co, n, h, w)}", "conv")
    wmat = weights.reshape(co, -1)
    if cache.cols is not None:
        grad_w = grad_out.reshape(co, -1) @ cache.cols.T
    else:
        grad_w = np.zeros_like(wmat)
        for sl in _chunks(n, h * w * c * kh * kw):
            grad_w += grad_out[:, sl].reshape(co, -1) @ _im2col(padded[:, sl], kh, kw, h, w).T
    grad_b = grad_out.sum(axis=(1, 2, 3))

    grad_x = None
    if input_grad:
        grad_padded = np.zeros_like(padded)
        for sl in _chunks(n, h * w * c * kh * kw):
            dcols = (wmat.T @ grad_out[:, sl].reshape(co, -1)).reshape(c, kh, kw, -1, h, w)
            dst = grad_padded[:, sl]
            for i in range(kh):
                for j in range(kw):
                    dst[:, :, i:i + h, j:j + w] += dcols[:, i, j]
        top, left = same_padding(kh)[0], same_padding(kw)[0]
        grad_x = grad_padded[:, :, top:top + h, left:left + w]
    return grad_x, grad_w.reshape(weights.shape), grad_b


def conv2d_forward(x, weights, bias, spec: ConvSpec | None = None, name: str = "conv"):
    """SAME-padded, stride-1 cross-correlation of ``(C, H, W)`` or ``(N, C, H, W)``.

    Returns ``(output, cache)``; ``output`` keeps the input's spatial extents.
    """
    x4, single = _as_batch(x, 4)
    weights = _unwrap(weights)
    bias = _unwrap(bias)
    n, c, h, w = x4.shape
    if weights.ndim != 4:
        raise ShapeError(f"weights must be 4-d, got {weights.shape}", name)
    co, ci, kh, kw = weights.shape
    if spec is not None and (spec.kernel_h, spec.kernel_w, spec.out_channels) != (kh, kw, co):
        raise ShapeError(f"weights {weights.shape} disagree with {spec}", name)
    if ci != c:
        raise ShapeError(f"weights expect {ci} input channels, input has {c}", name)
    if bias.shape != (co,):
        raise ShapeError(f"bias shape {bias.shape} != ({co},)", name)
    if h < 1 or w < 1:
        raise ShapeError(f"empty input extent {h}x{w}", name)
    out, cache = conv_cnhw_forward(x4.transpose(1, 0, 2, 3), weights, bias)
    cache.layout = "sample" if single else "batch"
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    return (out[0] if single else out), cache


def conv2d_backward(grad_out, cache: ConvCache | None, input_grad: bool = True):
    """Gradients ``(grad_input, grad_weights, grad_bias)`` of a forward call.

    With ``input_grad=False`` the input gradient is skipped and returned as ``None``.
    """
    if cache is None:
        raise UsageError("conv2d_backward called without a saved forward context")
    g = np.asarray(grad_out, dtype=DTYPE)
    if cache.layout == "sample":
        g = g[None]
    if cache.layout != "cnhw":
        if g.ndim != 4:
            raise ShapeError(f"grad_out must be 4-d, got {g.shape}", "conv")
        g = g.transpose(1, 0, 2, 3)
    gx, gw, gb = conv_cnhw_backward(g, cache, input_grad)
    if gx is not None and cache.layout != "cnhw":
        gx = np.ascontiguousarray(gx.transpose(1, 0, 2, 3))
        if cache.layout == "sample":
            gx = gx[0]
    return gx, gw, gb


# --------------------------------------------------------------------------
# max pooling
# --------------------------------------------------------------------------

@dataclass
class PoolCache:
    argmax: np.ndarray  # (N, C, Ho, Wo) flat index within each window
    in_shape: tuple[int, ...]
    spec: PoolSpec
    single: bool


def pool_output_hw(h: int, w: int, spec: PoolSpec) -> tuple[int, int]:
    return h // spec.pool_h, w // spec.pool_w


def _pool_windows(x4: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """(A, B, H, W) -> (A, B, Ho, Wo, ph*pw), row-major inside each window."""
    a, b, h, w = x4.shape
    ho, wo = h // ph, w // pw
    if ph == 1:
        # a view; no copy needed for 1 x k pools
        return x4[:, :, :, : wo * pw].reshape(a, b, ho, wo, pw)
    return (
        x4[:, :, : ho * ph, : wo * pw]
        .reshape(a, b, ho, ph, wo, pw)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(a, b, ho, wo, ph * pw)
    )


def maxpool_forward(x, spec: PoolSpec, name: str = "pool"):
    """Non-overlapping max pooling with floor boundary; ties go to the first element.

    Pools over the last two axes, so it works for both ``(N, C, H, W)`` and
    channel-major ``(C, N, H, W)`` batches.
    """
    x4, single = _as_batch(x, 4)
    h, w = x4.shape[2:]
    ph, pw = spec.pool_h, spec.pool_w
    ho, wo = pool_output_hw(h, w, spec)
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool {ph}x{pw} larger than input extent {h}x{w}", name)
    win = _pool_windows(x4, ph, pw)
    arg = win.argmax(axis=-1)  # first occurrence on ties
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    cache = PoolCache(arg, x4.shape, spec, single)
    return (out[0] if single else out), cache


def maxpool_backward(grad_out, cache: PoolCache | None):
    if cache is None:
        raise UsageError("maxpool_backward called without a saved forward context")
    g4, _ = _as_batch(grad_out, 4)
    a, b, h, w = cache.in_shape
    ph, pw = cache.spec.pool_h, cache.spec.pool_w
    ho, wo = cache.argmax.shape[2:]
    if g4.shape != (a, b, ho, wo):
        raise ShapeError(f"grad_out shape {g4.shape} != pooled shape {(a, b, ho, wo)}", "pool")
    grad_x = np.zeros((a, b, h, w), dtype=DTYPE)
    routed = np.zeros((a, b, ho, wo, ph * pw), dtype=DTYPE)
    np.put_along_axis(routed, cache.argmax[..., None], g4[..., None], axis=-1)
    if ph == 1:
        grad_x[:, :, :, : wo * pw] = routed.reshape(a, b, h, wo * pw)
    else:
        routed = routed.reshape(a, b, ho, wo, ph, pw).transpose(0, 1, 2, 4, 3, 5)
        grad_x[:, :, : ho * ph, : wo * pw] = routed.reshape(a, b, ho * ph, wo * pw)
    return grad_x[0] if cache.single else grad_x


def maxpool_tie_mask(x, spec: PoolSpec, gap: float) -> np.ndarray:
    """Elements belonging to a pooling window whose top two values lie within ``gap``."""
    x4, single = _as_batch(x, 4)
    n, c, h, w = x4.shape
    ph, pw = spec.pool_h, spec.pool_w
    ho, wo = pool_output_hw(h, w, spec)
    win = _pool_windows(x4, ph, pw)
    if ph * pw > 1:
        top2 = np.sort(win, axis=-1)[..., -2:]
        near = (top2[..., 1] - top2[..., 0]) <= gap
    else:
        near = np.zeros((n, c, ho, wo), dtype=bool)
    mask = np.zeros((n, c, h, w), dtype=bool)
    block = np.broadcast_to(near[..., None, :, None], (n, c, ho, ph, wo, pw))
    mask[:, :, : ho * ph, : wo * pw] = block.reshape(n, c, ho * ph, wo * pw)
    return mask[0] if single else mask


# --------------------------------------------------------------------------
# elementwise activations
# --------------------------------------------------------------------------

def relu(x) -> np.ndarray:
    return np.maximum(_unwrap(x), 0.0)


def relu_backward(grad_out, x) -> np.ndarray:
    return grad_out * (_unwrap(x) > 0.0)


def sigmoid(x) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * _unwrap(x)))


def sigmoid_backward(grad_out, y) -> np.ndarray:
    """``y`` is the sigmoid output saved from the forward pass."""
    return grad_out * y * (1.0 - y)


def softmax(logits) -> np.ndarray:
    z = _unwrap(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(grad_out, y) -> np.ndarray:
    """Vector-Jacobian product of softmax along the last axis; ``y`` is the forward output."""
    return y * (grad_out - np.sum(grad_out * y, axis=-1, keepdims=True))


# --------------------------------------------------------------------------
# dense
# --------------------------------------------------------------------------

def dense_forward(x, weights, bias, name: str = "dense") -> np.ndarray:
    x2, single = _as_batch(x, 2)
    weights, bias = _unwrap(weights), _unwrap(bias)
    m, k = weights.shape
    if x2.shape[1] != k:
        raise ShapeError(f"input length {x2.shape[1]} != weight columns {k}", name)
    if bias.shape != (m,):
        raise ShapeError(f"bias shape {bias.shape} != ({m},)", name)
    out = x2 @ weights.T + bias
    return out[0] if single else out


def dense_backward(grad_out, x, weights):
    """Returns ``(grad_input, grad_weights, grad_bias)``."""
    x2, single = _as_batch(x, 2)
    g2, _ = _as_batch(grad_out, 2)
    weights = _unwrap(weights)
    grad_x = g2 @ weights
    return (grad_x[0] if single else grad_x), g2.T @ x2, g2.sum(axis=0)


# --------------------------------------------------------------------------
# dropout and loss
# --------------------------------------------------------------------------

def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None):
    """Inverted dropout.  Returns ``(output, mask)``; mask is ``None`` at inference."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    x = _unwrap(x)
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise UsageError("training-mode dropout needs an explicit rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def bce_loss(probabilities, label: int) -> float:
    """Cross entropy ``-ln p[label]`` with probabilities clamped away from 0 and 1."""
    p = np.clip(_unwrap(probabilities), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.log(p[..., int(label)]))


def softmax_cross_entropy(logits, labels):
    """Fused softmax + cross entropy, averaged over the batch.

    Returns ``(loss, probabilities, grad_logits)``.
    """
    z2, single = _as_batch(logits, 2)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (z2.shape[0],):
        raise ShapeError(f"{labels.shape[0]} labels for batch of {z2.shape[0]}")
    probs = softmax(z2)
    n = z2.shape[0]
    picked = np.clip(probs[np.arange(n), labels], PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(-np.log(picked).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    if single:
        return loss, probs[0], grad[0]
    return loss, probs, grad


# --------------------------------------------------------------------------
# layers
# --------------------------------------------------------------------------

class Layer:
    name = "layer"
    params: tuple[Tensor, ...] = ()

    def forward(self, x, training: bool = False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape


class Conv2D(Layer):
    """SAME convolution layer on channel-major batches ``(C, N, H, W)``.

    ``input_grad=False`` marks a first layer whose input needs no gradient.
    """

    def __init__(self, name: str, in_channels: int, spec: ConvSpec, input_grad: bool = True):
        self.name = name
        self.spec = spec
        self.input_grad = input_grad
        shape = (spec.out_channels, in_channels, spec.kernel_h, spec.kernel_w)
        self.weight = Tensor(np.zeros(shape), name=f"{name}.weight")
        self.bias = Tensor(np.zeros(spec.out_channels), name=f"{name}.bias")
        self.params = (self.weight, self.bias)
        self._cache = None

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[0] != self.weight.shape[1]:
            raise ShapeError(
                f"expects ({self.weight.shape[1]}, N, H, W) input, got {x.shape}", self.name
            )
        out, self._cache = conv_cnhw_forward(x, self.weight.data, self.bias.data)
        return out

    def backward(self, grad):
        if self._cache is None:
            raise UsageError(f"{self.name}: backward before forward")
        gx, gw, gb = conv_cnhw_backward(grad, self._cache, self.input_grad)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.weight.shape[1]:
            raise ShapeError(f"expects {self.weight.shape[1]} channels, got {c}", self.name)
        return (self.spec.out_channels, h, w)


class MaxPool2D(Layer):
    def __init__(self, name: str, spec: PoolSpec):
        self.name = name
        self.spec = spec
        self._cache = None

    def forward(self, x, training=False, rng=None):
        out, self._cache = maxpool_forward(x, self.spec, self.name)
        return out

    def backward(self, grad):
        if self._cache is None:
            raise UsageError(f"{self.name}: backward before forward")
        return maxpool_backward(grad, self._cache)

    def output_shape(self, shape):
        c, h, w = shape
        ho, wo = pool_output_hw(h, w, self.spec)
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"pool {self.spec.pool_h}x{self.spec.pool_w} larger than input extent {h}x{w}",
                self.name,
            )
        return (c, ho, wo)


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name
        self._x = None

    def forward(self, x, training=False, rng=None):
        self._x = x
        return relu(x)

    def backward(self, grad):
        return relu_backward(grad, self._x)


class Sigmoid(Layer):
    def __init__(self, name: str = "sigmoid"):
        self.name = name
        self._y = None

    def forward(self, x, training=False, rng=None):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad):
        return sigmoid_backward(grad, self._y)


class Flatten(Layer):
    """Channel-major ``(C, N, H, W)`` -> ``(N, C*H*W)``, each row in (c, h, w) order."""

    def __init__(self, name: str = "flatten"):
        self.name = name
        self._shape = None

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        return np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(x.shape[1], -1)

    def backward(self, grad):
        c, n, h, w = self._shape
        return np.ascontiguousarray(grad.reshape(n, c, h, w).transpose(1, 0, 2, 3))

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Dropout(Layer):
    def __init__(self, name: str, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
        self.name = name
        self.rate = rate
        self._mask = None

    def forward(self, x, training=False, rng=None):
        out, self._mask = dropout(x, self.rate, training, rng)
        return out

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Dense(Layer):
    def __init__(self, name: str, in_features: int, out_features: int):
        self.name = name
        self.weight = Tensor(np.zeros((out_features, in_features)), name=f"{name}.weight")
        self.bias = Tensor(np.zeros(out_features), name=f"{name}.bias")
        self.params = (self.weight, self.bias)
        self._x = None

    def forward(self, x, training=False, rng=None):
        self._x = x
        return dense_forward(x, self.weight, self.bias, self.name)

    def backward(self, grad):
        if self._x is None:
            raise UsageError(f"{self.name}: backward before forward")
        gx, gw, gb = dense_backward(grad, self._x, self.weight)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx

    def output_shape(self, shape):
        (k,) = shape
        if k != self.weight.shape[1]:
            raise ShapeError(f"input length {k} != {self.weight.shape[1]}", self.name)
        return (self.weight.shape[0],)


# --------------------------------------------------------------------------
# finite-difference gradient check
# --------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    tol: float
    max_rel_error: dict[str, float] = field(default_factory=dict)
    skipped: dict[str, list[tuple[int, ...]]] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(err <= self.tol for err in self.max_rel_error.values())

    def __str__(self) -> str:
        lines = []
        for key, err in self.max_rel_error.items():
            status = "ok" if err <= self.tol else "FAIL"
            lines.append(
                f"{key}: max rel err {err:.2e} ({status}), "
                f"{self.checked[key]} checked, {len(self.skipped[key])} skipped"
            )
        return "\n".join(lines)


def grad_check(
    forward: Callable[..., np.ndarray],
    backward: Callable[[np.ndarray], Sequence[np.ndarray]],
    inputs: dict[str, np.ndarray],
    h: float = 1e-3,
    tol: float = 1e-3,
    seed: int = 0,
    skip: dict[str, np.ndarray] | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``forward(**inputs)`` returns an array ``y``; the scalar under test is
    ``sum(r * y)`` for a fixed random projection ``r``.  ``backward(r)`` is
    called right after the unperturbed forward and must return one gradient
    per input, in the order of ``inputs``.

    Elements listed in ``skip`` are not checked.  An element whose central
    difference disagrees with the analytic value is treated as sitting on a
    kink (and skipped) when its one-sided differences disagree with each other
    by more than the central-vs-analytic gap; a smooth function with a wrong
    gradient never meets that condition.
    """
    if not np.isfinite(h) or h <= 0:
        raise ParameterError("step h must be positive")
    arrays = {k: np.array(_unwrap(v), dtype=DTYPE) for k, v in inputs.items()}
    for key, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise ParameterError(f"input {key!r} is not finite")

    y0 = np.asarray(forward(**arrays), dtype=DTYPE)
    r = np.random.default_rng(seed).uniform(-1.0, 1.0, size=y0.shape)
    analytic = [np.asarray(g, dtype=DTYPE) for g in backward(r)]
    if len(analytic) != len(arrays):
        raise UsageError(f"backward returned {len(analytic)} grads for {len(arrays)} inputs")

    def objective() -> float:
        return float(np.sum(r * forward(**arrays)))

    f0 = objective()
    report = GradCheckReport(tol=tol)
    for (key, arr), grad in zip(arrays.items(), analytic):
        if grad.shape != arr.shape:
            raise ShapeError(f"gradient for {key!r} has shape {grad.shape}, expected {arr.shape}")
        mask = None if skip is None or key not in skip else np.asarray(skip[key], dtype=bool)
        worst, skipped, checked = 0.0, [], 0
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for idx in range(flat.size):
            pos = np.unravel_index(idx, arr.shape)
            if mask is not None and mask[pos]:
                skipped.append(tuple(int(p) for p in pos))
                continue
            orig = flat[idx]
            flat[idx] = orig + h
            fp = objective()
            flat[idx] = orig - h
            fm = objective()
            flat[idx] = orig
            num = (fp - fm) / (2 * h)
            ana = gflat[idx]
            gap = abs(ana - num)
            err = gap / max(abs(ana), abs(num), floor)
            if err > tol:
                one_sided = abs((fp - f0) / h - (f0 - fm) / h)
                if one_sided > gap:
                    skipped.append(tuple(int(p) for p in pos))
                    continue
            worst = max(worst, err)
            checked += 1
        report.max_rel_error[key] = worst
        report.skipped[key] = skipped
        report.checked[key] = checked
    return report
