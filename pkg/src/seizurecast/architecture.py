"""The five-conv / two-FC seizure predictor, plus its on-disk model format.

Layout per input ``1 x H x W`` (channels x time points):

    5 x [conv (SAME, stride 1) -> ReLU -> max-pool (floor)]
    flatten -> dropout -> dense+sigmoid -> dense+sigmoid -> dense -> softmax

The first three blocks use ``1 x k`` kernels so channels are never mixed;
the last two use ``3 x 3`` convolutions and ``2 x 2`` pools.  Output index 1
is the preictal probability.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .engine import (
    Conv2D,
    ConvSpec,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2D,
    ParameterError,
    PoolSpec,
    ReLU,
    ShapeError,
    Sigmoid,
    Tensor,
    softmax,
    softmax_cross_entropy,
)

PREICTAL = 1
INTERICTAL = 0

MODEL_MAGIC = b"SEIZURECAST-MODEL\n"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Model file is malformed, truncated, or from an unsupported version."""


@dataclass(frozen=True)
class NetworkConfig:
    input_channels: int = 23
    input_width: int = 5120
    conv_kernels: tuple = ((1, 20), (1, 20), (1, 10), (3, 3), (3, 3))
    pool_kernels: tuple = ((1, 10), (1, 10), (1, 5), (2, 2), (2, 2))
    conv_out_channels: tuple = (16, 32, 64, 128, 256)
    fc_sizes: tuple = (256, 64)
    dropout_rate: float = 0.5
    num_classes: int = 2

    def __post_init__(self):
        # normalise lists (e.g. from JSON) into hashable tuples
        for name in ("conv_kernels", "pool_kernels"):
            object.__setattr__(self, name, tuple(tuple(int(v) for v in k) for k in getattr(self, name)))
        object.__setattr__(self, "conv_out_channels", tuple(int(c) for c in self.conv_out_channels))
        object.__setattr__(self, "fc_sizes", tuple(int(c) for c in self.fc_sizes))
        n = len(self.conv_kernels)
        if n != 5 or len(self.pool_kernels) != 5 or len(self.conv_out_channels) != 5:
            raise ParameterError("conv_kernels, pool_kernels and conv_out_channels need 5 entries each")
        if self.input_channels < 1 or self.input_width < 1:
            raise ParameterError("input extents must be positive")
        if self.num_classes != 2:
            raise ParameterError("only binary classification is supported")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")

    @classmethod
    def reduced(cls, input_channels: int = 4, input_width: int = 500) -> "NetworkConfig":
        """Same kernel scheme with the time-axis pools cut roughly 10x.

        Pools (1,5),(1,5),(1,2),(2,2),(2,2) keep a 4 x 500 input valid:
        4x100 -> 4x20 -> 4x10 -> 2x5 -> 1x2 (flatten 512).
        """
        return cls(
            input_channels=input_channels,
            input_width=input_width,
            pool_kernels=((1, 5), (1, 5), (1, 2), (2, 2), (2, 2)),
        )

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (1, self.input_channels, self.input_width)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (json.loads(json.dumps(v))) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


@dataclass
class ShapeRow:
    layer: str
    shape: tuple[int, ...]
    params: int


def _make_layers(config: NetworkConfig) -> list[Layer]:
    layers: list[Layer] = []
    in_ch = 1
    for i, (kern, pool, out_ch) in enumerate(
        zip(config.conv_kernels, config.pool_kernels, config.conv_out_channels), start=1
    ):
        spec = ConvSpec(kern[0], kern[1], out_ch)
        layers.append(Conv2D(f"conv{i}", in_ch, spec, input_grad=i > 1))
        layers.append(ReLU(f"relu{i}"))
        layers.append(MaxPool2D(f"pool{i}", PoolSpec(*pool)))
        in_ch = out_ch
    layers.append(Flatten("flatten"))
    layers.append(Dropout("dropout", config.dropout_rate))
    return layers


def shape_table(config: NetworkConfig) -> list[ShapeRow]:
    """Per-layer output shapes and parameter counts; raises ShapeError on collapse."""
    return Network(config).shape_rows


class Network:
    """Ordered layer list with named parameters.

    Parameters are zero after construction; use :func:`build` for Glorot init.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.layers = _make_layers(config)
        rows = [ShapeRow("input", config.input_shape, 0)]
        shape = config.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            rows.append(ShapeRow(layer.name, shape, sum(p.size for p in layer.params)))
        in_features = shape[0]
        for i, width in enumerate(config.fc_sizes, start=1):
            dense = Dense(f"fc{i}", in_features, width)
            self.layers += [dense, Sigmoid(f"sigmoid{i}")]
            rows.append(ShapeRow(dense.name, (width,), dense.weight.size + dense.bias.size))
            in_features = width
        out = Dense("output", in_features, config.num_classes)
        self.layers.append(out)
        rows.append(ShapeRow("output", (config.num_classes,), out.weight.size + out.bias.size))
        self.shape_rows = rows

    @property
    def flatten_length(self) -> int:
        return next(r.shape[0] for r in self.shape_rows if r.layer == "flatten")

    @property
    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters)

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters}

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def check_input(self, shape: tuple[int, ...]) -> None:
        expected = self.config.input_shape
        shape = tuple(shape)
        sample = (1, *shape) if len(shape) == 2 else shape[-3:]
        if len(shape) not in (2, 3, 4) or sample != expected:
            raise ShapeError(
                f"input shape {tuple(shape)} does not match network input {expected}", "input"
            )

    def _prepare(self, x) -> np.ndarray:
        """Any accepted input layout -> channel-major batch ``(1, N, H, W)``."""
        x = np.asarray(x, dtype=np.float64)
        self.check_input(x.shape)
        _, h, w = self.config.input_shape
        return x.reshape(1, -1, h, w)

    def logits(self, x, training: bool = False, rng=None, capture: dict | None = None) -> np.ndarray:
        """Pre-softmax scores for a sample ``(H, W)``/``(1, H, W)`` or a batch ``(N, 1, H, W)``.

        ``capture``, if given, receives every layer's output keyed by layer name
        (spatial outputs as ``(N, C, H, W)``).
        """
        out = self._prepare(x)
        for layer in self.layers:
            out = layer.forward(out, training=training, rng=rng)
            if capture is not None:
                capture[layer.name] = out.transpose(1, 0, 2, 3) if out.ndim == 4 else out
        return out

    def predict_proba(self, x, training: bool = False, rng=None) -> np.ndarray:
        """Class probabilities; shape ``(2,)`` for one sample, ``(N, 2)`` for a batch."""
        single = np.ndim(x) < 4
        p = softmax(self.logits(x, training, rng))
        return p[0] if single else p

    def loss_and_grad(self, x, labels, rng=None, training: bool = True) -> tuple[float, np.ndarray]:
        """Forward + backward on a batch; gradients land in each parameter's ``grad``."""
        for p in self.parameters:
            p.zero_grad()
        z = self.logits(x, training=training, rng=rng)
        loss, probs, grad = softmax_cross_entropy(z, labels)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return loss, probs

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(state) != set(params):
            raise ShapeError(f"parameter names differ: {sorted(set(state) ^ set(params))}")
        for name, arr in state.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != params[name].shape:
                raise ShapeError(f"{arr.shape} != {params[name].shape}", name)
            params[name].data = np.ascontiguousarray(arr)


def _glorot(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    else:
        fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def build(config: NetworkConfig, rng: np.random.Generator | int | None = 0) -> Network:
    """Construct the network and draw Glorot-uniform weights (biases zero)."""
    rng = np.random.default_rng(rng)
    net = Network(config)
    for p in net.parameters:
        if p.name.endswith(".weight"):
            p.data = _glorot(p.shape, rng)
    return net


def forward(net: Network, sample, training: bool = False, rng=None) -> np.ndarray:
    """Preictal/interictal probability vector for one ``1 x H x W`` sample."""
    return net.predict_proba(sample, training=training, rng=rng)


# --------------------------------------------------------------------------
# model file: text header, then raw little-endian float64 payload
# --------------------------------------------------------------------------

def _header_text(net: Network) -> str:
    lines = [
        f"format_version {FORMAT_VERSION}",
        "config " + json.dumps(net.config.to_dict(), sort_keys=True),
    ]
    for row in net.shape_rows:
        lines.append(f"shape {row.layer} {'x'.join(map(str, row.shape))} {row.params}")
    for p in net.parameters:
        lines.append(f"tensor {p.name} f64le {'x'.join(map(str, p.shape))}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def save(net: Network, path) -> None:
    header = _header_text(net).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for p in net.parameters:
            fh.write(p.data.astype("<f8").tobytes())


def load(path, input_shape: tuple[int, ...] | None = None) -> Network:
    """Read a model file; ``input_shape`` (``(H, W)`` or ``(1, H, W)``) is cross-checked."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MODEL_MAGIC):
        raise ModelFormatError(f"{path}: bad magic bytes, not a model file")
    pos = len(MODEL_MAGIC)
    if len(raw) < pos + 8:
        raise ModelFormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    if len(raw) < pos + hlen:
        raise ModelFormatError(f"{path}: truncated header ({len(raw) - pos} of {hlen} bytes)")
    try:
        lines = raw[pos:pos + hlen].decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"{path}: header is not UTF-8") from exc
    pos += hlen

    fields: dict[str, list[str]] = {"shape": [], "tensor": []}
    for line in lines:
        key, _, rest = line.partition(" ")
        if key in ("shape", "tensor"):
            fields[key].append(rest)
        elif key in ("format_version", "config"):
            fields[key] = rest
        elif key == "end":
            break
        else:
            raise ModelFormatError(f"{path}: unknown header line {line!r}")
    if "format_version" not in fields or "config" not in fields:
        raise ModelFormatError(f"{path}: header missing format_version or config")
    if fields["format_version"] != str(FORMAT_VERSION):
        raise ModelFormatError(
            f"{path}: format version {fields['format_version']} unsupported (expected {FORMAT_VERSION})"
        )
    try:
        config = NetworkConfig.from_dict(json.loads(fields["config"]))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"{path}: bad config: {exc}") from exc

    net = Network(config)
    expected_rows = [
        f"{r.layer} {'x'.join(map(str, r.shape))} {r.params}" for r in net.shape_rows
    ]
    if fields["shape"] != expected_rows:
        raise ModelFormatError(f"{path}: recorded shape table does not match its config")
    params = net.parameters
    expected_tensors = [f"{p.name} f64le {'x'.join(map(str, p.shape))}" for p in params]
    if fields["tensor"] != expected_tensors:
        raise ModelFormatError(f"{path}: tensor list does not match its config")

    need = 8 * net.parameter_count
    have = len(raw) - pos
    if have != need:
        raise ModelFormatError(f"{path}: payload is {have} bytes, expected {need}")
    for p in params:
        n = p.size * 8
        p.data = np.frombuffer(raw, dtype="<f8", count=p.size, offset=pos).astype(np.float64).reshape(p.shape)
        pos += n

    if input_shape is not None:
        net.check_input(tuple(input_shape))
    return net
