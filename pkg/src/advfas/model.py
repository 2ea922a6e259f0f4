"""Two-head MLP scorer: shared trunk, detector head (f), corrector head (g).

Parameters are stored as float32 (the checkpoint precision); every forward
and backward runs in float64 via numpy's promotion rules, so gradient checks
against 64-bit finite differences are meaningful and the save/load round trip
is bitwise exact.

Checkpoint layout (little-endian throughout):

    magic   4 bytes  b"AFAS"
    version u32      currently 1
    config  u32 byte length + that many bytes of UTF-8 JSON
    tensors for each parameter in canonical order:
                u32 rank, rank * u32 dims, then float32 data, row-major

Canonical parameter order: trunk layers first (W then b per layer), then the
detector head (hidden W, b, output W, b), then the corrector head likewise.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .coupled import CoupledScores
from .errors import (
    BadMagicError,
    CheckpointError,
    ConfigError,
    DomainError,
    GraphError,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
)

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "BackboneConfig",
    "TwoHeadModel",
    "init_model",
    "forward",
    "forward_batch",
    "score_batch",
    "grads",
    "input_grad",
    "parameter_count",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"AFAS"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("relu", "tanh")

TRUNK = "trunk"
DETECTOR_HEAD = "detector_head"
CORRECTOR_HEAD = "corrector_head"


@dataclass(frozen=True)
class BackboneConfig:
    input_dim: int = 64
    trunk_widths: tuple[int, ...] = (64, 32)
    head_width: int = 16
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "trunk_widths", tuple(int(w) for w in self.trunk_widths))
        if int(self.input_dim) < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim!r}")
        if not self.trunk_widths or any(w < 1 for w in self.trunk_widths):
            raise ConfigError(f"trunk_widths must be non-empty positive counts, got {self.trunk_widths!r}")
        if int(self.head_width) < 1:
            raise ConfigError(f"head_width must be >= 1, got {self.head_width!r}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "input_dim": self.input_dim,
                "trunk_widths": list(self.trunk_widths),
                "head_width": self.head_width,
                "activation": self.activation,
                "seed": self.seed,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "BackboneConfig":
        try:
            raw = json.loads(text)
            return BackboneConfig(
                input_dim=int(raw["input_dim"]),
                trunk_widths=tuple(raw["trunk_widths"]),
                head_width=int(raw["head_width"]),
                activation=str(raw["activation"]),
                seed=int(raw["seed"]),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"invalid embedded config: {exc}") from exc


def _layer_shapes(config: BackboneConfig) -> list[tuple[str, str, tuple[int, ...]]]:
    """(name, group, shape) for every parameter, in canonical order."""
    shapes: list[tuple[str, str, tuple[int, ...]]] = []
    fan_in = config.input_dim
    for i, width in enumerate(config.trunk_widths):
        shapes.append((f"trunk.{i}.W", TRUNK, (fan_in, width)))
        shapes.append((f"trunk.{i}.b", TRUNK, (width,)))
        fan_in = width
    for head, group in (("det", DETECTOR_HEAD), ("cor", CORRECTOR_HEAD)):
        shapes.append((f"{head}.hidden.W", group, (fan_in, config.head_width)))
        shapes.append((f"{head}.hidden.b", group, (config.head_width,)))
        shapes.append((f"{head}.out.W", group, (config.head_width, 1)))
        shapes.append((f"{head}.out.b", group, (1,)))
    return shapes


def parameter_count(config: BackboneConfig) -> int:
    return sum(int(np.prod(shape)) for _, _, shape in _layer_shapes(config))


@dataclass
class TwoHeadModel:
    config: BackboneConfig
    params: dict[str, Tensor] = field(repr=False)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(name, self.params[name]) for name, _, _ in _layer_shapes(self.config)]

    def group_of(self, name: str) -> str:
        for pname, group, _ in _layer_shapes(self.config):
            if pname == name:
                return group
        raise KeyError(name)

    def group_parameters(self, group: str) -> list[tuple[str, Tensor]]:
        return [(name, self.params[name]) for name, g, _ in _layer_shapes(self.config) if g == group]

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        tensor = self.params[name]
        value = np.asarray(value, dtype=np.float32)
        if value.shape != tensor.data.shape:
            raise ShapeError(f"parameter {name} expects shape {tensor.data.shape}, got {value.shape}")
        tensor.data = value

    def copy(self) -> "TwoHeadModel":
        params = {name: Tensor(t.data.copy(), requires_grad=True) for name, t in self.params.items()}
        return TwoHeadModel(self.config, params)


def init_model(config: BackboneConfig) -> TwoHeadModel:
    """Seed-deterministic init: every weight and bias uniform in
    [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn in canonical parameter order."""
    rng = np.random.default_rng(config.seed)
    params: dict[str, Tensor] = {}
    for name, _, shape in _layer_shapes(config):
        fan_in = shape[0] if len(shape) == 2 else _bias_fan_in(config, name)
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32), requires_grad=True)
    return TwoHeadModel(config, params)


def _bias_fan_in(config: BackboneConfig, bias_name: str) -> int:
    weight_name = bias_name[:-2] + ".W"
    for name, _, shape in _layer_shapes(config):
        if name == weight_name:
            return shape[0]
    raise KeyError(bias_name)


def _activation(config: BackboneConfig, h: Tensor) -> Tensor:
    return h.relu() if config.activation == "relu" else h.tanh()


def forward_batch(model: TwoHeadModel, x: Tensor) -> tuple[Tensor, Tensor]:
    """(f, g) score tensors of shape [n] for a batch tensor of shape [n, d]."""
    if x.ndim != 2 or x.shape[1] != model.config.input_dim:
        raise ShapeError(f"expected input of shape [n, {model.config.input_dim}], got {x.shape}")
    p = model.params
    h = x
    for i in range(len(model.config.trunk_widths)):
        h = _activation(model.config, h @ p[f"trunk.{i}.W"] + p[f"trunk.{i}.b"])
    n = x.shape[0]
    hd = _activation(model.config, h @ p["det.hidden.W"] + p["det.hidden.b"])
    f = (hd @ p["det.out.W"] + p["det.out.b"]).reshape(n).sigmoid()
    hc = _activation(model.config, h @ p["cor.hidden.W"] + p["cor.hidden.b"])
    g = (hc @ p["cor.out.W"] + p["cor.out.b"]).reshape(n).sigmoid()
    return f, g


def forward(model: TwoHeadModel, x) -> CoupledScores:
    """Score a single input vector; components must lie in [0, 1]."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != model.config.input_dim:
        raise ShapeError(f"expected input of length {model.config.input_dim}, got shape {arr.shape}")
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise DomainError("input components must lie in [0, 1]")
    f, g = forward_batch(model, Tensor(arr.reshape(1, -1)))
    return CoupledScores(f=float(f.data[0]), g=float(g.data[0]))


def score_batch(model: TwoHeadModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(f, g) numpy score arrays for an [n, d] array, no tape kept."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected [n, d] input, got shape {arr.shape}")
    f, g = forward_batch(model, Tensor(arr))
    return f.data.copy(), g.data.copy()


def grads(model: TwoHeadModel, loss: Tensor) -> dict[str, np.ndarray]:
    """Per-parameter gradients of a scalar loss, keyed by canonical name.

    Parameters the loss never touches come back as exact-zero arrays. Raises
    GraphError when the loss is not connected to any model parameter at all.
    """
    if not isinstance(loss, Tensor):
        raise GraphError("loss must be a Tensor built from this model's forward pass")
    leaf_ids = loss.graph_leaf_ids()
    param_ids = {id(t) for _, t in model.named_parameters()}
    if not (leaf_ids & param_ids):
        raise GraphError("loss is not connected to any model parameter")
    for _, t in model.named_parameters():
        t.zero_grad()
    loss.backward()
    out: dict[str, np.ndarray] = {}
    for name, t in model.named_parameters():
        out[name] = np.zeros(t.data.shape, dtype=np.float64) if t.grad is None else t.grad
        t.zero_grad()
    return out


def input_grad(model: TwoHeadModel, loss: Tensor, x: Tensor) -> np.ndarray:
    """Gradient of a scalar loss with respect to the input tensor x.

    x must be the requires_grad input used to build the loss. A loss that does
    not depend on x yields an exact-zero array.
    """
    if not isinstance(x, Tensor) or not x.requires_grad:
        raise GraphError("x must be the requires_grad input tensor of the forward pass")
    leaf_ids = loss.graph_leaf_ids()
    param_ids = {id(t) for _, t in model.named_parameters()}
    if not (leaf_ids & param_ids):
        raise GraphError("loss is not connected to any model parameter")
    x.zero_grad()
    for _, t in model.named_parameters():
        t.zero_grad()
    loss.backward()
    out = np.zeros(x.data.shape, dtype=np.float64) if x.grad is None else x.grad
    x.zero_grad()
    for _, t in model.named_parameters():
        t.zero_grad()
    return out


# ---- checkpoint I/O ---------------------------------------------------------


def save_checkpoint(model: TwoHeadModel, path) -> None:
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    config_bytes = model.config.to_json().encode("utf-8")
    blob += struct.pack("<I", len(config_bytes))
    blob += config_bytes
    for name, tensor in model.named_parameters():
        arr = np.ascontiguousarray(tensor.data, dtype=np.float32)
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise TruncatedFileError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.offset}, file has {len(self.data)}"
            )
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> TwoHeadModel:
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data)
    magic = reader.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise BadMagicError(f"bad magic: expected {CHECKPOINT_MAGIC!r}, got {magic!r}")
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}, this build reads {CHECKPOINT_VERSION}")
    config = BackboneConfig.from_json(reader.take(reader.u32()).decode("utf-8"))
    params: dict[str, Tensor] = {}
    for name, _, shape in _layer_shapes(config):
        rank = reader.u32()
        if rank != len(shape):
            raise CheckpointError(f"tensor {name}: expected rank {len(shape)}, got {rank}")
        dims = tuple(reader.u32() for _ in range(rank))
        if dims != shape:
            raise CheckpointError(f"tensor {name}: expected dims {shape}, got {dims}")
        count = int(np.prod(dims))
        raw = reader.take(count * 4)
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        params[name] = Tensor(arr, requires_grad=True)
    if reader.offset != len(data):
        raise CheckpointError(f"trailing bytes after payload: {len(data) - reader.offset}")
    return TwoHeadModel(config, params)
