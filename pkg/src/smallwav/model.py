"""The acoustic model: conv frontend, transformer encoder, token head.

A waveform goes through a stack of strided 1-D convolutions (gelu after
each), gains learned absolute positional embeddings, passes through
post-norm transformer encoder layers, and is projected to per-frame
token logits for CTC-style decoding.

The module also owns layer selection for student initialization and the
"SWAV" float checkpoint format.  Parameters live in float32 and follow
one canonical order everywhere (iteration, serialization, optimizer
state), documented in docs/formats.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .tensor import (
    Rng,
    ShapeError,
    Tensor,
    add,
    attention_core,
    conv1d,
    gelu,
    layer_norm,
    matmul,
    transpose,
)

MAGIC = b"SWAV"
FORMAT_VERSION = 1


class ConfigError(ValueError):
    """A model or task configuration violates its own constraints."""


class SelectionError(ValueError):
    """A layer selection cannot be applied to the teacher's depth."""


class CheckpointError(ValueError):
    """Base for checkpoint parse failures."""


class BadMagicError(CheckpointError):
    pass


class BadVersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    """Payload shorter or longer than the config demands."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    conv_layers lists (out_channels, kernel_width, stride) from the
    waveform inward; the last out_channels must equal d_model so conv
    frames feed the transformer directly.  max_frames bounds the learned
    positional table and therefore the longest supported utterance.
    """

    conv_layers: tuple = ((32, 16, 2), (32, 8, 2), (64, 8, 2))
    d_model: int = 64
    n_transformer_layers: int = 4
    n_heads: int = 4
    ffn_dim: int = 256
    n_tokens: int = 12
    max_frames: int = 256

    def __post_init__(self):
        if not self.conv_layers:
            raise ConfigError("conv_layers must not be empty")
        for trip in self.conv_layers:
            if len(trip) != 3 or any(int(v) < 1 for v in trip):
                raise ConfigError(f"bad conv layer spec {trip!r}")
        object.__setattr__(
            self, "conv_layers", tuple(tuple(int(v) for v in t) for t in self.conv_layers)
        )
        if self.conv_layers[-1][0] != self.d_model:
            raise ConfigError(
                f"last conv out_channels {self.conv_layers[-1][0]} "
                f"must equal d_model {self.d_model}"
            )
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        for name in ("d_model", "n_transformer_layers", "n_heads", "ffn_dim", "max_frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_tokens < 2:
            raise ConfigError("n_tokens must cover blank plus at least one symbol")

    def n_frames(self, n_samples: int) -> int:
        """Closed-form conv output length for an input of n_samples."""
        length = int(n_samples)
        for _, width, stride in self.conv_layers:
            if length < width:
                raise ShapeError(
                    f"waveform of {n_samples} samples too short for conv "
                    f"stack (need width {width}, have {length})"
                )
            length = (length - width) // stride + 1
        return length

    def receptive_field(self) -> int:
        """Samples of input seen by one conv output frame."""
        span = self.conv_layers[0][1]
        jump = self.conv_layers[0][2]
        for _, width, stride in self.conv_layers[1:]:
            span += (width - 1) * jump
            jump *= stride
        return span

    def total_stride(self) -> int:
        prod = 1
        for _, _, stride in self.conv_layers:
            prod *= stride
        return prod


def count_params(config: ModelConfig) -> int:
    """Parameter count from the config alone, no model needed."""
    total = 0
    c_in = 1
    for c_out, width, _ in config.conv_layers:
        total += c_out * c_in * width + c_out
        c_in = c_out
    d, f = config.d_model, config.ffn_dim
    total += config.max_frames * d
    per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d
    total += config.n_transformer_layers * per_layer
    total += d * config.n_tokens + config.n_tokens
    return total


@dataclass(frozen=True)
class LayerSelection:
    """Which teacher transformer layers seed the student.

    alternating(k) spreads k picks evenly from the front: index
    floor(j * depth / k) for j in 0..k-1.  last_k(k) keeps the deepest k
    layers.  explicit(indices) names them directly.
    """

    kind: str
    keep: int | None = None
    indices: tuple | None = None

    @classmethod
    def alternating(cls, keep: int) -> "LayerSelection":
        return cls("alternating", keep=int(keep))

    @classmethod
    def last_k(cls, keep: int) -> "LayerSelection":
        return cls("last_k", keep=int(keep))

    @classmethod
    def explicit(cls, indices) -> "LayerSelection":
        return cls("explicit", indices=tuple(int(i) for i in indices))

    def resolve(self, depth: int) -> list:
        if self.kind in ("alternating", "last_k"):
            k = self.keep
            if k is None or not 1 <= k <= depth:
                raise SelectionError(
                    f"{self.kind}: keep={k} outside [1, {depth}]"
                )
            if self.kind == "alternating":
                return [j * depth // k for j in range(k)]
            return list(range(depth - k, depth))
        if self.kind == "explicit":
            idx = list(self.indices or ())
            if not idx:
                raise SelectionError("explicit: empty index list")
            if any(not 0 <= i < depth for i in idx):
                raise SelectionError(f"explicit: indices {idx} outside [0, {depth})")
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise SelectionError(f"explicit: indices {idx} must strictly increase")
            return idx
        raise SelectionError(f"unknown selection kind {self.kind!r}")


class _ConvLayer:
    def __init__(self, w: Tensor, b: Tensor, stride: int):
        self.w = w
        self.b = b
        self.stride = stride


class _EncoderLayer:
    FIELDS = (
        "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
        "ln1_g", "ln1_b", "wf1", "bf1", "wf2", "bf2", "ln2_g", "ln2_b",
    )

    def __init__(self, **tensors):
        for name in self.FIELDS:
            setattr(self, name, tensors[name])


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


class AcousticModel:
    """Float32 model with trainable parameters on the autodiff tape."""

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        self.conv = []
        for i, (_, _, stride) in enumerate(config.conv_layers):
            self.conv.append(
                _ConvLayer(params[f"conv{i}.w"], params[f"conv{i}.b"], stride)
            )
        self.pos = params["pos"]
        self.layers = []
        for i in range(config.n_transformer_layers):
            fields = {f: params[f"layer{i}.{f}"] for f in _EncoderLayer.FIELDS}
            self.layers.append(_EncoderLayer(**fields))
        self.head_w = params["head.w"]
        self.head_b = params["head.b"]

    # -- construction -----------------------------------------------------

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 42) -> "AcousticModel":
        """Fresh random model; identical config and seed give identical weights."""
        rng = Rng(seed)
        f32 = np.float32
        params = {}
        c_in = 1
        for i, (c_out, width, stride) in enumerate(config.conv_layers):
            std = np.sqrt(2.0 / (c_in * width))
            params[f"conv{i}.w"] = Tensor(
                rng.normal((c_out, c_in, width), std=std, dtype=f32), requires_grad=True
            )
            params[f"conv{i}.b"] = Tensor(
                np.zeros((c_out, 1), dtype=f32), requires_grad=True
            )
            c_in = c_out
        d, f = config.d_model, config.ffn_dim
        params["pos"] = Tensor(
            rng.normal((config.max_frames, d), std=0.02, dtype=f32), requires_grad=True
        )
        for i in range(config.n_transformer_layers):
            for name, (din, dout) in (
                ("wq", (d, d)), ("wk", (d, d)), ("wv", (d, d)), ("wo", (d, d)),
                ("wf1", (d, f)), ("wf2", (f, d)),
            ):
                std = np.sqrt(1.0 / din)
                params[f"layer{i}.{name}"] = Tensor(
                    rng.normal((din, dout), std=std, dtype=f32), requires_grad=True
                )
            for name, dim in (
                ("bq", d), ("bk", d), ("bv", d), ("bo", d), ("bf1", f), ("bf2", d),
            ):
                params[f"layer{i}.{name}"] = Tensor(
                    np.zeros(dim, dtype=f32), requires_grad=True
                )
            for name in ("ln1", "ln2"):
                params[f"layer{i}.{name}_g"] = Tensor(np.ones(d, dtype=f32), requires_grad=True)
                params[f"layer{i}.{name}_b"] = Tensor(np.zeros(d, dtype=f32), requires_grad=True)
        params["head.w"] = Tensor(
            rng.normal((d, config.n_tokens), std=np.sqrt(1.0 / d), dtype=f32),
            requires_grad=True,
        )
        params["head.b"] = Tensor(np.zeros(config.n_tokens, dtype=f32), requires_grad=True)
        return cls(config, params)

    def named_params(self) -> list:
        """(name, Tensor) pairs in the canonical serialization order."""
        out = []
        for i, layer in enumerate(self.conv):
            out.append((f"conv{i}.w", layer.w))
            out.append((f"conv{i}.b", layer.b))
        out.append(("pos", self.pos))
        for i, layer in enumerate(self.layers):
            for f in _EncoderLayer.FIELDS:
                out.append((f"layer{i}.{f}", getattr(layer, f)))
        out.append(("head.w", self.head_w))
        out.append(("head.b", self.head_b))
        return out

    def params(self) -> list:
        return [t for _, t in self.named_params()]

    def count_params(self) -> int:
        return sum(t.size for t in self.params())

    def zero_grad(self) -> None:
        for t in self.params():
            t.zero_grad()

    def set_trainable(self, flag: bool) -> None:
        for t in self.params():
            t.requires_grad = flag

    def copy(self) -> "AcousticModel":
        params = {
            name: Tensor(t.data.copy(), requires_grad=t.requires_grad)
            for name, t in self.named_params()
        }
        return AcousticModel(self.config, params)

    # -- forward ----------------------------------------------------------

    def forward(self, waveform) -> tuple:
        """Run one utterance.

        Args:
            waveform: 1-D array or Tensor of samples.

        Returns:
            (logits, conv_out): per-frame token logits of shape (N, M) and
            the final conv features of shape (N, C), both on the tape when
            any weight requires grad.  Gradients do not flow to the input.
        """
        data = waveform.data if isinstance(waveform, Tensor) else np.asarray(waveform)
        if data.ndim != 1:
            raise ShapeError(f"forward: expected a 1-D waveform, got shape {data.shape}")
        n = self.config.n_frames(data.shape[0])
        if n > self.config.max_frames:
            raise ShapeError(
                f"utterance needs {n} frames but max_frames is {self.config.max_frames}"
            )
        x = Tensor(np.ascontiguousarray(data[None, :], dtype=np.float32))
        for layer in self.conv:
            x = gelu(add(conv1d(x, layer.w, layer.stride), layer.b))
        conv_out = transpose(x)
        h = add(conv_out, self.pos[:n])
        for layer in self.layers:
            q = _linear(h, layer.wq, layer.bq)
            k = _linear(h, layer.wk, layer.bk)
            v = _linear(h, layer.wv, layer.bv)
            core = attention_core(q, k, v, self.config.n_heads)
            o = _linear(core, layer.wo, layer.bo)
            h = layer_norm(add(h, o), layer.ln1_g, layer.ln1_b)
            ff = _linear(gelu(_linear(h, layer.wf1, layer.bf1)), layer.wf2, layer.bf2)
            h = layer_norm(add(h, ff), layer.ln2_g, layer.ln2_b)
        logits = _linear(h, self.head_w, self.head_b)
        return logits, conv_out

    def infer(self, waveform) -> np.ndarray:
        """Logits only, with the tape suppressed.  For decoding and timing."""
        flags = [(t, t.requires_grad) for t in self.params()]
        for t, _ in flags:
            t.requires_grad = False
        try:
            logits, _ = self.forward(waveform)
        finally:
            for t, was in flags:
                t.requires_grad = was
        return logits.data


def init_student(teacher: AcousticModel, selection: LayerSelection) -> AcousticModel:
    """Build a student by copying selected teacher layers.

    The conv frontend, positional table, and head copy over whole; the
    student's transformer depth is the selection size.  Selecting every
    layer in order reproduces the teacher exactly.
    """
    depth = teacher.config.n_transformer_layers
    picked = selection.resolve(depth)
    cfg = replace(teacher.config, n_transformer_layers=len(picked))
    params = {}
    for name, t in teacher.named_params():
        if not name.startswith("layer"):
            params[name] = Tensor(t.data.copy(), requires_grad=True)
    for new_idx, old_idx in enumerate(picked):
        for f in _EncoderLayer.FIELDS:
            src = getattr(teacher.layers[old_idx], f)
            params[f"layer{new_idx}.{f}"] = Tensor(src.data.copy(), requires_grad=True)
    return AcousticModel(cfg, params)


# ---------------------------------------------------------------------------
# SWAV checkpoint format (see docs/formats.md)


def _pack_config(config: ModelConfig) -> bytes:
    parts = [struct.pack("<I", len(config.conv_layers))]
    for c_out, width, stride in config.conv_layers:
        parts.append(struct.pack("<III", c_out, width, stride))
    parts.append(
        struct.pack(
            "<IIIIII",
            config.d_model,
            config.n_transformer_layers,
            config.n_heads,
            config.ffn_dim,
            config.n_tokens,
            config.max_frames,
        )
    )
    return b"".join(parts)


def header_bytes(config: ModelConfig) -> int:
    """Length of the SWAV header for this config."""
    return 4 + 4 + 4 + 12 * len(config.conv_layers) + 24


def checkpoint_bytes(config: ModelConfig) -> int:
    """Exact on-disk size of a float checkpoint: header plus 4 bytes a weight."""
    return header_bytes(config) + 4 * count_params(config)


def save_model(model: AcousticModel, path) -> None:
    blob = [MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_config(model.config)]
    for _, t in model.named_params():
        blob.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blob))


def load_model(path) -> AcousticModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    config, offset = _parse_header(raw, MAGIC)
    expected = 4 * count_params(config)
    payload = raw[offset:]
    if len(payload) < expected:
        raise TruncatedError(
            f"payload has {len(payload)} bytes, config needs {expected}"
        )
    if len(payload) > expected:
        raise TruncatedError(
            f"{len(payload) - expected} trailing bytes after payload"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    params = {}
    cursor = 0
    for name, shape in _param_shapes(config):
        n = int(np.prod(shape))
        params[name] = Tensor(
            flat[cursor : cursor + n].reshape(shape).astype(np.float32, copy=True),
            requires_grad=True,
        )
        cursor += n
    return AcousticModel(config, params)


def _parse_header(raw: bytes, magic: bytes) -> tuple:
    if raw[:4] != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {raw[:4]!r}")
    if len(raw) < 12:
        raise TruncatedError("file too short for a header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise BadVersionError(f"unsupported version {version}")
    (n_conv,) = struct.unpack_from("<I", raw, 8)
    need = 12 + 12 * n_conv + 24
    if len(raw) < need:
        raise TruncatedError("file too short for its config block")
    conv = []
    off = 12
    for _ in range(n_conv):
        conv.append(struct.unpack_from("<III", raw, off))
        off += 12
    d, layers, heads, ffn, tokens, maxf = struct.unpack_from("<IIIIII", raw, off)
    off += 24
    try:
        config = ModelConfig(
            conv_layers=tuple(conv),
            d_model=d,
            n_transformer_layers=layers,
            n_heads=heads,
            ffn_dim=ffn,
            n_tokens=tokens,
            max_frames=maxf,
        )
    except ConfigError as exc:
        raise CheckpointError(f"config block invalid: {exc}") from exc
    return config, off


def _param_shapes(config: ModelConfig) -> list:
    shapes = []
    c_in = 1
    for i, (c_out, width, _) in enumerate(config.conv_layers):
        shapes.append((f"conv{i}.w", (c_out, c_in, width)))
        shapes.append((f"conv{i}.b", (c_out, 1)))
        c_in = c_out
    d, f = config.d_model, config.ffn_dim
    shapes.append(("pos", (config.max_frames, d)))
    for i in range(config.n_transformer_layers):
        for name, shape in (
            ("wq", (d, d)), ("bq", (d,)), ("wk", (d, d)), ("bk", (d,)),
            ("wv", (d, d)), ("bv", (d,)), ("wo", (d, d)), ("bo", (d,)),
            ("ln1_g", (d,)), ("ln1_b", (d,)),
            ("wf1", (d, f)), ("bf1", (f,)), ("wf2", (f, d)), ("bf2", (d,)),
            ("ln2_g", (d,)), ("ln2_b", (d,)),
        ):
            shapes.append((f"layer{i}.{name}", shape))
    shapes.append(("head.w", (d, config.n_tokens)))
    shapes.append(("head.b", (config.n_tokens,)))
    return shapes
