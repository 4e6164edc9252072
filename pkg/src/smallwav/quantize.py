"""Dynamic 8-bit quantization of the model's linear layers.

Weight matrices of the transformer blocks (Q/K/V/O, both FFN linears)
and the token head are stored as int8 with one symmetric scale per
tensor.  Activations are quantized on the fly each forward pass with an
asymmetric scale and zero point.  The matmul runs in the integer domain
with 32-bit accumulation, then the result is rescaled to float, so
everything downstream (gelu, layer norm, the attention score path) sees
ordinary float32.  The conv frontend, positional table, layer norms and
all biases stay float.

Prepacking caches each layer's unpacked operands once so per-utterance
inference skips the int8-to-int32 conversion; outputs are bit-identical
either way, only the per-call unpack work disappears.

Quantized checkpoints use the "SWQ8" container documented in
docs/formats.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import (
    AcousticModel,
    ModelConfig,
    TruncatedError,
    _pack_config,
    _param_shapes,
    _parse_header,
    count_params,
)
from .model import checkpoint_bytes as float_checkpoint_bytes
from .model import header_bytes as _header_bytes
from .tensor import (
    NumericError,
    ShapeError,
    Tensor,
    add,
    attention_core,
    conv1d,
    gelu,
    layer_norm,
    transpose,
)

QMAGIC = b"SWQ8"
QFORMAT_VERSION = 1

#: serialized bytes per QuantParams record: float32 scale + int32 zero point
QUANT_PARAMS_BYTES = 8

#: weight-matrix fields of an encoder layer that get a QuantizedLinear
LINEAR_FIELDS = ("wq", "wk", "wv", "wo", "wf1", "wf2")

_BIAS_FOR = {"wq": "bq", "wk": "bk", "wv": "bv", "wo": "bo", "wf1": "bf1", "wf2": "bf2"}


@dataclass(frozen=True)
class QuantParams:
    """Affine int8 mapping q = round(x / scale) + zero_point.

    zero_point lives in [-128, 127]; ranges that do not straddle zero
    get it clamped, which shifts the representable window
    [(-128 - zp) * scale, (127 - zp) * scale].  Inside that window the
    round trip is off by at most scale / 2 per element; a constant
    integer-valued tensor round-trips exactly.  Weight scales are
    snapped to the float32 grid at creation so SWQ8 checkpoints
    round-trip bit-exactly.
    """

    scale: float
    zero_point: int
    bits: int = 8

    def quantize(self, x) -> np.ndarray:
        q = np.rint(np.asarray(x, dtype=np.float64) / self.scale) + self.zero_point
        return np.clip(q, -128, 127).astype(np.int8)

    def dequantize(self, q) -> np.ndarray:
        return (np.asarray(q, dtype=np.float64) - self.zero_point) * self.scale


def _require_finite(x: np.ndarray, who: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{who}: input contains nan or inf")


def quantize_weights(w) -> tuple:
    """Symmetric per-tensor int8 weights.

    scale = max|w| / 127, or 1.0 for an all-zero tensor, so dividing by
    it is always safe and zeros stay exactly zero.  Codes land in
    [-127, 127]; -128 is never produced.

    Returns:
        (int8 array of w's shape, QuantParams with zero_point 0)
    """
    w = np.asarray(w, dtype=np.float64)
    _require_finite(w, "quantize_weights")
    amax = float(np.max(np.abs(w))) if w.size else 0.0
    scale = float(np.float32(amax / 127.0))
    if scale == 0.0:
        # All zero, or too small to register on the float32 scale grid;
        # unit scale keeps the division safe and rounds everything to 0.
        scale = 1.0
    q = np.clip(np.rint(w / scale), -127, 127).astype(np.int8)
    return q, QuantParams(scale=scale, zero_point=0)


def dynamic_activation_params(x) -> QuantParams:
    """Asymmetric per-tensor parameters from the observed range of x.

    scale = (max - min) / 255 (1.0 for a constant tensor) and the zero
    point places min at code -128, clamped into [-128, 127].  For
    activations whose range straddles zero, which covers every tensor
    this model quantizes dynamically, the clamp never engages and the
    whole observed range is representable.  Recomputed on every call;
    nothing here is cached between forward passes.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ShapeError("dynamic_activation_params: empty input")
    _require_finite(x, "dynamic_activation_params")
    mn = float(x.min())
    mx = float(x.max())
    # Unlike weight scales these are never serialized, so no float32
    # snapping: full precision keeps the clip error inside scale / 2.
    scale = (mx - mn) / 255.0
    if scale == 0.0:
        scale = 1.0
    zp = int(np.clip(-128 - np.rint(mn / scale), -128, 127))
    return QuantParams(scale=scale, zero_point=zp)


class QuantizedLinear:
    """One linear layer stored as int8 weights plus a float bias.

    w_q holds codes in [-127, 127] with the symmetric scale in w_params.
    prepacked is None until prepack() runs; afterwards it holds the
    dequantized float32 weight matrix (w_q * scale) and the int32 kernel
    operand is cached alongside, so forward passes stop converting the
    int8 payload on every call.  unpack_count counts those per-call
    conversions; after prepacking it stops moving.
    """

    __slots__ = ("w_q", "w_params", "bias", "prepacked", "unpack_count", "_w_op")

    def __init__(self, w_q: np.ndarray, w_params: QuantParams, bias: np.ndarray):
        if w_q.ndim != 2:
            raise ShapeError(f"QuantizedLinear: weights must be 2-D, got {w_q.shape}")
        if bias.shape != (w_q.shape[1],):
            raise ShapeError(
                f"QuantizedLinear: bias {bias.shape} does not match "
                f"output width {w_q.shape[1]}"
            )
        self.w_q = w_q
        self.w_params = w_params
        self.bias = np.asarray(bias, dtype=np.float32)
        self.prepacked = None
        self.unpack_count = 0
        self._w_op = None

    @classmethod
    def from_float(cls, w, bias) -> "QuantizedLinear":
        q, params = quantize_weights(w)
        return cls(q, params, np.asarray(bias, dtype=np.float32))

    def prepack(self) -> None:
        """Cache the unpacked operands; forward output bits do not change.

        Trades memory (a wide copy of the weights) for dropping the
        per-call unpack, the same bargain the runtime this mirrors makes.
        """
        self._w_op = self.w_q.astype(np.float64)
        self.prepacked = self.w_q.astype(np.float32) * np.float32(self.w_params.scale)

    def _kernel_weights(self) -> np.ndarray:
        if self._w_op is not None:
            return self._w_op
        self.unpack_count += 1
        return self.w_q.astype(np.float64)


def qlinear_forward(x, layer: QuantizedLinear) -> np.ndarray:
    """Dynamically quantized x @ w + bias, returned as float32.

    x is quantized per call from its own range, the codes go through an
    integer-domain matmul, and one combined scale brings the result back
    to float.  The accumulation runs on exact integers carried in
    float64: with both zero points in [-128, 127] every product is below
    2^15, so for inner dimensions up to 2^15 all partial sums stay far
    inside the 2^53 exact-integer window and the result is bit-identical
    to a 32-bit integer accumulator (which the same cap keeps from
    overflowing).  Carrying the integers in float64 lets the matmul use
    the BLAS path instead of numpy's slow integer loops.

    Against the exact float product the per-element error is at most
    0.75 * (scale_w * ||x||_1 + scale_x * ||w||_1) with full-tensor
    1-norms, valid for inner dimensions up to 127 (the 0.5 rounding
    terms plus a cross term bounded via ||w||_1 >= 127 * scale_w).
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"qlinear_forward: expected (N, d) input, got {x.shape}")
    if x.shape[1] != layer.w_q.shape[0]:
        raise ShapeError(
            f"qlinear_forward: input width {x.shape[1]} does not match "
            f"weight shape {layer.w_q.shape}"
        )
    aparams = dynamic_activation_params(x)
    x_q = aparams.quantize(x).astype(np.float64)
    acc = (x_q - aparams.zero_point) @ layer._kernel_weights()
    combined = aparams.scale * layer.w_params.scale
    return (acc * combined + layer.bias.astype(np.float64)).astype(np.float32)


class QuantizedEncoderLayer:
    """Encoder layer with quantized linears and float layer norms."""

    __slots__ = ("wq", "wk", "wv", "wo", "wf1", "wf2", "ln1_g", "ln1_b", "ln2_g", "ln2_b")

    def __init__(self, **fields):
        for name in self.__slots__:
            setattr(self, name, fields[name])


class QuantizedModel:
    """Inference-only model with int8 linear layers.

    The conv frontend, positional table and layer norms keep their
    float32 values; attention scores and softmax always run on float
    tensors (attention_core refuses anything else).  After prepack()
    the model is read-only and safe to share across threads.
    """

    def __init__(self, config: ModelConfig, conv, pos, layers, head: QuantizedLinear):
        self.config = config
        self.conv = conv
        self.pos = pos
        self.layers = layers
        self.head = head

    # -- bookkeeping ------------------------------------------------------

    def named_linears(self) -> list:
        """(name, QuantizedLinear) pairs in checkpoint order."""
        out = []
        for i, layer in enumerate(self.layers):
            for f in LINEAR_FIELDS:
                out.append((f"layer{i}.{f}", getattr(layer, f)))
        out.append(("head.w", self.head))
        return out

    def unpack_count(self) -> int:
        return sum(lin.unpack_count for _, lin in self.named_linears())

    def reset_unpack_count(self) -> None:
        for _, lin in self.named_linears():
            lin.unpack_count = 0

    # -- inference --------------------------------------------------------

    def infer(self, waveform) -> np.ndarray:
        """Per-frame logits of shape (N, n_tokens) for one utterance."""
        data = np.asarray(waveform)
        if data.ndim != 1:
            raise ShapeError(f"infer: expected a 1-D waveform, got shape {data.shape}")
        n = self.config.n_frames(data.shape[0])
        if n > self.config.max_frames:
            raise ShapeError(
                f"utterance needs {n} frames but max_frames is {self.config.max_frames}"
            )
        x = Tensor(np.ascontiguousarray(data[None, :], dtype=np.float32))
        for w, b, stride in self.conv:
            x = gelu(add(conv1d(x, Tensor(w), stride), Tensor(b)))
        h = transpose(x).data + self.pos[:n]
        for layer in self.layers:
            q = qlinear_forward(h, layer.wq)
            k = qlinear_forward(h, layer.wk)
            v = qlinear_forward(h, layer.wv)
            core = attention_core(Tensor(q), Tensor(k), Tensor(v), self.config.n_heads)
            o = qlinear_forward(core.data, layer.wo)
            h = layer_norm(Tensor(h + o), Tensor(layer.ln1_g), Tensor(layer.ln1_b)).data
            ff = qlinear_forward(gelu(Tensor(qlinear_forward(h, layer.wf1))).data, layer.wf2)
            h = layer_norm(Tensor(h + ff), Tensor(layer.ln2_g), Tensor(layer.ln2_b)).data
        return qlinear_forward(h, self.head)


def quantize_model(model: AcousticModel) -> QuantizedModel:
    """Quantize every transformer linear and the head; leave the rest float.

    The input model is read, not touched.  Quantizing twice makes no
    sense, so a QuantizedModel argument is rejected outright.
    """
    if isinstance(model, QuantizedModel):
        raise TypeError("quantize_model: model is already quantized")
    if not isinstance(model, AcousticModel):
        raise TypeError(f"quantize_model: expected an AcousticModel, got {type(model)!r}")
    conv = [
        (lyr.w.data.astype(np.float32, copy=True), lyr.b.data.astype(np.float32, copy=True), lyr.stride)
        for lyr in model.conv
    ]
    pos = model.pos.data.astype(np.float32, copy=True)
    layers = []
    for src in model.layers:
        fields = {}
        for f in LINEAR_FIELDS:
            bias = getattr(src, _BIAS_FOR[f]).data
            fields[f] = QuantizedLinear.from_float(getattr(src, f).data, bias)
        for f in ("ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            fields[f] = getattr(src, f).data.astype(np.float32, copy=True)
        layers.append(QuantizedEncoderLayer(**fields))
    head = QuantizedLinear.from_float(model.head_w.data, model.head_b.data)
    return QuantizedModel(model.config, conv, pos, layers, head)


def prepack(qmodel: QuantizedModel) -> QuantizedModel:
    """Cache every layer's unpacked weights in place and return the model."""
    for _, lin in qmodel.named_linears():
        lin.prepack()
    return qmodel


# ---------------------------------------------------------------------------
# size accounting and the SWQ8 checkpoint format (see docs/formats.md)


def _linear_weight_names(config: ModelConfig) -> set:
    names = {"head.w"}
    for i in range(config.n_transformer_layers):
        for f in LINEAR_FIELDS:
            names.add(f"layer{i}.{f}")
    return names


def quantized_checkpoint_bytes(config: ModelConfig) -> int:
    """Exact SWQ8 file size: header, float payload, per-tensor int8 records."""
    d, f, depth = config.d_model, config.ffn_dim, config.n_transformer_layers
    linear_elems = depth * (4 * d * d + 2 * d * f) + d * config.n_tokens
    n_linears = 6 * depth + 1
    float_params = count_params(config) - linear_elems
    return (
        _header_bytes(config)
        + 4 * float_params
        + n_linears * QUANT_PARAMS_BYTES
        + linear_elems
    )


def model_size_bytes(model) -> int:
    """Serialized size of a float or quantized model, in bytes."""
    if isinstance(model, AcousticModel):
        return float_checkpoint_bytes(model.config)
    if isinstance(model, QuantizedModel):
        return quantized_checkpoint_bytes(model.config)
    raise TypeError(f"model_size_bytes: unsupported type {type(model)!r}")


def save_quantized_model(qmodel: QuantizedModel, path) -> None:
    skip = _linear_weight_names(qmodel.config)
    floats = _float_payload_arrays(qmodel)
    blob = [QMAGIC, struct.pack("<I", QFORMAT_VERSION), _pack_config(qmodel.config)]
    for name, _ in _param_shapes(qmodel.config):
        if name in skip:
            continue
        blob.append(np.ascontiguousarray(floats[name], dtype="<f4").tobytes())
    for _, lin in qmodel.named_linears():
        blob.append(struct.pack("<f", lin.w_params.scale))
        blob.append(struct.pack("<i", lin.w_params.zero_point))
        blob.append(np.ascontiguousarray(lin.w_q, dtype=np.int8).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blob))


def _float_payload_arrays(qmodel: QuantizedModel) -> dict:
    """Non-quantized tensors keyed by their canonical parameter names."""
    out = {}
    for i, (w, b, _) in enumerate(qmodel.conv):
        out[f"conv{i}.w"] = w
        out[f"conv{i}.b"] = b
    out["pos"] = qmodel.pos
    for i, layer in enumerate(qmodel.layers):
        for f in ("ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            out[f"layer{i}.{f}"] = getattr(layer, f)
        for f in LINEAR_FIELDS:
            out[f"layer{i}.{_BIAS_FOR[f]}"] = getattr(layer, f).bias
    out["head.b"] = qmodel.head.bias
    return out


def load_quantized_model(path) -> QuantizedModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    config, offset = _parse_header(raw, QMAGIC)
    expected = quantized_checkpoint_bytes(config) - _header_bytes(config)
    payload = raw[offset:]
    if len(payload) < expected:
        raise TruncatedError(f"payload has {len(payload)} bytes, config needs {expected}")
    if len(payload) > expected:
        raise TruncatedError(f"{len(payload) - expected} trailing bytes after payload")

    skip = _linear_weight_names(config)
    shapes = dict(_param_shapes(config))
    floats = {}
    cursor = offset
    for name, shape in _param_shapes(config):
        if name in skip:
            continue
        n = int(np.prod(shape))
        floats[name] = (
            np.frombuffer(raw, dtype="<f4", count=n, offset=cursor)
            .reshape(shape)
            .astype(np.float32, copy=True)
        )
        cursor += 4 * n

    def read_linear(name):
        nonlocal cursor
        (scale,) = struct.unpack_from("<f", raw, cursor)
        (zp,) = struct.unpack_from("<i", raw, cursor + 4)
        cursor += QUANT_PARAMS_BYTES
        shape = shapes[name]
        n = int(np.prod(shape))
        w_q = (
            np.frombuffer(raw, dtype=np.int8, count=n, offset=cursor)
            .reshape(shape)
            .copy()
        )
        cursor += n
        return w_q, QuantParams(scale=float(scale), zero_point=int(zp))

    conv = []
    for i, (_, _, stride) in enumerate(config.conv_layers):
        conv.append((floats[f"conv{i}.w"], floats[f"conv{i}.b"], stride))
    layers = []
    for i in range(config.n_transformer_layers):
        fields = {}
        for f in LINEAR_FIELDS:
            w_q, params = read_linear(f"layer{i}.{f}")
            fields[f] = QuantizedLinear(w_q, params, floats[f"layer{i}.{_BIAS_FOR[f]}"])
        for f in ("ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            fields[f] = floats[f"layer{i}.{f}"]
        layers.append(QuantizedEncoderLayer(**fields))
    w_q, params = read_linear("head.w")
    head = QuantizedLinear(w_q, params, floats["head.b"])
    return QuantizedModel(config, conv, floats["pos"], layers, head)
