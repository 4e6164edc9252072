"""Dynamic int8 quantization: smaller checkpoints, near-identical output.

Weights are quantized per tensor once; activations get fresh scale and
zero point per call.  The demo shows the size ledger, the output drift,
and why prepacking the weight operands speeds up batch inference.
"""

import time

import numpy as np

from smallwav import AcousticModel, ModelConfig, model_size_bytes, prepack, quantize_model
from smallwav.quantize import quantize_weights, quantized_checkpoint_bytes

cfg = ModelConfig(
    conv_layers=((256, 16, 8),),
    d_model=256,
    n_transformer_layers=2,
    n_heads=4,
    ffn_dim=1024,
    max_frames=16,
)
model = AcousticModel.init(cfg, seed=5)
qmodel = quantize_model(model)

print("== one weight matrix up close ==")
w = model.named_params()[3][1].data[:3, :4]
codes, params = quantize_weights(w)
print("float   :", np.array2string(w, precision=4))
print("int8    :", codes)
print(f"scale   : {params.scale:.6g} (symmetric, zero_point={params.zero_point})")
print("restored:", np.array2string(params.dequantize(codes), precision=4))

print()
print("== the size ledger ==")
fbytes = model_size_bytes(model)
qbytes = model_size_bytes(qmodel)
print(f"float checkpoint : {fbytes:9d} bytes")
print(f"int8  checkpoint : {qbytes:9d} bytes  (= closed form {quantized_checkpoint_bytes(cfg)})")
print(f"ratio            : {qbytes / fbytes:.3f}")

print()
print("== output drift on random audio ==")
rng = np.random.default_rng(5)
drift = max(
    float(np.abs(model.infer(w_) - qmodel.infer(w_)).max())
    for w_ in (rng.standard_normal(64) for _ in range(5))
)
print(f"max |float logits - int8 logits| over 5 waves: {drift:.4f}")

print()
print("== prepacking the kernel operands ==")
waves = [rng.standard_normal(40) for _ in range(60)]

def batch(m):
    for w_ in waves[:3]:
        m.infer(w_)
    t0 = time.perf_counter()
    for w_ in waves:
        m.infer(w_)
    return time.perf_counter() - t0

fresh = quantize_model(model)
t_fresh = batch(fresh)
print(f"unpacked: {t_fresh * 1e3:7.1f} ms for {len(waves)} waves "
      f"({fresh.unpack_count()} operand unpacks)")
packed = prepack(quantize_model(model))
t_packed = batch(packed)
print(f"prepacked:{t_packed * 1e3:7.1f} ms for {len(waves)} waves "
      f"({packed.unpack_count()} operand unpacks)")
print(f"saved    : {100.0 * (t_fresh - t_packed) / t_fresh:+.1f}%")
