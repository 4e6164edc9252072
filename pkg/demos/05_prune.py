"""Sensitivity pruning: thresholds set in units of each layer's spread.

A layer with sensitivity s drops weights below s times its standard
deviation.  For roughly Gaussian weights the sparsity lands at
2*Phi(s) - 1, so the knob has a predictable meaning before you ever
run the model.
"""

import numpy as np
from scipy.stats import norm

from smallwav import AcousticModel, ModelConfig, SensitivityMap, prune_model, sparsity
from smallwav.prune import default_sensitivity_map, prune_layer

rng = np.random.default_rng(6)

print("== the Gaussian law ==")
w = rng.standard_normal(200_000)
for s in (0.1, 0.3, 0.4):
    _, mask = prune_layer(w, s)
    print(f"s = {s:.1f}: measured sparsity {1.0 - mask.mean():.4f}  "
          f"predicted 2*Phi(s)-1 = {2.0 * norm.cdf(s) - 1.0:.4f}")

cfg = ModelConfig(
    conv_layers=((16, 8, 4),),
    d_model=16,
    n_transformer_layers=4,
    n_heads=2,
    ffn_dim=32,
)
model = AcousticModel.init(cfg, seed=6)

print()
print("== the reference assignment, scaled to 4 layers ==")
smap = default_sensitivity_map(cfg)
for pattern, s in smap.groups:
    print(f"{pattern:>10} -> {s}")
print(f"{'default':>10} -> {smap.default}")

pruned, report = prune_model(model, smap)
print()
print("== per-layer ledger (first rows) ==")
print("layer            group        s    pruned/total  sparsity")
for row in list(report.rows)[:6]:
    print(f"{row.layer:<16} {row.group:<10} {row.sensitivity:4.1f}  "
          f"{row.pruned:6d}/{row.total:<6d}  {row.sparsity:8.4f}")
print(f"global sparsity: {100.0 * report.global_sparsity:.1f}%  "
      f"(recount from the model: {100.0 * sparsity(pruned):.1f}%)")

print()
print("== masks only remove, never move ==")
marked = prune_model(model, SensitivityMap({"layer1.*": 0.5}, default=0.0))[0]
before = dict(model.named_params())["layer1.wq"].data
after = dict(marked.named_params())["layer1.wq"].data
survivors = after != 0
print("surviving weights unchanged:", bool((after[survivors] == before[survivors]).all()))
print(f"layer1.wq sparsity: {float((after == 0).mean()):.3f}")
