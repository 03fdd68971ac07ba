"""Assembling the full network, counting it, and swapping stages out."""

import numpy as np

from lmfn import LmfnModel, ModelConfig, Tensor, build_ablation

cfg = ModelConfig()  # encoder 64, decoder 48, 4 scales, 4 RFDBs
model = LmfnModel(cfg, seed=0)

x = Tensor(np.random.default_rng(0).uniform(0, 1, (1, 3, 64, 64)).astype(np.float32))
y = model(x)
print("forward:", x.shape, "->", y.shape)

print()
print("parameters by stage:")
for name, count in model.param_breakdown():
    print(f"  {name:<12} {count:>9,}")
print(f"  {'total':<12} {model.param_count():>9,}")

# the encoder halves resolution per scale and fuses adjacent scales by
# upsample-and-add; the decoder runs RFDBs at the fused scale, so most of
# the budget sits in dec_blocks

print()
print("one stage swapped for a plain variant at a time:")
for label, kwargs in [
    ("default", {}),
    ("no-rfdb", {"rfdb_enabled": False}),
    ("no-attention", {"attention_enabled": False}),
    ("no-mshf", {"mshf_enabled": False}),
]:
    variant = build_ablation(ModelConfig(**kwargs), seed=0)
    print(f"  {label:<13} {variant.param_count():>9,} params")

# heavier without distillation, a hair lighter without attention
a = build_ablation(ModelConfig(rfdb_enabled=False), seed=0).param_count()
b = LmfnModel(ModelConfig(), seed=0).param_count()
c = build_ablation(ModelConfig(attention_enabled=False), seed=0).param_count()
assert a > b > c

# arbitrary image sizes go through pad-and-crop inference
odd = np.random.default_rng(1).uniform(0, 1, (3, 37, 51)).astype(np.float32)
restored = LmfnModel(ModelConfig(encoder_width=8, decoder_width=8,
                                 num_scales=2, num_rfdb=2), seed=0).infer_image(odd)
print()
print(f"odd-size inference: {odd.shape} -> {restored.shape}")
