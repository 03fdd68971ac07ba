"""The network's building blocks and where their parameters go."""

import numpy as np

from lmfn import (DownBlock, ResBlock, Rfdb, Srb, Tensor, UpsampleBlock)

rng = np.random.default_rng(7)
x = Tensor(rng.uniform(0, 1, (1, 16, 24, 24)).astype(np.float32))

res = ResBlock(rng, 16)
down = DownBlock(rng, 16, 32)
up = UpsampleBlock(rng, 16)
srb = Srb(rng, 16)
rfdb = Rfdb(rng, 16)

print("input", x.shape)
print("resblock keeps shape:        ", res(x).shape)
print("downblock halves and widens: ", down(x).shape)
print("upsample doubles spatially:  ", up(x).shape)
print("srb keeps shape:             ", srb(x).shape)
print("rfdb keeps shape:            ", rfdb(x).shape)

print()
print("parameter accounting (channels c=16):")
for name, block, formula in [
    ("resblock", res, "2c(9c+1)"),
    ("downblock", down, "2c(9c+1)"),   # cout=2c here, so cout(9c+1)
    ("upsample", up, "4c(9c+1)"),
    ("srb", srb, "c(9c+1)"),
    ("rfdb", rfdb, "31c^2 + 6c"),
]:
    print(f"  {name:<10} {block.param_count():>7,}   ({formula})")

# an RFDB distills half the channels at each of three stages, then fuses
# the four retained halves back; that is where the 31c^2 comes from
print()
print("rfdb internals:")
for name, t in rfdb.named_params():
    if name.endswith("weight"):
        print(f"  {name:<22} {t.shape}")
