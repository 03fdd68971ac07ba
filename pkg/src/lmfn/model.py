"""The full deblurring network: hierarchical encoder + distillation decoder.

Encoder (multi-scale hierarchical fusion): a head conv produces f_0 at full
resolution, each scale then halves the map (stride-2 conv + residual block),
and a cascade of upsample-and-add steps walks back up the pyramid so every
scale's detail lands in one fused feature map at the configured output
scale (1/2 resolution by default). A 1x1 conv shifts it to decoder width.

Decoder (multi-stage feature fusion): a chain of distillation blocks, the
layer-attention fuse over all their outputs, the channel-attention gate on
the last one, upsampling back to full resolution, and a final 3x3 conv to
RGB. Ablation flags swap each stage for its plain counterpart.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .attention import Acfm, Alfm
from .blocks import (LINEAR_GAIN, ConvLayer, DownBlock, Module, ModuleList,
                     ResBlock, Rfdb, UpsampleBlock)
from .tensor import Tensor, add, concat, mse_loss, narrow, reshape

__all__ = ["ModelConfig", "LmfnModel", "build_ablation"]


@dataclass
class ModelConfig:
    """Architecture knobs; the defaults give the reference-size network."""

    encoder_width: int = 64
    decoder_width: int = 48
    num_scales: int = 4
    num_rfdb: int = 4
    fusion_output_scale: int = 2   # encoder output sits at 1/this resolution
    mshf_enabled: bool = True      # hierarchical encoder vs plain strided convs
    rfdb_enabled: bool = True      # distillation blocks vs plain residual blocks
    attention_enabled: bool = True # layer+channel attention vs plain concat
    global_skip: bool = False      # add the blurred input to the prediction

    def validate(self) -> None:
        if self.num_scales < 1:
            raise ValueError(f"num_scales must be >= 1; got {self.num_scales}")
        if self.num_rfdb < 1:
            raise ValueError(f"num_rfdb must be >= 1; got {self.num_rfdb}")
        for label, width in (("encoder_width", self.encoder_width),
                             ("decoder_width", self.decoder_width)):
            if width < 4 or width % 2:
                raise ValueError(f"{label} must be an even integer >= 4; got {width}")
        s = self.fusion_output_scale
        if s < 1 or s & (s - 1):
            raise ValueError(f"fusion_output_scale must be a power of two; got {s}")
        if 1 << self.num_scales < s:
            raise ValueError(f"fusion_output_scale {s} exceeds the deepest scale "
                             f"2^{self.num_scales}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}; "
                             f"valid keys: {', '.join(sorted(known))}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


class LmfnModel(Module):
    """Deblurring network built from a :class:`ModelConfig` and a seed."""

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        super().__init__()
        config = config or ModelConfig()
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)

        enc_w = config.encoder_width
        # without distillation blocks the decoder runs at encoder width and
        # the width transition disappears
        self.dec_width = config.decoder_width if config.rfdb_enabled else enc_w
        self._scale_exp = config.fusion_output_scale.bit_length() - 1

        self.head = ConvLayer(rng, 3, enc_w, k=3, gain=LINEAR_GAIN)
        if config.mshf_enabled:
            self.down = ModuleList([DownBlock(rng, enc_w, enc_w)
                                    for _ in range(config.num_scales)])
            self.enc_res = ModuleList([ResBlock(rng, enc_w)
                                       for _ in range(config.num_scales)])
            self.fusion_up = ModuleList([UpsampleBlock(rng, enc_w)
                                         for _ in range(config.num_scales - self._scale_exp)])
        else:
            # plain pipeline straight to the fusion output scale
            self.down = ModuleList([DownBlock(rng, enc_w, enc_w)
                                    for _ in range(self._scale_exp)])
            self.enc_res = ModuleList([ResBlock(rng, enc_w) for _ in range(2)])
            self.fusion_up = ModuleList([])

        if config.rfdb_enabled:
            self.transition = ConvLayer(rng, enc_w, self.dec_width, k=1,
                                        gain=LINEAR_GAIN)
            self.dec_blocks = ModuleList([Rfdb(rng, self.dec_width)
                                          for _ in range(config.num_rfdb)])
        else:
            self.transition = None
            self.dec_blocks = ModuleList([ResBlock(rng, self.dec_width)
                                          for _ in range(config.num_rfdb)])

        if config.attention_enabled:
            self.alfm = Alfm()
            self.acfm = Acfm(rng)
        else:
            self.alfm = None
            self.acfm = None
        self.merge = ConvLayer(rng, config.num_rfdb * self.dec_width, self.dec_width,
                               k=1, gain=LINEAR_GAIN)
        self.tail_up = ModuleList([UpsampleBlock(rng, self.dec_width)
                                   for _ in range(self._scale_exp)])
        self.final = ConvLayer(rng, self.dec_width, 3, k=3, gain=LINEAR_GAIN)

    # -- encoder ------------------------------------------------------------

    def mshf_encode(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if c != 3:
            raise ValueError(f"expected an RGB input (N,3,H,W); got {x.shape}")
        div = 1 << self.config.num_scales
        if h % div or w % div:
            raise ValueError(
                f"input spatial dims must be multiples of {div} for {self.config.num_scales} "
                f"scales; got {h}x{w} — reflect-pad up to "
                f"{-h % div} rows / {-w % div} cols more")
        f = self.head(x)
        if self.config.mshf_enabled:
            feats = [f]  # feats[i] lives at 1/2^i resolution
            cur = f
            for down, res in zip(self.down, self.enc_res):
                cur = res(down(cur))
                feats.append(cur)
            g = feats[-1]
            scales = range(self.config.num_scales - 1, self._scale_exp - 1, -1)
            for i, up in zip(scales, self.fusion_up):
                g = add(feats[i], up(g))
        else:
            cur = f
            for down in self.down:
                cur = down(cur)
            for res in self.enc_res:
                cur = res(cur)
            g = cur
        return self.transition(g) if self.transition is not None else g

    # -- decoder ------------------------------------------------------------

    def _attend_layers(self, layer_outs) -> Tensor:
        """Layer attention per batch element, restacked as channel groups."""
        n = layer_outs[0].shape[0]
        fused = []
        for i in range(n):
            stack = concat([narrow(d, 0, i, 1) for d in layer_outs], axis=0)
            att = self.alfm(stack)
            layers, c, h, w = att.shape
            fused.append(reshape(att, (1, layers * c, h, w)))
        return concat(fused, axis=0)

    def mffd_decode(self, f: Tensor) -> Tensor:
        if f.shape[1] != self.dec_width:
            raise ValueError(f"decoder expects {self.dec_width} channels from the encoder; "
                             f"got {f.shape}")
        d = f
        outs = []
        for block in self.dec_blocks:
            d = block(d)
            outs.append(d)
        if self.config.attention_enabled:
            feature = add(self.merge(self._attend_layers(outs)), self.acfm(d))
        else:
            feature = add(self.merge(concat(outs, axis=1)), d)
        for up in self.tail_up:
            feature = up(feature)
        return self.final(feature)

    # -- end to end ----------------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        pred = self.mffd_decode(self.mshf_encode(x))
        if self.config.global_skip:
            pred = add(pred, x)
        return pred

    def loss(self, blurred: Tensor, sharp: Tensor) -> Tensor:
        return mse_loss(self.forward(blurred), sharp)

    def infer_image(self, image: np.ndarray) -> np.ndarray:
        """Deblur one (3,H,W) image in [0,1]: reflect-pad up to the required
        spatial multiple, forward without recording, crop, clamp."""
        arr = np.asarray(image, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"expected a (3,H,W) image; got shape {arr.shape}")
        _, h, w = arr.shape
        div = 1 << self.config.num_scales
        ph, pw = -h % div, -w % div
        if ph >= h or pw >= w:
            raise ValueError(f"a {h}x{w} image cannot be reflect-padded to a multiple "
                             f"of {div}; use fewer scales or a larger image")
        if ph or pw:
            arr = np.pad(arr, ((0, 0), (0, ph), (0, pw)), mode="reflect")
        pred = self.forward(Tensor(arr[None]))
        return np.clip(pred.data[0, :, :h, :w], 0.0, 1.0).astype(np.float32)

    # -- bookkeeping ----------------------------------------------------------

    def param_breakdown(self):
        """(block name, param count) per top-level block, in registration order."""
        return [(name, child.param_count()) for name, child in self._children]

    def summary(self) -> str:
        """Human-readable table of every parameter tensor."""
        lines = [f"{'name':<28} {'shape':<20} {'params':>9}",
                 "-" * 59]
        for name, t in self.named_params():
            lines.append(f"{name:<28} {str(t.shape):<20} {t.size:>9,}")
        lines.append("-" * 59)
        lines.append(f"{'total':<28} {'':<20} {self.param_count():>9,}")
        return "\n".join(lines)


def build_ablation(config: ModelConfig, seed: int = 0) -> LmfnModel:
    """Build a model for the ablation suite: at most one stage swapped out."""
    disabled = [name for name, flag in (("mshf_enabled", config.mshf_enabled),
                                        ("rfdb_enabled", config.rfdb_enabled),
                                        ("attention_enabled", config.attention_enabled))
                if not flag]
    if len(disabled) > 1:
        raise ValueError(f"ablations disable at most one component at a time; "
                         f"disabled: {', '.join(disabled)}")
    return LmfnModel(config, seed=seed)
