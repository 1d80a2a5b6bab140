"""The three fusion modules: attention fusion at stride 8 (FMSA), the
hybrid downsampler with local patch attention (FDS / LADS), and the
global-attention upsampler (FUS / GAUS).

Channel reconciliation convention: every branch entering the stride-8
fusion is brought to the common width ``FusionConfig.channels`` by a 1x1
projection; absent branches are treated as zero maps so a single code
path serves every ablation setting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Tensor, ConfigError, ShapeError,
    add, concat, conv2d, nearest_upsample, reshape, tensor_mean, transpose,
)
from .blocks import (
    C2fParams, ConvParams, EncoderLayerParams, LayerNormParams, MlpParams,
    MsaParams, apply_layer_norm, c2f_block, conv, detokenize, encoder_layer,
    init_c2f, init_conv, init_layer_norm, init_mlp, init_msa,
    init_encoder_layer, mlp_forward, msa_forward, positional_embedding,
    tokenize, zero_params,
)

GAUS_CHANNEL_MODES = ("stride", "stride_sq")


@dataclass
class FusionConfig:
    """Toggles and dimensions for the three fusion modules.

    Only the five module combinations of the ablation grid are legal:
    the up/downsample branches feed the attention fusion stage, so they
    cannot be enabled without it.
    """
    enable_fmsa: bool = False
    enable_fus: bool = False
    enable_fds: bool = False
    channels: int = 64          # common fusion width C_f
    num_heads: int = 4
    mlp_ratio: int = 2
    encoder_depth: int = 1      # L encoder layers inside FMSA
    fds_stride: int = 2
    fus_p5_stride: int = 4
    fus_p4_stride: int = 2
    gaus_channel_mode: str = "stride"

    def __post_init__(self):
        if (self.enable_fus or self.enable_fds) and not self.enable_fmsa:
            raise ConfigError("FUS/FDS require FMSA to be enabled")
        if self.channels % self.num_heads != 0:
            raise ConfigError(f"fusion width {self.channels} not divisible "
                              f"by {self.num_heads} heads")
        if self.gaus_channel_mode not in GAUS_CHANNEL_MODES:
            raise ConfigError(f"unknown gaus channel mode "
                              f"{self.gaus_channel_mode!r}")

    @property
    def setting_id(self):
        """Index of this toggle combination in the ablation grid (0-4)."""
        combos = {(False, False, False): 0, (True, False, False): 1,
                  (True, True, False): 2, (True, False, True): 3,
                  (True, True, True): 4}
        return combos[(self.enable_fmsa, self.enable_fus, self.enable_fds)]

    @staticmethod
    def for_setting(setting, **kwargs):
        flags = [(False, False, False), (True, False, False),
                 (True, True, False), (True, False, True), (True, True, True)]
        fmsa, fus, fds = flags[setting]
        return FusionConfig(enable_fmsa=fmsa, enable_fus=fus, enable_fds=fds,
                            **kwargs)


@dataclass
class FusionInputs:
    """Shape-aligned stride-8 maps entering the fusion stage."""
    x_main: Tensor
    fds_out: Tensor = None
    fus_out: Tensor = None

    def __post_init__(self):
        for name in ("fds_out", "fus_out"):
            t = getattr(self, name)
            if t is not None and t.shape != self.x_main.shape:
                raise ShapeError(f"{name} shape {t.shape} does not match "
                                 f"main map {self.x_main.shape}")


# -- patch extraction --------------------------------------------------------

def patch_extract(x, stride):
    """[B, C, H, W] -> [B, (H/s)*(W/s), s*s, C] non-overlapping patches.

    Pixels within a patch appear in row-major order; lossless, see
    :func:`patch_reassemble`.
    """
    B, C, H, W = x.shape
    if H % stride or W % stride:
        raise ShapeError(f"spatial dims {H}x{W} not divisible by stride "
                         f"{stride}; pad the input first")
    hp, wp = H // stride, W // stride
    t = transpose(x, (0, 2, 3, 1))                       # [B, H, W, C]
    t = reshape(t, (B, hp, stride, wp, stride, C))
    t = transpose(t, (0, 1, 3, 2, 4, 5))                 # [B, hp, wp, s, s, C]
    return reshape(t, (B, hp * wp, stride * stride, C))


def patch_reassemble(patches, h, w, stride):
    """Exact inverse of patch_extract for an h x w source grid."""
    B, P, S, C = patches.shape
    hp, wp = h // stride, w // stride
    if P != hp * wp or S != stride * stride:
        raise ShapeError(f"patches {patches.shape} do not tile {h}x{w} "
                         f"at stride {stride}")
    t = reshape(patches, (B, hp, wp, stride, stride, C))
    t = transpose(t, (0, 1, 3, 2, 4, 5))                 # [B, hp, s, wp, s, C]
    t = reshape(t, (B, h, w, C))
    return transpose(t, (0, 3, 1, 2))


# -- LADS / FDS --------------------------------------------------------------

@dataclass
class LadsParams:
    ln: LayerNormParams
    msa: MsaParams
    mlp: MlpParams
    stride: int = 2


def init_lads(channels, rng, stride=2, num_heads=4, mlp_ratio=2,
              dtype=np.float64):
    # He-style gain: this MLP sits on a plain feedforward path (no
    # residual), so the narrow transformer init would shrink the branch
    # to a fraction of the conv branch's scale
    return LadsParams(
        ln=init_layer_norm(channels, dtype),
        msa=init_msa(channels, num_heads, rng, dtype, gain=np.sqrt(6.0)),
        mlp=init_mlp(channels, mlp_ratio * channels, channels, rng, dtype,
                     gain=np.sqrt(6.0)),
        stride=stride,
    )


def lads(x, p):
    """Local attention downsample: self-attention within each stride x
    stride patch, mean-reduced to one token per patch.

    [B, C, H, W] -> [B, C, H/s, W/s].
    """
    B, C, H, W = x.shape
    s = p.stride
    patches = patch_extract(x, s)                        # [B, P, s*s, C]
    P = patches.shape[1]
    flat = reshape(patches, (B * P, s * s, C))
    attended = msa_forward(apply_layer_norm(flat, p.ln), p.msa)
    pooled = tensor_mean(attended, axis=1)               # [B*P, C]
    out_tokens = mlp_forward(pooled, p.mlp)
    grid = reshape(out_tokens, (B, H // s, W // s, C))
    return transpose(grid, (0, 3, 1, 2))


@dataclass
class FdsParams:
    down_conv: ConvParams    # 3x3 stride-2 conv branch
    lads_branch: LadsParams
    lads_proj: ConvParams    # 1x1 channel projection of the LADS branch
    c2f: C2fParams


def init_fds(c_in, c_out, rng, stride=2, num_heads=4, n_bottlenecks=1,
             dtype=np.float64):
    """Each branch produces c_out/2 channels so the concat lands at c_out."""
    if c_out % 2 != 0:
        raise ConfigError(f"fds output width must be even, got {c_out}")
    half = c_out // 2
    heads = num_heads if c_in % num_heads == 0 else 1
    return FdsParams(
        down_conv=init_conv(c_in, half, 3, rng, stride=stride, padding=1,
                            dtype=dtype),
        lads_branch=init_lads(c_in, rng, stride=stride, num_heads=heads,
                              dtype=dtype),
        lads_proj=init_conv(c_in, half, 1, rng, dtype=dtype),
        c2f=init_c2f(c_out, c_out, n_bottlenecks, rng, dtype=dtype),
    )


def fds(x, p):
    """Hybrid downsample: strided conv branch + local-attention branch,
    concatenated and fused; halves the spatial dims."""
    conv_branch = conv(x, p.down_conv)
    attn_branch = conv(lads(x, p.lads_branch), p.lads_proj)
    return c2f_block(concat([conv_branch, attn_branch], axis=1), p.c2f)


# -- GAUS / FUS --------------------------------------------------------------

@dataclass
class GausParams:
    ln: LayerNormParams
    msa: MsaParams
    mlp: MlpParams           # channels -> hidden -> reduced channels
    stride: int = 2
    channel_mode: str = "stride"


def gaus_out_channels(c_in, stride, channel_mode="stride"):
    divisor = stride if channel_mode == "stride" else stride * stride
    if c_in % divisor != 0:
        raise ConfigError(f"channel width {c_in} not divisible by {divisor} "
                          f"(stride {stride}, mode {channel_mode!r})")
    return c_in // divisor


def init_gaus(channels, rng, stride=2, num_heads=4, mlp_ratio=2,
              channel_mode="stride", dtype=np.float64):
    c_out = gaus_out_channels(channels, stride, channel_mode)
    # feedforward path like the local downsampler, same gain reasoning
    return GausParams(
        ln=init_layer_norm(channels, dtype),
        msa=init_msa(channels, num_heads, rng, dtype, gain=np.sqrt(6.0)),
        mlp=init_mlp(channels, mlp_ratio * channels, c_out, rng, dtype,
                     gain=np.sqrt(6.0)),
        stride=stride,
        channel_mode=channel_mode,
    )


def gaus(x, p):
    """Global attention upsample: LN -> MSA over all tokens -> channel-
    reducing MLP, then each token replicated into a stride x stride block.

    [B, C, H, W] -> [B, C/stride, H*stride, W*stride] (or C/stride^2 in
    the element-count-conserving mode).
    """
    B, C, H, W = x.shape
    c_out = gaus_out_channels(C, p.stride, p.channel_mode)
    tokens = tokenize(x)
    z = mlp_forward(msa_forward(apply_layer_norm(tokens, p.ln), p.msa), p.mlp)
    grid = detokenize(z, H, W)                           # [B, c_out, H, W]
    return nearest_upsample(grid, p.stride)


@dataclass
class FusParams:
    gaus_p5: GausParams
    gaus_p4: GausParams
    proj_p5: ConvParams      # linear 1x1 projections to the fusion width
    proj_p4: ConvParams


def init_fus(c4, c5, c_fusion, rng, p4_stride=2, p5_stride=4, num_heads=4,
             channel_mode="stride", dtype=np.float64):
    g5 = init_gaus(c5, rng, stride=p5_stride,
                   num_heads=num_heads if c5 % num_heads == 0 else 1,
                   channel_mode=channel_mode, dtype=dtype)
    g4 = init_gaus(c4, rng, stride=p4_stride,
                   num_heads=num_heads if c4 % num_heads == 0 else 1,
                   channel_mode=channel_mode, dtype=dtype)
    return FusParams(
        gaus_p5=g5,
        gaus_p4=g4,
        proj_p5=init_conv(gaus_out_channels(c5, p5_stride, channel_mode),
                          c_fusion, 1, rng, dtype=dtype),
        proj_p4=init_conv(gaus_out_channels(c4, p4_stride, channel_mode),
                          c_fusion, 1, rng, dtype=dtype),
    )


def fus(p4, p5, p):
    """Lift the stride-16 and stride-32 maps to stride 8 and sum them.

    The projections are linear (no activation) so the output is additive
    in its two branches.
    """
    up5 = conv2d(gaus(p5, p.gaus_p5), p.proj_p5.w, p.proj_p5.b)
    up4 = conv2d(gaus(p4, p.gaus_p4), p.proj_p4.w, p.proj_p4.b)
    if up5.shape != up4.shape:
        raise ShapeError(f"upsampled branches disagree: {up5.shape} vs "
                         f"{up4.shape}; check the input pyramid strides")
    return add(up5, up4)


# -- FMSA --------------------------------------------------------------------

@dataclass
class FmsaParams:
    encoders: list
    out_proj: ConvParams     # linear 1x1 on the attention path; zeroing it
                             # (with the encoder weights) reduces the whole
                             # module to C2F of the main input
    c2f: C2fParams


def init_fmsa(channels, rng, depth=1, num_heads=4, mlp_ratio=2,
              n_bottlenecks=1, dtype=np.float64):
    return FmsaParams(
        encoders=[init_encoder_layer(channels, num_heads, rng,
                                     mlp_ratio=mlp_ratio, dtype=dtype)
                  for _ in range(depth)],
        out_proj=init_conv(channels, channels, 1, rng, dtype=dtype),
        c2f=init_c2f(channels, channels, n_bottlenecks, rng, dtype=dtype),
    )


_POS_CACHE = {}


def _pos_table(h, w, c, dtype):
    key = (h, w, c, np.dtype(dtype).name)
    if key not in _POS_CACHE:
        _POS_CACHE[key] = positional_embedding(h, w, c, dtype)
    return _POS_CACHE[key]


def fmsa(inputs, p):
    """Attention fusion at stride 8.

    Sum the available branches, run the token stack (positional embedding
    + L pre-norm encoder layers), project the attention result back, take
    the outer residual with the main map, and fuse with C2F.  Spatial
    size is preserved.
    """
    x = inputs.x_main
    B, C, H, W = x.shape
    s = x
    for branch in (inputs.fds_out, inputs.fus_out):
        if branch is not None:
            s = add(s, branch)
    z = add(tokenize(s), _pos_table(H, W, C, x.dtype))
    for enc in p.encoders:
        z = encoder_layer(z, enc)
    attn_map = conv2d(detokenize(z, H, W), p.out_proj.w, p.out_proj.b)
    return c2f_block(add(attn_map, x), p.c2f)


def zero_attention_weights(p):
    """Zero every attention/MLP weight of an FMSA block (encoders and the
    attention-path projection), leaving the C2F stage untouched."""
    for enc in p.encoders:
        zero_params(enc.msa)
        zero_params(enc.mlp)
    zero_params(p.out_proj.w)
    zero_params(p.out_proj.b)
