"""Reusable neural blocks: multi-head self-attention, MLP, sinusoidal
positional embeddings, pre-norm transformer encoder layers, and a
split-transform-concat (C2F-style) convolutional fusion block.

All parameters live in plain dataclasses of Tensors; ``named_parameters``
walks any such container recursively, which is what the optimizer,
checkpointing, and parameter counting build on.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Tensor, ConfigError, ShapeError,
    add, concat, conv2d, layer_norm, matmul, mul, reshape, scale, silu,
    softmax, split, transpose,
)

DEFAULT_NUM_HEADS = 4
DEFAULT_MLP_RATIO = 2


# -- parameter containers ----------------------------------------------------

@dataclass
class LinearParams:
    w: Tensor   # [in, out]
    b: Tensor   # [out]


@dataclass
class LayerNormParams:
    gamma: Tensor
    beta: Tensor
    eps: float = 1e-5


@dataclass
class MlpParams:
    fc1: LinearParams
    fc2: LinearParams


@dataclass
class MsaParams:
    num_heads: int
    q: LinearParams
    k: LinearParams
    v: LinearParams
    o: LinearParams

    @property
    def embed_dim(self):
        return self.q.w.shape[0]


@dataclass
class EncoderLayerParams:
    msa: MsaParams
    mlp: MlpParams
    ln1: LayerNormParams
    ln2: LayerNormParams


@dataclass
class ConvParams:
    w: Tensor   # [out, in, k, k]
    b: Tensor   # [out]
    stride: int = 1
    padding: int = 0


@dataclass
class BottleneckParams:
    conv1: ConvParams
    conv2: ConvParams


@dataclass
class C2fParams:
    cv1: ConvParams                      # 1x1, C_in -> 2*hidden
    bottlenecks: list = field(default_factory=list)
    cv2: ConvParams = None               # 1x1, (2+n)*hidden -> C_out
    hidden: int = 0


def named_parameters(obj, prefix=""):
    """Yield (name, Tensor) pairs from a nested container of parameters."""
    if isinstance(obj, Tensor):
        yield prefix or "param", obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            val = getattr(obj, f.name)
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_parameters(val, name)
    elif isinstance(obj, (list, tuple)):
        for i, val in enumerate(obj):
            yield from named_parameters(val, f"{prefix}.{i}")
    elif isinstance(obj, dict):
        for key, val in sorted(obj.items()):
            yield from named_parameters(val, f"{prefix}.{key}")
    # ints / floats / None are hyperparameters, not parameters


def parameters(obj):
    return [t for _, t in named_parameters(obj)]


def count_params(obj):
    return sum(t.size for t in parameters(obj))


def set_requires_grad(obj, flag=True):
    for t in parameters(obj):
        t.requires_grad = flag
        if not flag:
            t.grad = None


def zero_params(obj):
    """Overwrite every parameter tensor in the container with zeros."""
    for t in parameters(obj):
        t.data[...] = 0.0


# -- initialization ----------------------------------------------------------

def init_linear(n_in, n_out, rng, dtype=np.float64, zero=False, gain=1.0):
    if zero:
        w = np.zeros((n_in, n_out), dtype=dtype)
    else:
        bound = gain / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype)
    return LinearParams(Tensor(w), Tensor(np.zeros(n_out, dtype=dtype)))


def init_layer_norm(dim, dtype=np.float64, eps=1e-5):
    return LayerNormParams(Tensor(np.ones(dim, dtype=dtype)),
                           Tensor(np.zeros(dim, dtype=dtype)), eps)


def init_mlp(n_in, n_hidden, n_out, rng, dtype=np.float64, gain=1.0):
    return MlpParams(init_linear(n_in, n_hidden, rng, dtype, gain=gain),
                     init_linear(n_hidden, n_out, rng, dtype, gain=gain))


def init_msa(embed_dim, num_heads, rng, dtype=np.float64, gain=1.0):
    if embed_dim % num_heads != 0:
        raise ConfigError(f"embed dim {embed_dim} not divisible by "
                          f"{num_heads} heads")
    mk = lambda: init_linear(embed_dim, embed_dim, rng, dtype, gain=gain)
    return MsaParams(num_heads, mk(), mk(), mk(), mk())


def init_encoder_layer(embed_dim, num_heads, rng, mlp_ratio=DEFAULT_MLP_RATIO,
                       dtype=np.float64):
    return EncoderLayerParams(
        msa=init_msa(embed_dim, num_heads, rng, dtype),
        mlp=init_mlp(embed_dim, mlp_ratio * embed_dim, embed_dim, rng, dtype),
        ln1=init_layer_norm(embed_dim, dtype),
        ln2=init_layer_norm(embed_dim, dtype),
    )


def init_conv(c_in, c_out, k, rng, stride=1, padding=0, dtype=np.float64):
    # He-style bound keeps activation variance stable through deep SiLU
    # conv stacks; the narrower 1/sqrt(fan_in) bound makes features decay.
    fan_in = c_in * k * k
    bound = np.sqrt(6.0 / fan_in)
    w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(dtype)
    return ConvParams(Tensor(w), Tensor(np.zeros(c_out, dtype=dtype)),
                      stride, padding)


def init_c2f(c_in, c_out, n_bottlenecks, rng, hidden_ratio=0.5,
             dtype=np.float64):
    hidden = int(round(c_out * hidden_ratio))
    if hidden < 1:
        raise ConfigError(f"c2f hidden width {hidden} from c_out={c_out}, "
                          f"ratio={hidden_ratio} is not positive")
    bottlenecks = [
        BottleneckParams(init_conv(hidden, hidden, 3, rng, padding=1, dtype=dtype),
                         init_conv(hidden, hidden, 3, rng, padding=1, dtype=dtype))
        for _ in range(n_bottlenecks)
    ]
    return C2fParams(
        cv1=init_conv(c_in, 2 * hidden, 1, rng, dtype=dtype),
        bottlenecks=bottlenecks,
        cv2=init_conv((2 + n_bottlenecks) * hidden, c_out, 1, rng, dtype=dtype),
        hidden=hidden,
    )


# -- forward functions -------------------------------------------------------

def linear(x, p):
    return add(matmul(x, p.w), p.b)


def conv(x, p):
    """Conv + SiLU, the standard detector conv unit."""
    return silu(conv2d(x, p.w, p.b, stride=p.stride, padding=p.padding))


def mlp_forward(x, p):
    return linear(silu(linear(x, p.fc1)), p.fc2)


def apply_layer_norm(x, p):
    return layer_norm(x, p.gamma, p.beta, p.eps)


def sinusoidal_embedding(n_pos, dim, dtype=np.float64):
    """Interleaved sin/cos table over a 1-d position index, values in [-1, 1].

    Deterministic: the same (n_pos, dim) always yields the identical table.
    """
    if dim % 2 != 0:
        raise ConfigError(f"sinusoidal embedding needs an even dim, got {dim}")
    pos = np.arange(n_pos, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((n_pos, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table.astype(dtype)


def positional_embedding(h, w, dim, dtype=np.float64):
    """Embedding table for an h x w grid rastered row-major to 1-d."""
    return Tensor(sinusoidal_embedding(h * w, dim, dtype))


def tokenize(x):
    """[B, C, H, W] -> [B, H*W, C], pixel p in row-major raster order."""
    B, C, H, W = x.shape
    return reshape(transpose(x, (0, 2, 3, 1)), (B, H * W, C))


def detokenize(tokens, h, w):
    """Inverse of tokenize: [B, h*w, C] -> [B, C, h, w]."""
    B, N, C = tokens.shape
    if N != h * w:
        raise ShapeError(f"{N} tokens cannot fill a {h}x{w} grid")
    return transpose(reshape(tokens, (B, h, w, C)), (0, 3, 1, 2))


def add_positional(tokens, e_pos):
    """tokens [B, N, C] + table [N, C], broadcast over the batch."""
    if tokens.shape[1:] != e_pos.shape:
        raise ShapeError(f"positional table {e_pos.shape} does not match "
                         f"token grid {tokens.shape[1:]}")
    return add(tokens, e_pos)


def msa_forward(tokens, p, return_attn=False):
    """Multi-head self-attention over [B, N, C] tokens.

    Per head: attn = softmax(Q K^T / sqrt(d)); output is the concatenated
    head outputs through the output projection, shape-preserving.
    """
    B, N, C = tokens.shape
    h = p.num_heads
    if C % h != 0:
        raise ConfigError(f"channel dim {C} not divisible by {h} heads")
    d = C // h

    def heads(t):
        return transpose(reshape(t, (B, N, h, d)), (0, 2, 1, 3))  # [B,h,N,d]

    q = heads(linear(tokens, p.q))
    k = heads(linear(tokens, p.k))
    v = heads(linear(tokens, p.v))
    scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d))
    attn = softmax(scores, axis=-1)                               # [B,h,N,N]
    ctx = matmul(attn, v)                                         # [B,h,N,d]
    ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (B, N, C))
    out = linear(ctx, p.o)
    return (out, attn) if return_attn else out


def encoder_layer(tokens, p):
    """Pre-norm residual block: z' = MSA(LN(z)) + z; out = MLP(LN(z')) + z'."""
    z = add(msa_forward(apply_layer_norm(tokens, p.ln1), p.msa), tokens)
    return add(mlp_forward(apply_layer_norm(z, p.ln2), p.mlp), z)


def c2f_block(x, p):
    """Split-transform-concat conv block; preserves spatial dims.

    1x1 conv to 2*hidden channels, split in two, run n residual
    bottlenecks on the second half (each intermediate kept), concat all
    branches, final 1x1 conv.
    """
    y = conv(x, p.cv1)
    a, b = split(y, 2, axis=1)
    branches = [a, b]
    cur = b
    for bn in p.bottlenecks:
        cur = add(conv(conv(cur, bn.conv1), bn.conv2), cur)
        branches.append(cur)
    return conv(concat(branches, axis=1), p.cv2)
