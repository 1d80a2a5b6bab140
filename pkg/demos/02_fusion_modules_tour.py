"""Walk through the fusion modules: attention invariants, the hybrid
downsampler, the attention upsampler, and the fused neck's residual
degeneracy.

Run:  python3 demos/02_fusion_modules_tour.py
"""

import numpy as np

from fusenet.tensor import Tensor
from fusenet.blocks import c2f_block, init_msa, msa_forward
from fusenet.fusion import (
    FusionInputs, fds, fmsa, fus, gaus, init_fds, init_fmsa, init_fus,
    init_gaus, zero_attention_weights,
)

rng = np.random.default_rng(7)

# 1. Multi-head self-attention: rows of the attention matrix are a
#    probability distribution, and without positional information the
#    operator commutes with any permutation of the tokens.
p = init_msa(8, 2, rng)
tokens = Tensor(rng.standard_normal((1, 6, 8)))
out, attn = msa_forward(tokens, p, return_attn=True)
print("attention row sums:", attn.data.sum(axis=-1).round(12).ravel()[:6])
perm = rng.permutation(6)
out_perm = msa_forward(Tensor(tokens.data[:, perm]), p)
print("permutation equivariance error:",
      float(np.abs(out.data[:, perm] - out_perm.data).max()))

# 2. The hybrid downsampler halves the spatial dims; the attention
#    upsampler multiplies them by its stride while dividing channels.
x = Tensor(rng.standard_normal((1, 8, 8, 8)))
print("fds:", x.shape, "->", fds(x, init_fds(8, 8, rng, num_heads=2)).shape)
print("gaus:", x.shape, "->",
      gaus(x, init_gaus(8, rng, stride=2, num_heads=2)).shape)

# 3. The upsampling fuser lifts the stride-16 and stride-32 maps to a
#    common stride-8 grid and sums them.
p4 = Tensor(rng.standard_normal((1, 8, 4, 4)))
p5 = Tensor(rng.standard_normal((1, 16, 2, 2)))
fused = fus(p4, p5, init_fus(c4=8, c5=16, c_fusion=8, rng=rng))
print("fus:", p4.shape, "+", p5.shape, "->", fused.shape)

# 4. The attention neck degenerates to its plain convolutional stage when
#    every attention-path weight is zero; the equality is bit for bit.
pm = init_fmsa(8, rng, num_heads=2)
zero_attention_weights(pm)
neck_out = fmsa(FusionInputs(x_main=x), pm)
plain = c2f_block(x, pm.c2f)
print("zero-weight neck equals C2F exactly:",
      np.array_equal(neck_out.data, plain.data))
