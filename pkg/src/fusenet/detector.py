"""Minimal three-stage detector hosting the fusion modules.

Backbone: stem (stride 2) and four downsampling stages producing P3/P4/P5
at strides 8/16/32.  The hybrid downsampler replaces the plain strided
convs into P3 and P4 when enabled.  All fusion happens at stride 8, and a
single anchor-free head predicts objectness, class logits, and box
offsets per grid cell.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Tensor, ConfigError, ShapeError,
    add, atan, conv2d, div, exp, maximum, minimum, mul, neg, scale, shift,
    sigmoid, softplus, square, sub, tensor_sum,
)
from .blocks import (
    ConvParams, C2fParams, conv, c2f_block, count_params, init_c2f, init_conv,
    named_parameters, set_requires_grad, zero_params,
)
from .fusion import (
    FusionConfig, FusionInputs, FdsParams, FmsaParams, FusParams,
    fds, fmsa, fus, init_fds, init_fmsa, init_fus,
)
from .data import Detection
from .metrics import iou as box_iou

CHECKPOINT_MAGIC = b"FNCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or belongs to a different config."""


@dataclass
class ModelConfig:
    image_size: int = 64
    num_classes: int = 3
    stem_channels: int = 8
    channels: tuple = (16, 32, 64, 128)   # widths at strides 4/8/16/32
    depths: tuple = (2, 4, 4, 2)          # C2F bottleneck count per stage
    fusion: FusionConfig = field(default_factory=FusionConfig)
    box_loss: str = "l1"                  # or "ciou"
    dtype: str = "float64"

    def __post_init__(self):
        if isinstance(self.fusion, dict):
            self.fusion = FusionConfig(**self.fusion)
        self.channels = tuple(self.channels)
        self.depths = tuple(self.depths)
        if self.image_size % 32 != 0:
            raise ConfigError(f"image size {self.image_size} not divisible "
                              "by 32")
        if self.box_loss not in ("l1", "ciou"):
            raise ConfigError(f"unknown box loss {self.box_loss!r}")
        if len(self.channels) != 4 or len(self.depths) != 4:
            raise ConfigError("channels and depths must have 4 stages")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["fusion"] = dataclasses.asdict(self.fusion)
        return d

    def digest(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).digest()


@dataclass
class FeaturePyramid:
    p3: Tensor
    p4: Tensor
    p5: Tensor


@dataclass
class HeadOutput:
    """Raw per-cell predictions on the stride-8 grid: channel 0 is the
    objectness logit, 1-4 the box offsets (tx, ty, tw, th), the rest the
    class logits."""
    raw: Tensor
    num_classes: int

    @property
    def grid(self):
        return self.raw.shape[2], self.raw.shape[3]


@dataclass
class ModelParams:
    stem: ConvParams
    down1: ConvParams
    stage1: C2fParams
    down2: object            # ConvParams or FdsParams
    stage2: C2fParams
    down3: object
    stage3: C2fParams
    down4: ConvParams
    stage4: C2fParams
    proj_p3: ConvParams
    neck: object             # FmsaParams, or C2fParams for the baseline
    fds_proj: ConvParams = None
    fus: FusParams = None
    head_conv: ConvParams = None
    head_out: ConvParams = None


class Model:
    """Detector parameters plus forward passes, built from a seed."""

    def __init__(self, config, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        dt = config.np_dtype
        fz = config.fusion
        c1, c2, c3, c4 = config.channels
        d1, d2, d3, d4 = config.depths
        cf = fz.channels

        def down(c_in, c_out, use_fds):
            if use_fds:
                return init_fds(c_in, c_out, rng, num_heads=fz.num_heads,
                                dtype=dt)
            return init_conv(c_in, c_out, 3, rng, stride=2, padding=1,
                             dtype=dt)

        if fz.enable_fmsa:
            neck = init_fmsa(cf, rng, depth=fz.encoder_depth,
                             num_heads=fz.num_heads, mlp_ratio=fz.mlp_ratio,
                             dtype=dt)
            # start the attention path closed: with the gateway projection
            # at zero the fused neck behaves exactly like the baseline C2F
            # at initialization, and the attention contribution grows in
            # through its own gradient instead of injecting init noise
            zero_params(neck.out_proj)
        else:
            neck = init_c2f(cf, cf, 1, rng, dtype=dt)

        self.params = ModelParams(
            stem=init_conv(3, config.stem_channels, 3, rng, stride=2,
                           padding=1, dtype=dt),
            down1=init_conv(config.stem_channels, c1, 3, rng, stride=2,
                            padding=1, dtype=dt),
            stage1=init_c2f(c1, c1, d1, rng, dtype=dt),
            down2=down(c1, c2, fz.enable_fds),
            stage2=init_c2f(c2, c2, d2, rng, dtype=dt),
            down3=down(c2, c3, fz.enable_fds),
            stage3=init_c2f(c3, c3, d3, rng, dtype=dt),
            down4=init_conv(c3, c4, 3, rng, stride=2, padding=1, dtype=dt),
            stage4=init_c2f(c4, c4, d4, rng, dtype=dt),
            proj_p3=init_conv(c2, cf, 1, rng, dtype=dt),
            neck=neck,
            fds_proj=(init_conv(c2, cf, 1, rng, dtype=dt)
                      if fz.enable_fds else None),
            fus=(init_fus(c3, c4, cf, rng, p4_stride=fz.fus_p4_stride,
                          p5_stride=fz.fus_p5_stride, num_heads=fz.num_heads,
                          channel_mode=fz.gaus_channel_mode, dtype=dt)
                 if fz.enable_fus else None),
            head_conv=init_conv(cf, cf, 3, rng, padding=1, dtype=dt),
            head_out=init_conv(cf, 5 + config.num_classes, 1, rng, dtype=dt),
        )
        # same closed-at-init treatment for the auxiliary branches feeding
        # the neck: they enter additively, so zeroing their entry
        # projections makes every fusion setting start from the plain
        # single-branch behavior and lets each branch earn its amplitude
        if self.params.fds_proj is not None:
            zero_params(self.params.fds_proj)
        if self.params.fus is not None:
            zero_params(self.params.fus.proj_p5)
            zero_params(self.params.fus.proj_p4)

    # -- parameter plumbing --------------------------------------------------

    def named_parameters(self):
        return list(named_parameters(self.params))

    def count_params(self):
        return count_params(self.params)

    def set_requires_grad(self, flag=True):
        set_requires_grad(self.params, flag)

    def state_dict(self):
        return {name: t.data for name, t in self.named_parameters()}

    def load_state(self, state):
        for name, t in self.named_parameters():
            if name not in state:
                raise CheckpointError(f"checkpoint missing tensor {name!r}")
            arr = np.asarray(state[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise CheckpointError(f"tensor {name!r} shape {arr.shape} "
                                      f"!= model shape {t.data.shape}")
            t.data[...] = arr

    # -- forward passes ------------------------------------------------------

    def backbone_forward(self, image):
        B, C, H, W = image.shape
        if H % 32 or W % 32:
            raise ShapeError(f"input {H}x{W} not divisible by 32")
        p = self.params
        fz = self.config.fusion

        def down(x, dp):
            return fds(x, dp) if isinstance(dp, FdsParams) else conv(x, dp)

        x = conv(image, p.stem)                # H/2
        x = conv(x, p.down1)                   # H/4
        x = c2f_block(x, p.stage1)
        fds2 = down(x, p.down2)                # H/8, the first FDS position
        p3 = c2f_block(fds2, p.stage2)
        x = down(p3, p.down3)                  # H/16, the second FDS position
        p4 = c2f_block(x, p.stage3)
        x = conv(p4, p.down4)                  # H/32
        p5 = c2f_block(x, p.stage4)
        self._fds_tap = fds2 if fz.enable_fds else None
        return FeaturePyramid(p3, p4, p5)

    def forward(self, image):
        p = self.params
        fz = self.config.fusion
        pyr = self.backbone_forward(image)
        x_main = conv2d(pyr.p3, p.proj_p3.w, p.proj_p3.b)
        if fz.enable_fmsa:
            fds_out = (conv2d(self._fds_tap, p.fds_proj.w, p.fds_proj.b)
                       if fz.enable_fds else None)
            fus_out = fus(pyr.p4, pyr.p5, p.fus) if fz.enable_fus else None
            feat = fmsa(FusionInputs(x_main, fds_out, fus_out), p.neck)
        else:
            feat = c2f_block(x_main, p.neck)
        feat = conv(feat, p.head_conv)
        raw = conv2d(feat, p.head_out.w, p.head_out.b)
        return HeadOutput(raw, self.config.num_classes)


# -- box encoding ------------------------------------------------------------

def _logit(p):
    p = min(max(p, 1e-7), 1 - 1e-7)
    return float(np.log(p / (1 - p)))


def encode_box(truth, grid_h, grid_w):
    """Truth box -> (cell gy, gx, raw offsets tx, ty, tw, th)."""
    gx = min(int(truth.cx * grid_w), grid_w - 1)
    gy = min(int(truth.cy * grid_h), grid_h - 1)
    tx = _logit(truth.cx * grid_w - gx)
    ty = _logit(truth.cy * grid_h - gy)
    tw = float(np.log(truth.w * grid_w))
    th = float(np.log(truth.h * grid_h))
    return gy, gx, tx, ty, tw, th


def decode_box(gy, gx, tx, ty, tw, th, grid_h, grid_w):
    """Inverse of encode_box, on raw float offsets."""
    cx = (gx + 1.0 / (1.0 + np.exp(-tx))) / grid_w
    cy = (gy + 1.0 / (1.0 + np.exp(-ty))) / grid_h
    return cx, cy, float(np.exp(tw)) / grid_w, float(np.exp(th)) / grid_h


# -- loss --------------------------------------------------------------------

def _bce_with_logits(logits, targets):
    """softplus(x) - t*x, elementwise; targets is a constant map."""
    return sub(softplus(logits), mul(logits, targets))


def _abs(t):
    return maximum(t, neg(t))


BOX_LOSS_WEIGHT = 5.0


def compute_loss(pred, truths_batch, box_loss="l1"):
    """Single-head anchor-free loss with center-cell assignment.

    Returns (scalar loss Tensor, dict of float components).  Objectness
    is BCE over every cell; class and box terms apply only at cells owning
    a ground-truth box.
    """
    raw = pred.raw
    B, ch, gh, gw = raw.shape
    K = pred.num_classes
    dtype = raw.dtype

    obj_target = np.zeros((B, 1, gh, gw), dtype=dtype)
    cls_target = np.zeros((B, K, gh, gw), dtype=dtype)
    box_target = np.zeros((B, 4, gh, gw), dtype=dtype)
    mask = np.zeros((B, 1, gh, gw), dtype=dtype)
    for b, truths in enumerate(truths_batch):
        for t in truths:
            gy, gx, tx, ty, tw, th = encode_box(t, gh, gw)
            obj_target[b, 0, gy, gx] = 1.0
            cls_target[b, t.class_id, gy, gx] = 1.0
            box_target[b, :, gy, gx] = (t.cx, t.cy, t.w, t.h)
            mask[b, 0, gy, gx] = 1.0

    from .tensor import split as tsplit
    obj_logit, box_raw, cls_logit = tsplit(raw, [1, 4, K], axis=1)

    # balance objectness between the few positive cells and the background
    n_pos = max(int(mask.sum()), 1)
    n_neg = max(B * gh * gw - int(mask.sum()), 1)
    obj_bce = _bce_with_logits(obj_logit, Tensor(obj_target))
    mask_t = Tensor(mask)
    neg_mask_t = Tensor(1.0 - mask)
    loss_obj = add(scale(tensor_sum(mul(obj_bce, mask_t)), 1.0 / n_pos),
                   scale(tensor_sum(mul(obj_bce, neg_mask_t)), 1.0 / n_neg))
    loss_cls = tensor_sum(mul(_bce_with_logits(cls_logit, Tensor(cls_target)),
                              mask_t))
    loss_cls = scale(loss_cls, 1.0 / (n_pos * K))

    # decode the box maps in grid units, compare in normalized units
    tx, ty, tw, th = tsplit(box_raw, 4, axis=1)
    gx_map = Tensor(np.broadcast_to(
        np.arange(gw, dtype=dtype)[None, None, None, :], (B, 1, gh, gw)).copy())
    gy_map = Tensor(np.broadcast_to(
        np.arange(gh, dtype=dtype)[None, None, :, None], (B, 1, gh, gw)).copy())
    cx = scale(add(sigmoid(tx), gx_map), 1.0 / gw)
    cy = scale(add(sigmoid(ty), gy_map), 1.0 / gh)
    # clamp the log-size channel so exp cannot overflow early in training
    cap = Tensor(np.full((B, 1, gh, gw), 8.0, dtype=dtype))
    w = scale(exp(minimum(tw, cap)), 1.0 / gw)
    h = scale(exp(minimum(th, cap)), 1.0 / gh)

    tcx, tcy, tw_t, th_t = (Tensor(box_target[:, i:i + 1]) for i in range(4))
    if box_loss == "l1":
        err = add(add(_abs(sub(cx, tcx)), _abs(sub(cy, tcy))),
                  add(_abs(sub(w, tw_t)), _abs(sub(h, th_t))))
        loss_box = scale(tensor_sum(mul(err, mask_t)),
                         BOX_LOSS_WEIGHT / n_pos)
    elif box_loss == "ciou":
        loss_box = scale(tensor_sum(mul(_ciou_loss(cx, cy, w, h, tcx, tcy,
                                                   tw_t, th_t, mask),
                                        mask_t)),
                         BOX_LOSS_WEIGHT / n_pos)
    else:
        raise ConfigError(f"unknown box loss {box_loss!r}")

    total = add(add(loss_obj, loss_cls), loss_box)
    components = {
        "loss": float(total.data),
        "loss_obj": float(loss_obj.data),
        "loss_cls": float(loss_cls.data),
        "loss_box": float(loss_box.data),
    }
    return total, components


def _ciou_loss(cx, cy, w, h, tcx, tcy, tw, th, mask):
    """Complete-IoU loss map (1 - IoU + center-distance + aspect terms).

    The aspect-ratio weight alpha is differentiated through rather than
    detached, keeping the whole loss finite-difference-checkable.  Every
    denominator is eps-shifted so unassigned cells (whose targets are
    zero) stay finite before masking.
    """
    eps = 1e-9
    zero = Tensor(np.zeros_like(cx.data))
    x0, x1 = sub(cx, scale(w, 0.5)), add(cx, scale(w, 0.5))
    y0, y1 = sub(cy, scale(h, 0.5)), add(cy, scale(h, 0.5))
    tx0, tx1 = sub(tcx, scale(tw, 0.5)), add(tcx, scale(tw, 0.5))
    ty0, ty1 = sub(tcy, scale(th, 0.5)), add(tcy, scale(th, 0.5))

    iw = maximum(sub(minimum(x1, tx1), maximum(x0, tx0)), zero)
    ih = maximum(sub(minimum(y1, ty1), maximum(y0, ty0)), zero)
    inter = mul(iw, ih)
    union = sub(add(mul(w, h), mul(tw, th)), inter)
    iou_map = div(inter, shift(union, eps))

    rho2 = add(square(sub(cx, tcx)), square(sub(cy, tcy)))
    cw = sub(maximum(x1, tx1), minimum(x0, tx0))
    ch = sub(maximum(y1, ty1), minimum(y0, ty0))
    diag2 = shift(add(square(cw), square(ch)), eps)

    v = scale(square(sub(atan(div(tw, shift(th, eps))),
                         atan(div(w, shift(h, eps))))),
              4.0 / np.pi ** 2)
    one_minus_iou = shift(neg(iou_map), 1.0)
    alpha = div(v, shift(add(one_minus_iou, v), eps))
    return add(add(one_minus_iou, rho2 / diag2), mul(alpha, v))


def save_checkpoint(path, model, extra_tensors=None):
    """Versioned binary checkpoint: header + named float32 tensors."""
    state = dict(model.state_dict())
    if extra_tensors:
        state.update(extra_tensors)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(model.config.digest())
        f.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            arr = np.ascontiguousarray(state[name], dtype="<f4")
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path, config):
    """Read a checkpoint, refusing config-digest mismatches."""
    with open(path, "rb") as f:
        data = f.read()
    pos = 0
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    pos = 4
    (version,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    digest = data[pos:pos + 32]
    pos += 32
    if digest != config.digest():
        raise CheckpointError(f"{path}: config digest mismatch; this "
                              "checkpoint belongs to a different model config")
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos)
        pos += 4 * n
        state[name] = arr.reshape(shape).astype(np.float64)
    return state


# -- prediction decoding -----------------------------------------------------

def greedy_nms(dets, iou_threshold=0.5):
    """Keep the highest-scoring box of every overlapping cluster, per class."""
    kept = []
    by_class = {}
    for d in sorted(dets, key=lambda d: -d.score):
        by_class.setdefault(d.class_id, []).append(d)
    for cid, group in sorted(by_class.items()):
        chosen = []
        for d in group:
            if all(box_iou(d, k) <= iou_threshold for k in chosen):
                chosen.append(d)
        kept.extend(chosen)
    return kept


def decode_predictions(pred, conf_threshold=0.25, nms_iou=0.5):
    """HeadOutput -> per-image lists of Detections after greedy NMS."""
    if not (0 < conf_threshold < 1 and 0 < nms_iou < 1):
        raise ConfigError("thresholds must lie in (0, 1)")
    raw = pred.raw.data
    B, _, gh, gw = raw.shape
    K = pred.num_classes
    results = []
    for b in range(B):
        obj = 1.0 / (1.0 + np.exp(-raw[b, 0]))
        cls = 1.0 / (1.0 + np.exp(-raw[b, 5:5 + K]))
        best_cls = cls.argmax(axis=0)
        score = obj * cls.max(axis=0)
        dets = []
        for gy in range(gh):
            for gx in range(gw):
                s = float(score[gy, gx])
                if s < conf_threshold:
                    continue
                cx, cy, w, h = decode_box(gy, gx, *raw[b, 1:5, gy, gx],
                                          grid_h=gh, grid_w=gw)
                dets.append(Detection(int(best_cls[gy, gx]), s, cx, cy, w, h))
        results.append(greedy_nms(dets, nms_iou))
    return results


# -- cost accounting ---------------------------------------------------------

def conv_flops(c_in, c_out, k, h_out, w_out):
    return 2 * k * k * c_in * c_out * h_out * w_out


def matmul_flops(m, kk, n):
    return 2 * m * kk * n


def attention_flops(n_tokens, channels):
    """Four C x C projections plus the two N x N attention matmuls."""
    proj = 4 * matmul_flops(n_tokens, channels, channels)
    scores = matmul_flops(n_tokens, channels, n_tokens)
    context = matmul_flops(n_tokens, n_tokens, channels)
    return proj + scores + context


def mlp_flops(n_tokens, d_in, d_hidden, d_out):
    return matmul_flops(n_tokens, d_in, d_hidden) + \
        matmul_flops(n_tokens, d_hidden, d_out)


def count_params_flops(config, seed=0):
    """Exact parameter count (by enumeration) and analytic FLOPs for one
    forward pass at batch 1."""
    model = Model(config, seed=seed)
    return model.count_params(), model_flops(config)


def _c2f_flops(c_in, c_out, n_bottlenecks, h, w, hidden_ratio=0.5):
    hidden = int(round(c_out * hidden_ratio))
    total = conv_flops(c_in, 2 * hidden, 1, h, w)
    total += n_bottlenecks * 2 * conv_flops(hidden, hidden, 3, h, w)
    total += conv_flops((2 + n_bottlenecks) * hidden, c_out, 1, h, w)
    return total


def _fds_flops(c_in, c_out, h, w, mlp_ratio=2):
    half = c_out // 2
    ho, wo = h // 2, w // 2
    total = conv_flops(c_in, half, 3, ho, wo)            # strided conv branch
    n_patches = ho * wo
    total += n_patches * attention_flops(4, c_in)        # 2x2 patch attention
    total += n_patches * mlp_flops(1, c_in, mlp_ratio * c_in, c_in)
    total += conv_flops(c_in, half, 1, ho, wo)
    total += _c2f_flops(c_out, c_out, 1, ho, wo)
    return total


def _gaus_flops(c_in, stride, h, w, mlp_ratio=2, channel_mode="stride"):
    from .fusion import gaus_out_channels
    n = h * w
    c_out = gaus_out_channels(c_in, stride, channel_mode)
    return attention_flops(n, c_in) + mlp_flops(n, c_in, mlp_ratio * c_in,
                                                c_out)


def model_flops(config):
    s = config.image_size
    c1, c2, c3, c4 = config.channels
    d1, d2, d3, d4 = config.depths
    fz = config.fusion
    cf = fz.channels
    h2, h4, h8, h16, h32 = s // 2, s // 4, s // 8, s // 16, s // 32

    total = conv_flops(3, config.stem_channels, 3, h2, h2)
    total += conv_flops(config.stem_channels, c1, 3, h4, h4)
    total += _c2f_flops(c1, c1, d1, h4, h4)
    if fz.enable_fds:
        total += _fds_flops(c1, c2, h4, h4)
        total += _c2f_flops(c2, c2, d2, h8, h8)
        total += _fds_flops(c2, c3, h8, h8)
    else:
        total += conv_flops(c1, c2, 3, h8, h8)
        total += _c2f_flops(c2, c2, d2, h8, h8)
        total += conv_flops(c2, c3, 3, h16, h16)
    total += _c2f_flops(c3, c3, d3, h16, h16)
    total += conv_flops(c3, c4, 3, h32, h32)
    total += _c2f_flops(c4, c4, d4, h32, h32)

    total += conv_flops(c2, cf, 1, h8, h8)               # P3 projection
    if fz.enable_fds:
        total += conv_flops(c2, cf, 1, h8, h8)
    if fz.enable_fus:
        from .fusion import gaus_out_channels
        total += _gaus_flops(c3, fz.fus_p4_stride, h16, h16,
                             channel_mode=fz.gaus_channel_mode)
        total += _gaus_flops(c4, fz.fus_p5_stride, h32, h32,
                             channel_mode=fz.gaus_channel_mode)
        total += conv_flops(gaus_out_channels(c3, fz.fus_p4_stride,
                                              fz.gaus_channel_mode),
                            cf, 1, h8, h8)
        total += conv_flops(gaus_out_channels(c4, fz.fus_p5_stride,
                                              fz.gaus_channel_mode),
                            cf, 1, h8, h8)
    if fz.enable_fmsa:
        n = h8 * h8
        for _ in range(fz.encoder_depth):
            total += attention_flops(n, cf)
            total += mlp_flops(n, cf, fz.mlp_ratio * cf, cf)
        total += conv_flops(cf, cf, 1, h8, h8)           # attention-path proj
        total += _c2f_flops(cf, cf, 1, h8, h8)
    else:
        total += _c2f_flops(cf, cf, 1, h8, h8)

    total += conv_flops(cf, cf, 3, h8, h8)               # head
    total += conv_flops(cf, 5 + config.num_classes, 1, h8, h8)
    return total


# -- depth compensation ------------------------------------------------------

def compensated_config(base_config, setting, tolerance=0.05):
    """Config for an ablation setting whose parameter count lands as close
    as possible to the baseline's, by shrinking backbone block counts."""
    baseline = dataclasses.replace(
        base_config, fusion=FusionConfig.for_setting(
            0, **_fusion_kwargs(base_config.fusion)))
    target = Model(baseline, seed=0).count_params()
    if setting == 0:
        return baseline

    fusion = FusionConfig.for_setting(setting,
                                      **_fusion_kwargs(base_config.fusion))
    d1, d2, d3, d4 = base_config.depths
    best_cfg, best_key = None, None
    fallback_cfg, fallback_err = None, None
    for e1 in range(d1 + 1):
        for e2 in range(d2 + 1):
            for e3 in range(d3 + 1):
                for e4 in range(d4 + 1):
                    cfg = dataclasses.replace(
                        base_config, fusion=fusion, depths=(e1, e2, e3, e4))
                    n = Model(cfg, seed=0).count_params()
                    err = abs(n - target)
                    if fallback_err is None or err < fallback_err:
                        fallback_cfg, fallback_err = cfg, err
                    if err / target > tolerance:
                        continue
                    # among budget-compliant tuples, protect the stages up
                    # to the stride-8 tap (they feed the head directly) and
                    # shed capacity from the later stages, which only feed
                    # the auxiliary fusion taps
                    penalty = (3 * (d1 - e1) + 3 * (d2 - e2)
                               + (d3 - e3) + (d4 - e4))
                    key = (penalty, err)
                    if best_key is None or key < best_key:
                        best_cfg, best_key = cfg, key
    return best_cfg if best_cfg is not None else fallback_cfg


def _fusion_kwargs(fusion):
    d = dataclasses.asdict(fusion)
    for key in ("enable_fmsa", "enable_fus", "enable_fds"):
        d.pop(key)
    return d
