"""Training loop: SGD with momentum over synthetic scenes, deterministic
given (config, seed), with checkpoint/resume support and evaluation
helpers."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor
from .data import SceneSpec, generate_scene
from .detector import (
    Model, ModelConfig, compute_loss, decode_predictions, load_checkpoint,
    save_checkpoint,
)
from .metrics import DEFAULT_CONF_THRESHOLD, mean_ap


class NanLossError(RuntimeError):
    """Loss went non-finite; carries the offending epoch/batch for replay."""

    def __init__(self, epoch, batch_index, scene_indices):
        super().__init__(f"non-finite loss at epoch {epoch}, batch "
                         f"{batch_index}, scene indices {scene_indices}")
        self.epoch = epoch
        self.batch_index = batch_index
        self.scene_indices = scene_indices


@dataclass
class RunConfig:
    lr0: float = 0.01
    lr_final_frac: float = 0.1
    lr_warmup_epochs: int = 3
    momentum: float = 0.937
    clip_norm: float = 10.0
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    conf_threshold: float = DEFAULT_CONF_THRESHOLD
    nms_iou: float = 0.5
    train_scenes: int = 200
    val_scenes: int = 50
    model: ModelConfig = field(default_factory=lambda: ModelConfig(
        dtype="float32"))

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)


class SgdOptimizer:
    """Classic momentum: v <- momentum*v - lr*grad; p <- p + v."""

    def __init__(self, named_params, lr=0.01, momentum=0.937,
                 clip_norm=10.0):
        self.named_params = list(named_params)
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = {name: np.zeros_like(t.data)
                         for name, t in self.named_params}

    def zero_grad(self):
        for _, t in self.named_params:
            t.grad = None

    def _clip(self):
        if self.clip_norm is None:
            return
        total = 0.0
        for _, t in self.named_params:
            if t.grad is not None:
                total += float(np.sum(np.square(t.grad, dtype=np.float64)))
        norm = np.sqrt(total)
        if norm > self.clip_norm:
            factor = self.clip_norm / norm
            for _, t in self.named_params:
                if t.grad is not None:
                    t.grad = t.grad * factor

    def step(self):
        self._clip()
        for name, t in self.named_params:
            if t.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v -= self.lr * t.grad
            t.data += v

    def state_tensors(self):
        return {f"opt.{name}": v for name, v in self.velocity.items()}

    def load_state(self, state):
        for name in self.velocity:
            key = f"opt.{name}"
            if key in state:
                self.velocity[name] = np.asarray(
                    state[key], dtype=self.velocity[name].dtype).reshape(
                        self.velocity[name].shape).copy()


def make_scenes(count, image_size, base_seed, num_classes=3):
    """Deterministic scene list: scene i uses seed base_seed + i."""
    scenes = []
    for i in range(count):
        spec = SceneSpec(seed=base_seed + i, image_size=image_size,
                         num_classes=num_classes)
        scenes.append(generate_scene(spec))
    return scenes


def epoch_lr(run, epoch):
    """Linear warmup to lr0, then cosine decay to lr0 * lr_final_frac.

    A pure function of (run, epoch) so resumed runs replay the exact
    schedule.
    """
    warm = max(0, run.lr_warmup_epochs)
    if warm > 0 and epoch < warm:
        return run.lr0 * (epoch + 1) / warm
    span = max(1, run.epochs - warm)
    t = min(1.0, (epoch - warm) / span)
    floor = run.lr0 * run.lr_final_frac
    return floor + 0.5 * (run.lr0 - floor) * (1.0 + np.cos(np.pi * t))


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def train(model, scenes, run, val_scenes=None, out_dir=None,
          start_epoch=0, opt_state=None, on_epoch=None):
    """Run the SGD loop; returns the per-epoch log rows.

    Batch order for epoch e is a pure function of (run.seed, e), so a
    resumed run replays the exact step sequence of an uninterrupted one.
    """
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    model.set_requires_grad(True)
    opt = SgdOptimizer(model.named_parameters(), lr=run.lr0,
                       momentum=run.momentum, clip_norm=run.clip_norm)
    if opt_state:
        opt.load_state(opt_state)
    dtype = model.config.np_dtype
    images = np.stack([img for img, _ in scenes]).astype(dtype)
    truths = [t for _, t in scenes]

    rows = []
    best_map50 = -1.0
    for epoch in range(start_epoch, run.epochs):
        opt.lr = epoch_lr(run, epoch)
        rng = np.random.default_rng(run.seed * 100003 + epoch)
        sums = {"loss": 0.0, "loss_obj": 0.0, "loss_cls": 0.0,
                "loss_box": 0.0}
        n_batches = 0
        for bi, idx in enumerate(_batches(len(scenes), run.batch_size, rng)):
            opt.zero_grad()
            x = Tensor(images[idx])
            out = model.forward(x)
            loss, comps = compute_loss(out, [truths[i] for i in idx],
                                       box_loss=model.config.box_loss)
            if not np.isfinite(comps["loss"]):
                raise NanLossError(epoch, bi, [int(i) for i in idx])
            loss.backward()
            opt.step()
            for key in sums:
                sums[key] += comps[key]
            n_batches += 1
        row = {"epoch": epoch, "lr": opt.lr}
        row.update({k: sums[k] / n_batches for k in sums})
        if val_scenes is not None:
            report = evaluate(model, val_scenes, run.conf_threshold,
                              run.nms_iou)
            row["val_map50"] = report.map50
            if out_dir is not None and report.map50 > best_map50:
                best_map50 = report.map50
                save_checkpoint(os.path.join(out_dir, "best.ckpt"), model,
                                _meta_tensors(opt, epoch + 1))
        rows.append(row)
        if on_epoch:
            on_epoch(row)
    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "last.ckpt"), model,
                        _meta_tensors(opt, run.epochs))
    return rows


def _meta_tensors(opt, next_epoch):
    extra = opt.state_tensors()
    extra["meta.epoch"] = np.array([float(next_epoch)], dtype=np.float32)
    return extra


def resume_state(path, config):
    """Split a checkpoint into (model state, optimizer state, next epoch)."""
    state = load_checkpoint(path, config)
    opt_state = {k: v for k, v in state.items() if k.startswith("opt.")}
    next_epoch = int(state.get("meta.epoch", np.array([0.0]))[0])
    model_state = {k: v for k, v in state.items()
                   if not k.startswith(("opt.", "meta."))}
    return model_state, opt_state, next_epoch


def evaluate(model, scenes, conf_threshold=DEFAULT_CONF_THRESHOLD,
             nms_iou=0.5, batch_size=16):
    """Decode the whole scene list and score it."""
    dtype = model.config.np_dtype
    dets_by_image = []
    truths_by_image = [t for _, t in scenes]
    for i in range(0, len(scenes), batch_size):
        chunk = scenes[i:i + batch_size]
        x = Tensor(np.stack([img for img, _ in chunk]).astype(dtype))
        out = model.forward(x)
        dets_by_image.extend(decode_predictions(out, conf_threshold, nms_iou))
    return mean_ap(dets_by_image, truths_by_image,
                   conf_threshold=conf_threshold)
