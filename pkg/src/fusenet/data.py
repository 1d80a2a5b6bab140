"""Synthetic small-object scenes and on-disk dataset I/O.

Scenes are rendered deterministically from a seed: colored geometric
shapes (one shape family per class) on a textured background, with
optional partial occluders.  On disk a scene is a binary PPM (P6) image
plus a text annotation file with one "class_id cx cy w h" line per box,
coordinates normalized to [0, 1].
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class SpecError(ValueError):
    """A scene spec is internally inconsistent."""


class DatasetError(ValueError):
    """An on-disk dataset is malformed."""


@dataclass
class GroundTruthBox:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0 < self.w <= 1 and 0 < self.h <= 1):
            raise DatasetError(f"degenerate box w={self.w}, h={self.h}")


@dataclass
class Detection:
    class_id: int
    score: float
    cx: float
    cy: float
    w: float
    h: float


@dataclass
class SceneSpec:
    seed: int = 0
    image_size: int = 64
    min_objects: int = 1
    max_objects: int = 4
    min_size_frac: float = 0.04
    max_size_frac: float = 0.16
    clutter: float = 0.4
    occlusion_prob: float = 0.15
    num_classes: int = 3

    def __post_init__(self):
        if self.max_size_frac > 1.0 or self.min_size_frac <= 0:
            raise SpecError(f"object size range ({self.min_size_frac}, "
                            f"{self.max_size_frac}) exceeds the image")
        if self.min_objects > self.max_objects:
            raise SpecError("min_objects > max_objects")


# class_id -> base RGB color family
CLASS_COLORS = np.array([
    [0.85, 0.25, 0.20],   # class 0: circles, red family
    [0.20, 0.35, 0.85],   # class 1: squares, blue family
    [0.20, 0.75, 0.30],   # class 2: triangles, green family
    [0.85, 0.75, 0.20],   # class 3: diamonds, yellow family
])


def _background(rng, size, clutter):
    base = rng.uniform(0.25, 0.55, size=3)[:, None, None]
    img = np.tile(base, (1, size, size))
    coarse = rng.uniform(-1, 1, size=(3, size // 8, size // 8))
    img += 0.15 * clutter * np.kron(coarse, np.ones((8, 8)))[:, :size, :size]
    img += 0.08 * clutter * rng.uniform(-1, 1, size=(3, size, size))
    return np.clip(img, 0.0, 1.0)


def _shape_mask(class_id, hpx, wpx):
    """Boolean mask of the class's shape, touching all four box edges."""
    yy, xx = np.mgrid[0:hpx, 0:wpx]
    fy = (yy + 0.5) / hpx
    fx = (xx + 0.5) / wpx
    kind = class_id % 4
    if kind == 0:    # ellipse inscribed in the box
        return ((fx - 0.5) ** 2 + (fy - 0.5) ** 2) <= 0.25
    if kind == 1:    # full box
        return np.ones((hpx, wpx), dtype=bool)
    if kind == 2:    # upward triangle: apex top-center, base bottom edge
        return np.abs(fx - 0.5) <= 0.5 * fy
    return np.abs(fx - 0.5) + np.abs(fy - 0.5) <= 0.5   # diamond


def generate_scene(spec):
    """Render one scene; returns (image [3,S,S] float in [0,1], truths)."""
    rng = np.random.default_rng(spec.seed)
    size = spec.image_size
    img = _background(rng, size, spec.clutter)

    n_objects = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    truths = []
    for _ in range(n_objects):
        class_id = int(rng.integers(spec.num_classes))
        # quadratic ramp biases sizes toward the small end of the range
        frac = spec.min_size_frac + \
            (spec.max_size_frac - spec.min_size_frac) * rng.random() ** 2
        wpx = max(3, int(round(frac * size)))
        hpx = max(3, int(round(wpx * rng.uniform(0.8, 1.25))))
        if wpx > size or hpx > size:
            continue
        x0 = int(rng.integers(0, size - wpx + 1))
        y0 = int(rng.integers(0, size - hpx + 1))

        color = np.clip(CLASS_COLORS[class_id % len(CLASS_COLORS)]
                        + rng.uniform(-0.1, 0.1, size=3), 0.05, 1.0)
        mask = _shape_mask(class_id, hpx, wpx)
        region = img[:, y0:y0 + hpx, x0:x0 + wpx]
        region[:, mask] = color[:, None]

        if rng.random() < spec.occlusion_prob:
            # gray bar over up to ~40% of the box
            ow = max(1, int(round(wpx * rng.uniform(0.2, 0.4))))
            ox = int(rng.integers(0, wpx - ow + 1))
            img[:, y0:y0 + hpx, x0 + ox:x0 + ox + ow] = \
                rng.uniform(0.3, 0.5)

        truths.append(GroundTruthBox(
            class_id=class_id,
            cx=(x0 + wpx / 2) / size,
            cy=(y0 + hpx / 2) / size,
            w=wpx / size,
            h=hpx / size,
        ))
    return img, truths


# -- PPM + annotation I/O ----------------------------------------------------

def write_ppm(path, img):
    """img: float [3, H, W] in [0, 1] -> binary P6 file."""
    _, h, w = img.shape
    pixels = (np.clip(img, 0, 1) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.transpose(1, 2, 0).tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        # skip whitespace and comment lines in the header
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise DatasetError(f"{path}: not a binary PPM (P6) file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise DatasetError(f"{path}: unsupported maxval {maxval}")
    pos += 1   # single whitespace after maxval
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return raw.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0


def write_annotations(path, truths):
    with open(path, "w") as f:
        for t in truths:
            f.write(f"{t.class_id} {t.cx:.6f} {t.cy:.6f} "
                    f"{t.w:.6f} {t.h:.6f}\n")


def read_annotations(path):
    truths = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise DatasetError(f"{path}:{lineno}: expected "
                                   f"'class_id cx cy w h', got {line!r}")
            cid = int(parts[0])
            cx, cy, w, h = map(float, parts[1:])
            if w <= 0 or h <= 0:
                raise DatasetError(f"{path}:{lineno}: zero-area box")
            truths.append(GroundTruthBox(cid, cx, cy, w, h))
    return truths


def scene_paths(directory, index):
    stem = os.path.join(directory, f"img_{index:05d}")
    return stem + ".ppm", stem + ".txt"


def generate_dataset(directory, count, base_spec, start_seed=None):
    """Write `count` scenes; scene i uses seed start_seed + i."""
    os.makedirs(directory, exist_ok=True)
    seed0 = base_spec.seed if start_seed is None else start_seed
    for i in range(count):
        spec = SceneSpec(**{**base_spec.__dict__, "seed": seed0 + i})
        img, truths = generate_scene(spec)
        img_path, ann_path = scene_paths(directory, i)
        write_ppm(img_path, img)
        write_annotations(ann_path, truths)


def load_dataset(directory):
    """Return [(image, truths), ...] for every PPM/annotation pair."""
    if not os.path.isdir(directory):
        raise DatasetError(f"dataset directory {directory!r} does not exist")
    names = sorted(n for n in os.listdir(directory) if n.endswith(".ppm"))
    scenes = []
    for name in names:
        img_path = os.path.join(directory, name)
        ann_path = img_path[:-4] + ".txt"
        if not os.path.exists(ann_path):
            raise DatasetError(f"missing annotation file for {img_path}")
        scenes.append((read_ppm(img_path), read_annotations(ann_path)))
    return scenes
