"""Command-line harness: training, evaluation, the ablation sweep,
gradient checking, cost benchmarking, dataset generation, and overlay
rendering.

Exit codes: 0 success, 1 validation or usage error, 2 numerical failure
(NaN loss or a gradient-check violation).  The FUSENET_THREADS variable
caps per-image fan-out during dataset generation and evaluation.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .tensor import ConfigError, ShapeError, Tensor, grad_check, tensor_sum
from .blocks import (
    c2f_block, encoder_layer, init_c2f, init_encoder_layer, init_msa,
    msa_forward,
)
from .data import (
    CLASS_COLORS, DatasetError, SceneSpec, generate_dataset, load_dataset,
    read_ppm, write_ppm,
)
from .detector import (
    CheckpointError, HeadOutput, Model, ModelConfig, compensated_config,
    compute_loss, count_params_flops, decode_predictions, load_checkpoint,
    model_flops,
)
from .fusion import (
    FusionConfig, FusionInputs, fds, fmsa, fus, gaus, init_fds, init_fmsa,
    init_fus, init_gaus, init_lads, lads,
)
from .metrics import DEFAULT_CONF_THRESHOLD, mean_ap
from .train import (
    NanLossError, RunConfig, evaluate, make_scenes, resume_state, train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2

ABLATION_SEEDS = (1, 2, 3, 4, 5)


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def max_threads():
    """Fan-out cap from FUSENET_THREADS (default 1, minimum 1)."""
    raw = os.environ.get("FUSENET_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"FUSENET_THREADS must be an integer, got {raw!r}")


def fan_out(fn, items):
    """Apply fn to each item, in order, with at most max_threads workers.

    Results are merged in input order so the fan-out is deterministic.
    """
    n = max_threads()
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- config assembly ---------------------------------------------------------

def _coerce(value, template):
    """Parse a config string into the type of the template value."""
    if isinstance(template, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    if isinstance(template, tuple):
        return tuple(int(v) for v in value.replace(",", " ").split())
    return value.strip()


def _apply(run_fields, model_fields, fusion_fields, section, key, value):
    target = {"run": run_fields, "model": model_fields,
              "fusion": fusion_fields}.get(section)
    if target is None:
        raise ConfigError(f"unknown config section {section!r}")
    if key not in target:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    target[key] = _coerce(value, target[key])


def build_run_config(args):
    """Defaults <- config file <- --set overrides <- explicit flags."""
    run_fields = {f.name: getattr(RunConfig(), f.name)
                  for f in dataclasses.fields(RunConfig) if f.name != "model"}
    model_fields = {f.name: getattr(ModelConfig(), f.name)
                    for f in dataclasses.fields(ModelConfig)
                    if f.name != "fusion"}
    model_fields["dtype"] = "float32"
    fusion_fields = {f.name: getattr(FusionConfig(), f.name)
                     for f in dataclasses.fields(FusionConfig)}
    fusion_fields["channels"] = 32

    if getattr(args, "config", None):
        if not os.path.isfile(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        parser = configparser.ConfigParser()
        parser.read(args.config)
        for section in parser.sections():
            for key, value in parser.items(section):
                _apply(run_fields, model_fields, fusion_fields,
                       section, key, value)

    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        section, key = dotted.strip().split(".", 1)
        _apply(run_fields, model_fields, fusion_fields,
               section, key.strip(), value)

    if getattr(args, "seed", None) is not None:
        run_fields["seed"] = args.seed
    if getattr(args, "image_size", None) is not None:
        model_fields["image_size"] = args.image_size
    if getattr(args, "epochs", None) is not None:
        run_fields["epochs"] = args.epochs

    fusion = FusionConfig(**fusion_fields)
    model = ModelConfig(fusion=fusion, **model_fields)
    return RunConfig(model=model, **run_fields)


# -- CSV helpers -------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_csv(path, header, rows):
    """Plain text CSV with a fixed header; byte-deterministic."""
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


# -- subcommands -------------------------------------------------------------

TRAIN_LOG_HEADER = ("epoch", "lr", "loss", "loss_obj", "loss_cls",
                    "loss_box", "val_map50")


def cmd_train(args):
    run = build_run_config(args)
    out_dir = args.out or "runs/train"
    os.makedirs(out_dir, exist_ok=True)

    start_epoch = 0
    opt_state = None
    model = Model(run.model, seed=run.seed)
    if args.resume:
        state, opt_state, start_epoch = resume_state(args.resume, run.model)
        model.load_state(state)

    if args.data:
        scenes = load_dataset(args.data)
    else:
        scenes = make_scenes(run.train_scenes, run.model.image_size,
                             base_seed=run.seed * 1000 + 1,
                             num_classes=run.model.num_classes)
    val = make_scenes(run.val_scenes, run.model.image_size,
                      base_seed=run.seed * 1000 + 900001,
                      num_classes=run.model.num_classes)

    def on_epoch(row):
        print("  ".join(f"{k}={_fmt(v)}" for k, v in row.items()))

    try:
        rows = train(model, scenes, run, val_scenes=val, out_dir=out_dir,
                     start_epoch=start_epoch, opt_state=opt_state,
                     on_epoch=on_epoch)
    except NanLossError as err:
        print(f"error: {err}", file=sys.stderr)
        print(f"replay: seed {run.seed}, epoch {err.epoch}, "
              f"batch {err.batch_index}, scenes {err.scene_indices}",
              file=sys.stderr)
        return EXIT_NUMERIC

    write_csv(os.path.join(out_dir, "train_log.csv"), TRAIN_LOG_HEADER,
              [[row[k] for k in TRAIN_LOG_HEADER] for row in rows])
    print(f"wrote {out_dir}/train_log.csv, best.ckpt, last.ckpt")
    return EXIT_OK


EVAL_HEADER = ("class", "AP50", "AP50-90")


def cmd_eval(args):
    run = build_run_config(args)
    state = load_checkpoint(args.checkpoint, run.model)
    model = Model(run.model, seed=run.seed)
    model.load_state({k: v for k, v in state.items()
                      if not k.startswith(("opt.", "meta."))})

    if args.data:
        scenes = load_dataset(args.data)
    else:
        scenes = make_scenes(run.val_scenes, run.model.image_size,
                             base_seed=run.seed * 1000 + 900001,
                             num_classes=run.model.num_classes)
    if not scenes:
        raise DatasetError("evaluation dataset is empty")

    dets = fan_out(
        lambda sc: decode_predictions(
            model.forward(Tensor(sc[0][None].astype(run.model.np_dtype))),
            run.conf_threshold, run.nms_iou)[0],
        scenes)
    truths = [t for _, t in scenes]
    report = mean_ap(dets, truths, conf_threshold=run.conf_threshold)

    rows = []
    for cid in sorted(report.per_class_ap50):
        ladder = report.per_class_ap_ladder.get(cid, [])
        ap_ladder = float(np.mean(ladder)) if len(ladder) else 0.0
        rows.append([cid, report.per_class_ap50[cid], ap_ladder])
    rows.append(["mean", report.map50, report.map50_90])

    print(f"{'class':>8}  {'AP50':>8}  {'AP50-90':>8}")
    for row in rows:
        print(f"{row[0]:>8}  {row[1]:>8.4f}  {row[2]:>8.4f}")
    print(f"P={report.precision:.4f} R={report.recall:.4f} "
          f"(confidence threshold {report.conf_threshold})")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "eval.csv"), EVAL_HEADER, rows)
        print(f"wrote {args.out}/eval.csv")
    return EXIT_OK


ABLATE_HEADER = ("setting", "fmsa", "fus", "fds", "params", "precision",
                 "recall", "map50", "map50_90")


def cmd_ablate(args):
    run = build_run_config(args)
    out_dir = args.out or "runs/ablate"
    os.makedirs(out_dir, exist_ok=True)
    seeds = (tuple(int(s) for s in args.seeds.split(","))
             if args.seeds else ABLATION_SEEDS)

    scenes = make_scenes(run.train_scenes, run.model.image_size,
                         base_seed=1000,
                         num_classes=run.model.num_classes)
    val = make_scenes(run.val_scenes, run.model.image_size,
                      base_seed=900001, num_classes=run.model.num_classes)

    settings = range(5)
    configs = [compensated_config(run.model, s) for s in settings]
    params = [Model(c, seed=0).count_params() for c in configs]
    baseline = params[0]
    for s, n in zip(settings, params):
        drift = abs(n - baseline) / baseline
        if drift > 0.05:
            print(f"error: setting {s} parameter count {n} is "
                  f"{drift:.1%} from baseline {baseline} (limit 5%)",
                  file=sys.stderr)
            return EXIT_USAGE

    rows = []
    for s, cfg in zip(settings, configs):
        per_seed = []
        for seed in seeds:
            model = Model(cfg, seed=seed)
            seed_run = dataclasses.replace(run, seed=seed, model=cfg)
            run_dir = os.path.join(out_dir, f"setting{s}_seed{seed}")
            try:
                train(model, scenes, seed_run, val_scenes=val,
                      out_dir=run_dir)
            except NanLossError as err:
                print(f"error: {err}", file=sys.stderr)
                return EXIT_NUMERIC
            # score the best-validation checkpoint, not the last epoch
            best = os.path.join(run_dir, "best.ckpt")
            state = load_checkpoint(best, cfg)
            model.load_state({k: v for k, v in state.items()
                              if not k.startswith(("opt.", "meta."))})
            per_seed.append(evaluate(model, val, run.conf_threshold,
                                     run.nms_iou))
            print(f"setting {s} seed {seed}: "
                  f"mAP50 {per_seed[-1].map50:.4f}", flush=True)
        med = lambda key: float(np.median([getattr(r, key)
                                           for r in per_seed]))
        f = cfg.fusion
        rows.append([s, int(f.enable_fmsa), int(f.enable_fus),
                     int(f.enable_fds), params[s], med("precision"),
                     med("recall"), med("map50"), med("map50_90")])

    write_csv(os.path.join(out_dir, "ablation.csv"), ABLATE_HEADER, rows)

    lines = [
        "| Setting | FMSA | FUS | FDS | Params | P | R | mAP50 | mAP50-90 |",
        "|---|---|---|---|---|---|---|---|---|",
    ]
    for r in rows:
        mark = lambda v: "x" if v else ""
        lines.append(f"| {r[0]} | {mark(r[1])} | {mark(r[2])} | "
                     f"{mark(r[3])} | {r[4]} | {r[5]:.3f} | {r[6]:.3f} | "
                     f"{r[7]:.3f} | {r[8]:.3f} |")
    lines.append("")
    lines.append(f"Seeds: {', '.join(str(s) for s in seeds)} "
                 "(median over seeds per cell).")
    table = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "ablation.md"), "w",
              newline="\n") as f:
        f.write(table)
    print(table)

    if rows[4][7] >= rows[0][7]:
        print(f"directional check: setting 4 mAP50 {rows[4][7]:.4f} >= "
              f"setting 0 mAP50 {rows[0][7]:.4f}")
    else:
        print(f"warning: setting 4 mAP50 {rows[4][7]:.4f} < "
              f"setting 0 mAP50 {rows[0][7]:.4f}", file=sys.stderr)
    if rows[3][7] < rows[1][7]:
        print(f"warning: setting 3 mAP50 {rows[3][7]:.4f} < "
              f"setting 1 mAP50 {rows[1][7]:.4f} (secondary ordering)",
              file=sys.stderr)
    print(f"wrote {out_dir}/ablation.csv and ablation.md")
    return EXIT_OK


def _gradcheck_cases(rng):
    """(name, callable) pairs; each callable returns a GradCheckReport."""
    dt = np.float64

    def rand(*shape):
        return Tensor(rng.standard_normal(shape))

    def msa_case(b, n, c, heads):
        p = init_msa(c, heads, rng, dt)
        x = rand(b, n, c)
        return grad_check(lambda t: tensor_sum(msa_forward(t, p)), [x])

    def encoder_case(b, n, c, heads):
        p = init_encoder_layer(c, heads, rng, dtype=dt)
        x = rand(b, n, c)
        return grad_check(lambda t: tensor_sum(encoder_layer(t, p)), [x])

    def c2f_case(b, c_in, c_out, hw):
        p = init_c2f(c_in, c_out, 1, rng, dtype=dt)
        x = rand(b, c_in, hw, hw)
        return grad_check(lambda t: tensor_sum(c2f_block(t, p)), [x])

    def lads_case(b, c, hw, heads):
        p = init_lads(c, rng, num_heads=heads, dtype=dt)
        x = rand(b, c, hw, hw)
        return grad_check(lambda t: tensor_sum(lads(t, p)), [x])

    def fds_case(b, c_in, c_out, hw):
        p = init_fds(c_in, c_out, rng, num_heads=2, dtype=dt)
        x = rand(b, c_in, hw, hw)
        return grad_check(lambda t: tensor_sum(fds(t, p)), [x])

    def gaus_case(b, c, hw, stride):
        p = init_gaus(c, rng, stride=stride, num_heads=2, dtype=dt)
        x = rand(b, c, hw, hw)
        return grad_check(lambda t: tensor_sum(gaus(t, p)), [x])

    def fus_case(b, c4, c5, cf, hw):
        p = init_fus(c4, c5, cf, rng, num_heads=2, dtype=dt)
        p4 = rand(b, c4, hw, hw)
        p5 = rand(b, c5, hw // 2, hw // 2)
        return grad_check(
            lambda a, c: tensor_sum(fus(a, c, p)), [p4, p5])

    def fmsa_case(b, c, hw, heads):
        p = init_fmsa(c, rng, num_heads=heads, dtype=dt)
        x = rand(b, c, hw, hw)
        return grad_check(
            lambda t: tensor_sum(fmsa(FusionInputs(t), p)), [x])

    def loss_case(b, g, k, box_loss):
        from .data import GroundTruthBox
        raw = rand(b, 5 + k, g, g)
        truths = [[GroundTruthBox(i % k, 0.3 + 0.1 * i, 0.4, 0.15, 0.2)
                   for i in range(2)] for _ in range(b)]
        return grad_check(
            lambda r: compute_loss(HeadOutput(r, k), truths,
                                   box_loss=box_loss)[0], [raw])

    return [
        ("msa 1x8x8 h2", lambda: msa_case(1, 8, 8, 2)),
        ("msa 2x6x12 h3", lambda: msa_case(2, 6, 12, 3)),
        ("msa 1x16x8 h4", lambda: msa_case(1, 16, 8, 4)),
        ("encoder 1x8x8 h2", lambda: encoder_case(1, 8, 8, 2)),
        ("encoder 2x4x12 h3", lambda: encoder_case(2, 4, 12, 3)),
        ("encoder 1x9x8 h4", lambda: encoder_case(1, 9, 8, 4)),
        ("c2f 1x6->8 5x5", lambda: c2f_case(1, 6, 8, 5)),
        ("c2f 2x8->8 4x4", lambda: c2f_case(2, 8, 8, 4)),
        ("c2f 1x4->6 6x6", lambda: c2f_case(1, 4, 6, 6)),
        ("lads 1x4 6x6 h2", lambda: lads_case(1, 4, 6, 2)),
        ("lads 2x6 4x4 h3", lambda: lads_case(2, 6, 4, 3)),
        ("lads 1x8 8x8 h4", lambda: lads_case(1, 8, 8, 4)),
        ("fds 1x4->8 6x6", lambda: fds_case(1, 4, 8, 6)),
        ("fds 2x6->8 4x4", lambda: fds_case(2, 6, 8, 4)),
        ("fds 1x8->12 8x8", lambda: fds_case(1, 8, 12, 8)),
        ("gaus 1x8 4x4 s2", lambda: gaus_case(1, 8, 4, 2)),
        ("gaus 2x8 3x3 s4", lambda: gaus_case(2, 8, 3, 4)),
        ("gaus 1x12 5x5 s2", lambda: gaus_case(1, 12, 5, 2)),
        ("fus c4=8 c5=8 cf=8", lambda: fus_case(1, 8, 8, 8, 4)),
        ("fus c4=12 c5=8 cf=8", lambda: fus_case(1, 12, 8, 8, 4)),
        ("fus c4=8 c5=12 cf=6", lambda: fus_case(2, 8, 12, 6, 4)),
        ("fmsa 1x8 4x4 h2", lambda: fmsa_case(1, 8, 4, 2)),
        ("fmsa 2x8 3x3 h4", lambda: fmsa_case(2, 8, 3, 4)),
        ("fmsa 1x12 5x5 h2", lambda: fmsa_case(1, 12, 5, 2)),
        ("loss l1 1x4x3", lambda: loss_case(1, 4, 3, "l1")),
        ("loss l1 2x3x2", lambda: loss_case(2, 3, 2, "l1")),
        ("loss ciou 1x4x3", lambda: loss_case(1, 4, 3, "ciou")),
    ]


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    failures = []
    print(f"{'block':<24} {'max rel err':>12} {'tol':>8} {'time':>8}")
    for name, case in _gradcheck_cases(rng):
        t0 = time.perf_counter()
        report = case()
        dt = time.perf_counter() - t0
        status = "ok" if report.passed else "FAIL"
        print(f"{name:<24} {report.max_rel_error:>12.3e} "
              f"{report.tolerance:>8.0e} {dt:>7.2f}s {status}")
        if not report.passed:
            failures.append(name)
    if failures:
        print(f"gradient check failed for: {', '.join(failures)}",
              file=sys.stderr)
        return EXIT_NUMERIC
    print("all blocks passed")
    return EXIT_OK


def cmd_bench(args):
    run = build_run_config(args)
    print(f"image size {run.model.image_size}, "
          f"{'dtype ' + run.model.dtype}")
    print(f"{'config':<12} {'params':>10} {'flops':>14} {'latency_ms':>12}")
    results = []
    for label, setting in (("baseline", 0), ("full", 4)):
        cfg = compensated_config(run.model, setting)
        n_params, n_flops = count_params_flops(cfg)
        model = Model(cfg, seed=run.seed)
        x = Tensor(np.zeros((1, 3, cfg.image_size, cfg.image_size),
                            dtype=cfg.np_dtype))
        for _ in range(5):
            model.forward(x)
        times = []
        for _ in range(30):
            t0 = time.perf_counter()
            model.forward(x)
            times.append(time.perf_counter() - t0)
        latency = float(np.median(times)) * 1000.0
        results.append((label, n_params, n_flops, latency))
        print(f"{label:<12} {n_params:>10} {n_flops:>14} {latency:>12.2f}")
    base, full = results
    print(f"{'delta':<12} {full[1] - base[1]:>+10} "
          f"{full[2] - base[2]:>+14} {full[3] - base[3]:>+12.2f}")
    return EXIT_OK


def cmd_render(args):
    run = build_run_config(args)
    model = Model(run.model, seed=run.seed)
    if args.checkpoint:
        state = load_checkpoint(args.checkpoint, run.model)
        model.load_state({k: v for k, v in state.items()
                          if not k.startswith(("opt.", "meta."))})

    img = read_ppm(args.image)
    _, h, w = img.shape
    out = model.forward(Tensor(img[None].astype(run.model.np_dtype)))
    dets = decode_predictions(out, args.threshold, run.nms_iou)[0]

    canvas = img.copy()
    for d in dets:
        color = np.array(CLASS_COLORS[d.class_id % len(CLASS_COLORS)])
        x0 = int(round((d.cx - d.w / 2) * w))
        x1 = int(round((d.cx + d.w / 2) * w))
        y0 = int(round((d.cy - d.h / 2) * h))
        y1 = int(round((d.cy + d.h / 2) * h))
        x0, x1 = max(0, x0), min(w - 1, x1)
        y0, y1 = max(0, y0), min(h - 1, y1)
        for c in range(3):
            canvas[c, y0, x0:x1 + 1] = color[c]
            canvas[c, y1, x0:x1 + 1] = color[c]
            canvas[c, y0:y1 + 1, x0] = color[c]
            canvas[c, y0:y1 + 1, x1] = color[c]

    out_path = args.out or "overlay.ppm"
    write_ppm(out_path, canvas)
    sidecar = os.path.splitext(out_path)[0] + ".txt"
    with open(sidecar, "w", newline="\n") as f:
        for d in dets:
            f.write(f"{d.class_id} {d.score:.6f} {d.cx:.6f} {d.cy:.6f} "
                    f"{d.w:.6f} {d.h:.6f}\n")
    print(f"wrote {out_path} ({len(dets)} boxes) and {sidecar}")
    return EXIT_OK


def cmd_gen_data(args):
    run = build_run_config(args)
    out_dir = args.out or "data"
    spec = SceneSpec(seed=run.seed, image_size=run.model.image_size,
                     num_classes=run.model.num_classes)

    os.makedirs(out_dir, exist_ok=True)
    indices = list(range(args.count))

    from .data import scene_paths, write_annotations, generate_scene

    def one(i):
        s = dataclasses.replace(spec, seed=run.seed + i)
        img, truths = generate_scene(s)
        img_path, ann_path = scene_paths(out_dir, i)
        write_ppm(img_path, img)
        write_annotations(ann_path, truths)

    fan_out(one, indices)
    print(f"wrote {args.count} scenes to {out_dir}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key = value config file with "
                   "[run], [model], [fusion] sections")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--image-size", type=int, dest="image_size",
                   help="square input size, divisible by 32")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")


def make_parser():
    parser = _Parser(prog="fusenet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a detector; writes "
                       "train_log.csv (epoch,lr,loss,loss_obj,loss_cls,"
                       "loss_box,val_map50), best.ckpt, last.ckpt")
    _add_common(p)
    p.add_argument("--data", help="dataset directory (default: synthetic)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; eval.csv "
                       "columns: class,AP50,AP50-90")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset directory (default: synthetic)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="run the five-setting module sweep; "
                       "ablation.csv columns: setting,fmsa,fus,fds,params,"
                       "precision,recall,map50,map50_90")
    _add_common(p)
    p.add_argument("--seeds", help="comma-separated seed list "
                   "(default 1,2,3,4,5)")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of "
                       "every block; exit 2 on any failure")
    _add_common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench", help="parameter/FLOP counts plus measured "
                       "forward latency (median of 30 after 5 warmups)")
    _add_common(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("render", help="draw predicted boxes onto a PPM; "
                       "scores go to a sidecar .txt")
    _add_common(p)
    p.add_argument("--checkpoint", help="trained checkpoint (optional)")
    p.add_argument("--image", required=True, help="input PPM")
    p.add_argument("--threshold", type=float, default=DEFAULT_CONF_THRESHOLD)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("gen-data", help="write synthetic PPM scenes plus "
                       "annotation sidecars")
    _add_common(p)
    p.add_argument("--count", type=int, default=16)
    p.set_defaults(fn=cmd_gen_data)

    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ShapeError, CheckpointError, DatasetError,
            FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NanLossError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
