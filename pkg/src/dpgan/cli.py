"""Command-line entry points.

Exit codes: 0 success, 1 usage or input error, 2 verification failure,
3 numeric abort.
"""
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import config as runconfig
from . import receptive_field
from .errors import CheckpointError, ConfigError, ContractError, DpganError, ImageFormatError, NumericAbort
from .evaluate import evaluate_generator, evaluate_images, generate_images
from .gradcheck import registry
from .imageio import load_layout, save_image
from .models import VARIANT_LABELS, VARIANTS, check_variant
from .synth import load_dataset, make_dataset
from .training import TrainState, checkpoint_load, fit

log = logging.getLogger("dpgan")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT = "checkpoint.ckpt"
METRICS = "metrics.jsonl"
RESOLVED = "config.json"


class UsageError(DpganError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(obj, out=None):
    if out:
        _write_json(out, obj)
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- commands ----------------------------------------------------------------

def cmd_make_dataset(args):
    make_dataset(args.out, args.num, args.size, args.classes, args.seed, force=args.force)
    log.info("wrote %d samples to %s", args.num, args.out)
    return EXIT_OK


def _load_config(path):
    return runconfig.load(path) if path else runconfig.RunConfig()


def cmd_train(args):
    echoed = os.path.join(args.out, RESOLVED) if args.out else None
    if args.resume and not args.config and echoed and os.path.exists(echoed):
        cfg = runconfig.load(echoed)
    else:
        cfg = _load_config(args.config)
    data = args.data or cfg.data
    out = args.out or cfg.out
    if not data or not out:
        raise UsageError("train needs --data and --out (or 'data'/'out' in the config)")
    cfg = replace(cfg, data=data, out=out)
    os.makedirs(out, exist_ok=True)
    ckpt = os.path.join(out, CHECKPOINT)
    if args.resume:
        if not os.path.exists(ckpt):
            raise UsageError(f"--resume: no checkpoint at {ckpt}")
        state = checkpoint_load(ckpt)
        if state.configs() != {k: v for k, v in cfg.resolved().items() if k in state.configs()}:
            raise UsageError("--resume: config differs from the one stored in the checkpoint")
        log.info("resuming from step %d", state.step)
    else:
        state = TrainState(cfg.generator, cfg.discriminator, cfg.loss, cfg.train)
    cfg.dump(os.path.join(out, RESOLVED))
    dataset = load_dataset(data)
    t0 = time.time()
    try:
        fit(state, dataset, os.path.join(out, METRICS), ckpt, stop_after=args.stop_after)
    except NumericAbort as exc:
        log.error("%s; last good checkpoint kept at %s", exc, ckpt)
        return EXIT_NUMERIC
    log.info("trained to step %d in %.1fs", state.step, time.time() - t0)
    return EXIT_OK


def cmd_generate(args):
    state = checkpoint_load(args.ckpt)
    layout = load_layout(args.layout)
    k = state.gcfg.classes
    if layout.max() >= k:
        raise ContractError(f"layout uses class {int(layout.max())} but the checkpoint was trained with {k} classes")
    image = generate_images(state.generator, layout[None])[0]
    save_image(args.out, image)
    return EXIT_OK


def cmd_eval(args):
    dataset = load_dataset(args.data)
    if args.ckpt:
        state = checkpoint_load(args.ckpt)
        if state.gcfg.classes != dataset.classes:
            raise ContractError(f"checkpoint has {state.gcfg.classes} classes, dataset {dataset.classes}")
        report = evaluate_generator(state.generator, dataset)
        report["source"] = "generator"
        report["step"] = state.step
    else:
        report = evaluate_images(dataset.images, dataset.layouts, dataset.styles, dataset.classes)
        report["source"] = "ground_truth"
    _emit(report, args.out)
    return EXIT_OK


def cmd_gradcheck(args):
    reg = registry()
    names = list(reg) if args.scope == "all" else [args.scope]
    if any(n not in reg for n in names):
        raise UsageError(f"unknown op {args.scope!r}; choose 'all' or one of: {', '.join(reg)}")
    rows, failed = [], 0
    print(f"{'op':<24} {'max rel err':>10} {'probes':>6}  verdict")
    for name in names:
        rep = reg[name](args.seed)
        print(rep.row())
        failed += not rep.passed
        rows.append({"op": name, "max_rel_error": rep.max_error, "probes": rep.probes, "passed": rep.passed})
    if args.out:
        _write_json(args.out, rows)
    return EXIT_VERIFY if failed else EXIT_OK


def _variants(text):
    names = [v.strip() for v in text.split(",") if v.strip()]
    for v in names:
        try:
            check_variant(v)
        except ContractError as exc:
            raise UsageError(str(exc)) from exc
    return names


def cmd_probe_rf(args):
    cfg = _load_config(args.config)
    variants = _variants(args.compare) if args.compare else [args.variant or cfg.ablation]
    reports = receptive_field.compare(variants, cfg.generator, size=args.size, layout_seed=args.seed)
    out = {"threshold": receptive_field.THRESHOLD, "size": args.size, "variants": [r.to_dict() for r in reports]}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for r in reports:
            np.save(os.path.join(args.out, f"footprint_{r.variant}.npy"), r.mask)
        _write_json(os.path.join(args.out, "rf_report.json"), out)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_ablate(args):
    cfg = _load_config(args.config)
    variants = _variants(args.variants)
    dataset = load_dataset(args.data)
    train = cfg.train if args.steps is None else replace(cfg.train, steps=args.steps)
    rf_size = min(args.rf_size, dataset.manifest["size"])
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for v in variants:
        gcfg = replace(cfg.generator, variant=v, classes=dataset.classes)
        state = TrainState(gcfg, cfg.discriminator, cfg.loss, train)
        before = evaluate_generator(state.generator, dataset)
        vdir = os.path.join(args.out, v)
        os.makedirs(vdir, exist_ok=True)
        t0 = time.time()
        try:
            records = fit(state, dataset, os.path.join(vdir, METRICS), os.path.join(vdir, CHECKPOINT))
            aborted = False
        except NumericAbort as exc:
            log.error("%s aborted: %s", v, exc)
            records, aborted = [], True
        after = evaluate_generator(state.generator, dataset)
        rf = receptive_field.probe(gcfg, size=rf_size)
        last = records[-1] if records else {}
        rows.append({
            "variant": v,
            "label": VARIANT_LABELS[v],
            "parameters": state.generator.num_parameters(),
            "steps": state.step,
            "aborted": aborted,
            "final_loss_g": last.get("total"),
            "final_loss_d": last.get("loss_gan_d"),
            "accuracy_init": before["accuracy"],
            "miou_init": before["miou"],
            "accuracy": after["accuracy"],
            "miou": after["miou"],
            "rf_coverage": rf.coverage,
            "seconds": round(time.time() - t0, 2),
        })
        log.info("%s done: acc %.3f (init %.3f), coverage %.3f", v, after["accuracy"], before["accuracy"], rf.coverage)
    _write_json(os.path.join(args.out, "ablation.json"), rows)
    with open(os.path.join(args.out, "ablation.md"), "w") as fh:
        fh.write(format_table(rows))
    print(format_table(rows))
    return EXIT_OK


def format_table(rows):
    head = "| id | wiring | params | loss G | loss D | acc (init) | acc | mIoU | RF coverage |\n"
    head += "|---|---|---:|---:|---:|---:|---:|---:|---:|\n"
    fmt = lambda v: "-" if v is None else f"{v:.4f}"
    body = "".join(
        f"| {r['variant']} | {r['label']} | {r['parameters']} | {fmt(r['final_loss_g'])} | {fmt(r['final_loss_d'])} "
        f"| {r['accuracy_init']:.4f} | {r['accuracy']:.4f} | {r['miou']:.4f} | {r['rf_coverage']:.4f} |\n"
        for r in rows
    )
    return head + body


# -- parser --------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="dpgan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("make-dataset", help="write a synthetic layout/image dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--num", type=int, default=32)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_make_dataset)

    s = sub.add_parser("train", help="train a generator/discriminator pair")
    s.add_argument("--config")
    s.add_argument("--data")
    s.add_argument("--out")
    s.add_argument("--resume", action="store_true")
    s.add_argument("--stop-after", type=int, help="stop (with a checkpoint) once this global step is reached")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="render one layout with a trained generator")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--layout", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("eval", help="oracle-segmenter accuracy and mIoU over a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--ckpt", help="omit to score the ground-truth images")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    s.add_argument("--scope", default="all")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("probe-rf", help="gradient-footprint receptive field of one output pixel")
    s.add_argument("--config")
    s.add_argument("--variant")
    s.add_argument("--compare", help="comma-separated variant ids")
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_probe_rf)

    s = sub.add_parser("ablate", help="train several variants with one seed and tabulate")
    s.add_argument("--variants", default=",".join(VARIANTS))
    s.add_argument("--data", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--config")
    s.add_argument("--rf-size", type=int, default=64)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ContractError, CheckpointError, ImageFormatError,
            FileExistsError, FileNotFoundError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except NumericAbort as exc:
        print(json.dumps({"error": "NumericAbort", "message": str(exc), "step": exc.step}), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
