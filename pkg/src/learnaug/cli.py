"""``learnaug`` command line.

Exit codes: 0 success, 1 data error (for example an unprocessable variable),
2 usage or configuration error, 3 numeric failure, 4 missing artifact.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from .augment import AugmentParams
from .augtrain import train_augmentation, write_trace
from .config import RunConfig, dump_config, load_config
from .encoder import PretrainTraces, init_encoder, pretrain
from .errors import (ConfigError, LearnAugError, NumericError, ParseError,
                     UnprocessableVariableError)
from .evalharness import (TaskSpec, bench_rows, bench_scaling, bias_sd_experiment, finetune,
                          scatter_svg)
from .optim import AdamWConfig
from .series import batches_from_datasets, load_csv, make_batches, preprocess, read_header, \
    read_manifest, write_csv
from .synthetic import forecasting_windows, pretrain_domains, two_class_sinusoids
from .tensorfile import load_augment, load_encoder, save_augment, save_encoder

log = logging.getLogger("learnaug")

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISSING = 0, 1, 2, 3, 4

AUGMENT_FILE = "augment.bin"
ENCODER_FILE = "encoder.bin"


class MissingArtifact(LearnAugError):
    pass


class UsageError(LearnAugError):
    pass


# --------------------------------------------------------------------------
# helpers


def _emit(rows, out_path: Path | None) -> None:
    buf = io.StringIO(newline="")
    csv.writer(buf, lineterminator="\n").writerows(rows)
    text = buf.getvalue()
    sys.stdout.write(text)
    if out_path is not None:
        out_path.write_text(text)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _batches(args, cfg: RunConfig, seed: int):
    if args.manifest:
        path = Path(args.manifest)
        if not path.is_file():
            raise UsageError(f"manifest not found: {path}")
        manifest = read_manifest(path)
        batches = make_batches(manifest, manifest.batch_size or cfg.data.batch_size)
    else:
        datasets = pretrain_domains(cfg.data.per_domain, cfg.data.length, seed)
        batches = batches_from_datasets(datasets, cfg.data.batch_size, seed)
    return [replace(b, instances=[preprocess(i) for i in b.instances]) if any(
        i.has_missing for i in b.instances) else b for b in batches]


def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingArtifact(f"missing artifact: {path}")
    return path


def _initial_augment(cfg: RunConfig) -> AugmentParams:
    return AugmentParams.initial(cfg.augment.K, cfg.augment.sigma_init, cfg.augment.sharpness)


# --------------------------------------------------------------------------
# commands


def cmd_preprocess(args, cfg: RunConfig) -> int:
    if not args.manifest or not Path(args.manifest).is_file():
        raise UsageError("preprocess needs an existing --manifest")
    manifest = read_manifest(args.manifest)
    out = _out_dir(args, cfg)
    rows = [["file", "domain", "variables", "length", "missing_before", "missing_after", "status"]]
    status = EXIT_OK
    for entry, tag in manifest.entries:
        files = sorted(entry.glob("*.csv")) if entry.is_dir() else [entry]
        dest_dir = out / tag
        dest_dir.mkdir(parents=True, exist_ok=True)
        for f in files:
            dest = dest_dir / f.name
            try:
                inst = load_csv(f, tag)
                fixed = preprocess(inst)
            except (ParseError, UnprocessableVariableError) as exc:
                rows.append([str(f), tag, "", "", "", "", f"error: {exc}"])
                status = EXIT_DATA
                continue
            if inst.has_missing:
                write_csv(fixed, dest, read_header(f))
            else:
                shutil.copyfile(f, dest)
            rows.append([str(f), tag, inst.n, inst.T, repr(inst.missing_rate()),
                         repr(fixed.missing_rate()), "ok"])
    _emit(rows, out / "summary.csv")
    return status


def cmd_train_aug(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    steps = cfg.train.steps if args.steps is None else args.steps
    batches = _batches(args, cfg, cfg.seed)
    opt = AdamWConfig(lr=cfg.train.lr, weight_decay=cfg.train.weight_decay)
    try:
        params, trace = train_augmentation(_initial_augment(cfg), batches, cfg.loss, opt, steps,
                                           cfg.seed, cfg.train.operator)
    except NumericError as exc:
        write_trace(out / "aug_trace.csv", exc.context.get("trace", []))
        raise
    save_augment(out / AUGMENT_FILE, params)
    write_trace(out / "aug_trace.csv", trace)
    (out / "config.yaml").write_text(dump_config(cfg))
    if trace:
        log.info("train-aug: total %.6g -> %.6g", trace[0].total, trace[-1].total)
    return EXIT_OK if all(math.isfinite(r.total) for r in trace) else EXIT_NUMERIC


def _write_rows(path: Path, header, records) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in header])


def cmd_pretrain(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    epochs = cfg.pretrain.outer_epochs if args.steps is None else args.steps
    aug = load_augment(_require(Path(args.augment))) if args.augment else _initial_augment(cfg)
    enc = init_encoder(cfg.encoder, cfg.seed)
    batches = _batches(args, cfg, cfg.seed)
    pcfg = cfg.pretrain
    traces = PretrainTraces()
    if epochs > 0:
        pcfg = replace(pcfg, outer_epochs=epochs)
        aug, enc, traces = pretrain(aug, enc, batches, pcfg, cfg.loss, cfg.seed,
                                    cfg.train.weight_decay)
    save_augment(out / AUGMENT_FILE, aug)
    save_encoder(out / ENCODER_FILE, enc)
    _write_rows(out / "pretrain_aug_trace.csv", ["epoch", "batch", "iter", "l_p", "l_d", "total"],
                traces.aug)
    _write_rows(out / "pretrain_cl_trace.csv", ["epoch", "batch", "iter", "l_cl"], traces.cl)
    (out / "config.yaml").write_text(dump_config(replace(cfg, pretrain=pcfg)))
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    enc_path = Path(args.encoder) if args.encoder else out / ENCODER_FILE
    state = load_encoder(_require(enc_path))
    ev = cfg.evaluate
    if args.task == "classification":
        data = two_class_sinusoids(ev.n_train, ev.n_test, ev.length, ev.freqs, ev.noise, cfg.seed)
        task = TaskSpec("classification", labels=(0, 1))
    else:
        X, Y = forecasting_windows(ev.n_train + ev.n_test, ev.lookback, ev.horizon, cfg.seed)
        data = (X[:ev.n_train], Y[:ev.n_train], X[ev.n_train:], Y[ev.n_train:])
        task = TaskSpec("forecasting", lookback=ev.lookback, horizon=ev.horizon)
    result = finetune(state, task, data, ev.mode, seed=cfg.seed)
    _emit([[k, repr(v)] for k, v in result.metrics.items()], out / f"metrics_{args.task}.csv")
    return EXIT_OK


def cmd_bias_experiment(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    spec = cfg.bias if args.steps is None else replace(cfg.bias, train_steps=args.steps)
    report = bias_sd_experiment(spec=spec, seed=cfg.seed)
    for name in report.excluded:
        log.warning("variant %s diverged and was excluded", name)
    _emit(report.to_rows(), out / "bias_report.csv")
    if args.svg:
        scatter_svg(report, args.svg)
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    b = cfg.bench
    rows = bench_scaling(b.K, b.lengths, b.reps, cfg.seed, b.dense)
    _emit(bench_rows(rows), out / "bench.csv")
    return EXIT_OK


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train-aug": cmd_train_aug,
    "pretrain": cmd_pretrain,
    "evaluate": cmd_evaluate,
    "bias-experiment": cmd_bias_experiment,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="learnaug", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, steps_help=None):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="YAML run config (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory (overrides the config)")
        if steps_help:
            p.add_argument("--steps", type=int, help=steps_help)
        return p

    p = add("preprocess", "repair missing values in every manifest entry")
    p.add_argument("--manifest")
    p = add("train-aug", "train the augmentation parameters", "optimizer steps")
    p.add_argument("--manifest")
    p = add("pretrain", "alternating augmentation / encoder pre-training", "outer epochs")
    p.add_argument("--manifest")
    p.add_argument("--augment", help="start from a saved augmentation file")
    p = add("evaluate", "fine-tune a decoder on a toy task and report metrics")
    p.add_argument("--encoder", help=f"encoder file (default <out>/{ENCODER_FILE})")
    p.add_argument("--task", choices=("classification", "forecasting"), default="classification")
    p = add("bias-experiment", "bias vs spectral distance over classical variants",
            "contrastive steps per variant")
    p.add_argument("--svg", help="also write a scatter plot")
    add("bench", "time scalable vs dense operations")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config and not Path(args.config).is_file():
            raise UsageError(f"config not found: {args.config}")
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if getattr(args, "steps", None) is not None and args.steps < 0:
            raise UsageError("--steps must be >= 0")
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"learnaug: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MissingArtifact as exc:
        print(f"learnaug: error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericError as exc:
        print(f"learnaug: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LearnAugError, OSError) as exc:
        print(f"learnaug: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
