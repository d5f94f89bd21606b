"""Command line entry points: gen, train, eval, gradcheck.

Every subcommand echoes its effective configuration as a JSON line on stdout
before doing any work, so runs can be reproduced from logs alone.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .datagen import (
    SCENARIO_CLASS_COUNTS,
    GeneratorConfig,
    SplitSpec,
    generate_dataset,
    scenario_preset,
    split,
)
from . import dataset_io, gradcheck
from .harness import (
    TrainConfig,
    assemble_streams,
    evaluate,
    load_bundle,
    report,
    save_bundle,
    train,
)


def _echo(subcommand: str, params: dict) -> None:
    print(json.dumps({"command": subcommand, "config": params}, sort_keys=True))


def _add_gen(sub):
    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=None, help="number of classes (default: scenario preset)")
    p.add_argument("--per-class", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cross-modal", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--scenario", choices=sorted(SCENARIO_CLASS_COUNTS), default="dm")
    p.add_argument("--frames", type=int, default=150)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--parallel", action="store_true", help="generate sequences in a thread pool")


def _add_train(sub):
    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["random", "daytime", "weather"], default="random")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--model", choices=["mm", "single", "ms2"], default="mm")
    p.add_argument("--weighting", choices=["sigmoid", "linear", "uniform"], default="sigmoid")
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--beta", type=float, default=6.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="bundle file path (sidecar written as <out>.json)")
    p.add_argument("--modalities", default=None,
                   help="comma list from appearance,motion,steering,speed (default all)")
    p.add_argument("--groups", default=None,
                   help="ms2 stage groups as 'i,j|k,l' over the selected modalities")
    p.add_argument("--embed-hidden", type=int, default=64)
    p.add_argument("--embed-epochs", type=int, default=12)


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a trained bundle on a dataset split")
    p.add_argument("--model", required=True, help="bundle file from train --out")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["random", "daytime", "weather"], default="random")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--horizons", default=None, help="comma list of seconds, e.g. 1,2,3,4,5")
    p.add_argument("--report-dir", required=True)


def _add_gradcheck(sub):
    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=100)


def _parse_groups(text: str | None, n_modalities: int):
    if text is None:
        return None
    groups = []
    for part in text.split("|"):
        groups.append([int(v) for v in part.split(",") if v != ""])
    return groups


def cmd_gen(args) -> int:
    preset = scenario_preset(args.scenario)
    cfg = GeneratorConfig(
        num_classes=args.classes if args.classes is not None else preset.num_classes,
        samples_per_class=args.per_class,
        appearance_dim=args.feature_dim,
        motion_dim=args.feature_dim,
        noise_sigma=args.noise,
        cross_modal_coding=args.cross_modal,
        seed=args.seed,
        frames=args.frames,
        fps=args.fps,
        scenario=args.scenario,
    )
    _echo("gen", {**cfg.__dict__, "out": args.out, "parallel": args.parallel})
    sequences = generate_dataset(cfg, parallel=args.parallel)
    dataset_io.write_dataset(sequences, args.out)
    print(f"wrote {len(sequences)} sequences to {args.out}")
    return 0


def cmd_train(args) -> int:
    modalities = args.modalities.split(",") if args.modalities else None
    cfg = TrainConfig(
        model_kind=args.model,
        hidden=args.hidden,
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        weighting=args.weighting,
        alpha=args.alpha,
        beta=args.beta,
        modalities=modalities,
        groups=_parse_groups(args.groups, 0),
        embed_hidden=args.embed_hidden,
        embed_epochs=args.embed_epochs,
    )
    _echo("train", {**cfg.__dict__, "data": args.data, "split": args.split,
                    "train_fraction": args.train_fraction, "out": args.out})
    sequences = dataset_io.read_dataset(args.data)
    train_seqs, test_seqs = split(sequences, SplitSpec(args.split, args.train_fraction, args.seed))
    model, embedders, log = train(train_seqs, test_seqs, cfg)
    save_bundle(args.out, model, embedders, cfg)
    summary = {
        "epochs": len(log.epoch_losses),
        "final_loss": log.epoch_losses[-1] if log.epoch_losses else None,
        "best_epoch": log.best_epoch,
        "final_accuracy_at": log.epoch_accuracy[-1] if log.epoch_accuracy else None,
        "horizons": log.horizons,
        "wall_clock_s": round(log.wall_clock_s, 2),
        "bundle": args.out,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    horizons = [float(h) for h in args.horizons.split(",")] if args.horizons else None
    _echo("eval", {"model": args.model, "data": args.data, "split": args.split,
                   "train_fraction": args.train_fraction, "split_seed": args.split_seed,
                   "horizons": horizons, "report_dir": args.report_dir})
    model, embedders, meta = load_bundle(args.model)
    sequences = dataset_io.read_dataset(args.data)
    _, test_seqs = split(sequences, SplitSpec(args.split, args.train_fraction, args.split_seed))
    streams = assemble_streams(test_seqs, embedders, meta["modalities"], meta["delta"])
    rep = evaluate(model, streams, horizons)
    files = report(rep, args.report_dir)
    print(json.dumps({
        "horizons": rep.horizons,
        "accuracy_at": rep.accuracy_at,
        "num_test_sequences": rep.num_test_sequences,
        "files": files,
    }, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    ok, _ = gradcheck.run_suite(seeds=args.seeds, verbose=True)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mmact", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_gradcheck(sub)
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
