"""Command-line surface wiring the whole pipeline together.

Subcommands: synth, featurize, train, evaluate, classify, report.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime
failure. Every output file carries a provenance header (config hash, seed,
package version): `#` comment lines in CSVs, one leading `{"_meta": ...}`
record in JSON-Lines files. Runs with identical provenance headers and
--jobs 1 produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

import os

from . import __version__, cnn, evaluate
from .config import AppConfig, ConfigError
from .data import canonicalize, load_dataset as _load_dataset, save_dataset
from .errors import DataFormatError, PenliveError
from .extract import ExtractConfig, generate_counterparts
from .features import featurize, parse_features_jsonl, write_features_jsonl
from .model import load_model
from .rnn import RnnSpec, build_rnn
from .train import train_loop


class _Usage(Exception):
    pass


def load_dataset(path: str):
    """Dataset named by basename so outputs stay path-independent."""
    return _load_dataset(path, name=os.path.basename(path))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="penlive", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"penlive {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key")
        sp.add_argument("--jobs", type=int, default=None,
                        help="worker count where parallelism is allowed (default 1)")

    sp = sub.add_parser("synth", help="human JSONL -> synthetic JSONL + extraction report")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", help="extraction report JSONL path")
    sp.add_argument("--seed", type=int, help="override the noise seed")
    sp.add_argument("--per-sample", type=int, dest="per_sample", help="replicas per human sample")
    common(sp)

    sp = sub.add_parser("featurize", help="dataset JSONL -> velocity feature JSONL")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("train", help="dataset/features -> model file + history CSV")
    sp.add_argument("--input", help="dataset JSONL (required for custom_cnn)")
    sp.add_argument("--features", help="pre-featurized velocity JSONL (sequence systems)")
    sp.add_argument("--out", required=True, help="model JSON path")
    sp.add_argument("--history", help="per-epoch history CSV path")
    common(sp)

    sp = sub.add_parser("evaluate", help="model + dataset -> metrics CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--model", help="model JSON (omit for the 1NN-DTW baseline)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--partition", choices=("train", "val", "test", "all"), default="test")
    common(sp)

    sp = sub.add_parser("classify", help="model + samples -> per-sample probability CSV")
    sp.add_argument("--model", required=True)
    sp.add_argument("--input", help="dataset JSONL")
    sp.add_argument("--features", help="velocity feature JSONL")
    sp.add_argument("--out", required=True)
    sp.add_argument("--dump-images", dest="dump_images", metavar="DIR",
                    help="with an image model: write each rasterized sample as DIR/<id>.pgm")
    common(sp)

    sp = sub.add_parser("report", help="metrics CSV -> fixed-width comparison table")
    sp.add_argument("--metrics", required=True)
    sp.add_argument("--out", help="write the table here instead of stdout")
    common(sp)
    return p


def _load_cfg(args) -> AppConfig:
    cfg = AppConfig.load(getattr(args, "config", None), getattr(args, "set", []))
    if getattr(args, "jobs", None) is not None:
        cfg.values["jobs"] = args.jobs
    if getattr(args, "seed", None) is not None:
        cfg.values["noise.seed"] = args.seed
    if getattr(args, "per_sample", None) is not None:
        cfg.values["synth.per_sample"] = args.per_sample
    return cfg


def _representer(system: str, cfg: AppConfig, model=None):
    """sample -> model input; the feature pipeline is pinned by the model
    file when one is given, else by the config."""
    if system == "custom_cnn":
        size = int(model.feature_config["image_size"]) if model is not None \
            else cfg["model.image_size"]
        return lambda s: cnn.rasterize(canonicalize(s), size)
    if model is not None and model.feature_config:
        from .features import FeatureConfig

        fc = FeatureConfig(
            smooth_window=int(model.feature_config.get("smooth_window", 3)),
            downsample=bool(model.feature_config.get("downsample", False)),
            cap=int(model.feature_config.get("cap", 400)),
        )
    else:
        fc = cfg.features()
    return lambda s: featurize(canonicalize(s), fc).values


def cmd_synth(args, cfg: AppConfig) -> int:
    d = load_dataset(args.input)
    extract_cfg = ExtractConfig(max_strokes=cfg["extract.max_strokes"],
                                refine_passes=cfg["extract.refine_passes"])
    syn, reports = generate_counterparts(
        d, cfg.noise(), per_sample=cfg["synth.per_sample"],
        rate_hz=cfg["synth.rate_hz"], extract_cfg=extract_cfg, jobs=cfg["jobs"])
    save_dataset(syn, args.out, meta=cfg.provenance({"command": "synth", "input": args.input}))
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps({"_meta": cfg.provenance({"command": "synth-report"})},
                                separators=(",", ":"), sort_keys=True) + "\n")
            for row in reports:
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    skipped = sum(r["status"] == "skipped" for r in reports)
    print(f"synthesized {len(syn)} samples ({skipped} sources skipped)", file=sys.stderr)
    return 0


def cmd_featurize(args, cfg: AppConfig) -> int:
    d = load_dataset(args.input)
    fc = cfg.features()
    seqs = [featurize(canonicalize(s), fc) for s in d.samples]
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        write_features_jsonl(seqs, fh, meta=cfg.provenance({"command": "featurize"}))
    return 0


def _split_xy(items, labels, spec):
    """Stratified (train, val, test) index split over arbitrary items."""
    from .evaluate import _allocate  # same allocation as split_dataset

    rng = np.random.default_rng(spec.seed)
    parts = ([], [], [])
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab if spec.stratify_by_label else "all", []).append(i)
    for _, idxs in sorted(groups.items()):
        order = rng.permutation(len(idxs))
        counts = _allocate(len(idxs), spec.fractions)
        at = 0
        for p, c in enumerate(counts):
            parts[p].extend(idxs[j] for j in order[at : at + c])
            at += c
    return parts


def cmd_train(args, cfg: AppConfig) -> int:
    system = cfg["model.system"]
    if system == "dtw1nn":
        raise _Usage("the 1NN-DTW baseline has no trainable model; use `evaluate`")
    train_cfg = cfg.train()
    if system == "custom_cnn":
        if not args.input:
            raise _Usage("custom_cnn training needs --input (a dataset JSONL)")
        d = load_dataset(args.input)
        rep = _representer(system, cfg)
        xs = [rep(s) for s in d.samples]
        labels = [s.label for s in d.samples]
        from .model import ImageClassifier

        model = ImageClassifier(image_size=cfg["model.image_size"],
                                seed=cfg._seed("model.seed"),
                                train_config=train_cfg.as_dict(),
                                dtype=cfg["train.dtype"])
    else:
        if args.features:
            seqs = parse_features_jsonl(open(args.features, "r", encoding="utf-8"))
            xs = [v.values for v in seqs]
            labels = [v.label for v in seqs]
            feature_config = {"source": "precomputed"}
        elif args.input:
            d = load_dataset(args.input)
            rep = _representer(system, cfg)
            xs = [rep(s) for s in d.samples]
            labels = [s.label for s in d.samples]
            feature_config = cfg.features().as_dict()
        else:
            raise _Usage("training needs --input or --features")
        kind, bidir = evaluate.RNN_SYSTEMS[system]
        model = build_rnn(RnnSpec(kind=kind, hidden=cfg["model.hidden"], bidirectional=bidir,
                                  seed=cfg._seed("model.seed")),
                          feature_config=feature_config, dtype=cfg["train.dtype"])
        model.train_config = train_cfg.as_dict()

    y = np.array([1.0 if lab == "human" else 0.0 for lab in labels])
    tr, va, _ = _split_xy(xs, labels, cfg.split())
    model, history = train_loop(
        model, [xs[i] for i in tr], y[tr], [xs[i] for i in va], y[va], train_cfg)
    model.save(args.out)
    if args.history:
        with open(args.history, "w", encoding="utf-8", newline="\n") as fh:
            for k, v in sorted(cfg.provenance({"command": "train"}).items()):
                fh.write(f"# {k}={v}\n")
            fh.write("epoch,train_loss,val_loss,val_accuracy\n")
            for h in history:
                fh.write(f"{h.epoch},{h.train_loss:.8f},{h.val_loss:.8f},{h.val_accuracy:.6f}\n")
    best = max(history, key=lambda h: h.val_accuracy)
    print(f"trained {system}: best val accuracy {best.val_accuracy:.4f} "
          f"at epoch {best.epoch} of {len(history)}", file=sys.stderr)
    return 0


def cmd_evaluate(args, cfg: AppConfig) -> int:
    from .dtw import nn_liveness_score
    from .evaluate import (ExperimentResult, compute_metrics, confusion,
                           split_dataset, write_metrics_csv)

    d = load_dataset(args.input)
    model = load_model(args.model) if args.model else None
    system = (model.arch if model is not None else "dtw1nn")
    if model is not None and getattr(model, "bidirectional", False):
        system = {"gru": "bigru", "lstm": "bilstm"}.get(system, system)
    rep = _representer("custom_cnn" if system == "custom_cnn" else system, cfg, model)

    train_d, val_d, test_d = split_dataset(d, cfg.split())
    part = {"train": train_d, "val": val_d, "test": test_d, "all": d}[args.partition]
    if len(part) == 0:
        raise DataFormatError(f"partition {args.partition!r} is empty")
    truth = [s.label for s in part.samples]

    if model is None:
        refs = [featurize(canonicalize(s), cfg.features()) for s in train_d.samples]
        preds, scores = [], []
        for s in part.samples:
            label, _, score = nn_liveness_score(
                featurize(canonicalize(s), cfg.features()), refs, cfg.dtw())
            preds.append(label)
            scores.append(score)
    else:
        xs = [rep(s) for s in part.samples]
        p = np.concatenate([
            model.predict_batch(model.collate(xs[i : i + 128]))
            for i in range(0, len(xs), 128)
        ])
        scores = list(map(float, p))
        preds = ["human" if v >= 0.5 else "synthetic" for v in p]

    metrics = compute_metrics(confusion(preds, truth), scores, truth)
    split = cfg.split()
    row = ExperimentResult(
        dataset=d.name, system=system, split_seed=split.seed,
        train_frac=split.fractions[0] + split.fractions[1],
        train_device="any", test_device="any", metrics=metrics,
        n_train=len(train_d), n_val=len(val_d), n_test=len(part),
    )
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        write_metrics_csv([row], fh, provenance=cfg.provenance(
            {"command": "evaluate", "partition": args.partition}))
    print(f"{system} on {args.partition}: accuracy {metrics.accuracy:.4f}", file=sys.stderr)
    return 0


def cmd_classify(args, cfg: AppConfig) -> int:
    model = load_model(args.model)
    if args.features and model.arch != "custom_cnn":
        seqs = parse_features_jsonl(open(args.features, "r", encoding="utf-8"))
        ids = [v.source_id for v in seqs]
        xs = [v.values for v in seqs]
    elif args.input:
        d = load_dataset(args.input)
        rep = _representer(model.arch, cfg, model)
        ids = [s.id for s in d.samples]
        xs = [rep(s) for s in d.samples]
        if args.dump_images:
            if model.arch != "custom_cnn":
                raise _Usage("--dump-images needs an image model")
            os.makedirs(args.dump_images, exist_ok=True)
            for sid, img in zip(ids, xs):
                cnn.write_pgm(img, os.path.join(args.dump_images, f"{sid}.pgm"))
    else:
        raise _Usage("classify needs --input (or --features for sequence models)")
    p = np.concatenate([
        model.predict_batch(model.collate(xs[i : i + 128])) for i in range(0, len(xs), 128)
    ]) if xs else np.empty(0)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in sorted(cfg.provenance({"command": "classify"}).items()):
            fh.write(f"# {k}={v}\n")
        fh.write("id,probability,predicted_label\n")
        for sid, prob in zip(ids, p):
            label = "human" if prob >= 0.5 else "synthetic"
            fh.write(f"{sid},{prob:.6f},{label}\n")
    return 0


def cmd_report(args, cfg: AppConfig) -> int:
    rows = []
    with open(args.metrics, "r", encoding="utf-8") as fh:
        content = [ln for ln in fh if not ln.startswith("#")]
    for rec in csv.DictReader(io.StringIO("".join(content))):
        rows.append(rec)
    table = evaluate.render_table(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(table)
    else:
        sys.stdout.write(table)
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "classify": cmd_classify,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = _load_cfg(args)
        return _COMMANDS[args.command](args, cfg)
    except (_Usage, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except PenliveError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
