"""Command-line pipeline: featurize -> pretrain -> finetune -> benchmark ->
report, plus fingerprint extraction and 2-D projection.

Every run echoes its fully resolved configuration (defaults and seed
included) next to its primary output: ``<out>.config.json`` for file
outputs, ``run_config.json`` inside directory outputs.  Exit codes: 0 ok,
2 usage, 3 unreadable/unparseable input, 4 numeric failure.  The
``MOLPRET_WORKERS`` environment variable sets the default worker count for
benchmark replicates.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__, baselines, dmpnn, embed
from . import stats as stats_mod
from . import train as train_mod
from .descriptors import (
    DESCRIPTOR_NAMES,
    apply_scaler,
    compute_matrix,
    export_csv,
    fit_scaler,
    load_chmd,
    save_chmd,
)
from .errors import FileFormatError, InputError, NumericError
from .molgraph import SmilesError, parse_smiles, read_smiles_file

log = logging.getLogger(__name__)


def _echo_config(args: argparse.Namespace, target: str,
                 target_is_dir: bool = False) -> None:
    cfg = {k: v for k, v in vars(args).items()
           if k not in ("func", "verbose")}
    if target_is_dir:
        os.makedirs(target, exist_ok=True)
        path = os.path.join(target, "run_config.json")
    else:
        path = target + ".config.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_corpus(path):
    """Corpus file -> (molecules, ids); parse errors name file and line."""
    records = read_smiles_file(path)
    if not records:
        raise InputError(f"{path}: no molecules found")
    mols, ids = [], []
    for rec in records:
        try:
            mols.append(parse_smiles(rec.smiles))
        except SmilesError as e:
            raise InputError(f"{path}:{rec.line}: {e}") from e
        ids.append(rec.mol_id)
    return mols, ids


def _read_smiles_csv(path):
    """CSV with a ``smiles`` column (other columns preserved)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if "smiles" not in (reader.fieldnames or ()):
            raise InputError(f"{path}: need a 'smiles' column")
        for lineno, row in enumerate(reader, start=2):
            smiles = (row["smiles"] or "").strip()
            if not smiles:
                raise InputError(f"{path}:{lineno}: empty smiles cell")
            rows.append((smiles, row, lineno))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_featurize(args) -> None:
    mols, ids = _parse_corpus(args.input)
    matrix = compute_matrix(mols, ids)
    save_chmd(matrix, args.out)
    if args.csv:
        export_csv(matrix, args.csv)
    _echo_config(args, args.out)
    log.info("featurized %d molecules x %d descriptors -> %s",
             matrix.n_rows, matrix.n_cols, args.out)


def cmd_pretrain(args) -> None:
    mols, _ = _parse_corpus(args.corpus)
    matrix = load_chmd(args.descriptors)
    if matrix.n_rows != len(mols):
        raise InputError(
            f"{args.descriptors} has {matrix.n_rows} rows but "
            f"{args.corpus} has {len(mols)} molecules")
    scaler = fit_scaler(matrix, clip_sigmas=args.clip_sigmas)
    targets = apply_scaler(matrix, scaler)
    cfg = train_mod.PretrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        mask_fraction=args.mask_fraction, clip_sigmas=args.clip_sigmas,
        seed=args.seed, val_fraction=args.val_fraction)
    arch = dmpnn.MpnnConfig(
        hidden_size=args.hidden_size, depth=args.depth,
        ffn_layers=args.ffn_layers, output_dim=targets.n_cols)
    ckpt, history = train_mod.pretrain(mols, targets, cfg, arch, scaler)
    train_mod.save_checkpoint(ckpt, args.out)
    with open(args.out + ".history.csv", "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_rmse"])
        for h in history:
            writer.writerow([h["epoch"], repr(h["train_loss"]),
                             repr(h["val_rmse"])])
    _echo_config(args, args.out)
    log.info("pretrained %d epochs, best held-out rmse %.4f -> %s",
             cfg.epochs, ckpt.metadata["best_val_rmse"], args.out)


def _finetune_cfg_from_args(args) -> train_mod.FinetuneConfig:
    return train_mod.FinetuneConfig(
        task=args.task, epochs=args.epochs, batch_size=args.batch_size,
        lr_head=args.lr_head, lr_mp=args.lr_mp,
        val_fraction=args.val_fraction, patience=args.patience,
        freeze_mp=args.freeze_mp, seed=args.seed,
        allow_small=args.allow_small)


def cmd_finetune(args) -> None:
    ckpt = train_mod.load_checkpoint(args.checkpoint)
    rows = train_mod.read_labeled_csv(args.data)
    rows = [r for r in rows if r.split in (None, "train")]
    if not rows:
        raise InputError(f"{args.data}: no training rows")
    smiles = [r.smiles for r in rows]
    labels = np.array([r.target for r in rows])
    model, history = train_mod.finetune(
        ckpt, smiles, labels, _finetune_cfg_from_args(args))
    train_mod.save_finetuned(model, args.out)
    with open(args.out + ".history.csv", "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for h in history:
            writer.writerow([h["epoch"], repr(h["train_loss"]),
                             repr(h["val_loss"])])
    _echo_config(args, args.out)


def cmd_predict(args) -> None:
    model = train_mod.load_finetuned(args.model)
    if args.data.endswith(".csv"):
        rows = _read_smiles_csv(args.data)
        smiles = [s for s, _, _ in rows]
        ids = [row.get("id") or str(i) for i, (_, row, _) in enumerate(rows)]
    else:
        records = read_smiles_file(args.data)
        smiles = [r.smiles for r in records]
        ids = [r.mol_id for r in records]
    try:
        preds = train_mod.predict(model, smiles)
    except InputError as e:
        raise InputError(f"{args.data}: {e}") from e
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "smiles", "prediction"])
        for mid, smi, p in zip(ids, smiles, preds):
            writer.writerow([mid, smi, repr(float(p))])
    _echo_config(args, args.out)


# -- benchmark ---------------------------------------------------------------

def _load_suite(path) -> list[stats_mod.Benchmark]:
    with open(path, "r", encoding="utf-8") as fh:
        suite = json.load(fh)
    entries = suite.get("benchmarks")
    if not isinstance(entries, list) or not entries:
        raise InputError(f"{path}: suite JSON needs a 'benchmarks' list")
    base = os.path.dirname(os.path.abspath(path))
    benchmarks = []
    for i, entry in enumerate(entries):
        try:
            name = entry["name"]
            dataset = entry["dataset"]
            task = entry.get("task", "regression")
            metric = entry.get("metric", "rmse")
            orientation = entry.get("orientation", "lower_better")
        except (KeyError, TypeError) as e:
            raise InputError(f"{path}: benchmark {i}: missing field {e}") from e
        cliff_column = entry.get("cliff_column")
        dataset_path = dataset if os.path.isabs(dataset) \
            else os.path.join(base, dataset)
        rows = train_mod.read_labeled_csv(dataset_path, cliff_column)
        train_rows = [r for r in rows if r.split == "train"]
        test_rows = [r for r in rows if r.split == "test"]
        if not train_rows or not test_rows:
            raise InputError(
                f"{dataset_path}: benchmark datasets need explicit "
                f"train and test split rows")
        cliff = None
        if cliff_column is not None:
            cliff = np.array([bool(r.cliff) for r in test_rows])
        benchmarks.append(stats_mod.Benchmark(
            name=name,
            train_smiles=tuple(r.smiles for r in train_rows),
            train_labels=np.array([r.target for r in train_rows]),
            test_smiles=tuple(r.smiles for r in test_rows),
            test_labels=np.array([r.target for r in test_rows]),
            task=task, metric=metric, orientation=orientation,
            cliff_labels=cliff))
    return benchmarks


def _finetune_cfg_from_entry(entry: dict, task: str) -> train_mod.FinetuneConfig:
    return train_mod.FinetuneConfig(
        task=task,
        epochs=int(entry.get("epochs", 100)),
        batch_size=int(entry.get("batch_size", 32)),
        lr_head=float(entry.get("lr_head", 1e-3)),
        lr_mp=entry.get("lr_mp"),
        val_fraction=float(entry.get("val_fraction", 0.1)),
        patience=int(entry.get("patience", 10)),
        freeze_mp=bool(entry.get("freeze_mp", False)),
        allow_small=bool(entry.get("allow_small", False)),
    )


def _model_spec(entry: dict, task: str, base: str) -> stats_mod.ModelSpec:
    kind = entry.get("kind")
    name = entry.get("name", kind)

    def _resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    if kind == "finetune":
        ckpt = train_mod.load_checkpoint(_resolve(entry["checkpoint"]))

        def fit(train_smiles, train_labels, seed):
            cfg = _finetune_cfg_from_entry(entry, task)
            cfg = train_mod.FinetuneConfig(**{**cfg.__dict__, "seed": seed})
            model, _ = train_mod.finetune(ckpt, list(train_smiles),
                                          train_labels, cfg)
            return model.predict
    elif kind == "random_mpnn":
        arch = dmpnn.MpnnConfig(
            hidden_size=int(entry.get("hidden_size", 128)),
            depth=int(entry.get("depth", 3)),
            ffn_layers=int(entry.get("ffn_layers", 3)),
            output_dim=len(DESCRIPTOR_NAMES))

        def fit(train_smiles, train_labels, seed):
            cfg = _finetune_cfg_from_entry(entry, task)
            cfg = train_mod.FinetuneConfig(**{**cfg.__dict__, "seed": seed})
            ckpt = train_mod.random_checkpoint(arch, DESCRIPTOR_NAMES, seed)
            model, _ = train_mod.finetune(ckpt, list(train_smiles),
                                          train_labels, cfg)
            return model.predict
    elif kind == "descriptor_fnn":
        hidden = tuple(entry.get("hidden", (1800, 1800)))

        def fit(train_smiles, train_labels, seed):
            cfg = _finetune_cfg_from_entry(entry, task)
            cfg = train_mod.FinetuneConfig(**{**cfg.__dict__, "seed": seed})
            mols = [parse_smiles(s) for s in train_smiles]
            model, _ = baselines.descriptor_fnn_fit(mols, train_labels, cfg,
                                                    hidden)
            return lambda smiles: model.predict(
                [parse_smiles(s) for s in smiles])
    elif kind == "pcamlp":
        hidden = tuple(entry.get("hidden", (1800, 1800)))
        prefitted = None
        if entry.get("mode", "local") == "prefitted":
            prefitted = baselines.load_pca(_resolve(entry["pca"]))
        threshold = float(entry.get("variance_threshold", 0.95))

        def fit(train_smiles, train_labels, seed):
            cfg = _finetune_cfg_from_entry(entry, task)
            cfg = train_mod.FinetuneConfig(**{**cfg.__dict__, "seed": seed})
            mols = [parse_smiles(s) for s in train_smiles]
            model, _ = baselines.pcamlp_fit(mols, train_labels, cfg, hidden,
                                            prefitted, threshold)
            return lambda smiles: model.predict(
                [parse_smiles(s) for s in smiles])
    else:
        raise InputError(f"unknown model kind {kind!r}")
    return stats_mod.ModelSpec(name, fit)


def cmd_benchmark(args) -> None:
    benchmarks = _load_suite(args.suite)
    with open(args.models, "r", encoding="utf-8") as fh:
        roster = json.load(fh)
    entries = roster.get("models")
    if not isinstance(entries, list) or not entries:
        raise InputError(f"{args.models}: roster JSON needs a 'models' list")
    base = os.path.dirname(os.path.abspath(args.models))

    all_results = []
    for bench in benchmarks:
        for entry in entries:
            spec = _model_spec(entry, bench.task, base)
            log.info("running %s on %s (%d replicates)", spec.name,
                     bench.name, args.reps)
            results = stats_mod.run_replicates(bench, spec, args.reps,
                                               workers=args.workers)
            all_results.extend(results)
    stats_mod.write_results_csv(all_results, args.out)
    _echo_config(args, args.out)


def cmd_report(args) -> None:
    results = stats_mod.read_results_csv(args.results)
    report = stats_mod.build_report(results, alpha=args.alpha)
    stats_mod.write_report(report, args.out_dir)
    _echo_config(args, args.out_dir, target_is_dir=True)
    sys.stdout.write(stats_mod.report_tables(report))


def cmd_fingerprint(args) -> None:
    mols, ids = _parse_corpus(args.input)
    if args.morgan:
        vecs = np.stack([
            embed.morgan_fingerprint(m, args.radius, args.width).astype(np.float64)
            for m in mols])
    else:
        if args.model is None:
            raise InputError("fingerprint needs --model or --morgan")
        kind, _, _ = train_mod.load_container(args.model)
        if kind == "finetuned":
            model = train_mod.load_finetuned(args.model)
            cfg, weights = model.config, model.weights
        else:
            ckpt = train_mod.load_checkpoint(args.model)
            cfg, weights = ckpt.config, ckpt.weights
        from .tensor import Tensor
        vecs = dmpnn.fingerprint(mols, cfg,
                                 {k: Tensor(v) for k, v in weights.items()})
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"e{i}" for i in range(vecs.shape[1])])
        for mid, v in zip(ids, vecs):
            writer.writerow([mid] + [repr(float(x)) for x in v])
    _echo_config(args, args.out)


def cmd_project(args) -> None:
    if args.series:
        if args.model is None and not args.morgan:
            raise InputError("--series projection needs --model or --morgan")
        series_list = embed.load_series_json(args.series)
        if args.morgan:
            def fp_fn(mols):
                return np.stack([
                    embed.morgan_fingerprint(m, args.radius, args.width)
                    .astype(np.float64) for m in mols])
        else:
            ckpt = train_mod.load_checkpoint(args.model)

            def fp_fn(mols):
                return train_mod.checkpoint_fingerprints(ckpt, mols)
        ids, labels, mols = [], [], []
        for si, s in enumerate(series_list):
            mols.append(s.lead)
            ids.append(s.lead_smiles or f"series{si}-lead")
            labels.append(f"series{si}")
            for mi, member in enumerate(s.members):
                mols.append(member)
                ids.append(s.member_smiles[mi] if s.member_smiles
                           else f"series{si}-m{mi}")
                labels.append(f"series{si}")
        points = fp_fn(mols)
    else:
        if args.embeddings is None:
            raise InputError("project needs --embeddings or --series")
        ids, labels, rows = [], [], []
        with open(args.embeddings, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0] != "id":
                raise InputError(f"{args.embeddings}: expected an embeddings "
                                 f"CSV with an 'id' first column")
            for lineno, row in enumerate(reader, start=2):
                try:
                    ids.append(row[0])
                    rows.append([float(x) for x in row[1:]])
                except (IndexError, ValueError) as e:
                    raise InputError(
                        f"{args.embeddings}:{lineno}: {e}") from e
                labels.append("")
        points = np.array(rows)

    result = embed.tsne(points, perplexity=args.perplexity, iters=args.iters,
                        lr=args.lr, seed=args.seed, init=args.init)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "series_label"])
        for mid, (x, y), lab in zip(ids, result.coords, labels):
            writer.writerow([mid, repr(float(x)), repr(float(y)), lab])
    _echo_config(args, args.out)
    log.info("t-SNE KL %.4f -> %.4f", result.kl_initial, result.kl_final)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="molpret",
        description="Descriptor-pretrained molecular property prediction")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="SMILES corpus -> descriptor matrix")
    p.add_argument("--input", required=True, help="SMILES corpus file")
    p.add_argument("--out", required=True, help="output .chmd path")
    p.add_argument("--csv", default=None, help="also export CSV here")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("pretrain", help="descriptor-target pre-training")
    p.add_argument("--corpus", required=True)
    p.add_argument("--descriptors", required=True, help=".chmd from featurize")
    p.add_argument("--out", required=True, help="output checkpoint (.chmc)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--mask-fraction", type=float, default=0.15)
    p.add_argument("--clip-sigmas", type=float, default=6.0)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden-size", type=int, default=128)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--ffn-layers", type=int, default=3)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fit a head on a labeled CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CSV with smiles,target")
    p.add_argument("--out", required=True)
    p.add_argument("--task", default="regression",
                   choices=["regression", "binary_classification"])
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr-head", type=float, default=1e-3)
    p.add_argument("--lr-mp", type=float, default=None)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--freeze-mp", action="store_true")
    p.add_argument("--allow-small", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="apply a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV or SMILES file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="replicate runs over a suite")
    p.add_argument("--suite", required=True, help="suite JSON")
    p.add_argument("--models", required=True, help="model roster JSON")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--workers", type=int,
                   default=int(os.environ.get("MOLPRET_WORKERS", "1")))
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="Tukey winners, win rates, consistency")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fingerprint", help="emit embeddings as CSV")
    p.add_argument("--input", required=True, help="SMILES corpus file")
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="checkpoint or fitted model")
    p.add_argument("--morgan", action="store_true",
                   help="Morgan counts instead of the learned representation")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--width", type=int, default=2048)
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("project", help="t-SNE to 2-D coordinates")
    p.add_argument("--embeddings", default=None, help="CSV from fingerprint")
    p.add_argument("--series", default=None, help="series JSON")
    p.add_argument("--model", default=None, help="checkpoint for --series")
    p.add_argument("--morgan", action="store_true")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--out", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--lr", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", default="pca", choices=["pca", "random"])
    p.set_defaults(func=cmd_project)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (InputError, FileFormatError, SmilesError, FileNotFoundError,
            json.JSONDecodeError, UnicodeDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
