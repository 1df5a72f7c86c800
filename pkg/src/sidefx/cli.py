"""Command-line interface: ``sidefx {preprocess,cv,train,evaluate,predict,stats}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifact import ArtifactError, ModelArtifact, file_fingerprint, load_model, save_model
from .config import load_config
from .dataset import (
    DatasetFormatError,
    SiderFormatError,
    build_dataset,
    dataset_stats,
    load_dataset,
    make_folds,
    parse_sider_tsv,
    save_dataset,
)
from .fileio import atomic_write_text
from .gnn import predict_scores
from .molgraph import UnmappedElement, molecule_to_graph
from .nn import NumericalFault
from .pubchem import PubChemClient, SmilesCache, default_cache, fetch_smiles
from .smiles import SmilesError, parse_smiles, read_smiles_csv
from .training import cross_validate, evaluate, fit, split_validation, train_fold

log = logging.getLogger("sidefx")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _load_dataset(path):
    try:
        return load_dataset(path)
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    except (DatasetFormatError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"bad dataset file {path}: {exc}") from None


def _config(args):
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        raise DataError(f"config file not found: {args.config}") from None
    except ValueError as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from None
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threshold", None) is not None:
        cfg.threshold = args.threshold
    if getattr(args, "max_epochs", None) is not None:
        cfg.max_epochs = args.max_epochs
    return cfg


# -- commands ---------------------------------------------------------------


def cmd_preprocess(args) -> int:
    try:
        raw = parse_sider_tsv(args.sider)
    except FileNotFoundError:
        raise DataError(f"SIDER table not found: {args.sider}") from None
    except SiderFormatError as exc:
        raise DataError(f"{args.sider}: {exc}") from None

    if args.smiles:
        try:
            table = dict(read_smiles_csv(args.smiles))
        except FileNotFoundError:
            raise DataError(f"SMILES table not found: {args.smiles}") from None
        except ValueError as exc:
            raise DataError(str(exc)) from None
        resolve = table.__getitem__
    else:
        cache = SmilesCache(args.cache_dir) if args.cache_dir else default_cache()
        client = PubChemClient(args.base_url)
        resolve = lambda sid: fetch_smiles(sid, client, cache)  # noqa: E731

    ds, manifest = build_dataset(
        raw,
        resolve,
        min_se_occ=args.min_se_occ,
        drug_se_min=args.drug_se_min,
        drug_se_max=args.drug_se_max,
        k=args.folds,
        seed=args.seed,
        workers=args.workers,
    )
    if not ds.drugs:
        raise DataError("no drugs survived preprocessing")
    out = Path(args.out)
    save_dataset(ds, out)
    atomic_write_text(out.with_name(out.name + ".manifest.json"), _dump(manifest.to_dict()))
    stats = dataset_stats(ds)
    atomic_write_text(out.with_name(out.name + ".stats.json"), _dump(stats))
    log.info(
        "%d drugs, %d side effects, %d associations",
        stats["num_drugs"], stats["vocab_size"], stats["total_associations"],
    )
    return EXIT_OK


def _refold(ds, folds: int | None, seed: int):
    if folds is not None and folds != ds.k:
        try:
            ds.folds = make_folds(len(ds.drugs), folds, seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return ds


def _history_lines(history) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in history.epochs)


def cmd_cv(args) -> int:
    ds = _load_dataset(args.dataset)
    cfg = _config(args)
    ds = _refold(ds, args.folds if args.folds is not None else cfg.k_folds, cfg.seed)
    result = cross_validate(ds, cfg, workers=args.workers)
    out = Path(args.out)
    for i, (report, history) in enumerate(zip(result.reports, result.histories)):
        doc = {
            "fold": i,
            "stop_reason": history.stop_reason,
            "best_epoch": history.best_epoch,
            "metrics": report.to_dict(),
        }
        atomic_write_text(out / f"fold_{i}.json", _dump(doc))
        atomic_write_text(out / f"history_{i}.jsonl", _history_lines(history))
    atomic_write_text(out / "aggregate.json", _dump({"folds": len(result.reports), "metrics": result.aggregate}))
    sys.stdout.write(_dump(result.aggregate))
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load_dataset(args.dataset)
    cfg = _config(args)
    if args.fold is not None:
        if not 0 <= args.fold < ds.k:
            raise UsageError(f"fold must be in [0, {ds.k})")
        params, history = train_fold(ds, args.fold, cfg)
    else:
        rng = np.random.default_rng(cfg.seed)
        fit_idx, val_idx = split_validation(np.arange(len(ds.drugs)), cfg.validation_fraction, rng)
        params = cfg.model.build(ds.num_classes, rng)
        params, history = fit(
            params, [ds.drugs[i] for i in fit_idx], cfg, val=[ds.drugs[i] for i in val_idx], rng=rng
        )
    train_cfg = cfg.to_dict()
    train_cfg["held_out_fold"] = args.fold
    art = ModelArtifact(params, ds.vocab, train_cfg, file_fingerprint(args.dataset))
    save_model(art, args.out)
    if args.history:
        atomic_write_text(args.history, _history_lines(history))
    log.info("stopped after %d epochs (%s)", len(history.epochs), history.stop_reason)
    return EXIT_OK


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    except ArtifactError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_evaluate(args) -> int:
    art = _load_model(args.model)
    ds = _load_dataset(args.dataset)
    if [v.id for v in ds.vocab] != [v.id for v in art.vocab]:
        raise DataError("dataset vocabulary does not match the model")
    if args.fold is not None:
        if not 0 <= args.fold < ds.k:
            raise UsageError(f"fold must be in [0, {ds.k})")
        idx = ds.fold_indices(args.fold)
    else:
        idx = np.arange(len(ds.drugs))
    threshold = args.threshold if args.threshold is not None else 0.5
    report = evaluate(art.params, ds, idx, threshold)
    _write_or_print(_dump(report.to_dict()), args.out)
    return EXIT_OK


def _read_predict_inputs(args) -> list[tuple[int, str, str]]:
    if args.smiles:
        return [(1, args.smiles, "")]
    try:
        text = Path(args.input).read_text()
    except FileNotFoundError:
        raise DataError(f"input file not found: {args.input}") from None
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        smiles, _, name = line.partition(" ")
        items.append((lineno, smiles, name.strip()))
    return items


def cmd_predict(args) -> int:
    art = _load_model(args.model)
    items = _read_predict_inputs(args)
    results, graphs, slots = [], [], []
    for lineno, smiles, name in items:
        rec = {"line": lineno, "smiles": smiles, "name": name}
        try:
            g = molecule_to_graph(parse_smiles(smiles), art.params.num_classes)
        except (SmilesError, UnmappedElement) as exc:
            rec["error"] = str(exc)
            log.warning("line %d: %s", lineno, exc)
        else:
            slots.append(len(results))
            graphs.append(g)
        results.append(rec)

    scores = predict_scores(art.params, graphs) if graphs else np.zeros((0, art.params.num_classes))
    for slot, row in zip(slots, scores):
        hits = np.flatnonzero(row > args.threshold)
        hits = hits[np.lexsort((hits, -row[hits]))]
        if args.top is not None:
            hits = hits[: args.top]
        results[slot]["predictions"] = [
            {"id": art.vocab[i].id, "name": art.vocab[i].name, "score": float(row[i])} for i in hits
        ]
        if args.format == "json":
            results[slot]["scores"] = row.tolist()

    if args.format == "json":
        text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in results)
    else:
        buf = io.StringIO()
        for r in results:
            label = f"{r['smiles']}" + (f" ({r['name']})" if r["name"] else "")
            if "error" in r:
                buf.write(f"# line {r['line']}: {label}\n  ERROR {r['error']}\n")
                continue
            buf.write(f"# line {r['line']}: {label}: {len(r['predictions'])} predicted side effects\n")
            for p in r["predictions"]:
                buf.write(f"  {p['score']:.4f}  {p['id']}  {p['name']}\n")
        text = buf.getvalue()
    _write_or_print(text, args.out)
    return EXIT_DATA if items and not graphs else EXIT_OK


def cmd_stats(args) -> int:
    ds = _load_dataset(args.dataset)
    stats = dataset_stats(ds)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["side_effects_per_drug", "num_drugs"])
    writer.writerows(stats["histogram"])
    _write_or_print(buf.getvalue(), args.out)
    summary = {k: v for k, v in stats.items() if k != "histogram"}
    if args.summary:
        atomic_write_text(args.summary, _dump(summary))
    log.info("%s", summary)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sidefx", description="Drug side-effect prediction on molecular graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="build a dataset file from a SIDER table")
    p.add_argument("--sider", required=True, help="SIDER meddra_all_se-style TSV")
    p.add_argument("--smiles", help="CSV of (stereo id, SMILES); skips network lookup")
    p.add_argument("--cache-dir", help="SMILES cache directory (default $SIDEFX_CACHE_DIR)")
    p.add_argument("--base-url", help="compound REST base URL (default $SIDEFX_PUBCHEM_URL)")
    p.add_argument("--min-se-occ", type=int, default=5)
    p.add_argument("--drug-se-min", type=int)
    p.add_argument("--drug-se-max", type=int)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="parallel structure lookups")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default="exp_a", help="config file or preset name")
    p.add_argument("--folds", type=int, help="re-split into this many folds")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("train", help="train a single model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default="exp_a")
    p.add_argument("--fold", type=int, help="hold this fold out")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--history", help="write per-epoch history (JSON lines)")
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a model on a dataset or one fold")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--fold", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="rank side effects for new molecules")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--smiles", help="a single SMILES string")
    src.add_argument("--input", help="file with one SMILES per line (optional name after a space)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--top", type=int)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("stats", help="side effects per drug histogram")
    p.add_argument("--dataset", required=True)
    p.add_argument("--summary", help="also write summary numbers as JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sidefx {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"sidefx {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFault as exc:
        print(f"sidefx {args.command}: numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
