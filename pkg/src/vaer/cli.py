"""Command-line entry points.

Subcommands cover the full pipeline: train or transfer a representation
model, train a matcher on labeled pairs, predict and evaluate, export LSH
candidate pools, generate a synthetic benchmark, and serve the labeling
session over HTTP. The VAER_SEED environment variable overrides --seed for
every command.

Exit codes: 0 success, 2 unusable input (missing file, bad arguments),
3 incompatible dimensions between artifacts, 4 empty truth set, 5 port busy.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import synth
from .active import ALConfig, ALSession
from .corpus import PairSet, Table, align_arity, attribute_sentences, load_pairs, load_table, save_pairs, save_table
from .ir import IRProvider, fit_lsa, load_embeddings, load_precomputed_irs, table_irs
from .matcher import (
    MatchConfig,
    load_matcher,
    predict,
    save_matcher,
    train_matcher,
)
from .metrics import format_report, prf1
from .neighbors import candidate_pairs, save_candidates
from .vae import (
    DimensionMismatch,
    VaeTrainConfig,
    load_model,
    represent_table,
    save_model,
    train_vae,
)

log = logging.getLogger("vaer")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIMS = 3
EXIT_EMPTY_TRUTH = 4
EXIT_PORT_BUSY = 5


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"no such file: {path}")
    return p


def _load_tables(args) -> tuple[Table, Table]:
    path_a, path_b = (_require_file(p) for p in args.tables)
    kwargs = dict(delimiter=args.delimiter, id_column=args.id_column)
    return load_table(path_a, **kwargs), load_table(path_b, **kwargs)


def _build_provider(args, table_a: Table, table_b: Table) -> IRProvider:
    if args.ir == "lsa":
        corpus = attribute_sentences(table_a, table_b)
        return fit_lsa(corpus, dim=args.ir_dim)
    if args.ir == "embed":
        if not args.embeddings:
            raise CliError("--ir embed requires --embeddings FILE")
        return load_embeddings(_require_file(args.embeddings))
    if args.ir == "precomputed":
        if not args.vectors:
            raise CliError("--ir precomputed requires --vectors FILE")
        provider = load_precomputed_irs(_require_file(args.vectors))
        provider.validate(table_a, table_b)
        return provider
    raise CliError(f"unknown IR provider {args.ir!r}")


def _check_dims(provider_dim: int, model_dim: int, what: str) -> None:
    if provider_dim != model_dim:
        raise CliError(
            f"IR dimension {provider_dim} incompatible with {what} input dimension {model_dim}",
            code=EXIT_DIMS,
        )


def _pair_tensors(table_a: Table, table_b: Table, provider: IRProvider, pairs: PairSet):
    irs_a = table_irs(table_a, provider)
    irs_b = table_irs(table_b, provider)
    row_a = {rec.id: i for i, rec in enumerate(table_a.records)}
    row_b = {rec.id: i for i, rec in enumerate(table_b.records)}
    s = irs_a[[row_a[l] for l, _, _ in pairs]]
    t = irs_b[[row_b[r] for _, r, _ in pairs]]
    y = np.array([label for _, _, label in pairs], dtype=np.float64)
    return s, t, y


def cmd_train_repr(args) -> int:
    table_a, table_b = _load_tables(args)
    if table_a.arity != table_b.arity:
        raise CliError(
            f"tables have arities {table_a.arity} and {table_b.arity}; align them first "
            f"(matching assumes aligned attributes)"
        )
    provider = _build_provider(args, table_a, table_b)
    if args.transfer:
        model = load_model(_require_file(args.transfer))
        _check_dims(provider.dim, model.input_dim, "transferred model")
        if model.arity is not None and (table_a.arity != model.arity or table_b.arity != model.arity):
            log.info(
                "aligning tables from arity %d/%d to the transferred model's %d",
                table_a.arity, table_b.arity, model.arity,
            )
        log.info("transfer: reusing %s, representation training skipped", args.transfer)
        save_model(model, args.out)
        log.info("wrote %s", args.out)
        return EXIT_OK
    irs = np.concatenate([table_irs(table_a, provider), table_irs(table_b, provider)])
    config = VaeTrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        hidden_dim=args.hidden,
        latent_dim=args.latent,
    )
    model = train_vae(irs, config, ir_fingerprint=provider.fingerprint())
    for epoch, loss in enumerate(model.train_history, start=1):
        log.info("epoch %d: loss %.6f", epoch, loss)
    save_model(model, args.out)
    log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_match(args) -> int:
    table_a, table_b = _load_tables(args)
    provider = _build_provider(args, table_a, table_b)
    vae = load_model(_require_file(args.vae))
    _check_dims(provider.dim, vae.input_dim, "representation model")
    if vae.arity is not None:
        table_a = align_arity(table_a, vae.arity)
        table_b = align_arity(table_b, vae.arity)
    pairs = load_pairs(_require_file(args.train))
    pairs.validate_against(table_a, table_b)
    s, t, y = _pair_tensors(table_a, table_b, provider, pairs)
    config = MatchConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        margin=args.margin,
        threshold=args.threshold,
    )
    result = train_matcher(s, t, y, vae, config)
    log.info(
        "held-out F1 %.4f on %d pairs (training F1 history: %s)",
        result.holdout_f1,
        result.holdout_size,
        " ".join(f"{f:.2f}" for f in result.f1_history),
    )
    save_matcher(result.model, args.out, vae_fingerprint=vae.ir_fingerprint)
    log.info("wrote %s", args.out)
    return EXIT_OK


def _load_id_pairs(path: Path) -> list[tuple[str, str]]:
    """left_id,right_id pairs; a trailing label column is tolerated and ignored."""
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["left_id", "right_id"]:
            raise CliError(f"{path}: expected header left_id,right_id[,label]")
        return [(row[0], row[1]) for row in reader if row]


def cmd_predict(args) -> int:
    table_a, table_b = _load_tables(args)
    matcher = load_matcher(_require_file(args.matcher))
    provider = _build_provider(args, table_a, table_b)
    _check_dims(provider.dim, matcher.input_dim, "matching model")
    table_a = align_arity(table_a, matcher.arity)
    table_b = align_arity(table_b, matcher.arity)
    id_pairs = _load_id_pairs(_require_file(args.pairs))
    pair_set = PairSet(tuple((l, r, 0) for l, r in id_pairs))
    pair_set.validate_against(table_a, table_b)
    s, t, _ = _pair_tensors(table_a, table_b, provider, pair_set)
    results = predict(matcher, list(zip(s, t)), threshold=args.threshold)
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["left_id", "right_id", "probability", "label"])
        for (l, r), (p, label) in zip(id_pairs, results):
            writer.writerow([l, r, repr(p), label])
    log.info("wrote %s (%d pairs)", args.out, len(id_pairs))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    truth = load_pairs(_require_file(args.truth))
    if len(truth) == 0:
        raise CliError("empty truth set", code=EXIT_EMPTY_TRUTH)
    pred_path = _require_file(args.pred)
    predictions: dict[tuple[str, str], int] = {}
    with pred_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "label" not in header:
            raise CliError(f"{pred_path}: expected prediction CSV with a label column")
        label_idx = header.index("label")
        for row in reader:
            if row:
                predictions[(row[0], row[1])] = int(row[label_idx])
    try:
        result = prf1(predictions, truth)
    except KeyError as exc:
        raise CliError(str(exc)) from None
    print(format_report({"evaluation": result}))
    if args.out:
        with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["precision", "recall", "f1", "tp", "fp", "fn", "tn"])
            writer.writerow(
                [result.precision, result.recall, result.f1,
                 result.counts.tp, result.counts.fp, result.counts.fn, result.counts.tn]
            )
        log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_candidates(args) -> int:
    table_a, table_b = _load_tables(args)
    provider = _build_provider(args, table_a, table_b)
    vae = load_model(_require_file(args.vae))
    _check_dims(provider.dim, vae.input_dim, "representation model")
    if vae.arity is not None:
        table_a = align_arity(table_a, vae.arity)
        table_b = align_arity(table_b, vae.arity)
    reprs_a = dict(zip((r.id for r in table_a.records), represent_table(vae, table_irs(table_a, provider))))
    reprs_b = dict(zip((r.id for r in table_b.records), represent_table(vae, table_irs(table_b, provider))))
    pool = candidate_pairs(reprs_a, reprs_b, k=args.k, seed=args.seed)
    save_candidates(pool, args.out)
    log.info("wrote %s (%d pairs)", args.out, len(pool))
    return EXIT_OK


def cmd_synth(args) -> int:
    bench = synth.make_benchmark(seed=args.seed, n_left=args.records, n_right=args.records,
                                 n_duplicates=args.duplicates, arity=args.arity)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_table(bench.table_a, out / "table_a.csv")
    save_table(bench.table_b, out / "table_b.csv")
    save_pairs(bench.duplicates, out / "duplicates.csv")
    save_pairs(bench.train, out / "train.csv")
    save_pairs(bench.test, out / "test.csv")
    log.info("wrote benchmark to %s", out)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import SessionService, serve  # deferred: not needed by batch commands

    table_a, table_b = _load_tables(args)
    provider = _build_provider(args, table_a, table_b)
    vae = load_model(_require_file(args.vae))
    _check_dims(provider.dim, vae.input_dim, "representation model")
    if vae.arity is not None:
        table_a = align_arity(table_a, vae.arity)
        table_b = align_arity(table_b, vae.arity)
    from .active import encode_table

    left = encode_table(table_a, provider, vae)
    right = encode_table(table_b, provider, vae)
    test_pairs = None
    if args.test_pairs:
        test_pairs = load_pairs(_require_file(args.test_pairs))
        test_pairs.validate_against(table_a, table_b)
    config = ALConfig(
        k=args.k,
        batch_size=args.batch,
        seed=args.seed,
        match=MatchConfig(seed=args.seed, margin=args.margin, holdout_fraction=0.0),
    )
    journal = Path(args.journal) if args.journal else None
    if journal is not None and journal.exists():
        session = ALSession.resume(journal, left, right, vae, config=config, test_pairs=test_pairs)
        log.info("resumed session %s at iteration %d", session.session_id, session.iteration)
    else:
        session = ALSession(left, right, vae, config=config, test_pairs=test_pairs, journal_path=journal)
    service = SessionService(session, max_iterations=args.iterations, matcher_out=args.out)
    try:
        serve(service, host=args.host, port=args.port)
    except OSError as exc:
        raise CliError(f"cannot bind port {args.port}: {exc}", code=EXIT_PORT_BUSY) from None
    return EXIT_OK


def _add_table_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tables", nargs=2, metavar=("A", "B"), required=True, help="left and right CSV tables")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--id-column", default=None, help="header name of an id column, if any")


def _add_ir_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ir", choices=["lsa", "embed", "precomputed"], default="lsa")
    p.add_argument("--ir-dim", type=int, default=300, help="LSA dimension")
    p.add_argument("--embeddings", help="word2vec-style text file for --ir embed")
    p.add_argument("--vectors", help="precomputed IR CSV for --ir precomputed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vaer", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="overridden by VAER_SEED if set")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-repr", help="train (or transfer) the representation model")
    _add_table_args(p)
    _add_ir_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--hidden", type=int, default=200)
    p.add_argument("--latent", type=int, default=100)
    p.add_argument("--transfer", help="existing model file; skips training")
    p.set_defaults(func=cmd_train_repr)

    p = sub.add_parser("match", help="train the matcher on labeled pairs")
    _add_table_args(p)
    _add_ir_args(p)
    p.add_argument("--train", required=True, help="CSV left_id,right_id,label")
    p.add_argument("--vae", required=True, help="representation model file")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("predict", help="label pairs with a trained matcher")
    _add_table_args(p)
    _add_ir_args(p)
    p.add_argument("--matcher", required=True)
    p.add_argument("--pairs", required=True, help="CSV left_id,right_id[,label]")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against a truth pair set")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="optional metrics CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("candidates", help="export the LSH candidate pool")
    _add_table_args(p)
    _add_ir_args(p)
    p.add_argument("--vae", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_candidates)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--records", type=int, default=500)
    p.add_argument("--duplicates", type=int, default=100)
    p.add_argument("--arity", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the labeling session HTTP service")
    _add_table_args(p)
    _add_ir_args(p)
    p.add_argument("--vae", required=True)
    p.add_argument("--port", type=int, default=8571)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--iterations", type=int, default=25)
    p.add_argument("--test-pairs")
    p.add_argument("--journal")
    p.add_argument("--out", help="write the final matcher here on finish")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    if "VAER_SEED" in os.environ:
        args.seed = int(os.environ["VAER_SEED"])
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except DimensionMismatch as exc:
        log.error("%s", exc)
        return EXIT_DIMS
    except (OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
