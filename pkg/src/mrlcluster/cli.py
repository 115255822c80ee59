"""Command-line surface: cluster, eval, tune, relsim, loss-check, keywords.

Exit codes: 0 on success, 2 for malformed or inconsistent input, 3 when an
internal invariant check fails (a bug, not an input problem). The
MRL_THREADS environment variable caps worker threads; 0 or unset means
auto.
"""

from __future__ import annotations

import argparse
import csv
import io as std_io
import json
import os
import sys

from . import io as mio
from .cluster import ClusterTree, levelwise_rac
from .core import EmbeddingMatrix, validate_dataset
from .errors import FormatError, InvariantViolation, MrlError, ZeroVariance
from .keywords import hierarchy_keywords, load_stopwords
from .losses import gradient_check_suite
from .metrics import (
    EvalReport,
    auroc_at_levels,
    pair_prefix_cosines,
    pairwise_prf,
    pearson,
    relational_similarity,
    tune_lambda,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _workers(args) -> int:
    if getattr(args, "workers", None):
        return args.workers
    env = os.environ.get("MRL_THREADS", "0")
    try:
        value = int(env)
    except ValueError:
        raise FormatError(f"MRL_THREADS must be an integer, got {env!r}")
    if value < 0:
        raise FormatError(f"MRL_THREADS must be >= 0, got {value}")
    return value or (os.cpu_count() or 1)


def _load_matrix(args, emb_attr="embeddings", ids_attr="ids") -> EmbeddingMatrix:
    return mio.read_embeddings(getattr(args, emb_attr), getattr(args, ids_attr))


def cmd_cluster(args) -> int:
    matrix = _load_matrix(args)
    config = mio.load_config(args.config)
    scheme = config.scheme_for(matrix.d)
    tree = levelwise_rac(matrix, scheme, workers=_workers(args))
    mio.write_tree(args.out, tree)
    sizes = " > ".join(str(len(layer)) for layer in tree.layers)
    print(f"wrote {args.out}: {matrix.n} documents, layer sizes {sizes}")
    return EXIT_OK


def _report_csv(report: EvalReport) -> str:
    buffer = std_io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(report.to_csv_rows())
    return buffer.getvalue()


def _emit_report(report: EvalReport, args) -> None:
    payload = json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    if args.out_json:
        mio.atomic_write_text(args.out_json, payload)
    if args.out_csv:
        mio.atomic_write_text(args.out_csv, _report_csv(report))
    sys.stdout.write(payload)


def cmd_eval(args) -> int:
    report = EvalReport()
    if args.pred_tree or args.gold_tree:
        if not (args.pred_tree and args.gold_tree):
            raise FormatError("tree evaluation needs both --pred-tree and --gold-tree")
        predicted = mio.read_tree(args.pred_tree)
        gold = mio.read_tree(args.gold_tree)
        if predicted.doc_ids != gold.doc_ids:
            raise FormatError("trees cover different documents or orderings")
        if predicted.depth != gold.depth:
            raise FormatError(
                f"trees have different depths: {predicted.depth} vs {gold.depth}"
            )
        for level in range(1, predicted.depth + 1):
            pred_part = [c.members for c in predicted.layer(level)]
            gold_part = [c.members for c in gold.layer(level)]
            report.pairwise[level] = pairwise_prf(pred_part, gold_part)
    else:
        if not (args.embeddings and args.ids and args.pairs and args.prefix):
            raise FormatError(
                "metric evaluation needs --embeddings, --ids, --pairs, and --prefix"
            )
        matrix = _load_matrix(args)
        pairs = mio.read_pairs(args.pairs)
        validate_dataset(matrix, pairs)
        ordinal = [p for p in pairs if p.label is not None]
        scored = [p for p in pairs if p.score is not None]
        basis = ordinal if len(ordinal) >= 2 else scored
        if len(ordinal) >= 2 and scored:
            report.notes.append(
                f"pearson computed over the {len(ordinal)} graded pairs; "
                f"{len(scored)} scored pairs not mixed in"
            )
        try:
            cosines = pair_prefix_cosines(matrix, basis, args.prefix)
            targets = [
                float(p.label) if p.label is not None else float(p.score)
                for p in basis
            ]
            report.pearson = pearson(cosines, targets)
        except (ZeroVariance, ValueError) as exc:
            report.notes.append(f"pearson undefined: {exc}")
        if ordinal:
            report.auroc = auroc_at_levels(ordinal, matrix, args.prefix)
        else:
            report.notes.append("auroc undefined: no graded pairs")
    _emit_report(report, args)
    defined = (
        report.pearson is not None
        or any(v is not None for v in report.auroc.values())
        or bool(report.pairwise)
        or bool(report.relsim)
    )
    return EXIT_OK if defined else EXIT_INPUT


def _parse_grid(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise FormatError(f"grid must be lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise FormatError(f"grid values must be numeric, got {text!r}") from None
    return lo, hi, step


def cmd_tune(args) -> int:
    matrix = _load_matrix(args)
    pairs = mio.read_pairs(args.pairs)
    validate_dataset(matrix, pairs)
    default_prefix = matrix.d * args.level // 4 if args.level < 3 else matrix.d
    prefix = args.prefix or default_prefix
    lam, f1 = tune_lambda(matrix, pairs, prefix, args.level, _parse_grid(args.grid))
    print(f"lambda*={lam:.6g} f1*={f1:.6g} (level {args.level}, prefix {prefix})")
    if args.write:
        config = mio.load_config(args.write)
        lambdas = list(config.lambdas)
        lambdas[args.level - 1] = lam
        updated = []
        updated.append(f"lambdas = [{', '.join(format(v, '.6g') for v in lambdas)}]")
        updated.append(f"tau = {config.tau!r}")
        if config.levels is not None:
            updated.append(f"levels = [{', '.join(str(v) for v in config.levels)}]")
        updated.append(f"grid = [{', '.join(format(v, '.6g') for v in config.grid)}]")
        if config.stopwords is not None:
            updated.append(f'stopwords = "{config.stopwords}"')
        updated.append(f"top_k = {config.top_k}")
        mio.atomic_write_text(args.write, "\n".join(updated) + "\n")
        print(f"updated {args.write}")
    return EXIT_OK


def _matrix_maybe_ids(emb_path, ids_path) -> EmbeddingMatrix:
    if ids_path:
        return mio.read_embeddings(emb_path, ids_path)
    # ids are irrelevant for relational similarity; synthesize row names
    data = mio.read_embedding_data(emb_path)
    ids = tuple(f"row{i}" for i in range(data.shape[0]))
    try:
        return EmbeddingMatrix(data=data.astype("float64"), ids=ids)
    except ValueError as exc:
        raise FormatError(str(exc), path=emb_path) from exc


def cmd_relsim(args) -> int:
    a = _matrix_maybe_ids(args.embeddings_a, args.ids_a)
    b = _matrix_maybe_ids(args.embeddings_b, args.ids_b)
    if a.n != b.n:
        raise FormatError(f"row count mismatch: {a.n} vs {b.n}")
    value = relational_similarity(a, b)
    print(f"{value:.3f}")
    return EXIT_OK


def cmd_loss_check(args) -> int:
    records = gradient_check_suite(
        n_rows=args.n, dim=args.dim, seed=args.seed,
        batches=args.batches, tolerance=args.tolerance,
    )
    width = max(len(r["kernel"]) for r in records)
    failures = 0
    for rec in records:
        err = "-" if rec["max_rel_err"] is None else format(rec["max_rel_err"], ".3e")
        note = f"  {rec['note']}" if rec["note"] else ""
        print(f"{rec['kernel']:<{width}}  batch {rec['batch']:>3}  {err:>10}  {rec['status']}{note}")
        if rec["status"] == "FAIL":
            failures += 1
    checked = sum(1 for r in records if r["status"] in ("pass", "FAIL"))
    skipped = sum(1 for r in records if r["status"] == "skipped")
    print(f"{checked} checks, {failures} failures, {skipped} kink-adjacent samples excluded")
    return EXIT_OK if failures == 0 else 1


def cmd_keywords(args) -> int:
    tree = mio.read_tree(args.tree)
    texts = mio.read_texts(args.texts)
    stopwords = load_stopwords(args.stopwords) if args.stopwords else None
    annotated = hierarchy_keywords(tree, texts, args.k, stopwords)
    # order clusters by size (descending) within each layer for presentation
    layers = tuple(
        tuple(sorted(layer, key=lambda c: (-c.size, c.cluster_id)))
        for layer in annotated.layers
    )
    annotated = ClusterTree(layers=layers, doc_ids=annotated.doc_ids)
    mio.write_tree(args.out, annotated)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrlcluster",
        description="Nested-prefix embedding clustering, loss verification, and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="build the theme/topic/story hierarchy")
    p.add_argument("--embeddings", required=True, help="binary embedding file")
    p.add_argument("--ids", required=True, help="ids sidecar, one per line")
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", required=True, help="output tree JSON path")
    p.add_argument("--workers", type=int, default=0, help="worker threads (0 = auto)")
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("eval", help="metric report from pairs or tree-vs-tree")
    p.add_argument("--embeddings")
    p.add_argument("--ids")
    p.add_argument("--pairs", help="JSON-lines labeled pairs")
    p.add_argument("--prefix", type=int, help="prefix length for cosine scoring")
    p.add_argument("--pred-tree", help="predicted tree JSON")
    p.add_argument("--gold-tree", help="gold tree JSON")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("tune", help="grid-search a merge threshold by validation F1")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--ids", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--level", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--grid", required=True, help="lo:hi:step")
    p.add_argument("--prefix", type=int, help="override the level's default prefix")
    p.add_argument("--write", help="config file to patch with the tuned threshold")
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("relsim", help="relational similarity of two aligned matrices")
    p.add_argument("--embeddings-a", required=True)
    p.add_argument("--embeddings-b", required=True)
    p.add_argument("--ids-a")
    p.add_argument("--ids-b")
    p.set_defaults(fn=cmd_relsim)

    p = sub.add_parser("loss-check", help="finite-difference verification of the loss kernels")
    p.add_argument("--n", type=int, default=6, help="rows per batch (even; duplicated)")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(fn=cmd_loss_check)

    p = sub.add_parser("keywords", help="annotate a tree with c-TF-IDF keywords")
    p.add_argument("--tree", required=True)
    p.add_argument("--texts", required=True, help='JSON-lines of {"id", "text"}')
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--stopwords", help="stopword file, one term per line")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_keywords)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (MrlError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
