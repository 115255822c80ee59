"""Evaluation math: correlation, threshold AUROC, pairwise clustering
precision/recall/F1, cross-set relational similarity, and threshold tuning.

Every function here is pure and float64; deterministic reductions make the
values reproducible bit-for-bit across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .core import EmbeddingMatrix, LabeledPair, SimilarityLabel, binarize_label
from .errors import (
    DimOutOfRange,
    EmptyGrid,
    MismatchedDocumentSets,
    SingleClass,
    TooFewSeeds,
    ZeroPrefixNorm,
    ZeroVariance,
)

# AUROC threshold cuts, keyed the way the report prints them: a pair counts
# as positive when its grade is at least the named one.
AUROC_CUTS = (
    ("SD", SimilarityLabel.SOMEWHAT_DISSIMILAR),
    ("SS", SimilarityLabel.SOMEWHAT_SIMILAR),
    ("VS", SimilarityLabel.VERY_SIMILAR),
)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"inputs must be equal-length 1-D sequences, got {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise ValueError("pearson needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(np.dot(dx, dx)))
    sy = math.sqrt(float(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("correlation undefined: an input has zero variance")
    # rounding can push perfectly correlated inputs a few ulp past +-1
    return min(1.0, max(-1.0, float(np.dot(dx, dy)) / (sx * sy)))


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given the average rank of their run."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.shape[0]:
        j = i
        while j + 1 < scores.shape[0] and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability that a random positive outscores a random negative.

    Tie-corrected Mann-Whitney form: tied positive/negative score pairs
    count one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("auroc needs both a positive and a negative example")
    ranks = _average_ranks(s)
    rank_sum = float(np.sum(ranks[y == 1]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def pair_prefix_cosines(matrix: EmbeddingMatrix, pairs: Sequence[LabeledPair], m: int) -> np.ndarray:
    """Prefix cosine for every pair, vectorized over the pair list."""
    if not 1 <= m <= matrix.d:
        raise DimOutOfRange(f"prefix {m} outside [1, {matrix.d}]")
    ia = np.asarray([matrix.index_of(p.id_a) for p in pairs], dtype=np.int64)
    ib = np.asarray([matrix.index_of(p.id_b) for p in pairs], dtype=np.int64)
    prefix = matrix.data[:, :m]
    norms = np.linalg.norm(prefix, axis=1)
    used = np.union1d(ia, ib) if len(pairs) else np.empty(0, dtype=np.int64)
    if np.any(norms[used] == 0.0):
        bad = int(used[np.flatnonzero(norms[used] == 0.0)[0]])
        raise ZeroPrefixNorm(f"row {bad} is all-zero in its first {m} components")
    a = prefix[ia] / norms[ia, None]
    b = prefix[ib] / norms[ib, None]
    return np.einsum("ij,ij->i", a, b)


def auroc_at_levels(
    pairs: Sequence[LabeledPair],
    matrix: EmbeddingMatrix,
    m: int,
) -> dict[str, float | None]:
    """AUROC at each grade cut, scored by prefix cosine.

    A cut with only one class present is reported as None (undefined)
    without affecting the other cuts.
    """
    ordinal = [p for p in pairs if p.label is not None]
    if not ordinal:
        raise ValueError("auroc_at_levels needs ordinally labeled pairs")
    scores = pair_prefix_cosines(matrix, ordinal, m)
    out: dict[str, float | None] = {}
    for name, cut in AUROC_CUTS:
        y = np.asarray([1 if p.label >= cut else 0 for p in ordinal])
        try:
            out[name] = auroc(scores, y)
        except SingleClass:
            out[name] = None
    return out


def _as_partition(clusters: Iterable[Iterable[Hashable]], which: str) -> list[frozenset]:
    parts = [frozenset(c) for c in clusters]
    total = sum(len(p) for p in parts)
    union: set = set()
    for p in parts:
        if not p:
            raise ValueError(f"{which} partition contains an empty cluster")
        union.update(p)
    if len(union) != total:
        raise ValueError(f"{which} partition has overlapping clusters")
    return parts


def pairwise_prf(
    predicted: Iterable[Iterable[Hashable]],
    gold: Iterable[Iterable[Hashable]],
) -> tuple[float, float, float]:
    """Precision/recall/F1 over all unordered same-cluster document pairs.

    Conventions for degenerate cases: with no predicted same-cluster pairs,
    precision is 1 when gold has none either, else 0 (and symmetrically for
    recall); F1 is 0 whenever either side is 0.
    """
    pred = _as_partition(predicted, "predicted")
    true = _as_partition(gold, "gold")
    pred_docs = frozenset().union(*pred) if pred else frozenset()
    gold_docs = frozenset().union(*true) if true else frozenset()
    if pred_docs != gold_docs:
        raise MismatchedDocumentSets(
            f"partitions cover different documents "
            f"({len(pred_docs)} predicted vs {len(gold_docs)} gold)"
        )

    def same_pairs(parts: list[frozenset]) -> int:
        return sum(len(p) * (len(p) - 1) // 2 for p in parts)

    gold_of = {doc: gi for gi, cluster in enumerate(true) for doc in cluster}
    tp = 0
    for cluster in pred:
        counts: dict[int, int] = {}
        for doc in cluster:
            gi = gold_of[doc]
            counts[gi] = counts.get(gi, 0) + 1
        tp += sum(c * (c - 1) // 2 for c in counts.values())

    pred_same = same_pairs(pred)
    gold_same = same_pairs(true)
    if pred_same == 0:
        precision = 1.0 if gold_same == 0 else 0.0
    else:
        precision = tp / pred_same
    if gold_same == 0:
        recall = 1.0 if pred_same == 0 else 0.0
    else:
        recall = tp / gold_same
    if precision == 0.0 or recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


def relational_similarity(x: EmbeddingMatrix, y: EmbeddingMatrix) -> float:
    """Correlation between the two sets' internal cosine-similarity patterns.

    Rows must be translation-aligned. Enumerates every ordered pair (s, t),
    s != t, and returns the Pearson correlation between cos(x_s, x_t) and
    cos(y_s, y_t). Equal to 1 for any cosine-preserving transform of x.
    """
    if x.n != y.n:
        raise ValueError(f"matrices must be row-aligned, got {x.n} and {y.n} rows")
    if x.n < 3:
        raise TooFewSeeds(f"relational similarity needs at least 3 rows, got {x.n}")

    def cosine_list(mat: EmbeddingMatrix) -> np.ndarray:
        unit = mat.data / np.linalg.norm(mat.data, axis=1)[:, None]
        sims = unit @ unit.T
        mask = ~np.eye(mat.n, dtype=bool)
        return sims[mask]

    return pearson(cosine_list(x), cosine_list(y))


def _grid_values(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0 or hi < lo:
        return []
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + k * step for k in range(count)]


def _classification_f1(scores: np.ndarray, positives: np.ndarray, lam: float) -> float:
    pred = scores > lam
    tp = int(np.sum(pred & positives))
    fp = int(np.sum(pred & ~positives))
    fn = int(np.sum(~pred & positives))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def tune_lambda(
    matrix: EmbeddingMatrix,
    validation_pairs: Sequence[LabeledPair],
    m: int,
    level: int,
    grid: tuple[float, float, float],
) -> tuple[float, float]:
    """Grid-search the merge threshold that maximizes pair-classification F1.

    Labels are binarized at the given level and a pair is classified
    positive when its prefix cosine strictly exceeds the candidate value.
    Ties in F1 go to the smallest threshold.
    """
    values = _grid_values(*grid)
    if not values:
        raise EmptyGrid(f"grid {grid} contains no candidate thresholds")
    ordinal = [p for p in validation_pairs if p.label is not None]
    if not ordinal:
        raise ValueError("tune_lambda needs ordinally labeled pairs")
    positives = np.asarray([binarize_label(p.label, level) == 1.0 for p in ordinal])
    if not positives.any():
        raise SingleClass(f"no pair binarizes to positive at level {level}")
    scores = pair_prefix_cosines(matrix, ordinal, m)
    best_lam, best_f1 = values[0], -1.0
    for lam in values:
        f1 = _classification_f1(scores, positives, lam)
        if f1 > best_f1:
            best_lam, best_f1 = lam, f1
    return best_lam, best_f1


@dataclass
class EvalReport:
    """Collected metric values; None marks an undefined entry."""

    pearson: float | None = None
    auroc: dict[str, float | None] = field(default_factory=dict)
    pairwise: dict[int, tuple[float, float, float]] = field(default_factory=dict)
    relsim: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "pearson": self.pearson,
            "auroc": dict(self.auroc),
            "pairwise": {
                str(level): {"precision": p, "recall": r, "f1": f}
                for level, (p, r, f) in sorted(self.pairwise.items())
            },
            "relsim": dict(sorted(self.relsim.items())),
            "notes": list(self.notes),
        }

    def to_csv_rows(self) -> list[tuple[str, str, str]]:
        def fmt(v: float | None) -> str:
            return "undefined" if v is None else format(v, ".12g")

        rows = [("metric", "key", "value")]
        rows.append(("pearson", "overall", fmt(self.pearson)))
        for name, _ in AUROC_CUTS:
            if name in self.auroc:
                rows.append(("auroc", f">={name}", fmt(self.auroc[name])))
        for level, (p, r, f) in sorted(self.pairwise.items()):
            rows.append(("pairwise_precision", f"layer{level}", fmt(p)))
            rows.append(("pairwise_recall", f"layer{level}", fmt(r)))
            rows.append(("pairwise_f1", f"layer{level}", fmt(f)))
        for lang, value in sorted(self.relsim.items()):
            rows.append(("relsim", lang, fmt(value)))
        return rows
