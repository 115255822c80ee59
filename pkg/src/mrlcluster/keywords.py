"""Class-based TF-IDF keyword labeling for every hierarchy layer.

Each cluster of a layer becomes one "class document" built from the texts
(or caller-provided summaries) of its members; the weight of a term in a
class is its normalized in-class frequency scaled by log(1 + A / f), where
f is the term's total count across all classes of that layer and A is the
average token count per class.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

from .cluster import ClusterTree
from .errors import EmptyCorpus, MissingText

# Unicode-aware run of alphanumerics; underscores are treated as boundaries.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Compact English function-word list; callers with multilingual corpora
# should supply their own via a stopword file.
DEFAULT_STOPWORDS = frozenset("""
a an and are as at be been but by for from had has have he her his i if in
into is it its of on or she that the their them they this to was we were
which will with you your not no so on off
""".split())


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> Counter:
    """Lowercased alphanumeric tokens, minus stopwords and single characters."""
    stop = DEFAULT_STOPWORDS if stopwords is None else stopwords
    counts: Counter = Counter()
    for token in _TOKEN_RE.findall(text.lower()):
        if len(token) < 2 or token in stop:
            continue
        counts[token] += 1
    return counts


@dataclass(frozen=True)
class ClassDocument:
    """One cluster's concatenated texts as a term multiset."""

    class_id: str
    tokens: Counter
    source: tuple[str, ...] = ()


def class_tf_idf(classes: list[ClassDocument]) -> dict[str, dict[str, float]]:
    """Per-class term weights: tf(t, c) * log(1 + A / f(t)).

    tf is the in-class count normalized by the class's token total, f(t)
    the term's count summed over all classes, and A the average token count
    per class. Terms absent from a class implicitly weigh zero there.
    """
    if not classes:
        raise EmptyCorpus("class-based TF-IDF needs at least one class")
    corpus_counts: Counter = Counter()
    total_tokens = 0
    for cls in classes:
        corpus_counts.update(cls.tokens)
        total_tokens += sum(cls.tokens.values())
    if total_tokens == 0:
        raise EmptyCorpus("every class is empty after tokenization")
    avg_tokens = total_tokens / len(classes)

    weights: dict[str, dict[str, float]] = {}
    for cls in classes:
        class_total = sum(cls.tokens.values())
        scores: dict[str, float] = {}
        for term, count in cls.tokens.items():
            tf = count / class_total
            scores[term] = tf * math.log1p(avg_tokens / corpus_counts[term])
        weights[cls.class_id] = scores
    return weights


def top_keywords(scores: Mapping[str, float], k: int) -> tuple[tuple[str, float], ...]:
    """Top-k terms by weight, descending; ties broken lexicographically."""
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return tuple(ranked[:k])


def _gather_tokens(
    doc_ids: Iterable[str],
    token_cache: dict[str, Counter],
) -> Counter:
    merged: Counter = Counter()
    for doc_id in doc_ids:
        merged.update(token_cache[doc_id])
    return merged


def hierarchy_keywords(
    tree: ClusterTree,
    texts: Mapping[str, str],
    k: int,
    stopwords: frozenset[str] | None = None,
) -> ClusterTree:
    """Annotate every cluster of every layer with its top-k c-TF-IDF terms.

    Story clusters are scored over their members' texts; topic and theme
    clusters over the concatenation of their children's texts, with the
    IDF statistics recomputed per layer. Fails closed if any referenced
    document lacks a text.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    missing = sorted(
        doc_id for doc_id in tree.doc_ids if doc_id not in texts
    )
    if missing:
        raise MissingText(missing)
    token_cache = {doc_id: tokenize(texts[doc_id], stopwords) for doc_id in tree.doc_ids}

    keyword_map: dict[str, tuple[tuple[str, float], ...]] = {}
    for layer in tree.layers:
        classes = [
            ClassDocument(
                class_id=cluster.cluster_id,
                tokens=_gather_tokens((tree.doc_ids[r] for r in cluster.members), token_cache),
                source=tuple(tree.doc_ids[r] for r in cluster.members),
            )
            for cluster in layer
        ]
        weights = class_tf_idf(classes)
        for cluster in layer:
            keyword_map[cluster.cluster_id] = top_keywords(weights[cluster.cluster_id], k)
    return tree.with_keywords(keyword_map)


def load_stopwords(path) -> frozenset[str]:
    """Stopword file: one term per line, UTF-8; blank lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())
