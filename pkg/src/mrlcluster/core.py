"""Domain types, the four-grade similarity scale, and prefix-aware cosine.

Everything downstream (loss kernels, clustering, metrics) works on the same
three primitives defined here: an immutable embedding matrix whose leading
prefixes are themselves usable embeddings, an ordinal similarity label, and
the prefix scheme that ties dimensions to merge thresholds and label cuts.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DimOutOfRange, UnknownDocumentId, ZeroPrefixNorm


class SimilarityLabel(enum.IntEnum):
    """Ordinal document-pair similarity grade, VD < SD < SS < VS."""

    VERY_DISSIMILAR = 0
    SOMEWHAT_DISSIMILAR = 1
    SOMEWHAT_SIMILAR = 2
    VERY_SIMILAR = 3

    @property
    def code(self) -> str:
        """Two-letter code used in pairs files (VD, SD, SS, VS)."""
        return _LABEL_CODES[self]

    @property
    def display(self) -> str:
        """Human-readable grade name, e.g. "Very Similar"."""
        return _LABEL_NAMES[self]

    @classmethod
    def parse(cls, text: str) -> "SimilarityLabel":
        """Accept either the two-letter code or the full grade name."""
        key = text.strip()
        for label in cls:
            if key == _LABEL_CODES[label] or key.lower() == _LABEL_NAMES[label].lower():
                return label
        raise ValueError(f"unknown similarity label: {text!r}")


_LABEL_CODES = {
    SimilarityLabel.VERY_DISSIMILAR: "VD",
    SimilarityLabel.SOMEWHAT_DISSIMILAR: "SD",
    SimilarityLabel.SOMEWHAT_SIMILAR: "SS",
    SimilarityLabel.VERY_SIMILAR: "VS",
}

_LABEL_NAMES = {
    SimilarityLabel.VERY_DISSIMILAR: "Very Dissimilar",
    SimilarityLabel.SOMEWHAT_DISSIMILAR: "Somewhat Dissimilar",
    SimilarityLabel.SOMEWHAT_SIMILAR: "Somewhat Similar",
    SimilarityLabel.VERY_SIMILAR: "Very Similar",
}


def binarize_label(label: SimilarityLabel, level: int) -> float:
    """Collapse the four-grade scale to {0, 1} with a level-dependent cut.

    Level 1 (quarter prefix): only VD maps to 0. Level 2 (half prefix): VD
    and SD map to 0. Level 3 (full dimension): only VS maps to 1. The cut
    tightens as the level rises, so positives at level l+1 are a subset of
    positives at level l.
    """
    if level not in (1, 2, 3):
        raise ValueError(f"level must be 1, 2, or 3, got {level}")
    return 1.0 if int(label) >= level else 0.0


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Immutable n x d matrix of document embeddings with an id sidecar.

    Rows are stored in float64 regardless of on-disk precision so downstream
    oracle comparisons at 1e-12 stay meaningful. The underlying array is
    marked read-only; concurrent readers need no locking.
    """

    data: np.ndarray
    ids: tuple[str, ...]
    lang: tuple[str, ...] | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"embedding data must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n == 0 or d == 0:
            raise ValueError("embedding matrix must be non-empty")
        if d % 4 != 0:
            raise ValueError(f"full dimension must be divisible by 4, got {d}")
        if not np.all(np.isfinite(data)):
            raise ValueError("embedding matrix contains NaN or Inf entries")
        if np.any(~data.any(axis=1)):
            bad = int(np.flatnonzero(~data.any(axis=1))[0])
            raise ValueError(f"row {bad} is all-zero")
        ids = tuple(self.ids)
        if len(ids) != n:
            raise ValueError(f"got {len(ids)} ids for {n} rows")
        if len(set(ids)) != n:
            raise ValueError("document ids must be unique")
        if self.lang is not None and len(self.lang) != n:
            raise ValueError(f"got {len(self.lang)} language tags for {n} rows")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "_id_index", {doc_id: i for i, doc_id in enumerate(ids)})

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def index_of(self, doc_id: str) -> int:
        try:
            return self._id_index[doc_id]
        except KeyError:
            raise UnknownDocumentId([doc_id]) from None

    def has_id(self, doc_id: str) -> bool:
        return doc_id in self._id_index


@dataclass(frozen=True)
class PrefixLevel:
    """One rung of the nested-dimension ladder.

    ``dim`` is the prefix length used at this level, ``threshold`` the
    centroid-cosine merge cutoff, and ``min_positive`` the lowest grade that
    binarizes to 1 at this level.
    """

    dim: int
    threshold: float
    min_positive: SimilarityLabel

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"prefix dimension must be >= 1, got {self.dim}")
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [-1, 1], got {self.threshold}")

    def binarize(self, label: SimilarityLabel) -> float:
        return 1.0 if label >= self.min_positive else 0.0


@dataclass(frozen=True)
class PrefixScheme:
    """The dimension ladder {d/4, d/2, d} with per-level thresholds and cuts.

    Three levels are canonical; other counts are accepted as long as the
    dimensions strictly increase and the last one equals the matrix's full
    dimension.
    """

    levels: tuple[PrefixLevel, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ValueError("a prefix scheme needs at least one level")
        dims = [lv.dim for lv in levels]
        if any(b <= a for a, b in zip(dims, dims[1:])):
            raise ValueError(f"prefix dimensions must strictly increase, got {dims}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def default(cls, d: int, lambdas: tuple[float, float, float] = (0.5, 0.5, 0.5)) -> "PrefixScheme":
        """The canonical three-level scheme for a full dimension ``d``."""
        if d % 4 != 0:
            raise ValueError(f"full dimension must be divisible by 4, got {d}")
        if len(lambdas) != 3:
            raise ValueError(f"expected 3 thresholds, got {len(lambdas)}")
        cuts = (
            SimilarityLabel.SOMEWHAT_DISSIMILAR,
            SimilarityLabel.SOMEWHAT_SIMILAR,
            SimilarityLabel.VERY_SIMILAR,
        )
        return cls(tuple(
            PrefixLevel(dim=d * m // 4, threshold=lam, min_positive=cut)
            for m, lam, cut in zip((1, 2, 4), lambdas, cuts)
        ))

    @property
    def full_dim(self) -> int:
        return self.levels[-1].dim

    def validate_for(self, d: int) -> None:
        if self.full_dim != d:
            raise ValueError(
                f"scheme's last prefix ({self.full_dim}) must equal the full dimension ({d})"
            )


@dataclass(frozen=True)
class LabeledPair:
    """Two document ids with either an ordinal grade or a score in [0, 1].

    Pairs are unordered: (a, b) and (b, a) denote the same pair for
    deduplication and evaluation.
    """

    id_a: str
    id_b: str
    label: SimilarityLabel | None = None
    score: float | None = None

    def __post_init__(self):
        if self.id_a == self.id_b:
            raise ValueError(f"pair references the same document twice: {self.id_a!r}")
        if (self.label is None) == (self.score is None):
            raise ValueError("exactly one of label/score must be present")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    @property
    def unordered_key(self) -> tuple[str, str]:
        return (self.id_a, self.id_b) if self.id_a <= self.id_b else (self.id_b, self.id_a)


@dataclass(frozen=True)
class LossConfig:
    """Temperature for the ranking/contrastive kernels."""

    tau: float = 0.05

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


def prefix_cosine(matrix: EmbeddingMatrix, i: int, j: int, m: int) -> float:
    """Cosine of the first-m-component slices of rows i and j.

    Each slice is renormalized independently, so the value is invariant
    under positive scaling of either full row. Arithmetic is float64.
    """
    if not 1 <= m <= matrix.d:
        raise DimOutOfRange(f"prefix {m} outside [1, {matrix.d}]")
    u = matrix.data[i, :m]
    v = matrix.data[j, :m]
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        which = i if nu == 0.0 else j
        raise ZeroPrefixNorm(f"row {which} is all-zero in its first {m} components")
    return float(np.dot(u, v)) / (nu * nv)


@dataclass(frozen=True)
class ValidationReport:
    """Bookkeeping summary produced by :func:`validate_dataset`."""

    label_counts: dict[str, int]
    score_pairs: int
    missing_ids: tuple[str, ...]
    duplicate_pairs: tuple[tuple[str, str], ...]

    @property
    def ok(self) -> bool:
        return not self.missing_ids


def validate_dataset(
    matrix: EmbeddingMatrix,
    pairs: list[LabeledPair],
    *,
    strict: bool = True,
) -> ValidationReport:
    """Check that every pair resolves against the matrix and summarize labels.

    Missing ids fail closed (UnknownDocumentId) unless ``strict=False``, in
    which case they are returned in the report. Duplicated unordered pairs
    are a warning, listed once each.
    """
    label_counts: Counter[str] = Counter()
    score_pairs = 0
    missing: dict[str, None] = {}
    seen: set[tuple[str, str]] = set()
    dupes: dict[tuple[str, str], None] = {}
    for pair in pairs:
        for doc_id in (pair.id_a, pair.id_b):
            if not matrix.has_id(doc_id):
                missing[doc_id] = None
        key = pair.unordered_key
        if key in seen:
            dupes[key] = None
        seen.add(key)
        if pair.label is not None:
            label_counts[pair.label.code] += 1
        else:
            score_pairs += 1
    if missing and strict:
        raise UnknownDocumentId(missing)
    return ValidationReport(
        label_counts=dict(label_counts),
        score_pairs=score_pairs,
        missing_ids=tuple(missing),
        duplicate_pairs=tuple(dupes),
    )
