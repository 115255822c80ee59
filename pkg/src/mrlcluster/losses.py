"""Reference kernels for the ranking, contrastive, and angle objectives.

Each kernel returns both the scalar loss and its analytic gradient with
respect to every row of the batch, so the math can be verified against
central finite differences. These are verification-grade kernels, not
training code: clarity and float64 determinism beat throughput.

All reductions over loss terms use exact summation (math.fsum), which makes
loss values invariant under permutation of the batch rows and pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import PrefixScheme, SimilarityLabel
from .errors import (
    AnchorWithoutPositive,
    EmptyBatch,
    OddPrefix,
    ZeroPrefixNorm,
)

Label = float | int | SimilarityLabel


@dataclass(frozen=True, eq=False)
class LossBatch:
    """A batch of embedding rows plus labeled index pairs.

    ``pairs`` holds (row_a, row_b, label) triples; labels may be ordinal
    grades or already-binarized floats, anything mutually comparable.
    ``positives`` maps an anchor row to the set of rows counted as its
    in-batch positives (the duplicated-row construction stores each row's
    twin here). The map must be symmetric and never contain the anchor
    itself.
    """

    rows: np.ndarray
    pairs: tuple[tuple[int, int, Label], ...] = ()
    m: int = 0
    tau: float = 0.05
    positives: Mapping[int, frozenset[int]] = None  # type: ignore[assignment]

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ValueError(f"rows must be a non-empty 2-D array, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("rows contain NaN or Inf")
        n, dim = rows.shape
        m = self.m if self.m else dim
        if not 1 <= m <= dim:
            raise ValueError(f"prefix {m} outside [1, {dim}]")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        pairs = tuple((int(a), int(b), y) for a, b, y in self.pairs)
        for a, b, _ in pairs:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"pair ({a}, {b}) references rows outside [0, {n})")
            if a == b:
                raise ValueError(f"pair ({a}, {b}) references the same row twice")
        pos_in = self.positives or {}
        positives = {int(i): frozenset(int(j) for j in js) for i, js in pos_in.items()}
        for i, js in positives.items():
            if not 0 <= i < n:
                raise ValueError(f"positives anchor {i} outside [0, {n})")
            for j in js:
                if not 0 <= j < n:
                    raise ValueError(f"positive {j} of anchor {i} outside [0, {n})")
                if j == i:
                    raise ValueError(f"anchor {i} lists itself as a positive")
                if i not in positives.get(j, frozenset()):
                    raise ValueError(f"positives map is not symmetric: {j} -> {i} missing")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "positives", positives)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @classmethod
    def from_vector_pairs(
        cls,
        vector_pairs: Sequence[tuple[np.ndarray, np.ndarray, Label]],
        *,
        tau: float = 0.05,
        m: int = 0,
    ) -> "LossBatch":
        """Stack (u, v, label) vector triples into row/index form."""
        rows = []
        pairs = []
        for u, v, y in vector_pairs:
            pairs.append((len(rows), len(rows) + 1, y))
            rows.append(np.asarray(u, dtype=np.float64))
            rows.append(np.asarray(v, dtype=np.float64))
        return cls(rows=np.vstack(rows), pairs=tuple(pairs), m=m, tau=tau)


def simcse_duplicate(batch: LossBatch) -> LossBatch:
    """Append a copy of every row and mark each row/copy pair as positives.

    Models the identical-positive trick where one input is encoded twice:
    row i and row i+n carry the same content and become mutual in-batch
    positives; existing pairs and positives are preserved.
    """
    n = batch.n_rows
    rows = np.vstack([batch.rows, batch.rows])
    positives = {i: set(js) for i, js in batch.positives.items()}
    for i in range(n):
        positives.setdefault(i, set()).add(i + n)
        positives.setdefault(i + n, set()).add(i)
    return LossBatch(
        rows=rows,
        pairs=batch.pairs,
        m=batch.m,
        tau=batch.tau,
        positives={i: frozenset(js) for i, js in positives.items()},
    )


@dataclass(frozen=True, eq=False)
class LossResult:
    """Scalar loss value plus the gradient w.r.t. every batch row."""

    value: float
    grad: np.ndarray

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"loss value is not finite: {self.value}")
        if not np.all(np.isfinite(self.grad)):
            raise ValueError("gradient contains NaN or Inf")


def _cos_with_grads(u: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Cosine of two already-sliced vectors and its gradients."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroPrefixNorm("zero-norm prefix slice in cosine")
    c = float(np.dot(u, v)) / (nu * nv)
    gu = v / (nu * nv) - (c / (nu * nu)) * u
    gv = u / (nu * nv) - (c / (nv * nv)) * v
    return c, gu, gv


def _angle_parts(u: np.ndarray, v: np.ndarray):
    """Chunked complex decomposition of two equal, even-length slices.

    Returns (delta, r, s, nu, nv) where r and s are the elementwise real and
    imaginary parts of z * conj(w) before normalization.
    """
    m = u.shape[0]
    half = m // 2
    a, b = u[:half], u[half:]
    c, d = v[:half], v[half:]
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroPrefixNorm(f"a vector is all-zero in its first {m} components")
    r = a * c + b * d
    s = b * c - a * d
    re = r / (nv * nv)
    im = s / (nv * nv)
    gamma = nu / nv
    delta = math.fsum(np.concatenate([np.abs(re), np.abs(im)])) / gamma
    return delta, r, s, nu, nv


def angle_delta(u: np.ndarray, v: np.ndarray, m: int) -> float:
    """Aggregated complex-chunk angle difference of two m-prefixes.

    The prefix is split in half: the first half is the real part, the second
    the imaginary part. The elementwise complex ratio is normalized by the
    second vector's squared slice norm, rescaled by the slice-norm ratio, and
    aggregated as the sum of absolute real and imaginary parts. Identical
    (or positively scaled) inputs give exactly 1.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m % 2 != 0 or m < 2:
        raise OddPrefix(f"angle prefix must be even and >= 2, got {m}")
    if m > u.shape[0] or m > v.shape[0]:
        raise ValueError(f"prefix {m} longer than the input vectors")
    delta, _, _, _, _ = _angle_parts(u[:m], v[:m])
    return delta


def _angle_with_grads(u: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """angle delta of two already-sliced vectors, with gradients.

    The |.| subgradient at 0 is taken as 0; callers that verify against
    finite differences must sample away from those kinks.
    """
    delta, r, s, nu, nv = _angle_parts(u, v)
    half = u.shape[0] // 2
    a, b = u[:half], u[half:]
    c, d = v[:half], v[half:]
    sr = np.sign(r)
    ss = np.sign(s)
    norm_prod = nu * nv
    gu = np.concatenate([
        (sr * c - ss * d) / norm_prod - (delta / (nu * nu)) * a,
        (sr * d + ss * c) / norm_prod - (delta / (nu * nu)) * b,
    ])
    gv = np.concatenate([
        (sr * a + ss * b) / norm_prod - (delta / (nv * nv)) * c,
        (sr * b - ss * a) / norm_prod - (delta / (nv * nv)) * d,
    ])
    return delta, gu, gv


def _ranking_reduction(
    labels: Sequence[Label],
    stats: Sequence[float],
    tau: float,
    sign: float,
) -> tuple[float, list[float]]:
    """log(1 + sum of exp ranking violations) and d(value)/d(stat).

    For every ordered pair of pairs (p, q) with label_p > label_q one term
    exp(sign * (stat_p - stat_q) / tau) enters the sum; sign=-1 recovers the
    cosine form (higher-labeled pair should score higher), sign=+1 the angle
    form (higher-labeled pair should have the smaller angle difference).
    """
    k = len(stats)
    terms: list[float] = []
    contrib: list[list[float]] = [[] for _ in range(k)]
    for p in range(k):
        for q in range(k):
            if labels[p] > labels[q]:
                t = math.exp(sign * (stats[p] - stats[q]) / tau)
                terms.append(t)
                contrib[p].append(sign * t / tau)
                contrib[q].append(-sign * t / tau)
    total = math.fsum(terms)
    scale = 1.0 / (1.0 + total)
    grad = [math.fsum(c) * scale for c in contrib]
    return math.log1p(total), grad


def _pair_stats(
    batch: LossBatch,
    stat_fn: Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray, np.ndarray]],
) -> tuple[list[float], list[tuple[np.ndarray, np.ndarray]]]:
    stats = []
    grads = []
    m = batch.m
    for a, b, _ in batch.pairs:
        value, gu, gv = stat_fn(batch.rows[a, :m], batch.rows[b, :m])
        stats.append(value)
        grads.append((gu, gv))
    return stats, grads


def _assemble(
    batch: LossBatch,
    value: float,
    stat_grad: Sequence[float],
    pair_grads: Sequence[tuple[np.ndarray, np.ndarray]],
) -> LossResult:
    grad = np.zeros_like(batch.rows)
    m = batch.m
    for (a, b, _), w, (gu, gv) in zip(batch.pairs, stat_grad, pair_grads):
        grad[a, :m] += w * gu
        grad[b, :m] += w * gv
    return LossResult(value=value, grad=grad)


def cos_objective(batch: LossBatch) -> LossResult:
    """Cosine ranking objective over all label-ordered pair-of-pairs.

    Zero (with zero gradient) whenever every pair carries the same label.
    """
    if not batch.pairs:
        raise EmptyBatch("cosine objective needs at least one labeled pair")
    stats, pair_grads = _pair_stats(batch, _cos_with_grads)
    labels = [y for _, _, y in batch.pairs]
    value, stat_grad = _ranking_reduction(labels, stats, batch.tau, sign=-1.0)
    return _assemble(batch, value, stat_grad, pair_grads)


def angle_objective(batch: LossBatch) -> LossResult:
    """Complex-space angle ranking objective; mirrors the cosine form with
    the opposite sign since smaller angle differences mean higher similarity."""
    if not batch.pairs:
        raise EmptyBatch("angle objective needs at least one labeled pair")
    if batch.m % 2 != 0:
        raise OddPrefix(f"angle objective needs an even prefix, got {batch.m}")
    stats, pair_grads = _pair_stats(batch, _angle_with_grads)
    labels = [y for _, _, y in batch.pairs]
    value, stat_grad = _ranking_reduction(labels, stats, batch.tau, sign=1.0)
    return _assemble(batch, value, stat_grad, pair_grads)


def contrastive_objective(batch: LossBatch) -> LossResult:
    """In-batch softmax contrast: -log(positive mass / total mass) per anchor.

    Anchors are the keys of the positives map; the denominator runs over all
    other rows in the batch (the anchor itself is excluded). A batch with no
    declared positives contributes zero.
    """
    anchors = sorted(batch.positives)
    for i in anchors:
        if not batch.positives[i]:
            raise AnchorWithoutPositive(f"anchor {i} has no positives")
    grad = np.zeros_like(batch.rows)
    if not anchors:
        return LossResult(value=0.0, grad=grad)
    n = batch.n_rows
    if n < 2:
        raise AnchorWithoutPositive("contrastive term needs at least two rows")
    m, tau = batch.m, batch.tau
    prefix = batch.rows[:, :m]
    norms = np.linalg.norm(prefix, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroPrefixNorm(f"row {bad} is all-zero in its first {m} components")
    unit = prefix / norms[:, None]
    cosines = unit @ unit.T

    per_anchor = []
    coef = np.zeros((n, n))  # d(value)/d(cosines[i, j])
    for i in anchors:
        others = [j for j in range(n) if j != i]
        pos = sorted(batch.positives[i])
        exp_all = {j: math.exp(cosines[i, j] / tau) for j in others}
        pos_mass = math.fsum(exp_all[j] for j in pos)
        total_mass = math.fsum(exp_all.values())
        per_anchor.append(math.log(total_mass) - math.log(pos_mass))
        for j in others:
            coef[i, j] += exp_all[j] / (total_mass * tau)
        for j in pos:
            coef[i, j] -= exp_all[j] / (pos_mass * tau)

    for i in range(n):
        for j in range(n):
            w = coef[i, j]
            if w == 0.0:
                continue
            grad[i, :m] += w * (unit[j] - cosines[i, j] * unit[i]) / norms[i]
            grad[j, :m] += w * (unit[i] - cosines[i, j] * unit[j]) / norms[j]
    return LossResult(value=math.fsum(per_anchor), grad=grad)


def angie_loss(batch: LossBatch) -> LossResult:
    """Sum of the cosine, contrastive, and angle objectives on one batch."""
    parts = [cos_objective(batch), contrastive_objective(batch), angle_objective(batch)]
    return LossResult(
        value=math.fsum(p.value for p in parts),
        grad=sum(p.grad for p in parts),
    )


def mrl_loss(batch: LossBatch, scheme: PrefixScheme) -> LossResult:
    """Nested-prefix composite: the full three-term loss at every level.

    Each level truncates the batch to its prefix length and binarizes the
    ordinal labels with its own cut; per-level gradients land in the leading
    components of the full-width gradient, the rest stay zero.
    """
    scheme.validate_for(batch.rows.shape[1])
    for _, _, y in batch.pairs:
        if not isinstance(y, SimilarityLabel):
            raise ValueError("mrl loss needs ordinal labels on every pair")
    values = []
    grad = np.zeros_like(batch.rows)
    for level in scheme.levels:
        binarized = tuple((a, b, level.binarize(y)) for a, b, y in batch.pairs)
        part = angie_loss(replace(batch, pairs=binarized, m=level.dim))
        values.append(part.value)
        grad += part.grad
    return LossResult(value=math.fsum(values), grad=grad)


def finite_difference_grad(
    loss_fn: Callable[[LossBatch], LossResult],
    batch: LossBatch,
    step: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient of a batch loss; verification only."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    base = np.array(batch.rows)
    grad = np.zeros_like(base)
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            plus = base.copy()
            plus[i, j] += step
            minus = base.copy()
            minus[i, j] -= step
            grad[i, j] = (
                loss_fn(replace(batch, rows=plus)).value
                - loss_fn(replace(batch, rows=minus)).value
            ) / (2.0 * step)
    return grad


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise difference scaled by the larger gradient magnitude."""
    scale = max(1.0, float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def _kink_margin(batch: LossBatch) -> float:
    """Smallest |real| or |imaginary| chunk product over all pairs.

    Batches whose margin falls below the exclusion threshold sit too close
    to an |.| kink for finite differences to be trusted.
    """
    m = batch.m
    margin = math.inf
    for a, b, _ in batch.pairs:
        _, r, s, _, _ = _angle_parts(batch.rows[a, :m], batch.rows[b, :m])
        margin = min(margin, float(np.min(np.abs(r))), float(np.min(np.abs(s))))
    return margin


KINK_EXCLUSION = 1e-3


def random_check_batch(
    rng: np.random.Generator,
    n_rows: int = 6,
    dim: int = 16,
    tau: float = 0.05,
    kink_margin: float = KINK_EXCLUSION,
    max_attempts: int = 50,
) -> tuple[LossBatch, int]:
    """Seeded random batch suitable for gradient checks.

    Rows are duplicated SimCSE-style so the contrastive term is exercised;
    pairs get random ordinal grades. Batches closer than ``kink_margin`` to
    an |.| kink are resampled; returns (batch, number of rejected samples).
    """
    if n_rows % 2 != 0:
        raise ValueError("n_rows must be even (rows are duplicated)")
    base = n_rows // 2
    rejected = 0
    for _ in range(max_attempts):
        rows = rng.standard_normal((base, dim))
        pair_count = max(2, base)
        pairs = []
        for _ in range(pair_count):
            a, b = rng.choice(n_rows, size=2, replace=False)
            y = SimilarityLabel(int(rng.integers(0, 4)))
            pairs.append((int(a), int(b), y))
        batch = simcse_duplicate(LossBatch(rows=rows, pairs=(), m=dim, tau=tau))
        batch = replace(batch, pairs=tuple(pairs))
        if _kink_margin(batch) >= kink_margin:
            return batch, rejected
        rejected += 1
    raise RuntimeError(f"no kink-free batch found in {max_attempts} attempts")


def gradient_check_suite(
    n_rows: int = 6,
    dim: int = 16,
    seed: int = 0,
    batches: int = 20,
    step: float = 1e-6,
    tolerance: float = 1e-5,
) -> list[dict]:
    """Run finite-difference checks for every kernel on seeded batches.

    Returns one record per (kernel, batch) with the max relative error and
    a pass flag, plus one record per kink-adjacent sample that was excluded.
    """
    if dim % 2 != 0:
        raise OddPrefix(f"angle kernels need an even dimension, got {dim}")
    rng = np.random.default_rng(seed)
    scheme = PrefixScheme.default(dim)
    kernels: list[tuple[str, Callable[[LossBatch], LossResult]]] = [
        ("cos_objective", cos_objective),
        ("contrastive_objective", contrastive_objective),
        ("angle_objective", angle_objective),
        ("mrl_loss", lambda b: mrl_loss(b, scheme)),
    ]
    records = []
    for index in range(batches):
        batch, rejected = random_check_batch(rng, n_rows=n_rows, dim=dim)
        for _ in range(rejected):
            records.append({
                "kernel": "(sample)", "batch": index, "status": "skipped",
                "max_rel_err": None, "note": "kink-adjacent sample excluded",
            })
        for name, fn in kernels:
            analytic = fn(batch).grad
            numeric = finite_difference_grad(fn, batch, step=step)
            err = gradient_relative_error(analytic, numeric)
            records.append({
                "kernel": name, "batch": index,
                "status": "pass" if err <= tolerance else "FAIL",
                "max_rel_err": err, "note": "",
            })
    return records
