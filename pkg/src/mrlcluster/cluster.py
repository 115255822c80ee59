"""Reciprocal agglomerative clustering and the level-wise hierarchy driver.

One round finds every pair of clusters that are mutually nearest neighbors
under centroid cosine at the working prefix and merges the pairs whose
similarity clears the level threshold. Rounds repeat until nothing merges.
The level-wise driver runs this top-down: themes over the quarter prefix,
topics within each theme over the half prefix, stories within each topic
over the full dimension.

Determinism contract: ties are broken by lowest cluster id, a merged
cluster takes the smaller of the two ids, and the cluster list is kept
sorted by id, so two runs on the same input produce identical trees
regardless of worker count or whether the similarity cache is enabled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import EmbeddingMatrix, PrefixScheme
from .errors import InvariantViolation, SingleCluster, ZeroPrefixNorm

# Fixed block size for pairwise similarity scans. Workers parallelize over
# blocks; the block boundaries never depend on the worker count, so numeric
# results cannot either.
_BLOCK = 1024

# Above this many clusters the full similarity matrix is no longer kept in
# memory and every round rescans in blocks.
DEFAULT_CACHE_LIMIT = 20_000


@dataclass(frozen=True, eq=False)
class Cluster:
    """A cluster at the current working prefix.

    The centroid is the plain size-weighted mean of the member rows' prefix
    slices, recomputable from the members at any time.
    """

    id: int
    members: frozenset[int]
    centroid: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)


def _unit_rows(vectors: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroPrefixNorm(f"{what} {bad} has zero norm at the working prefix")
    return vectors / norms[:, None]


def _block_ranges(k: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + _BLOCK, k)) for lo in range(0, k, _BLOCK)]


def _map_blocks(fn, k: int, workers: int) -> list:
    ranges = _block_ranges(k)
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda r: fn(*r), ranges))
    return [fn(lo, hi) for lo, hi in ranges]


class _RacState:
    """Parallel-array cluster state for one RAC run.

    Arrays stay sorted by cluster id, which makes np.argmax's first-hit
    behavior implement the lowest-id tie-break for free. Merged-away
    entries are tombstoned (alive=False, similarities forced to -inf) and
    the arrays are only compacted once enough positions have died; that
    keeps per-round cache maintenance proportional to the merge count
    instead of the matrix size.
    """

    COMPACT_AT = 0.7  # compact when fewer than this fraction of slots live

    def __init__(self, points: np.ndarray, ids: list[int], use_cache: bool, workers: int):
        order = np.argsort(np.asarray(ids, dtype=np.int64), kind="stable")
        self.ids = np.asarray(ids, dtype=np.int64)[order]
        self.members = [frozenset([int(i)]) for i in self.ids]
        self.sizes = np.ones(len(self.ids), dtype=np.int64)
        self.centroids = np.ascontiguousarray(points[order], dtype=np.float64)
        self.units = _unit_rows(self.centroids, "row")
        self.alive = np.ones(len(self.ids), dtype=bool)
        self.k = len(self.ids)
        self.workers = workers
        self.sims = None
        if use_cache:
            self.sims = self._full_sims()

    @property
    def slots(self) -> int:
        return len(self.members)

    def _full_sims(self) -> np.ndarray:
        """Dense similarity matrix with the diagonal pre-masked to -inf."""
        out = np.empty((self.slots, self.slots), dtype=np.float64)
        units = self.units

        def fill(lo, hi):
            out[lo:hi] = units[lo:hi] @ units.T

        _map_blocks(fill, self.slots, self.workers)
        np.fill_diagonal(out, -np.inf)
        return out

    def nearest(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-slot nearest neighbor position and similarity.

        Entries for dead slots are meaningless; callers must mask by
        ``alive``. Live rows can never select a dead column because dead
        similarities are -inf while real cosines are >= -1.
        """
        slots = self.slots
        if self.sims is not None:
            sims = self.sims

            def scan(lo, hi):
                block = sims[lo:hi]
                pos = np.argmax(block, axis=1)
                return pos, block[np.arange(hi - lo), pos]
        else:
            units = self.units

            def scan(lo, hi):
                block = units[lo:hi] @ units.T
                block[np.arange(hi - lo), np.arange(lo, hi)] = -np.inf
                dead = ~self.alive
                if dead.any():
                    block[:, dead] = -np.inf
                pos = np.argmax(block, axis=1)
                return pos, block[np.arange(hi - lo), pos]

        parts = _map_blocks(scan, slots, self.workers)
        nn_pos = np.concatenate([p for p, _ in parts])
        nn_sim = np.concatenate([s for _, s in parts])
        return nn_pos, nn_sim

    def max_similarity(self) -> float:
        """Largest off-diagonal centroid cosine; -inf with fewer than 2 clusters."""
        if self.k < 2:
            return -np.inf
        _, nn_sim = self.nearest()
        return float(np.max(nn_sim[self.alive]))

    def mutual_pairs(self, lam: float) -> list[tuple[int, int, float]]:
        """Disjoint (i, j, sim) position pairs of mutual NNs above the threshold."""
        if self.k < 2:
            return []
        nn_pos, nn_sim = self.nearest()
        pos = np.arange(self.slots)
        mutual = self.alive & (pos < nn_pos) & (nn_pos[nn_pos] == pos) & (nn_sim > lam)
        return [(int(i), int(nn_pos[i]), float(nn_sim[i])) for i in np.flatnonzero(mutual)]

    def apply_merges(self, pairs: list[tuple[int, int, float]]) -> None:
        """Merge the given disjoint position pairs in one commit.

        The merged cluster lands at the lower position (which holds the lower
        id, since arrays are id-sorted), so the sort order survives; the
        higher position is tombstoned.
        """
        if not pairs:
            return
        merged = []
        for i, j, _ in pairs:
            total = int(self.sizes[i] + self.sizes[j])
            centroid = (
                self.sizes[i] * self.centroids[i] + self.sizes[j] * self.centroids[j]
            ) / total
            self.centroids[i] = centroid
            self.sizes[i] = total
            self.members[i] = self.members[i] | self.members[j]
            self.units[i] = _unit_rows(centroid[None, :], "merged cluster")[0]
            self.alive[j] = False
            merged.append(i)
        self.k -= len(pairs)

        if self.sims is not None:
            dead_cols = np.flatnonzero(~self.alive)
            for i, j, _ in pairs:
                self.sims[j, :] = -np.inf
                self.sims[:, j] = -np.inf
            # refresh every merged row/column with one matmul
            block = self.units @ self.units[merged].T
            for col, p in enumerate(merged):
                self.sims[p, :] = block[:, col]
                self.sims[:, p] = block[:, col]
            self.sims[np.ix_(merged, dead_cols)] = -np.inf
            self.sims[np.ix_(dead_cols, merged)] = -np.inf
            for p in merged:
                self.sims[p, p] = -np.inf

        # without a cache there is no big matrix to copy, so compact eagerly;
        # with one, amortize the O(k^2) copy across many rounds
        threshold = self.COMPACT_AT if self.sims is not None else 1.0
        if self.k < threshold * self.slots:
            self._compact()

    def _compact(self) -> None:
        keep = np.flatnonzero(self.alive)
        self.ids = self.ids[keep]
        self.sizes = self.sizes[keep]
        self.centroids = np.ascontiguousarray(self.centroids[keep])
        self.units = np.ascontiguousarray(self.units[keep])
        self.members = [self.members[int(i)] for i in keep]
        self.alive = np.ones(len(keep), dtype=bool)
        if self.sims is not None:
            self.sims = np.ascontiguousarray(self.sims[np.ix_(keep, keep)])

    def to_clusters(self) -> list[Cluster]:
        return [
            Cluster(id=int(self.ids[i]), members=self.members[int(i)], centroid=self.centroids[int(i)].copy())
            for i in np.flatnonzero(self.alive)
        ]


def _state_from_clusters(clusters: list[Cluster], m: int, workers: int = 1) -> _RacState:
    if any(c.centroid.shape[0] < m for c in clusters):
        raise ValueError(f"cluster centroids are shorter than prefix {m}")
    points = np.vstack([np.asarray(c.centroid, dtype=np.float64)[:m] for c in clusters])
    state = _RacState(points, [c.id for c in clusters], use_cache=False, workers=workers)
    # restore true membership and sizes (the constructor seeds singletons)
    order = np.argsort(np.asarray([c.id for c in clusters], dtype=np.int64), kind="stable")
    state.members = [clusters[int(o)].members for o in order]
    state.sizes = np.asarray([clusters[int(o)].size for o in order], dtype=np.int64)
    return state


def nearest_neighbor(clusters: list[Cluster], k: int, m: int) -> tuple[int, float]:
    """Index and similarity of cluster k's nearest neighbor by centroid cosine.

    Exact ties go to the candidate with the lowest cluster id.
    """
    if len(clusters) < 2:
        raise SingleCluster("nearest neighbor needs at least two clusters")
    if not 0 <= k < len(clusters):
        raise ValueError(f"cluster index {k} outside [0, {len(clusters)})")
    units = _unit_rows(
        np.vstack([np.asarray(c.centroid, dtype=np.float64)[:m] for c in clusters]),
        "cluster",
    )
    sims = units @ units[k]
    sims[k] = -np.inf
    best = float(np.max(sims))
    candidates = np.flatnonzero(sims == best)
    winner = min(candidates, key=lambda p: clusters[int(p)].id)
    return int(winner), best


def find_rnn_pairs(clusters: list[Cluster], m: int) -> list[tuple[int, int]]:
    """All unordered index pairs that are each other's nearest neighbor.

    Mutual-NN pairs are disjoint under the lowest-id tie-break, so each
    cluster appears in at most one pair.
    """
    if len(clusters) < 2:
        return []
    nn = [nearest_neighbor(clusters, k, m)[0] for k in range(len(clusters))]
    return [(i, j) for i, j in ((i, nn[i]) for i in range(len(clusters))) if j > i and nn[j] == i]


def merge_round(
    clusters: list[Cluster], m: int, lam: float
) -> tuple[list[Cluster], int]:
    """Merge every mutual-NN pair whose centroid similarity exceeds lam.

    Merged members are unioned, the new centroid is the size-weighted mean
    of the two, and the new cluster keeps the smaller id. The result does
    not depend on the order the disjoint merges are applied in.
    """
    state = _state_from_clusters(clusters, m)
    pairs = state.mutual_pairs(lam)
    state.apply_merges(pairs)
    return state.to_clusters(), len(pairs)


def rac(
    matrix: EmbeddingMatrix,
    rows: list[int] | None,
    m: int,
    lam: float,
    *,
    workers: int = 1,
    use_cache: bool | None = None,
) -> list[Cluster]:
    """Cluster the given rows at prefix m, merging until nothing clears lam.

    Returns the final partition as clusters whose ids equal their smallest
    member row index. ``use_cache=None`` picks the cached similarity matrix
    when the instance is small enough; both paths produce the same result.
    """
    if rows is None:
        rows = list(range(matrix.n))
    if not rows:
        raise ValueError("rac needs at least one row")
    if not 1 <= m <= matrix.d:
        raise ValueError(f"prefix {m} outside [1, {matrix.d}]")
    if not -1.0 <= lam <= 1.0:
        raise ValueError(f"threshold must lie in [-1, 1], got {lam}")
    row_ids = sorted(int(r) for r in rows)
    if use_cache is None:
        use_cache = len(row_ids) <= DEFAULT_CACHE_LIMIT
    state = _RacState(matrix.data[row_ids, :m], row_ids, use_cache=use_cache, workers=workers)
    while state.k > 1:
        pairs = state.mutual_pairs(lam)
        if not pairs:
            break
        state.apply_merges(pairs)
    top = state.max_similarity()
    if top > lam:
        raise InvariantViolation(
            f"rac stopped with inter-cluster similarity {top} above threshold {lam}"
        )
    return state.to_clusters()


@dataclass(frozen=True)
class TreeCluster:
    """One node of the hierarchy; members are row indices into the matrix."""

    cluster_id: str
    parent_id: str | None
    members: tuple[int, ...]
    keywords: tuple[tuple[str, float], ...] | None = None

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ClusterTree:
    """Theme > topic > story hierarchy over one embedding matrix.

    Every layer partitions the full document set and each cluster nests
    inside exactly one parent from the layer above.
    """

    layers: tuple[tuple[TreeCluster, ...], ...]
    doc_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(tuple(layer) for layer in self.layers))
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        self.validate()

    def validate(self) -> None:
        n = len(self.doc_ids)
        if len(set(self.doc_ids)) != n:
            raise InvariantViolation("document ids are not unique")
        parent_of_row: dict[int, str] | None = None
        for depth, layer in enumerate(self.layers, start=1):
            seen: set[int] = set()
            ids = [c.cluster_id for c in layer]
            if len(set(ids)) != len(ids):
                raise InvariantViolation(f"duplicate cluster ids in layer {depth}")
            for cluster in layer:
                if not cluster.members:
                    raise InvariantViolation(f"empty cluster {cluster.cluster_id}")
                overlap = seen.intersection(cluster.members)
                if overlap:
                    raise InvariantViolation(
                        f"layer {depth} is not disjoint: row {min(overlap)} repeated"
                    )
                seen.update(cluster.members)
                if depth == 1:
                    if cluster.parent_id is not None:
                        raise InvariantViolation("top-layer clusters cannot have parents")
                else:
                    assert parent_of_row is not None
                    parents = {parent_of_row[r] for r in cluster.members}
                    if len(parents) != 1 or cluster.parent_id not in parents:
                        raise InvariantViolation(
                            f"cluster {cluster.cluster_id} does not nest in one parent"
                        )
            if seen != set(range(n)):
                raise InvariantViolation(f"layer {depth} does not partition the {n} rows")
            parent_of_row = {r: c.cluster_id for c in layer for r in c.members}

    def layer(self, level: int) -> tuple[TreeCluster, ...]:
        return self.layers[level - 1]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def partitions(self) -> list[list[frozenset[int]]]:
        """Per-layer partitions as member-index sets (for metric evaluation)."""
        return [[frozenset(c.members) for c in layer] for layer in self.layers]

    def with_keywords(self, keyword_map: dict[str, tuple[tuple[str, float], ...]]) -> "ClusterTree":
        layers = tuple(
            tuple(
                TreeCluster(
                    cluster_id=c.cluster_id,
                    parent_id=c.parent_id,
                    members=c.members,
                    keywords=keyword_map.get(c.cluster_id, c.keywords),
                )
                for c in layer
            )
            for layer in self.layers
        )
        return ClusterTree(layers=layers, doc_ids=self.doc_ids)


def levelwise_rac(
    matrix: EmbeddingMatrix,
    scheme: PrefixScheme,
    *,
    workers: int = 1,
    use_cache: bool | None = None,
) -> ClusterTree:
    """Build the hierarchy by re-clustering inside each parent cluster.

    Layer 1 clusters all rows at the first prefix; every deeper layer runs
    RAC again on each parent's members at the next prefix length, so nesting
    holds by construction.
    """
    scheme.validate_for(matrix.d)
    layers: list[tuple[TreeCluster, ...]] = []
    parents: list[tuple[str | None, list[int]]] = [(None, list(range(matrix.n)))]
    for depth, level in enumerate(scheme.levels, start=1):
        layer: list[TreeCluster] = []
        next_parents: list[tuple[str | None, list[int]]] = []
        for parent_id, rows in parents:
            found = rac(
                matrix, rows, level.dim, level.threshold,
                workers=workers, use_cache=use_cache,
            )
            for cluster in found:
                members = tuple(sorted(cluster.members))
                node = TreeCluster(
                    cluster_id=f"L{depth}.{cluster.id}",
                    parent_id=parent_id,
                    members=members,
                )
                layer.append(node)
                next_parents.append((node.cluster_id, list(members)))
        layer.sort(key=lambda c: c.members[0])
        layers.append(tuple(layer))
        parents = next_parents
    return ClusterTree(layers=tuple(layers), doc_ids=matrix.ids)
