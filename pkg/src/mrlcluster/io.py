"""File formats: binary embeddings, JSON-lines pairs, TOML config, tree JSON.

Embedding files are little-endian: a 16-byte header (magic "MRL1", format
version, row count, dimension, all unsigned 32-bit) followed by n*d float32
values in row-major order. Document ids live in a companion text file, one
id per line. All writers go through a temp-file-and-rename so readers never
observe partial output.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .cluster import ClusterTree, TreeCluster
from .core import EmbeddingMatrix, LabeledPair, PrefixScheme, SimilarityLabel
from .errors import FormatError, InvariantViolation

MAGIC = b"MRL1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")

TREE_FORMAT = "mrl-tree/1"


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write via a sibling temp file and rename, so output is all-or-nothing."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_embeddings(path: str | Path, matrix: EmbeddingMatrix, ids_path: str | Path) -> None:
    """Serialize a matrix to the binary format plus its ids sidecar.

    Values are stored as float32; in-memory float64 data is narrowed on
    write, so write-then-read is bit-exact only for float32-representable
    inputs (which includes everything previously read from disk).
    """
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, matrix.n, matrix.d)
    body = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + body)
    atomic_write_text(ids_path, "".join(doc_id + "\n" for doc_id in matrix.ids))


def read_embedding_data(path: str | Path) -> np.ndarray:
    """Load just the float32 body of a binary embedding file (as written)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(
            f"file too short for a header: expected at least {_HEADER.size} bytes, "
            f"got {len(raw)}",
            path=path, offset=len(raw),
        )
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", path=path, offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", path=path, offset=4)
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise FormatError(
            f"body length mismatch: expected {expected} bytes for {n}x{d}, got {len(raw)}",
            path=path, offset=min(len(raw), expected),
        )
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d)


def read_embeddings(path: str | Path, ids_path: str | Path) -> EmbeddingMatrix:
    """Load a binary embedding file and its ids sidecar into float64."""
    data = read_embedding_data(path)
    n = data.shape[0]

    ids: list[str] = []
    with open(ids_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            doc_id = line.rstrip("\n")
            if not doc_id:
                raise FormatError("empty document id", path=ids_path, line=line_no)
            ids.append(doc_id)
    if len(ids) != n:
        raise FormatError(
            f"ids file has {len(ids)} lines but the matrix has {n} rows",
            path=ids_path, line=len(ids),
        )
    try:
        return EmbeddingMatrix(data=data.astype(np.float64), ids=tuple(ids))
    except ValueError as exc:
        raise FormatError(str(exc), path=path) from exc


def read_pairs(path: str | Path) -> list[LabeledPair]:
    """Parse a JSON-lines pairs file; errors carry the offending line number."""
    pairs: list[LabeledPair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", path=path, line=line_no) from exc
            if not isinstance(record, dict):
                raise FormatError("each line must be a JSON object", path=path, line=line_no)
            try:
                id_a = record["id_a"]
                id_b = record["id_b"]
            except KeyError as exc:
                raise FormatError(f"missing field {exc}", path=path, line=line_no) from exc
            has_label = "label" in record
            has_score = "score" in record
            if has_label == has_score:
                raise FormatError(
                    "exactly one of 'label'/'score' must be present",
                    path=path, line=line_no,
                )
            try:
                if has_label:
                    pair = LabeledPair(id_a=id_a, id_b=id_b,
                                       label=SimilarityLabel.parse(record["label"]))
                else:
                    pair = LabeledPair(id_a=id_a, id_b=id_b, score=float(record["score"]))
            except (ValueError, TypeError) as exc:
                raise FormatError(str(exc), path=path, line=line_no) from exc
            pairs.append(pair)
    return pairs


def write_pairs(path: str | Path, pairs: list[LabeledPair]) -> None:
    lines = []
    for pair in pairs:
        record: dict = {"id_a": pair.id_a, "id_b": pair.id_b}
        if pair.label is not None:
            record["label"] = pair.label.code
        else:
            record["score"] = pair.score
        lines.append(json.dumps(record, ensure_ascii=False))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_texts(path: str | Path) -> dict[str, str]:
    """JSON-lines of {"id": ..., "text": ...} records keyed by document id."""
    texts: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", path=path, line=line_no) from exc
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise FormatError(
                    'each line must be an object with "id" and "text"',
                    path=path, line=line_no,
                )
            if record["id"] in texts:
                raise FormatError(f"duplicate text id {record['id']!r}", path=path, line=line_no)
            texts[str(record["id"])] = str(record["text"])
    return texts


@dataclass(frozen=True)
class RunConfig:
    """Tunables loaded from a TOML file; see load_config for keys."""

    lambdas: tuple[float, ...] = (0.5, 0.5, 0.5)
    tau: float = 0.05
    levels: tuple[int, ...] | None = None
    grid: tuple[float, float, float] = (0.0, 0.95, 0.05)
    stopwords: str | None = None
    top_k: int = 5

    def scheme_for(self, d: int) -> PrefixScheme:
        if self.levels is None:
            return PrefixScheme.default(d, tuple(self.lambdas))
        if len(self.levels) != len(self.lambdas):
            raise ValueError(
                f"{len(self.levels)} levels but {len(self.lambdas)} thresholds"
            )
        if len(self.levels) != 3:
            raise ValueError("explicit levels must name exactly three dimensions")
        scheme = PrefixScheme.default(d, tuple(self.lambdas))
        if tuple(lv.dim for lv in scheme.levels) != tuple(self.levels):
            raise ValueError(
                f"levels {self.levels} do not match the canonical ladder "
                f"{tuple(lv.dim for lv in scheme.levels)} for d={d}"
            )
        return scheme


def load_config(path: str | Path) -> RunConfig:
    """Parse the run configuration.

    Recognized keys: lambdas (list of 3 floats), tau (float), levels (list
    of 3 ints, optional), grid (list [lo, hi, step]), stopwords (path),
    top_k (int). Unknown keys are rejected so typos fail loudly.
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"invalid TOML: {exc}", path=path) from exc
    known = {"lambdas", "tau", "levels", "grid", "stopwords", "top_k"}
    unknown = set(raw) - known
    if unknown:
        raise FormatError(f"unknown config keys: {sorted(unknown)}", path=path)
    kwargs: dict = {}
    if "lambdas" in raw:
        kwargs["lambdas"] = tuple(float(v) for v in raw["lambdas"])
    if "tau" in raw:
        kwargs["tau"] = float(raw["tau"])
    if "levels" in raw:
        kwargs["levels"] = tuple(int(v) for v in raw["levels"])
    if "grid" in raw:
        grid = tuple(float(v) for v in raw["grid"])
        if len(grid) != 3:
            raise FormatError("grid must be [lo, hi, step]", path=path)
        kwargs["grid"] = grid
    if "stopwords" in raw:
        kwargs["stopwords"] = str(raw["stopwords"])
    if "top_k" in raw:
        kwargs["top_k"] = int(raw["top_k"])
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise FormatError(str(exc), path=path) from exc


def tree_to_json_dict(tree: ClusterTree) -> dict:
    layer_names = {1: "themes", 2: "topics", 3: "stories"}
    layers = []
    for depth, layer in enumerate(tree.layers, start=1):
        clusters = []
        for cluster in layer:
            record: dict = {
                "cluster_id": cluster.cluster_id,
                "parent_id": cluster.parent_id,
                "member_ids": [tree.doc_ids[r] for r in cluster.members],
                "size": cluster.size,
            }
            if cluster.keywords is not None:
                record["keywords"] = [[term, weight] for term, weight in cluster.keywords]
            clusters.append(record)
        layers.append({
            "level": depth,
            "name": layer_names.get(depth, f"level-{depth}"),
            "clusters": clusters,
        })
    return {
        "format": TREE_FORMAT,
        "num_documents": len(tree.doc_ids),
        "doc_ids": list(tree.doc_ids),
        "layers": layers,
    }


def write_tree(path: str | Path, tree: ClusterTree) -> None:
    tree.validate()
    payload = json.dumps(tree_to_json_dict(tree), ensure_ascii=False, indent=2)
    atomic_write_text(path, payload + "\n")


def read_tree(path: str | Path) -> ClusterTree:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from exc
    if not isinstance(raw, dict) or raw.get("format") != TREE_FORMAT:
        raise FormatError(f"not a {TREE_FORMAT} document", path=path)
    try:
        doc_ids = tuple(raw["doc_ids"])
        index = {doc_id: i for i, doc_id in enumerate(doc_ids)}
        layers = []
        for layer in raw["layers"]:
            clusters = []
            for record in layer["clusters"]:
                keywords = record.get("keywords")
                clusters.append(TreeCluster(
                    cluster_id=record["cluster_id"],
                    parent_id=record["parent_id"],
                    members=tuple(index[doc_id] for doc_id in record["member_ids"]),
                    keywords=None if keywords is None else tuple(
                        (str(t), float(w)) for t, w in keywords
                    ),
                ))
            layers.append(tuple(clusters))
        tree = ClusterTree(layers=tuple(layers), doc_ids=doc_ids)
    except InvariantViolation:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed tree document: {exc}", path=path) from exc
    return tree
