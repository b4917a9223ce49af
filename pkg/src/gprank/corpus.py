"""Corpus loading: passages, item mapping, embeddings, queries, qrels.

File formats
------------
Embeddings (`EMB1`): 4-byte magic ``EMB1``, uint32-LE row count N, uint32-LE
dimension D, then N*D little-endian float32 values in row-major order.
Trailing bytes are rejected; truncation and non-finite values are reported
with their byte offset.

Passages: JSON lines with keys ``passage_id``, ``item_id``, ``text``, in the
same row order as the embedding file.

Queries: JSON lines with keys ``query_id``, ``text``; query embeddings live
in a separate `EMB1` file aligned by line order.

Qrels: whitespace-separated ``query_id 0 item_id grade`` lines (TREC
convention). Duplicate (query, item) pairs resolve last-write-wins.

A loaded Corpus is immutable and safe to share across worker threads.
Embeddings are stored as float32 exactly as read; numerical code promotes
to float64 blockwise.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DataError

EMB_MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")


class PassageRecord(NamedTuple):
    passage_id: str
    item_id: str
    text: str


@dataclass(frozen=True)
class PassageTable:
    """Passage ids/texts plus the item -> row-index grouping."""

    records: list[PassageRecord]
    item_index: dict[str, list[int]]


@dataclass(frozen=True)
class Corpus:
    passages: list[PassageRecord]
    item_index: dict[str, list[int]]
    embeddings: np.ndarray  # (N, D) float32
    row_to_item: list[str] = field(repr=False, default_factory=list)

    @property
    def n_passages(self) -> int:
        return len(self.passages)

    @property
    def n_items(self) -> int:
        return len(self.item_index)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def passage_id(self, row: int) -> str:
        return self.passages[row].passage_id


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    embedding: np.ndarray  # (D,) float64


def load_embeddings(path: str | Path) -> np.ndarray:
    """Load an `EMB1` file into an (N, D) float32 array."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: file too short for EMB1 header ({len(data)} bytes)")
    magic, n, d = _HEADER.unpack_from(data, 0)
    if magic != EMB_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {EMB_MAGIC!r}")
    expected = _HEADER.size + 4 * n * d
    if len(data) < expected:
        raise DataError(
            f"{path}: truncated payload, expected {expected} bytes "
            f"(N={n}, D={d}) but file ends at byte {len(data)}"
        )
    if len(data) > expected:
        raise DataError(f"{path}: {len(data) - expected} trailing bytes after byte {expected}")
    flat = np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        off = _HEADER.size + 4 * int(bad[0])
        raise DataError(f"{path}: non-finite value at byte offset {off}")
    return flat.reshape(n, d).copy()


def write_embeddings(path: str | Path, matrix: np.ndarray) -> None:
    """Write an (N, D) array as an `EMB1` file (values cast to float32)."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise DataError(f"embedding matrix must be 2-D, got shape {matrix.shape}")
    as32 = np.ascontiguousarray(matrix, dtype="<f4")
    if not np.all(np.isfinite(as32)):
        raise DataError("refusing to write non-finite embedding values")
    n, d = as32.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMB_MAGIC, n, d))
        fh.write(as32.tobytes())


def load_passages(path: str | Path) -> PassageTable:
    """Load the passage table, grouping row indices by item in row order."""
    path = Path(path)
    records: list[PassageRecord] = []
    item_index: dict[str, list[int]] = {}
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rec = PassageRecord(str(obj["passage_id"]), str(obj["item_id"]), str(obj["text"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed passage record: {exc}") from exc
            if rec.passage_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate passage_id {rec.passage_id!r}")
            seen.add(rec.passage_id)
            row = len(records)
            records.append(rec)
            item_index.setdefault(rec.item_id, []).append(row)
    return PassageTable(records=records, item_index=item_index)


def build_corpus(table: PassageTable, embeddings: np.ndarray) -> Corpus:
    """Join a passage table with its embedding matrix, validating alignment."""
    if len(table.records) != embeddings.shape[0]:
        raise DataError(
            f"row count mismatch: {len(table.records)} passages vs "
            f"{embeddings.shape[0]} embedding rows"
        )
    if not table.records:
        raise DataError("corpus must contain at least one passage")
    return Corpus(
        passages=table.records,
        item_index=table.item_index,
        embeddings=embeddings,
        row_to_item=[r.item_id for r in table.records],
    )


def load_corpus(passages_path: str | Path, embeddings_path: str | Path) -> Corpus:
    return build_corpus(load_passages(passages_path), load_embeddings(embeddings_path))


def load_queries(path: str | Path, embeddings_path: str | Path) -> list[Query]:
    """Load queries (JSONL) plus their `EMB1` embeddings, aligned by line order."""
    path = Path(path)
    texts: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                qid, text = str(obj["query_id"]), str(obj["text"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed query record: {exc}") from exc
            if qid in seen:
                raise DataError(f"{path}:{lineno}: duplicate query_id {qid!r}")
            seen.add(qid)
            texts.append((qid, text))
    emb = load_embeddings(embeddings_path)
    if emb.shape[0] != len(texts):
        raise DataError(
            f"{embeddings_path}: {emb.shape[0]} query embeddings for {len(texts)} queries"
        )
    return [
        Query(query_id=qid, text=text, embedding=emb[i].astype(np.float64))
        for i, (qid, text) in enumerate(texts)
    ]


def load_qrels(path: str | Path) -> dict[str, dict[str, int]]:
    """Load TREC-style qrels; later duplicates overwrite earlier ones."""
    path = Path(path)
    qrels: dict[str, dict[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            qid, _, item_id, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: grade {grade_s!r} is not an integer") from exc
            if grade < 0:
                raise DataError(f"{path}:{lineno}: negative grade {grade}")
            qrels.setdefault(qid, {})[item_id] = grade
    return qrels


def write_passages(path: str | Path, records: list[PassageRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec._asdict(), ensure_ascii=False) + "\n")


def write_queries(path: str | Path, queries: list[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, text in queries:
            fh.write(json.dumps({"query_id": qid, "text": text}, ensure_ascii=False) + "\n")


def write_qrels(path: str | Path, qrels: dict[str, dict[str, int]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in qrels:
            for item_id, grade in qrels[qid].items():
                fh.write(f"{qid} 0 {item_id} {grade}\n")
