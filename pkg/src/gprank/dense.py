"""Brute-force dense scoring and deterministic top-k selection.

Scores every passage against the query embedding in one exact O(N*D) pass;
no approximate index. Ties always break by ascending row index so rankings
are reproducible across runs and backends.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import ConfigError, DataError

SIMILARITIES = ("dot", "cosine")


@dataclass(frozen=True)
class DenseRanking:
    scores: np.ndarray  # (N,) float64
    order: np.ndarray  # (N,) int64, descending score, ties by ascending row
    similarity: str


def score_all(query_embedding: np.ndarray, embeddings: np.ndarray, similarity: str = "dot") -> np.ndarray:
    """Score every embedding row against the query.

    dot: <q, v>; cosine: <q, v>/(||q|| ||v||) with zero-norm vectors scoring 0.
    Computation promotes to float64 blockwise.
    """
    if similarity not in SIMILARITIES:
        raise ConfigError(f"similarity must be one of {SIMILARITIES}, got {similarity!r}")
    q = np.asarray(query_embedding, dtype=np.float64).ravel()
    if q.shape[0] != embeddings.shape[1]:
        raise DataError(
            f"dimension mismatch: query has {q.shape[0]} dims, embeddings have {embeddings.shape[1]}"
        )
    n = embeddings.shape[0]
    fn = accel.dot_scores if similarity == "dot" else accel.cosine_scores
    out = np.empty(n, dtype=np.float64)
    for a in range(0, n, accel.BLOCK_ROWS):
        b = min(a + accel.BLOCK_ROWS, n)
        block = np.ascontiguousarray(embeddings[a:b], dtype=np.float64)
        out[a:b] = fn(block, q)
    return out


def order_by_score(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by descending score; equal scores keep ascending row order."""
    return np.argsort(-np.asarray(scores), kind="stable").astype(np.int64)


def rank(query_embedding: np.ndarray, embeddings: np.ndarray, similarity: str = "dot") -> DenseRanking:
    scores = score_all(query_embedding, embeddings, similarity)
    return DenseRanking(scores=scores, order=order_by_score(scores), similarity=similarity)


def top_k(ranking: DenseRanking, k: int) -> list[tuple[int, float]]:
    """First k (row, score) pairs of the ranking; k past N returns all N."""
    if k < 0:
        raise ConfigError(f"k must be non-negative, got {k}")
    rows = ranking.order[:k]
    return [(int(r), float(ranking.scores[r])) for r in rows]
