"""Seeded synthetic corpora and planted relevance surfaces.

`two_cluster_world` builds the controlled setting used by the benchmark
scenarios and the property suite: relevant items live in two regions of
embedding space, one containing the query and one antipodal to it, so a
similarity-to-query scorer can only ever see half the truth. The planted
passage relevance is a radial bump around each relevant item's center:

    f(v) = top_label * max_m exp(-||v - m||^2 / (2 * width^2))

which yields a graded surface: cluster members score near 3, a planted
fringe shell scores in [1, 2), background scores near 0. Item-level truth
(qrels) marks exactly the cluster items relevant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, PassageRecord, Query, build_corpus, PassageTable


@dataclass(frozen=True)
class PlantedWorld:
    corpus: Corpus
    query: Query
    qrels: dict[str, dict[str, int]]
    true_scores: np.ndarray  # (N,) planted passage relevance in [0, top_label]
    relevant_items: tuple[str, ...]
    high_pool: np.ndarray  # rows with f >= 2, round-robin over relevant items
    low_pool: np.ndarray  # rows with 1 <= f < 2, round-robin over fringe items

    def oracle(self, query, row, corpus, labels):
        """Judge oracle returning the planted passage relevance."""
        return float(self.true_scores[row])


def _make_table(groups: list[tuple[str, int]]) -> PassageTable:
    """groups: (item_id, n_passages) in row order."""
    records: list[PassageRecord] = []
    item_index: dict[str, list[int]] = {}
    for item_id, count in groups:
        for j in range(count):
            row = len(records)
            records.append(
                PassageRecord(f"{item_id}-p{j:03d}", item_id, f"synthetic passage {j} of {item_id}")
            )
            item_index.setdefault(item_id, []).append(row)
    return PassageTable(records=records, item_index=item_index)


def random_corpus(n_items: int, passages_per_item: int, dim: int, seed: int,
                  scale: float = 1.0) -> Corpus:
    """Gaussian random corpus: n_items * passages_per_item rows."""
    rng = np.random.default_rng(seed)
    groups = [(f"item{i:05d}", passages_per_item) for i in range(n_items)]
    table = _make_table(groups)
    emb = (scale * rng.standard_normal((len(table.records), dim))).astype(np.float32)
    return build_corpus(table, emb)


def random_queries(n: int, dim: int, seed: int, scale: float = 1.0) -> list[Query]:
    rng = np.random.default_rng(seed)
    return [
        Query(
            query_id=f"q{i:03d}",
            text=f"synthetic query {i}",
            embedding=scale * rng.standard_normal(dim),
        )
        for i in range(n)
    ]


def two_cluster_world(
    seed: int,
    *,
    dim: int = 16,
    n_a_items: int = 6,
    n_b_items: int = 6,
    n_fringe_items: int = 8,
    n_bg_items: int = 62,
    a_passages: int = 25,
    b_passages: int = 25,
    fringe_passages: int = 10,
    bg_passages: int = 10,
    rho: float = 3.0,
    a_spread: float = 0.15,
    b_spread: float = 0.15,
    b_placement: str = "antipodal",
    opposed_cos: float = 0.8,
    within: float = 0.10,
    fringe_radius: float = 1.2,
    bg_scale: float = 1.0,
    width: float = 1.0,
    query_offset: float = 0.2,
    top_label: float = 3.0,
    normalize: bool = False,
) -> PlantedWorld:
    """Relevant region A at +rho along a random axis (query inside), plus
    distant relevant items placed per b_placement:

      antipodal   one tight region at -rho (spread b_spread); a single
                  labeled passage there is informative for all of B
      dispersed   each B item is its own island at radius rho in a random
                  direction away from A, so labels transfer only within
                  one item and pull a global linear fit incoherently
      opposed_ring  each B item is an isolated island on a ring opposed to
                  the query axis (axis coordinate -opposed_cos): mutually
                  distant for a local kernel, while their pull on a global
                  linear fit is coherent along the axis and their linear
                  scores stay negative
    """
    rng = np.random.default_rng(seed)
    axis = rng.standard_normal(dim)
    axis /= np.linalg.norm(axis)
    c_a = rho * axis

    a_centers = c_a + a_spread * rng.standard_normal((n_a_items, dim))
    if b_placement == "antipodal":
        b_centers = -c_a + b_spread * rng.standard_normal((n_b_items, dim))
    elif b_placement == "dispersed":
        dirs = []
        while len(dirs) < n_b_items:
            u = rng.standard_normal(dim)
            u /= np.linalg.norm(u)
            if abs(u @ axis) < 0.2:
                dirs.append(u)
        b_centers = rho * np.asarray(dirs)
    elif b_placement == "opposed_ring":
        beta = opposed_cos
        gamma = float(np.sqrt(1.0 - beta * beta))
        dirs = []
        while len(dirs) < n_b_items:
            p = rng.standard_normal(dim)
            p -= (p @ axis) * axis
            p /= np.linalg.norm(p)
            dirs.append(-beta * axis + gamma * p)
        b_centers = rho * np.asarray(dirs)
    else:
        raise ValueError(
            f"b_placement must be antipodal|dispersed|opposed_ring, got {b_placement!r}"
        )
    relevance_centers = np.vstack([a_centers, b_centers])

    groups: list[tuple[str, int]] = []
    rows: list[np.ndarray] = []
    for i in range(n_a_items):
        groups.append((f"A{i:02d}", a_passages))
        rows.append(a_centers[i] + within * rng.standard_normal((a_passages, dim)))
    for i in range(n_b_items):
        groups.append((f"B{i:02d}", b_passages))
        rows.append(b_centers[i] + within * rng.standard_normal((b_passages, dim)))
    for i in range(n_fringe_items):
        # a shell around a relevance center where f lands in the partial band
        center = relevance_centers[rng.integers(0, relevance_centers.shape[0])]
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        anchor = center + fringe_radius * width * direction
        groups.append((f"F{i:02d}", fringe_passages))
        rows.append(anchor + 0.05 * rng.standard_normal((fringe_passages, dim)))
    for i in range(n_bg_items):
        center = bg_scale * rng.standard_normal(dim)
        groups.append((f"G{i:02d}", bg_passages))
        rows.append(center + within * rng.standard_normal((bg_passages, dim)))

    table = _make_table(groups)
    emb64 = np.vstack(rows)
    query_vec = c_a + query_offset * rng.standard_normal(dim)
    if normalize:
        # unit-sphere variant: angles carry all structure, as with typical
        # sentence-embedding spaces
        emb64 /= np.linalg.norm(emb64, axis=1, keepdims=True)
        relevance_centers = relevance_centers / np.linalg.norm(
            relevance_centers, axis=1, keepdims=True
        )
        query_vec /= np.linalg.norm(query_vec)
    corpus = build_corpus(table, emb64.astype(np.float32))

    # planted surface from the float32 embeddings actually served downstream
    emb = corpus.embeddings.astype(np.float64)
    d2 = (
        np.einsum("ij,ij->i", emb, emb)[:, None]
        + np.einsum("ij,ij->i", relevance_centers, relevance_centers)[None, :]
        - 2.0 * emb @ relevance_centers.T
    )
    true_scores = top_label * np.exp(-np.maximum(d2, 0.0).min(axis=1) / (2.0 * width**2))

    relevant = tuple(f"A{i:02d}" for i in range(n_a_items)) + tuple(
        f"B{i:02d}" for i in range(n_b_items)
    )
    query = Query(query_id=f"pq{seed:05d}", text=f"planted query {seed}", embedding=query_vec)
    qrels = {query.query_id: {item: 1 for item in relevant}}

    high_pool = _round_robin_pool(corpus, true_scores, lambda s: s >= 2.0, relevant)
    fringe_items = tuple(f"F{i:02d}" for i in range(n_fringe_items))
    low_pool = _round_robin_pool(
        corpus, true_scores, lambda s: 1.0 <= s < 2.0, relevant + fringe_items
    )
    return PlantedWorld(
        corpus=corpus,
        query=query,
        qrels=qrels,
        true_scores=true_scores,
        relevant_items=relevant,
        high_pool=high_pool,
        low_pool=low_pool,
    )


def _round_robin_pool(corpus: Corpus, scores: np.ndarray, keep, item_order) -> np.ndarray:
    """Rows passing `keep`, cycling one row per item so consecutive picks
    cover distinct items before revisiting any."""
    per_item: list[list[int]] = []
    for item_id in item_order:
        rows = [r for r in corpus.item_index.get(item_id, []) if keep(scores[r])]
        rows.sort(key=lambda r: -scores[r])
        if rows:
            per_item.append(rows)
    pool: list[int] = []
    depth = 0
    while True:
        added = False
        for rows in per_item:
            if depth < len(rows):
                pool.append(rows[depth])
                added = True
        if not added:
            break
        depth += 1
    return np.asarray(pool, dtype=np.int64)
