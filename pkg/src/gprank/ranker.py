"""Item-level aggregation of passage scores and ranked-list output.

Each item's score is phi (mean or max) over its top-T passages; items with
fewer than T passages aggregate over all they have. Final lists sort by
descending score with ties broken by ascending item_id, truncated to
cutoff_k. Run files use the TREC format ``query_id Q0 item_id rank score
run_tag`` with scores printed to 6 decimal places; ``#``-prefixed header
lines carry the resolved run configuration.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .corpus import Corpus
from .errors import ConfigError, DataError

PHI_CHOICES = ("mean", "max")


@dataclass(frozen=True)
class AggregationConfig:
    top_t: int = 3
    phi: str = "mean"
    cutoff_k: int = 1000

    def __post_init__(self):
        if self.top_t < 1:
            raise ConfigError(f"top_t must be >= 1, got {self.top_t}")
        if self.phi not in PHI_CHOICES:
            raise ConfigError(f"phi must be one of {PHI_CHOICES}, got {self.phi!r}")
        if self.cutoff_k < 1:
            raise ConfigError(f"cutoff_k must be >= 1, got {self.cutoff_k}")


class RankEntry(NamedTuple):
    item_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: list[RankEntry]


def aggregate_items(
    passage_scores: np.ndarray, corpus: Corpus, cfg: AggregationConfig
) -> dict[str, float]:
    """Top-T aggregation of passage scores into item scores.

    Within an item, passages rank by descending score with ties broken by
    ascending row index.
    """
    scores = np.asarray(passage_scores, dtype=np.float64)
    if scores.shape[0] != corpus.n_passages:
        raise DataError(
            f"{scores.shape[0]} passage scores for {corpus.n_passages} passages"
        )
    if not np.all(np.isfinite(scores)):
        raise DataError("non-finite passage scores")
    out: dict[str, float] = {}
    for item_id, rows in corpus.item_index.items():
        if not rows:
            raise DataError(f"item {item_id!r} has no passages")
        s = scores[rows]
        t = min(cfg.top_t, s.shape[0])
        # stable argsort on -s keeps ascending row order among equal scores
        top = s[np.argsort(-s, kind="stable")[:t]]
        out[item_id] = float(top.max() if cfg.phi == "max" else top.mean())
    return out


def rank_items(item_scores: dict[str, float], cfg: AggregationConfig, query_id: str) -> RankedList:
    """Descending-score item list, ties by ascending item_id, cut at cutoff_k."""
    if not item_scores:
        raise DataError("cannot rank an empty item-score map")
    ordered = sorted(item_scores.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.cutoff_k]
    entries = [RankEntry(item_id, score, i + 1) for i, (item_id, score) in enumerate(ordered)]
    return RankedList(query_id=query_id, entries=entries)


def write_trec_run(
    path: str | Path,
    ranked_lists: list[RankedList],
    run_tag: str = "gprank",
    header: dict[str, object] | None = None,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for key in sorted(header):
                fh.write(f"# {key} = {header[key]}\n")
        for rl in ranked_lists:
            for e in rl.entries:
                fh.write(f"{rl.query_id} Q0 {e.item_id} {e.rank} {e.score:.6f} {run_tag}\n")


def read_trec_run(path: str | Path) -> dict[str, list[RankEntry]]:
    """Run rows grouped by query, in file order; header comments skipped."""
    path = Path(path)
    out: dict[str, list[RankEntry]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 run fields, got {len(parts)}")
            qid, _, item_id, rank_s, score_s, _ = parts
            try:
                entry = RankEntry(item_id, float(score_s), int(rank_s))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad rank/score: {exc}") from exc
            out.setdefault(qid, []).append(entry)
    return out
