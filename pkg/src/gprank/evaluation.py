"""Ranking evaluation: Precision@k, NDCG@k, and paired significance tests.

Conventions (documented defaults, matching common evaluation tooling):
relevance binarizes as grade > 0 for precision; unjudged items count as
grade 0; precision always divides by k even for short result lists; NDCG
uses linear gain by default (2^g - 1 available via gain="exp") with
discount log2(rank+1); queries whose ideal DCG is zero score 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.special

from .errors import DataError
from .ranker import RankedList, RankEntry

log = logging.getLogger(__name__)

GAINS = ("linear", "exp")
DEFAULT_KS = (10, 30)


@dataclass(frozen=True)
class MetricReport:
    per_query: dict[str, dict[str, float]]
    means: dict[str, float]
    n_queries: int


def _entry_items(run: RankedList | Sequence[RankEntry]) -> list[str]:
    entries = run.entries if isinstance(run, RankedList) else list(run)
    return [e.item_id for e in entries]


def precision_at_k(run: RankedList | Sequence[RankEntry], qrels: dict[str, dict[str, int]],
                   k: int, query_id: str | None = None) -> float:
    """|relevant in top-k| / k, binarizing relevance as grade > 0."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    qid = query_id if query_id is not None else run.query_id
    grades = qrels.get(qid)
    if grades is None:
        log.warning("query %r absent from qrels; precision set to 0", qid)
        return 0.0
    items = _entry_items(run)[:k]
    hits = sum(1 for item in items if grades.get(item, 0) > 0)
    return hits / k


def _gain(grade: int, gain: str) -> float:
    return float(grade) if gain == "linear" else float(2.0**grade - 1.0)


def ndcg_at_k(run: RankedList | Sequence[RankEntry], qrels: dict[str, dict[str, int]],
              k: int, query_id: str | None = None, gain: str = "linear") -> float:
    """DCG@k / ideal-DCG@k with discount log2(position + 1)."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if gain not in GAINS:
        raise DataError(f"gain must be one of {GAINS}, got {gain!r}")
    qid = query_id if query_id is not None else run.query_id
    grades = qrels.get(qid)
    if grades is None:
        log.warning("query %r absent from qrels; NDCG set to 0", qid)
        return 0.0
    items = _entry_items(run)[:k]
    dcg = 0.0
    for pos, item in enumerate(items, start=1):
        dcg += _gain(grades.get(item, 0), gain) / math.log2(pos + 1)
    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = 0.0
    for pos, g in enumerate(ideal, start=1):
        idcg += _gain(g, gain) / math.log2(pos + 1)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def evaluate_run(
    run: dict[str, list[RankEntry]] | list[RankedList],
    qrels: dict[str, dict[str, int]],
    ks: Sequence[int] = DEFAULT_KS,
    gain: str = "linear",
) -> MetricReport:
    """Per-query P@k and NDCG@k plus arithmetic means over all run queries."""
    if isinstance(run, list):
        run = {rl.query_id: rl.entries for rl in run}
    per_query: dict[str, dict[str, float]] = {}
    for qid, entries in run.items():
        row: dict[str, float] = {}
        for k in ks:
            row[f"P@{k}"] = precision_at_k(entries, qrels, k, query_id=qid)
            row[f"NDCG@{k}"] = ndcg_at_k(entries, qrels, k, query_id=qid, gain=gain)
        per_query[qid] = row
    metric_names = [f"P@{k}" for k in ks] + [f"NDCG@{k}" for k in ks]
    means = {
        name: (sum(row[name] for row in per_query.values()) / len(per_query) if per_query else 0.0)
        for name in metric_names
    }
    return MetricReport(per_query=per_query, means=means, n_queries=len(per_query))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Paired t on differences a - b; returns (t, two-sided p), df = n-1.

    Degenerate cases: all-zero differences give (0, 1); a constant nonzero
    difference gives (signed inf, 0).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"paired vectors must match: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 pairs, got {n}")
    d = a - b
    if np.all(d == 0.0):
        return 0.0, 1.0
    sd = float(np.std(d, ddof=1))
    mean = float(np.mean(d))
    if sd == 0.0:
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    # two-sided p from the t CDF (scipy.special.stdtr)
    p = 2.0 * float(scipy.special.stdtr(n - 1, -abs(t)))
    return t, p


def format_report(report: MetricReport, title: str = "") -> str:
    """Aligned text table: one row per query plus the mean row."""
    names = list(report.means.keys())
    width = max([len("query")] + [len(q) for q in report.per_query])
    lines = []
    if title:
        lines.append(title)
    header = "query".ljust(width) + "".join(f"  {n:>8}" for n in names)
    lines.append(header)
    for qid in sorted(report.per_query):
        row = report.per_query[qid]
        lines.append(qid.ljust(width) + "".join(f"  {row[n]:>8.4f}" for n in names))
    lines.append("mean".ljust(width) + "".join(f"  {report.means[n]:>8.4f}" for n in names))
    return "\n".join(lines)
