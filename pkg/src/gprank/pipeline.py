"""End-to-end per-query pipeline: retrieve, sample, judge, fit, score,
aggregate, rank, and optionally evaluate.

Each query is processed independently (its own sampler seed, judge calls,
and GPR fit), so failures stay contained and queries can run in a worker
pool. At most budget_r fresh judge calls are issued per query, ever; a
warm cache run issues none. Outputs are deterministic for a fixed config
and cache, so rerunning produces byte-identical run files.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dense, gpr
from .corpus import Corpus, Query
from .errors import GprankError
from .evaluation import MetricReport, evaluate_run
from .judge import JudgeConfig, JudgeStats, JudgmentCache, RemoteJudge, judge_passages
from .ranker import AggregationConfig, RankedList, aggregate_items, rank_items
from .sampler import SamplerConfig, epsilon_greedy_sample, derive_seed


@dataclass(frozen=True)
class PipelineOptions:
    similarity: str = "dot"
    epsilon: float = 0.1
    eta: int | None = None  # None means all passages
    budget_r: int = 50
    seed: int = 0
    kernel: str = "rbf"
    alpha: float = 1e-3
    ell_init: float = 1.0
    ell_bounds: tuple[float, float] = gpr.DEFAULT_ELL_BOUNDS
    ell_opt: bool = True
    top_t: int = 3
    phi: str = "mean"
    cutoff_k: int = 1000
    workers: int = 1
    strict: bool = False

    def aggregation(self) -> AggregationConfig:
        return AggregationConfig(top_t=self.top_t, phi=self.phi, cutoff_k=self.cutoff_k)


@dataclass
class QueryTrace:
    query_id: str
    greedy_rows: list[int] = field(default_factory=list)
    exploratory_rows: list[int] = field(default_factory=list)
    fitted_ell: float | None = None
    alpha_used: float | None = None
    judge_calls: int = 0
    cache_hits: int = 0
    retrieve_time: float = 0.0
    fit_time: float = 0.0
    score_time: float = 0.0
    error: str | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PipelineResult:
    ranked_lists: list[RankedList]
    traces: list[QueryTrace]
    stats: JudgeStats
    report: MetricReport | None = None


def run_query(
    query: Query,
    corpus: Corpus,
    opts: PipelineOptions,
    judge_cfg: JudgeConfig,
    cache: JudgmentCache,
    oracle: Callable | None = None,
    remote: RemoteJudge | None = None,
) -> tuple[RankedList, QueryTrace, JudgeStats]:
    trace = QueryTrace(query_id=query.query_id)
    stats = JudgeStats()

    t0 = time.perf_counter()
    ranking = dense.rank(query.embedding, corpus.embeddings, opts.similarity)
    trace.retrieve_time = time.perf_counter() - t0

    eta = corpus.n_passages if opts.eta is None else opts.eta
    sampler_cfg = SamplerConfig(
        epsilon=opts.epsilon,
        eta=eta,
        budget_r=opts.budget_r,
        seed=derive_seed(opts.seed, query.query_id),
    )
    sample = epsilon_greedy_sample(ranking, sampler_cfg)
    trace.greedy_rows = [int(r) for r in sample.greedy]
    trace.exploratory_rows = [int(r) for r in sample.exploratory]

    judgments = judge_passages(
        query, sample, corpus, judge_cfg, cache, oracle=oracle, remote=remote, stats=stats
    )
    trace.judge_calls = stats.backend_calls
    trace.cache_hits = stats.cache_hits

    rows = [j.passage_row for j in judgments]
    sample_X = corpus.embeddings[rows].astype(np.float64)
    sample_y = np.array([j.score for j in judgments])

    t0 = time.perf_counter()
    if opts.kernel == "rbf" and opts.ell_opt:
        ell_res = gpr.optimize_length_scale(
            query.embedding, judge_cfg.s_max, sample_X, sample_y,
            opts.alpha, opts.ell_init, opts.ell_bounds,
        )
        spec = gpr.KernelSpec("rbf", ell_res.ell)
        trace.fitted_ell = ell_res.ell
    else:
        spec = gpr.KernelSpec(opts.kernel, opts.ell_init)
        if opts.kernel == "rbf":
            trace.fitted_ell = opts.ell_init
    model = gpr.fit(spec, opts.alpha, query.embedding, judge_cfg.s_max, sample_X, sample_y)
    trace.alpha_used = model.alpha_used
    trace.fit_time = time.perf_counter() - t0

    t0 = time.perf_counter()
    passage_scores = gpr.predict_mean(model, corpus.embeddings)
    trace.score_time = time.perf_counter() - t0

    agg = opts.aggregation()
    ranked = rank_items(aggregate_items(passage_scores, corpus, agg), agg, query.query_id)
    return ranked, trace, stats


def dense_baseline_query(
    query: Query, corpus: Corpus, similarity: str, agg: AggregationConfig
) -> RankedList:
    """Plain dense retrieval: passage scores straight into item aggregation."""
    scores = dense.score_all(query.embedding, corpus.embeddings, similarity)
    return rank_items(aggregate_items(scores, corpus, agg), agg, query.query_id)


def run_pipeline(
    corpus: Corpus,
    queries: list[Query],
    opts: PipelineOptions,
    judge_cfg: JudgeConfig,
    cache: JudgmentCache | None = None,
    qrels: dict[str, dict[str, int]] | None = None,
    oracle: Callable | None = None,
) -> PipelineResult:
    if cache is None:
        cache = JudgmentCache(None)
    remote = RemoteJudge(judge_cfg) if judge_cfg.backend == "remote" else None

    def work(query: Query):
        try:
            return run_query(query, corpus, opts, judge_cfg, cache, oracle=oracle, remote=remote)
        except GprankError:
            raise
        except Exception as exc:  # keep per-query failures contained
            raise GprankError(str(exc)) from exc

    results: list[tuple[RankedList, QueryTrace, JudgeStats] | None] = [None] * len(queries)
    errors: list[tuple[Query, Exception]] = []
    if opts.workers <= 1:
        for i, q in enumerate(queries):
            try:
                results[i] = work(q)
            except GprankError as exc:
                if opts.strict:
                    raise
                errors.append((q, exc))
    else:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            futures = {pool.submit(work, q): i for i, q in enumerate(queries)}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except GprankError as exc:
                    if opts.strict:
                        raise
                    errors.append((queries[i], exc))

    ranked_lists: list[RankedList] = []
    traces: list[QueryTrace] = []
    total = JudgeStats()
    for i, q in enumerate(queries):
        if results[i] is None:
            continue
        ranked, trace, stats = results[i]
        ranked_lists.append(ranked)
        traces.append(trace)
        total.backend_calls += stats.backend_calls
        total.http_requests += stats.http_requests
        total.cache_hits += stats.cache_hits
        total.retries += stats.retries
    for q, exc in errors:
        traces.append(QueryTrace(query_id=q.query_id, error=str(exc)))

    report = evaluate_run(ranked_lists, qrels) if qrels is not None and ranked_lists else None
    return PipelineResult(ranked_lists=ranked_lists, traces=traces, stats=total, report=report)
