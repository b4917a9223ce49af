"""gprank: budget-constrained passage relevance estimation.

Per-query Gaussian process regression over dense embeddings, trained on a
small epsilon-greedily sampled set of judge-labeled passages, with
item-level aggregation and ranking evaluation.
"""

from .corpus import Corpus, Query, load_corpus, load_embeddings, load_qrels, load_queries
from .dense import DenseRanking, rank, score_all, top_k
from .errors import ConfigError, DataError, GprankError, JudgeError
from .evaluation import MetricReport, evaluate_run, ndcg_at_k, paired_t_test, precision_at_k
from .gpr import GprModel, KernelSpec, fit, kernel_matrix, log_marginal_likelihood, optimize_length_scale, predict_mean, predict_var
from .judge import JudgeConfig, Judgment, JudgmentCache, build_prompt, expected_relevance, judge_passages
from .pipeline import PipelineOptions, PipelineResult, run_pipeline
from .ranker import AggregationConfig, RankedList, aggregate_items, rank_items
from .sampler import SamplerConfig, SampleSet, epsilon_greedy_sample

__version__ = "0.1.0"

__all__ = [
    "AggregationConfig",
    "ConfigError",
    "Corpus",
    "DataError",
    "DenseRanking",
    "GprModel",
    "GprankError",
    "JudgeConfig",
    "JudgeError",
    "Judgment",
    "JudgmentCache",
    "KernelSpec",
    "MetricReport",
    "PipelineOptions",
    "PipelineResult",
    "Query",
    "RankedList",
    "SampleSet",
    "SamplerConfig",
    "aggregate_items",
    "build_prompt",
    "epsilon_greedy_sample",
    "evaluate_run",
    "expected_relevance",
    "fit",
    "judge_passages",
    "kernel_matrix",
    "load_corpus",
    "load_embeddings",
    "load_qrels",
    "load_queries",
    "log_marginal_likelihood",
    "ndcg_at_k",
    "optimize_length_scale",
    "paired_t_test",
    "precision_at_k",
    "predict_mean",
    "predict_var",
    "rank",
    "rank_items",
    "run_pipeline",
    "score_all",
    "top_k",
]
