"""Passage relevance judging: graded 0-3 rubric prompt, expected-relevance
scoring from token logprobs, a persistent judgment cache, and pluggable
backends (remote chat-completions endpoint, cache-only, synthetic oracle).

Scores are produced in label units and multiplied by ``score_scale`` when
judgments are materialized; the cache always stores unscaled values so a
rescaled rerun costs zero fresh calls.

Cache records are append-only JSON lines keyed by
(model, query_id, passage_id, prompt_hash); the hash covers the rendered
single-passage prompt, so editing the template invalidates old judgments.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Corpus, Query
from .errors import DataError, JudgeError
from .sampler import SampleSet

ENV_ENDPOINT = "GPRANK_JUDGE_URL"
ENV_API_KEY = "GPRANK_API_KEY"

BACKENDS = ("remote", "cache_only", "synthetic")
SOURCES = ("logprob", "parsed_label", "synthetic", "cache")

PROMPT_TEMPLATE = """\
Given a query and a list of passages, assign each passage a relevance score from 0 to 3:

0 = Unrelated to the query.
1 = Related but does not answer the query.
2 = Partially answers the query but is unclear or mixed with extra information.
3 = Fully dedicated to answering the query.

Instructions:
- Assign 1 if the passage is somewhat related but incomplete.
- Assign 2 if it provides key information but includes unrelated content.
- Assign 3 if it solely and fully addresses the query.
- Otherwise, assign 0.

Query: {query}
Passages:
{passages}

Steps:
1. Analyze the search intent.
2. Measure content alignment (M).
3. Assess passage trustworthiness (T).
4. Decide on the final score (O).

Return a JSON object mapping passage indices (starting from 0) to relevance scores. Do not include any code in your response."""


@dataclass(frozen=True)
class JudgeConfig:
    backend: str = "synthetic"
    endpoint_url: str = ""
    model_name: str = "synthetic-oracle"
    levels_k: int = 4
    labels: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    max_inflight: int = 4
    score_scale: float = 1.0
    batch_size: int = 10

    def __post_init__(self):
        from .errors import ConfigError

        if self.backend not in BACKENDS:
            raise ConfigError(f"judge backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.levels_k != len(self.labels):
            raise ConfigError(
                f"levels_k ({self.levels_k}) must equal the number of labels ({len(self.labels)})"
            )
        if self.levels_k < 2:
            raise ConfigError("need at least two relevance levels")
        if any(b <= a for a, b in zip(self.labels, self.labels[1:])):
            raise ConfigError(f"labels must be strictly increasing, got {self.labels}")
        if not self.score_scale > 0:
            raise ConfigError(f"score_scale must be positive, got {self.score_scale}")
        if self.max_inflight < 1:
            raise ConfigError("max_inflight must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @property
    def s_max(self) -> float:
        """Maximum attainable score: score_scale times the top label."""
        return self.score_scale * self.labels[-1]


@dataclass(frozen=True)
class Judgment:
    passage_row: int
    score: float
    source: str


@dataclass
class JudgeStats:
    """Instrumentation for the labeling-budget contract."""

    backend_calls: int = 0  # fresh per-passage evaluations (network or oracle)
    http_requests: int = 0
    cache_hits: int = 0
    retries: int = 0


def build_prompt(query_text: str, passage_texts: Sequence[str]) -> str:
    """Render the judging prompt with passages as an indexed list from 0."""
    if not query_text:
        raise DataError("query text must be non-empty")
    if len(passage_texts) == 0:
        raise DataError("at least one passage is required per judging call")
    listing = "\n".join(f"{i}: {text}" for i, text in enumerate(passage_texts))
    return PROMPT_TEMPLATE.replace("{query}", query_text).replace("{passages}", listing)


def prompt_hash(query_text: str, passage_text: str) -> str:
    """Hash of the single-passage rendering; stable across batch compositions."""
    rendered = build_prompt(query_text, [passage_text])
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()[:32]


def expected_relevance(logits: Sequence[float], labels: Sequence[float]) -> float:
    """Softmax-weighted average of labels, stabilized by max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    r = np.asarray(labels, dtype=np.float64)
    if z.shape != r.shape or z.ndim != 1:
        raise DataError(f"logits shape {z.shape} does not match labels shape {r.shape}")
    if z.shape[0] < 2:
        raise DataError("need at least two relevance levels")
    if not np.all(np.isfinite(z)):
        raise DataError("non-finite logit")
    w = np.exp(z - z.max())
    return float((w @ r) / w.sum())


def apply_scale(judgments: Iterable[Judgment], score_scale: float) -> list[Judgment]:
    """Multiply every judgment score by score_scale (> 0)."""
    if not score_scale > 0:
        raise DataError(f"score_scale must be positive, got {score_scale}")
    return [
        Judgment(passage_row=j.passage_row, score=j.score * score_scale, source=j.source)
        for j in judgments
    ]


class JudgmentCache:
    """Append-only JSONL judgment store with an in-memory index.

    Records: {model, query_id, passage_id, prompt_hash, score, source};
    score is unscaled (label units). Writes are serialized by a lock.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str, str, str], tuple[float, str]] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    key = (rec["model"], rec["query_id"], rec["passage_id"], rec["prompt_hash"])
                    self._index[key] = (float(rec["score"]), str(rec["source"]))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise DataError(f"{self.path}:{lineno}: bad cache record: {exc}") from exc

    def __len__(self) -> int:
        return len(self._index)

    def get(self, model: str, query_id: str, passage_id: str, phash: str):
        return self._index.get((model, query_id, passage_id, phash))

    def put(self, model: str, query_id: str, passage_id: str, phash: str,
            score: float, source: str) -> None:
        rec = {
            "model": model,
            "query_id": query_id,
            "passage_id": passage_id,
            "prompt_hash": phash,
            "score": score,
            "source": source,
        }
        with self._lock:
            self._index[(model, query_id, passage_id, phash)] = (score, source)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec) + "\n")


def cosine_oracle(query: Query, row: int, corpus: Corpus, labels: tuple[float, ...]) -> float:
    """Default synthetic oracle: top label times the clipped cosine to the query."""
    v = corpus.embeddings[row].astype(np.float64)
    q = query.embedding
    nv, nq = np.linalg.norm(v), np.linalg.norm(q)
    if nv == 0.0 or nq == 0.0:
        return 0.0
    return labels[-1] * max(0.0, float(v @ q) / (nv * nq))


class RemoteJudge:
    """Chat-completions client requesting per-token logprobs.

    One instance is shared across query workers; max_inflight bounds the
    number of concurrent requests globally. Transport failures retry up to
    3 times with exponential backoff, then raise JudgeError.
    """

    max_attempts = 3
    backoff_base = 0.5
    timeout = 60.0

    def __init__(self, cfg: JudgeConfig):
        self.cfg = cfg
        self.endpoint = cfg.endpoint_url or os.environ.get(ENV_ENDPOINT, "")
        if not self.endpoint:
            raise JudgeError(
                f"no judge endpoint configured (set endpoint_url or ${ENV_ENDPOINT})"
            )
        self.api_key = os.environ.get(ENV_API_KEY, "")
        self._sem = threading.Semaphore(cfg.max_inflight)

    def _post(self, payload: dict, stats: JudgeStats | None) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt and stats is not None:
                stats.retries += 1
            try:
                with self._sem:
                    if stats is not None:
                        stats.http_requests += 1
                    resp = requests.post(
                        self.endpoint, json=payload, headers=headers, timeout=self.timeout
                    )
                if resp.status_code in (429,) or resp.status_code >= 500:
                    last_exc = JudgeError(f"endpoint returned HTTP {resp.status_code}")
                elif resp.status_code != 200:
                    raise JudgeError(f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return resp.json()
            except JudgeError:
                raise
            except Exception as exc:  # transport-level failure
                last_exc = exc
            time.sleep(self.backoff_base * (2**attempt))
        raise JudgeError(f"judge transport failed after {self.max_attempts} attempts: {last_exc}")

    def score_batch(self, query_text: str, passage_texts: list[str],
                    stats: JudgeStats | None = None) -> list[tuple[float, str]]:
        """Return one (unscaled score, source) per passage in the batch."""
        prompt = build_prompt(query_text, passage_texts)
        payload = {
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "logprobs": True,
            "top_logprobs": max(5, self.cfg.levels_k + 1),
        }
        body = self._post(payload, stats)
        try:
            choice = body["choices"][0]
            content = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise JudgeError(f"malformed endpoint response: {exc}") from exc
        label_map = _parse_label_map(content, len(passage_texts), self.cfg.levels_k)
        logprob_scores = _extract_logprob_scores(choice.get("logprobs"), self.cfg)
        out: list[tuple[float, str]] = []
        for i in range(len(passage_texts)):
            if i in logprob_scores:
                out.append((logprob_scores[i], "logprob"))
            else:
                out.append((float(self.cfg.labels[label_map[i]]), "parsed_label"))
        return out


def _parse_label_map(content: str, n_passages: int, levels_k: int) -> dict[int, int]:
    """Parse the JSON index->level map the prompt requests."""
    start, end = content.find("{"), content.rfind("}")
    if start < 0 or end <= start:
        raise JudgeError(f"no JSON object in judge response: {content[:120]!r}")
    try:
        raw = json.loads(content[start : end + 1])
    except json.JSONDecodeError as exc:
        raise JudgeError(f"unparseable judge response: {exc}") from exc
    if not isinstance(raw, dict):
        raise JudgeError("judge response JSON is not an object")
    out: dict[int, int] = {}
    for k, v in raw.items():
        try:
            idx, level = int(k), int(v)
        except (TypeError, ValueError) as exc:
            raise JudgeError(f"non-integer entry in judge response: {k!r}: {v!r}") from exc
        if not 0 <= level < levels_k:
            raise JudgeError(f"label {level} outside 0..{levels_k - 1}")
        out[idx] = level
    missing = [i for i in range(n_passages) if i not in out]
    if missing:
        raise JudgeError(f"judge response missing indices {missing}")
    return out


def _extract_logprob_scores(logprobs_obj, cfg: JudgeConfig) -> dict[int, float]:
    """Expected relevance per passage index from generated-token logprobs.

    Walks the token stream of the JSON map; the first integer token after a
    key's colon is that passage's label position. Its top-alternative
    logprobs at the level tokens (0..K-1) are renormalized by softmax. A
    passage with no extractable position simply falls back to parsed_label.
    """
    if not logprobs_obj:
        return {}
    tokens = logprobs_obj.get("content") or []
    level_tokens = {str(k): k for k in range(cfg.levels_k)}
    scores: dict[int, float] = {}
    current_key: int | None = None
    expect_value = False
    for i, tok in enumerate(tokens):
        text = tok.get("token", "")
        stripped = text.strip()
        if ":" in text:
            prev = tokens[i - 1].get("token", "") if i > 0 else ""
            key_txt = prev.strip().strip('{,"').strip()
            # tokenizers may fuse the quote into the colon token: "0":
            if not key_txt.isdigit():
                key_txt = text.split(":")[0].strip().strip('{,"').strip()
            if key_txt.isdigit():
                current_key = int(key_txt)
                expect_value = True
            continue
        if expect_value and stripped.rstrip(",}") in level_tokens and current_key is not None:
            alts = tok.get("top_logprobs") or []
            lps: dict[int, float] = {}
            for alt in alts:
                alt_txt = alt.get("token", "").strip()
                if alt_txt in level_tokens:
                    lvl = level_tokens[alt_txt]
                    if lvl not in lps:
                        lps[lvl] = float(alt.get("logprob", -math.inf))
            if len(lps) >= 2:
                levels = sorted(lps)
                zs = [lps[k] for k in levels]
                rs = [cfg.labels[k] for k in levels]
                scores[current_key] = expected_relevance(zs, rs)
            expect_value = False
            current_key = None
    return scores


def judge_passages(
    query: Query,
    rows: SampleSet | Sequence[int],
    corpus: Corpus,
    cfg: JudgeConfig,
    cache: JudgmentCache | None = None,
    oracle: Callable[[Query, int, Corpus, tuple[float, ...]], float] | None = None,
    remote: RemoteJudge | None = None,
    stats: JudgeStats | None = None,
) -> list[Judgment]:
    """Produce one Judgment per sampled row, cache-first, sorted by row index.

    Fresh scores are written through to the cache. The synthetic backend
    uses ``oracle`` (default: clipped cosine to the query). cache_only
    raises on any miss. Scores are scaled by cfg.score_scale on the way out.
    """
    if isinstance(rows, SampleSet):
        row_list = [int(r) for r in rows.all_rows]
    else:
        row_list = [int(r) for r in rows]
    row_list = sorted(set(row_list))
    if cache is None:
        cache = JudgmentCache(None)

    hashes = {row: prompt_hash(query.text, corpus.passages[row].text) for row in row_list}
    judgments: dict[int, Judgment] = {}
    misses: list[int] = []
    for row in row_list:
        hit = cache.get(cfg.model_name, query.query_id, corpus.passage_id(row), hashes[row])
        if hit is not None:
            score, _ = hit
            judgments[row] = Judgment(row, score * cfg.score_scale, "cache")
            if stats is not None:
                stats.cache_hits += 1
        else:
            misses.append(row)

    if misses:
        if cfg.backend == "cache_only":
            raise DataError(
                f"cache miss for {len(misses)} passages of query {query.query_id!r} "
                "with a cache-only judge"
            )
        if cfg.backend == "synthetic":
            fn = oracle if oracle is not None else cosine_oracle
            lo, hi = cfg.labels[0], cfg.labels[-1]
            for row in misses:
                raw = float(np.clip(fn(query, row, corpus, cfg.labels), lo, hi))
                if stats is not None:
                    stats.backend_calls += 1
                cache.put(cfg.model_name, query.query_id, corpus.passage_id(row),
                          hashes[row], raw, "synthetic")
                judgments[row] = Judgment(row, raw * cfg.score_scale, "synthetic")
        else:  # remote
            client = remote if remote is not None else RemoteJudge(cfg)
            batches = [misses[i : i + cfg.batch_size] for i in range(0, len(misses), cfg.batch_size)]

            def run_batch(batch: list[int]) -> list[tuple[int, float, str]]:
                texts = [corpus.passages[r].text for r in batch]
                scored = client.score_batch(query.text, texts, stats)
                return [(r, s, src) for r, (s, src) in zip(batch, scored)]

            if len(batches) == 1:
                results = [run_batch(batches[0])]
            else:
                with ThreadPoolExecutor(max_workers=cfg.max_inflight) as pool:
                    results = list(pool.map(run_batch, batches))
            for batch_result in results:
                for row, raw, src in batch_result:
                    if stats is not None:
                        stats.backend_calls += 1
                    cache.put(cfg.model_name, query.query_id, corpus.passage_id(row),
                              hashes[row], raw, src)
                    judgments[row] = Judgment(row, raw * cfg.score_scale, src)

    return [judgments[row] for row in row_list]
