"""Epsilon-greedy selection of the labeled passage subset.

For a budget of R labels, the top floor((1-epsilon)*R) rows of the dense
ranking are taken greedily; the remaining ceil(epsilon*R) rows are drawn
uniformly without replacement from the top-eta ranked rows not already
chosen. eta is sometimes called the exploration cap. Randomness comes from
a counter-based Philox generator, so a sample is a pure function of
(ranking, config).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .dense import DenseRanking
from .errors import ConfigError


@dataclass(frozen=True)
class SamplerConfig:
    epsilon: float
    eta: int
    budget_r: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.budget_r < 1:
            raise ConfigError(f"budget_r must be >= 1, got {self.budget_r}")
        if self.eta < self.budget_r:
            raise ConfigError(f"eta ({self.eta}) must be >= budget_r ({self.budget_r})")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class SampleSet:
    greedy: np.ndarray  # row indices, DR-rank order
    exploratory: np.ndarray  # row indices, draw order

    @property
    def all_rows(self) -> np.ndarray:
        return np.concatenate([self.greedy, self.exploratory])

    @property
    def size(self) -> int:
        return int(self.greedy.size + self.exploratory.size)


def split_sizes(epsilon: float, budget_r: int) -> tuple[int, int]:
    """(greedy, exploratory) sizes: floor((1-eps)R) and ceil(eps*R).

    The small nudge guards against floor() dropping a unit when (1-eps)*R
    is an exact integer that float arithmetic lands just below.
    """
    g = math.floor((1.0 - epsilon) * budget_r + 1e-9)
    return g, budget_r - g


def epsilon_greedy_sample(ranking: DenseRanking, cfg: SamplerConfig) -> SampleSet:
    n = ranking.order.shape[0]
    if cfg.eta > n:
        raise ConfigError(f"eta ({cfg.eta}) exceeds corpus size ({n})")
    n_greedy, n_explore = split_sizes(cfg.epsilon, cfg.budget_r)
    greedy = ranking.order[:n_greedy].copy()
    pool = ranking.order[n_greedy:cfg.eta]
    if n_explore > pool.shape[0]:
        raise ConfigError(
            f"exploration pool too small: need {n_explore} rows but only "
            f"{pool.shape[0]} of the top-{cfg.eta} remain after greedy selection"
        )
    if n_explore == 0:
        exploratory = np.empty(0, dtype=np.int64)
    else:
        gen = np.random.Generator(np.random.Philox(key=cfg.seed))
        exploratory = gen.choice(pool, size=n_explore, replace=False).astype(np.int64)
    return SampleSet(greedy=greedy, exploratory=exploratory)


def derive_seed(global_seed: int, query_id: str) -> int:
    """Stable per-query seed: keyed blake2 of the query id."""
    h = hashlib.blake2b(
        query_id.encode("utf-8"),
        digest_size=8,
        key=int(global_seed).to_bytes(8, "little", signed=False),
    ).digest()
    return int.from_bytes(h, "little")
