"""Ranking and classification metrics.

Ties use the mid-rank convention throughout: a positive tied with t
negatives sits half-way between the optimistic and pessimistic rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass
class RankedQueryResult:
    """One positive score against its paired negative scores."""

    pos_score: float
    neg_scores: Sequence[float]


def rank_of_positive(result: RankedQueryResult) -> float:
    """Mid-rank of the positive among its negatives (1 = best)."""
    neg = np.asarray(result.neg_scores, dtype=np.float64)
    if neg.size == 0:
        raise ValueError("ranking needs at least one negative score")
    greater = int(np.count_nonzero(neg > result.pos_score))
    ties = int(np.count_nonzero(neg == result.pos_score))
    return 1.0 + greater + 0.5 * ties


def mrr(results: Sequence[RankedQueryResult]) -> float:
    """Mean reciprocal rank over the queries."""
    if not results:
        raise ValueError("mrr needs at least one result")
    return float(np.mean([1.0 / rank_of_positive(r) for r in results]))


def hits_at_k(results: Sequence[RankedQueryResult], k: int) -> float:
    """Fraction of positives ranked within the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not results:
        raise ValueError("hits_at_k needs at least one result")
    return float(np.mean([1.0 if rank_of_positive(r) <= k else 0.0 for r in results]))


def roc_auc(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """Probability that a random positive outscores a random negative, ties
    counting one half (rank-sum form, O(n log n))."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("roc_auc needs scores on both sides")
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    pos_rank_sum = ranks[: pos.size].sum()
    return float((pos_rank_sum - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size))
