"""Private hyperparameter selection via the exponential mechanism.

Candidates are scored by their number of incorrect predictions z on a
held-out portion; the mechanism draws index i with probability proportional
to ``exp(-eps * z_i / 2)``.  The draw satisfies eps-DP and therefore
``eps^2 / 2``-zCDP, chargeable to a reshuffling-mode ledger.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .errors import DomainError, UsageError


class CandidateScore(NamedTuple):
    candidate: int
    z: int  # incorrect predictions on the held-out portion


def selection_probabilities(z_scores: Sequence[float], eps: float) -> np.ndarray:
    """Normalized exp(-eps z / 2) weights, computed via log-sum-exp."""
    if len(z_scores) == 0:
        raise UsageError("selection requires at least one candidate")
    if eps < 0.0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    log_w = -0.5 * eps * np.asarray(z_scores, dtype=np.float64)
    p = np.exp(log_w - logsumexp(log_w))
    return p / p.sum()


def exp_mechanism_select(z_scores: Sequence[float], eps: float, rng: np.random.Generator) -> int:
    """Draw one candidate index with probability proportional to exp(-eps z/2)."""
    cdf = np.cumsum(selection_probabilities(z_scores, eps))
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)


def selection_rho(eps: float) -> float:
    """zCDP cost of one eps-DP exponential-mechanism draw: eps^2 / 2."""
    if eps < 0.0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    return 0.5 * eps * eps


def partition_indices(n: int, parts: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Seeded shuffle, then round-robin assignment into ``parts`` portions
    whose sizes differ by at most one."""
    if parts < 1 or parts > n:
        raise DomainError(f"parts must lie in 1..{n}, got {parts}")
    perm = rng.permutation(n)
    return [perm[i::parts] for i in range(parts)]


@dataclass
class TuneResult:
    selected: int
    scores: List[CandidateScore]
    portion_sizes: List[int]
    eps: float
    seed: int


def partition_tune(
    dataset: Dataset,
    n_candidates: int,
    train_candidate: Callable[[int, Dataset], Callable[[np.ndarray], np.ndarray]],
    eps: float,
    seed: int,
) -> TuneResult:
    """Train each candidate on its own data portion and select privately.

    The dataset is split into ``n_candidates + 1`` near-equal portions;
    candidate i is trained on portion i (``train_candidate(i, portion)``
    must return a label-predicting callable) and all candidates are scored
    on the final held-out portion.
    """
    if len(dataset) < n_candidates + 1:
        raise DomainError(
            f"dataset of size {len(dataset)} cannot be split into {n_candidates + 1} portions"
        )
    rng = np.random.default_rng(seed)
    portions = partition_indices(len(dataset), n_candidates + 1, rng)
    holdout = dataset.subset(portions[-1])
    scores: List[CandidateScore] = []
    for i in range(n_candidates):
        predictor = train_candidate(i, dataset.subset(portions[i]))
        predicted = np.asarray(predictor(holdout.features))
        z = int(np.sum(predicted != holdout.labels))
        scores.append(CandidateScore(i, z))
    selected = exp_mechanism_select([s.z for s in scores], eps, rng)
    return TuneResult(
        selected=selected,
        scores=scores,
        portion_sizes=[len(p) for p in portions],
        eps=eps,
        seed=seed,
    )
