"""
Ranking losses: the AUC margin ranking loss and WARP.

WARP weights a pairwise hinge violation by L(r) = Σ_{i≤r} α_i where r is the
margin-based rank of the positive label. The rank is estimated from the
number N of uniform negative draws needed to find a violator:
r ≈ ⌊(Y−1)/N⌋. The margin is fixed at 1.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, Set

import numpy as np
from scipy.special import digamma

from core.errors import ConfigError, DataInvariantError

MARGIN = 1.0


class LossKind(str, Enum):
    WARP = "warp"
    AUC = "auc"

    @classmethod
    def parse(cls, text: str) -> "LossKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown loss {text!r} (expected warp or auc)")


@dataclass(frozen=True)
class AlphaScheme:
    """Non-increasing weights α_1 ≥ α_2 ≥ … ≥ 0 over rank positions.

    uniform          α_i = 1           (same ordering pressure as AUC)
    precision_at_k   α_i = 1 for i ≤ k (k = 1 optimises precision at 1)
    harmonic         α_i = 1/i         (many values of k at once)
    """

    kind: str = "harmonic"
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "precision_at_k", "harmonic"):
            raise ConfigError(f"unknown alpha scheme {self.kind!r}")
        if self.kind == "precision_at_k" and (self.k is None or self.k < 1):
            raise ConfigError("precision_at_k scheme needs k >= 1")

    @classmethod
    def uniform(cls) -> "AlphaScheme":
        return cls("uniform")

    @classmethod
    def harmonic(cls) -> "AlphaScheme":
        return cls("harmonic")

    @classmethod
    def precision_at_k(cls, k: int) -> "AlphaScheme":
        return cls("precision_at_k", k)

    @classmethod
    def parse(cls, text: str) -> "AlphaScheme":
        """Accepts 'uniform', 'harmonic' or 'p@K'."""
        text = text.strip().lower()
        if text in ("uniform", "harmonic"):
            return cls(text)
        if text.startswith("p@"):
            try:
                return cls.precision_at_k(int(text[2:]))
            except ValueError:
                pass
        raise ConfigError(f"bad alpha scheme {text!r} (expected uniform, harmonic or p@K)")

    @property
    def name(self) -> str:
        return f"p@{self.k}" if self.kind == "precision_at_k" else self.kind

    def alpha(self, i: int) -> float:
        """α_i for a 1-based position i."""
        if i < 1:
            raise ConfigError(f"alpha positions start at 1, got {i}")
        if self.kind == "uniform":
            return 1.0
        if self.kind == "precision_at_k":
            return 1.0 if i <= self.k else 0.0
        return 1.0 / i

    def weights(self, n: int) -> np.ndarray:
        """α_1 … α_n."""
        positions = np.arange(1, n + 1, dtype=np.float64)
        if self.kind == "uniform":
            return np.ones(n)
        if self.kind == "precision_at_k":
            return (positions <= self.k).astype(np.float64)
        return 1.0 / positions


def big_L(r: int, scheme: AlphaScheme) -> float:
    """L(r) = Σ_{i=1}^{r} α_i, with L(0) = 0. Constant time for every scheme."""
    r = int(r)
    if r < 0:
        raise ConfigError(f"rank must be non-negative, got {r}")
    if r == 0:
        return 0.0
    if scheme.kind == "uniform":
        return float(r)
    if scheme.kind == "precision_at_k":
        return float(min(r, scheme.k))
    # H_r = ψ(r + 1) + γ
    return float(digamma(r + 1) + np.euler_gamma)


def hinge(f_j: float, f_k: float) -> float:
    """max(0, 1 + f_k − f_j)."""
    return max(0.0, MARGIN + f_k - f_j)


def _positive_mask(n_labels: int, positives: Iterable[int]) -> np.ndarray:
    positives = np.fromiter((int(p) for p in positives), dtype=np.int64)
    if len(positives) == 0:
        raise DataInvariantError("positive label set is empty")
    if positives.min() < 0 or positives.max() >= n_labels:
        raise DataInvariantError(f"positive label outside [0, {n_labels})")
    mask = np.zeros(n_labels, dtype=bool)
    mask[positives] = True
    return mask


def auc_loss_full(scores: Sequence[float], positives: Iterable[int]) -> float:
    """Sum of hinge losses over every (positive, negative) pair."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = _positive_mask(len(scores), positives)
    pos, neg = scores[mask], scores[~mask]
    return float(np.maximum(0.0, MARGIN + neg[None, :] - pos[:, None]).sum())


def margin_rank(scores: Sequence[float], j: int, positives: Iterable[int]) -> int:
    """Number of negatives k with 1 + f_k ≥ f_j."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = _positive_mask(len(scores), positives)
    if not mask[j]:
        raise DataInvariantError(f"label {j} is not a positive")
    return int(np.count_nonzero(MARGIN + scores[~mask] >= scores[j]))


def estimate_rank(Y: int, N: int) -> int:
    """⌊(Y−1)/N⌋."""
    if N < 1:
        raise DataInvariantError(f"trial count must be at least 1, got {N}")
    if N > max(Y - 1, 1):
        raise DataInvariantError(f"trial count {N} exceeds Y-1 = {Y - 1}")
    return (Y - 1) // N


@dataclass(frozen=True)
class ViolationSample:
    """A violating (positive, negative) pair and the trials it took to find it."""

    positive: int
    negative: int
    f_j: float
    f_k: float
    trials: int
    n_labels: int

    @property
    def rank_estimate(self) -> int:
        return estimate_rank(self.n_labels, self.trials)


class NegativeSampler:
    """Uniform draws with replacement from {0..Y−1} minus a blocked set."""

    def __init__(self, n_labels: int, blocked: Set[int]):
        self.n_labels = n_labels
        self.blocked = blocked
        blocked_in_range = sum(1 for b in blocked if 0 <= b < n_labels)
        self.n_negatives = n_labels - blocked_in_range
        if self.n_negatives < 1:
            raise DataInvariantError("no negative labels to sample from")
        # rejection is cheap while most labels are negatives
        self._negatives = None
        if 2 * blocked_in_range > n_labels:
            self._negatives = np.setdiff1d(np.arange(n_labels), np.fromiter(blocked, dtype=np.int64))

    def draw(self, rng: np.random.Generator) -> int:
        if self._negatives is not None:
            return int(self._negatives[rng.integers(len(self._negatives))])
        while True:
            k = int(rng.integers(self.n_labels))
            if k not in self.blocked:
                return k


def sample_violator(
    score_fn: Callable[[int], float],
    positives: Iterable[int],
    j: int,
    Y: int,
    rng: np.random.Generator,
    excluded: Iterable[int] = (),
    f_j: Optional[float] = None,
    rank_universe: Optional[int] = None,
) -> Optional[ViolationSample]:
    """Draw negatives until f_k > f_j − 1 or the trial cap is hit.

    `excluded` labels are neither positive nor negative (a similarity query
    itself); they shrink the universe used for the rank estimate.
    `rank_universe` replaces that universe when ranking over a candidate pool.
    Returns None when no violator is found within Y−1 trials.
    """
    positives = set(int(p) for p in positives)
    excluded = set(int(e) for e in excluded) - positives
    sampler = NegativeSampler(Y, positives | excluded)
    n_labels = Y - len(excluded)
    if rank_universe is not None:
        n_labels = max(2, min(n_labels, int(rank_universe)))
    if f_j is None:
        f_j = score_fn(j)

    for trials in range(1, n_labels):
        k = sampler.draw(rng)
        f_k = score_fn(k)
        if f_k > f_j - MARGIN:
            return ViolationSample(j, k, float(f_j), float(f_k), trials, n_labels)
    return None


def trial_distribution(Y: int, n_negatives: int, n_violators: int) -> np.ndarray:
    """P(N = n, violator found) for n = 1 … Y−1 under uniform draws with replacement."""
    if n_negatives < 1 or not 0 <= n_violators <= n_negatives:
        raise DataInvariantError("need 0 <= violators <= negatives and at least one negative")
    p = n_violators / n_negatives
    probs = np.empty(max(Y - 1, 0))
    survive = 1.0
    for n in range(len(probs)):
        probs[n] = survive * p
        survive *= 1.0 - p
    return probs


def expected_estimated_loss(
    Y: int,
    n_negatives: int,
    n_violators: int,
    scheme: Optional[AlphaScheme] = None,
) -> float:
    """E[L(⌊(Y−1)/N⌋) | a violator is found]; with scheme=None, E[⌊(Y−1)/N⌋ | found].

    Training weights steps with the plain L of the estimate; this measures
    how far that drifts from L of the true rank.
    """
    probs = trial_distribution(Y, n_negatives, n_violators)
    found = probs.sum()
    if found == 0.0:
        raise DataInvariantError("no violator can be found")
    trials = np.arange(1, len(probs) + 1)
    estimates = (Y - 1) // trials
    if scheme is None:
        values = estimates.astype(np.float64)
    else:
        values = np.array([big_L(r, scheme) for r in estimates])
    return float(np.dot(probs, values) / found)
