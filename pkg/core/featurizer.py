"""
Bag-of-codewords song features.

A k-means codebook is fitted over frame vectors pooled from training songs;
each song then becomes the sparse count vector of how often each codeword is
the nearest one (Euclidean, lowest index on ties) to one of its frames.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from core.dataset import SparseVector
from core.errors import ConfigError, DataInvariantError, DimensionMismatchError

logger = logging.getLogger(__name__)

# rows per assignment chunk when the assignment step is spread over threads
ASSIGN_CHUNK = 4096


@dataclass
class Codebook:
    centers: np.ndarray
    inertia_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape[0] < 1:
            raise DataInvariantError(f"codebook needs at least one center, got shape {self.centers.shape}")
        if not np.all(np.isfinite(self.centers)):
            raise DataInvariantError("codebook has non-finite centers")

    @property
    def D(self) -> int:
        return self.centers.shape[0]

    @property
    def F(self) -> int:
        return self.centers.shape[1]

    def nearest(self, frames: np.ndarray) -> np.ndarray:
        """Index of the nearest center for each frame."""
        return _assign(frames, self.centers)[0]


def _assign(X: np.ndarray, centers: np.ndarray, n_jobs: int = 1):
    """(labels, squared distance to the assigned center) for every row of X."""
    if n_jobs == 1 or len(X) <= ASSIGN_CHUNK:
        d2 = cdist(X, centers, "sqeuclidean")
        labels = np.argmin(d2, axis=1)
        return labels, d2[np.arange(len(X)), labels]
    chunks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_assign)(X[i:i + ASSIGN_CHUNK], centers) for i in range(0, len(X), ASSIGN_CHUNK)
    )
    return np.concatenate([c[0] for c in chunks]), np.concatenate([c[1] for c in chunks])


def _as_frames(frames) -> np.ndarray:
    X = np.asarray(frames, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatchError(f"frames must be a 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataInvariantError("frames contain non-finite values")
    return X


def kmeans_fit(frames, D: int, iters: int, seed: int, n_jobs: int = 1) -> Codebook:
    """k-means++ seeding then Lloyd iterations; empty clusters move to the farthest frame."""
    if D < 1:
        raise ConfigError(f"codebook size must be at least 1, got {D}")
    if iters < 0:
        raise ConfigError("iters must be non-negative")
    X = _as_frames(frames)
    if len(X) < D:
        raise DataInvariantError(f"k-means needs at least D={D} frames, got {len(X)}")

    centers, _ = kmeans_plusplus(X, n_clusters=D, random_state=seed)
    history: List[float] = []
    for it in range(iters):
        labels, d2 = _assign(X, centers, n_jobs)
        history.append(float(d2.sum()))

        counts = np.bincount(labels, minlength=D)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        new_centers = centers.copy()
        filled = counts > 0
        new_centers[filled] = sums[filled] / counts[filled, None]

        empty = np.flatnonzero(~filled)
        if len(empty):
            farthest = np.argsort(-d2, kind="stable")[:len(empty)]
            new_centers[empty] = X[farthest]
            logger.info("k-means iteration %d: re-seeded %d empty clusters", it + 1, len(empty))

        logger.info("k-means iteration %d: inertia %.6g", it + 1, history[-1])
        if np.array_equal(new_centers, centers):
            break
        centers = new_centers

    return Codebook(centers, history)


def encode_counts(codebook: Codebook, frames) -> SparseVector:
    """Counts of nearest codewords over one song's frames; Σ counts = number of frames."""
    X = np.asarray(frames, dtype=np.float64)
    if X.size == 0:
        return SparseVector.empty(codebook.D)
    X = _as_frames(X)
    if X.shape[1] != codebook.F:
        raise DimensionMismatchError(f"frame dim {X.shape[1]} != codebook dim {codebook.F}")
    counts = np.bincount(codebook.nearest(X), minlength=codebook.D)
    return SparseVector.from_dense(counts.astype(np.float64))


def encode_songs(codebook: Codebook, songs: Sequence, n_jobs: int = 1) -> List[SparseVector]:
    """encode_counts over many songs, in input order."""
    return Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(encode_counts)(codebook, frames) for frames in songs
    )
