"""
Comparison systems: one-vs-rest linear classifiers trained with the margin
perceptron, and cosine similarity in feature space.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.sparse import csr_matrix
from sklearn.metrics.pairwise import cosine_similarity

from core.dataset import Dataset, RankedList, SparseVector
from core.embedding_model import OpCounter, TaskId
from core.errors import ConfigError, DataInvariantError, DimensionMismatchError, UnusableTaskError
from core.evaluation import EvalResult, precision_at_k

logger = logging.getLogger(__name__)

LABEL_KINDS = ("tag", "artist")


def _labels_of(record, label_kind: str):
    return record.tags if label_kind == "tag" else record.artists


def _check_kind(label_kind: str):
    if label_kind not in LABEL_KINDS:
        raise ConfigError(f"label kind must be 'tag' or 'artist', got {label_kind!r}")


@dataclass
class OvrModel:
    """One weight row per label: f_j(s) = w_jᵀs."""

    W: np.ndarray
    label_kind: str = "tag"
    epoch_losses: List[float] = field(default_factory=list)

    def __post_init__(self):
        _check_kind(self.label_kind)
        self.W = np.asarray(self.W)
        if self.W.ndim != 2:
            raise DimensionMismatchError(f"W must be a matrix, got shape {self.W.shape}")
        if not np.all(np.isfinite(self.W)):
            raise DataInvariantError("W has non-finite entries")

    @property
    def n_labels(self) -> int:
        return self.W.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.W.shape[1]

    @property
    def task(self) -> TaskId:
        return TaskId.TAG_PRED if self.label_kind == "tag" else TaskId.ARTIST_PRED

    def nbytes_on_disk(self) -> int:
        return 4 * self.n_labels * self.feat_dim

    def scores(self, s: SparseVector, counter: Optional[OpCounter] = None) -> np.ndarray:
        if s.dim != self.feat_dim:
            raise DimensionMismatchError(f"song dim {s.dim} != model |S| {self.feat_dim}")
        if counter is not None:
            counter.add(self.n_labels * s.nnz)
        if s.nnz == 0:
            return np.zeros(self.n_labels)
        return self.W[:, s.indices] @ s.values


def ovr_hinge_loss(model: OvrModel, dataset: Dataset) -> float:
    """Σ_i Σ_j max(0, 1 − φ(i, j) w_jᵀs_i) over songs that carry labels of the model's kind."""
    rows = [i for i, rec in enumerate(dataset.records) if _labels_of(rec, model.label_kind)]
    if not rows:
        return 0.0
    X = dataset.feature_matrix[rows]
    F = np.asarray(X @ model.W.T)
    phi = -np.ones_like(F)
    for r, i in enumerate(rows):
        phi[r, list(_labels_of(dataset.records[i], model.label_kind))] = 1.0
    return float(np.maximum(0.0, 1.0 - phi * F).sum())


def ovr_train(
    dataset: Dataset,
    label_kind: str,
    epochs: int,
    gamma: float,
    rng: np.random.Generator,
) -> OvrModel:
    """Margin perceptron, every label trained against every song in shuffled order.

    Stops early after an epoch with no update; the training hinge loss is
    recorded at the end of every epoch.
    """
    _check_kind(label_kind)
    if epochs < 1:
        raise ConfigError("epochs must be at least 1")
    if not gamma > 0:
        raise ConfigError(f"learning rate must be positive, got {gamma}")
    n_labels = dataset.n_tags if label_kind == "tag" else dataset.n_artists
    examples = [rec for rec in dataset.records if _labels_of(rec, label_kind)]
    if not examples or n_labels == 0:
        raise UnusableTaskError(f"no songs carry {label_kind} labels")

    model = OvrModel(np.zeros((n_labels, dataset.feat_dim)), label_kind)
    for epoch in range(1, epochs + 1):
        updates = 0
        for i in rng.permutation(len(examples)):
            rec = examples[i]
            s = rec.features
            if s.nnz == 0:
                continue
            phi = -np.ones(n_labels)
            phi[list(_labels_of(rec, label_kind))] = 1.0
            f = model.W[:, s.indices] @ s.values
            violated = np.flatnonzero(1.0 - phi * f > 0.0)
            if len(violated) == 0:
                continue
            model.W[np.ix_(violated, s.indices)] += gamma * phi[violated, None] * s.values[None, :]
            updates += len(violated)

        loss = ovr_hinge_loss(model, dataset)
        model.epoch_losses.append(loss)
        logger.info("ovr epoch %d: %d updates, hinge loss %.4f", epoch, updates, loss)
        if updates == 0:
            break
    return model


def ovr_rank(model: OvrModel, s: SparseVector, K: Optional[int] = None,
             counter: Optional[OpCounter] = None) -> RankedList:
    """Labels by w_iᵀs descending, ties by ascending id."""
    return RankedList.from_scores(model.scores(s, counter), k=K)


def ovr_evaluate(model: OvrModel, test: Dataset, ks: Sequence[int]) -> EvalResult:
    """p@k of the classifier on its own task (tp or ap)."""
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ConfigError(f"ks must be positive integers, got {ks}")
    if model.feat_dim != test.feat_dim:
        raise DimensionMismatchError(f"model |S|={model.feat_dim} but test data |S|={test.feat_dim}")
    totals = np.zeros(len(ks))
    n_queries = skipped = 0
    for rec in test.records:
        relevant = _labels_of(rec, model.label_kind)
        if not relevant:
            skipped += 1
            continue
        ranked = ovr_rank(model, rec.features, K=ks[-1])
        totals += [precision_at_k(ranked, relevant, k) for k in ks]
        n_queries += 1
    if n_queries == 0:
        raise UnusableTaskError(f"no valid test queries for task {model.task.value}")
    task = model.task
    return EvalResult({task: {k: float(totals[i] / n_queries) for i, k in enumerate(ks)}},
                      {task: n_queries}, {task: skipped}, ks)


# ---------------------------------------------------------------------------
# Cosine similarity
# ---------------------------------------------------------------------------

def _as_matrix(corpus: Union[Dataset, csr_matrix, Sequence[SparseVector]]) -> csr_matrix:
    if isinstance(corpus, Dataset):
        return corpus.feature_matrix
    if isinstance(corpus, csr_matrix):
        return corpus
    corpus = list(corpus)
    if not corpus:
        raise DataInvariantError("empty corpus")
    dim = corpus[0].dim
    if any(s.dim != dim for s in corpus):
        raise DimensionMismatchError("corpus vectors differ in dimension")
    indptr = np.concatenate([[0], np.cumsum([s.nnz for s in corpus])])
    indices = np.concatenate([s.indices for s in corpus])
    data = np.concatenate([s.values for s in corpus])
    return csr_matrix((data, indices, indptr), shape=(len(corpus), dim))


def _query_matrix(query: SparseVector) -> csr_matrix:
    return csr_matrix((query.values, query.indices, [0, query.nnz]), shape=(1, query.dim))


def cosine_rank(
    query: SparseVector,
    corpus: Union[Dataset, csr_matrix, Sequence[SparseVector]],
    exclude_index: Optional[int] = None,
    K: Optional[int] = None,
) -> RankedList:
    """Corpus items by (q·s)/(‖q‖‖s‖); zero-norm items score 0."""
    if query.nnz == 0:
        raise DataInvariantError("cosine query is the zero vector")
    X = _as_matrix(corpus)
    if X.shape[1] != query.dim:
        raise DimensionMismatchError(f"query dim {query.dim} != corpus dim {X.shape[1]}")
    sims = cosine_similarity(_query_matrix(query), X)[0]
    exclude = () if exclude_index is None else (exclude_index,)
    return RankedList.from_scores(sims, k=K, exclude=exclude)


def cosine_evaluate(test: Dataset, ks: Sequence[int], n_jobs: int = 1) -> EvalResult:
    """Similar-song retrieval (ss) with cosine similarity over the test songs."""
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ConfigError(f"ks must be positive integers, got {ks}")
    X = test.feature_matrix
    queries = [i for i in range(len(test)) if len(test.same_artist_songs(i)) and test.records[i].features.nnz]
    skipped = len(test) - len(queries)
    if not queries:
        raise UnusableTaskError("no valid test queries for task ss")

    def one(i: int) -> List[float]:
        ranked = cosine_rank(test.records[i].features, X, exclude_index=i, K=ks[-1])
        return [precision_at_k(ranked, test.same_artist_songs(i), k) for k in ks]

    rows = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(one)(i) for i in queries)
    totals = np.zeros(len(ks))
    for row in rows:
        totals += row
    task = TaskId.SIM_SONG
    return EvalResult({task: {k: float(totals[i] / len(queries)) for i, k in enumerate(ks)}},
                      {task: len(queries)}, {task: skipped}, ks)
