"""
Precision@k evaluation of a model (or ensemble) over a held-out song set.

Relevance per task follows the training examples: tags/artists of the song
for tp/ap, the songs of the artist for sp, the other songs sharing an artist
for ss and the similarity list for sa. Song-valued tasks rank the test songs.
Queries with nothing relevant are skipped and counted.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from core.dataset import Dataset, RankedList
from core.embedding_model import EmbeddingModel, EnsembleModel, SongCorpus, TaskId
from core.errors import ConfigError, DimensionMismatchError, UnusableTaskError

logger = logging.getLogger(__name__)

Scorer = Union[EmbeddingModel, EnsembleModel]
ArtistSimilarity = Dict[int, Tuple[int, ...]]


def precision_at_k(ranked: Union[RankedList, Sequence[int]], relevant: Iterable[int], k: int) -> float:
    """|top-k ∩ relevant| / k; the denominator stays k for short lists."""
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    labels = ranked.labels if isinstance(ranked, RankedList) else ranked
    relevant = set(int(r) for r in relevant)
    hits = sum(1 for label in list(labels)[:k] if int(label) in relevant)
    return hits / k


@dataclass
class EvalResult:
    precision: Dict[TaskId, Dict[int, float]]
    n_queries: Dict[TaskId, int]
    n_skipped: Dict[TaskId, int]
    ks: List[int] = field(default_factory=list)

    @property
    def tasks(self) -> List[TaskId]:
        return list(self.precision)

    def mean(self, k: int) -> float:
        """Unweighted mean of p@k across tasks."""
        return float(np.mean([self.precision[t][k] for t in self.precision]))


@dataclass(frozen=True)
class _Query:
    query: object
    relevant: np.ndarray
    exclude: Tuple[int, ...] = ()


def _build_queries(task: TaskId, test: Dataset,
                   artist_similarity: Optional[ArtistSimilarity]) -> Tuple[List[_Query], int]:
    queries: List[_Query] = []
    skipped = 0

    if task in (TaskId.TAG_PRED, TaskId.ARTIST_PRED):
        for rec in test.records:
            labels = rec.tags if task is TaskId.TAG_PRED else rec.artists
            if labels:
                queries.append(_Query(rec.features, np.array(labels, dtype=np.int64)))
            else:
                skipped += 1

    elif task is TaskId.SIM_SONG:
        for i, rec in enumerate(test.records):
            peers = test.same_artist_songs(i)
            if len(peers):
                queries.append(_Query(rec.features, peers, (i,)))
            else:
                skipped += 1

    elif task is TaskId.SONG_PRED:
        for artist, songs in test.songs_by_artist.items():
            queries.append(_Query(artist, songs))

    else:
        if not artist_similarity:
            raise UnusableTaskError("task sa requires artist similarity data")
        for artist in sorted(artist_similarity):
            peers = [p for p in artist_similarity[artist] if p != artist]
            if peers:
                queries.append(_Query(int(artist), np.array(sorted(peers), dtype=np.int64), (int(artist),)))
            else:
                skipped += 1

    if not queries:
        raise UnusableTaskError(f"no valid test queries for task {task.value}")
    return queries, skipped


def oracle_rank(scorer: Scorer, task: TaskId, query, K: int, test: Dataset,
                exclude: Iterable[int] = ()) -> RankedList:
    """One score call per candidate and a full Python sort; slow but obviously right."""
    if task.label_kind == "song":
        candidates = list(enumerate(test.features))
    else:
        n = scorer.n_artists if task.label_kind == "artist" else scorer.n_tags
        candidates = [(i, i) for i in range(n)]
    blocked = set(int(e) for e in exclude)
    if task is TaskId.SIM_ARTIST:
        blocked.add(int(query))
    scored = [(-scorer.score(task, query, c), i) for i, c in candidates if i not in blocked]
    scored.sort()
    top = scored[:K]
    return RankedList(np.array([i for _, i in top], dtype=np.int64), np.array([-s for s, _ in top]))


def _query_precisions(scorer: Scorer, task: TaskId, q: _Query, ks: List[int],
                      corpus: Optional[SongCorpus], test: Dataset, oracle: bool) -> List[float]:
    K = ks[-1]
    if oracle:
        ranked = oracle_rank(scorer, task, q.query, K, test, q.exclude)
    else:
        ranked = scorer.rank_all(task, q.query, K, corpus=corpus, exclude=q.exclude)
    return [precision_at_k(ranked, q.relevant, k) for k in ks]


def _check_universes(scorer: Scorer, test: Dataset):
    if scorer.feat_dim != test.feat_dim:
        raise DimensionMismatchError(f"model |S|={scorer.feat_dim} but test data |S|={test.feat_dim}")
    if scorer.n_artists != test.n_artists or scorer.n_tags != test.n_tags:
        raise DimensionMismatchError(
            f"model universes (|A|={scorer.n_artists}, |T|={scorer.n_tags}) differ from "
            f"test data (|A|={test.n_artists}, |T|={test.n_tags})"
        )


def evaluate(
    model: Union[Scorer, Sequence[EmbeddingModel]],
    test: Dataset,
    tasks: Sequence[TaskId],
    ks: Sequence[int],
    artist_similarity: Optional[ArtistSimilarity] = None,
    train_song_ids: Optional[Iterable[str]] = None,
    oracle: bool = False,
    n_jobs: int = 1,
) -> EvalResult:
    """Mean precision@k per task over the test queries.

    `model` may be one model, an EnsembleModel or a list of models (summed).
    Per-query work runs on `n_jobs` threads; averages are taken in query order.
    """
    scorer = EnsembleModel(model) if isinstance(model, (list, tuple)) else model
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ConfigError(f"ks must be positive integers, got {ks}")
    tasks = [TaskId(t) for t in tasks]
    if not tasks:
        raise ConfigError("no tasks to evaluate")
    _check_universes(scorer, test)

    if train_song_ids is not None:
        overlap = set(train_song_ids) & set(test.song_ids)
        if overlap:
            logger.warning("%d test songs also appear in the training set", len(overlap))

    corpus = SongCorpus(test) if any(t.label_kind == "song" for t in tasks) and len(test) else None
    precision: Dict[TaskId, Dict[int, float]] = {}
    n_queries: Dict[TaskId, int] = {}
    n_skipped: Dict[TaskId, int] = {}

    for task in tasks:
        queries, skipped = _build_queries(task, test, artist_similarity)
        rows = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_query_precisions)(scorer, task, q, ks, corpus, test, oracle) for q in queries
        )
        totals = np.zeros(len(ks))
        for row in rows:
            totals += row
        precision[task] = {k: float(totals[i] / len(queries)) for i, k in enumerate(ks)}
        n_queries[task] = len(queries)
        n_skipped[task] = skipped
        if skipped:
            logger.info("task %s: skipped %d queries with no relevant items", task.value, skipped)

    return EvalResult(precision, n_queries, n_skipped, ks)
