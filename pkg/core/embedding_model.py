"""
Joint embedding of artists, tags and songs.

Artists and tags are columns of A (d×|A|) and T (d×|T|); a song with sparse
features s is embedded as V s (V is d×|S|). Every task scores a candidate
by the dot product of the query embedding with the candidate embedding:

    ap  artist prediction   query song s, label artist i:  A_i · V s
    sp  song prediction     query artist i, label song s:  V s · A_i
    sa  similar artists     query artist j, label artist i: A_j · A_i
    ss  similar songs       query song s', label song s'':  V s' · V s''
    tp  tag prediction      query song s, label tag i:      T_i · V s
"""

import logging
import weakref
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix

from core.dataset import Dataset, RankedList, SongRecord, SparseVector
from core.errors import ConfigError, DataInvariantError, DimensionMismatchError

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6
# projected columns land within a few ulps of C; this slack keeps projection idempotent
_RESCALE_SLACK = 1e-12

Query = Union[int, SparseVector]


class TaskId(str, Enum):
    ARTIST_PRED = "ap"
    SONG_PRED = "sp"
    SIM_ARTIST = "sa"
    SIM_SONG = "ss"
    TAG_PRED = "tp"

    @property
    def query_kind(self) -> str:
        return "artist" if self in (TaskId.SONG_PRED, TaskId.SIM_ARTIST) else "song"

    @property
    def label_kind(self) -> str:
        if self in (TaskId.ARTIST_PRED, TaskId.SIM_ARTIST):
            return "artist"
        if self is TaskId.TAG_PRED:
            return "tag"
        return "song"

    @property
    def excludes_query(self) -> bool:
        """Similarity tasks rank the query's own universe, so the query itself is dropped."""
        return self in (TaskId.SIM_ARTIST, TaskId.SIM_SONG)

    @classmethod
    def parse(cls, text: str) -> "TaskId":
        try:
            return cls(text.strip().lower())
        except ValueError:
            names = ", ".join(t.value for t in cls)
            raise ConfigError(f"unknown task {text!r} (expected one of {names})")

    @classmethod
    def parse_list(cls, text: str) -> List["TaskId"]:
        tasks = []
        for part in text.split(","):
            if part.strip():
                task = cls.parse(part)
                if task not in tasks:
                    tasks.append(task)
        if not tasks:
            raise ConfigError("no tasks given")
        return tasks


@dataclass
class OpCounter:
    """Counts multiply-adds spent while scoring."""

    multiply_adds: int = 0

    def add(self, n: int):
        self.multiply_adds += int(n)


def project_matrix_columns(M: np.ndarray, C: float, columns: Optional[Iterable[int]] = None) -> int:
    """Rescale columns with ‖c‖₂ > C onto the norm ball, in place; returns how many moved."""
    if columns is None:
        cols = np.arange(M.shape[1])
    else:
        cols = np.unique(np.fromiter((int(c) for c in columns), dtype=np.int64))
    if len(cols) == 0:
        return 0
    norms = np.linalg.norm(M[:, cols], axis=0)
    over = norms > C * (1.0 + _RESCALE_SLACK)
    if not np.any(over):
        return 0
    moved = cols[over]
    M[:, moved] *= (C / norms[over]).astype(M.dtype)
    return int(len(moved))


class SongCorpus:
    """A fixed set of candidate songs for the song-valued tasks (sp, ss).

    Embeddings are computed once per model and reused across queries until
    the model's V changes.
    """

    def __init__(self, songs: Union[Dataset, csr_matrix, Sequence[SparseVector]]):
        if isinstance(songs, Dataset):
            self.matrix = songs.feature_matrix
        elif isinstance(songs, csr_matrix):
            self.matrix = songs
        else:
            songs = list(songs)
            if not songs:
                raise DataInvariantError("empty song corpus")
            self.matrix = Dataset(
                [_anonymous_record(i, s) for i, s in enumerate(songs)], 0, 0, songs[0].dim
            ).feature_matrix
        self._cache: Dict[int, Tuple[weakref.ref, np.ndarray, np.ndarray]] = {}

    @property
    def n_songs(self) -> int:
        return self.matrix.shape[0]

    def embeddings(self, model: "EmbeddingModel") -> np.ndarray:
        """n_songs × d matrix of V s for every corpus song."""
        if self.matrix.shape[1] != model.feat_dim:
            raise DimensionMismatchError(
                f"corpus feature dim {self.matrix.shape[1]} != model |S| {model.feat_dim}"
            )
        # one entry per live model, valid only while V is unchanged
        self._cache = {k: e for k, e in self._cache.items() if e[0]() is not None}
        entry = self._cache.get(id(model))
        if entry is None or entry[0]() is not model or not np.array_equal(entry[1], model.V):
            entry = (weakref.ref(model), model.V.copy(), np.asarray(self.matrix @ model.V.T))
            self._cache[id(model)] = entry
        return entry[2]


def _anonymous_record(i: int, features: SparseVector) -> SongRecord:
    return SongRecord(str(i), (), (), features)


class EmbeddingModel:
    """Parameter matrices A, T, V with norm bound C."""

    def __init__(self, A: np.ndarray, T: np.ndarray, V: np.ndarray, C: float):
        A, T, V = (np.asarray(M) for M in (A, T, V))
        for name, M in (("A", A), ("T", T), ("V", V)):
            if M.ndim != 2:
                raise DimensionMismatchError(f"{name} must be a matrix, got shape {M.shape}")
            if not np.all(np.isfinite(M)):
                raise DataInvariantError(f"{name} has non-finite entries")
        d = A.shape[0]
        if d < 1 or T.shape[0] != d or V.shape[0] != d:
            raise DimensionMismatchError(
                f"embedding rows disagree: A {A.shape}, T {T.shape}, V {V.shape}"
            )
        if V.shape[1] < 1:
            raise DimensionMismatchError("V needs at least one feature column")
        if not C > 0:
            raise ConfigError(f"norm bound C must be positive, got {C}")
        self.A = A
        self.T = T
        self.V = V
        self.C = float(C)

    # -- shape -------------------------------------------------------------

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def n_artists(self) -> int:
        return self.A.shape[1]

    @property
    def n_tags(self) -> int:
        return self.T.shape[1]

    @property
    def feat_dim(self) -> int:
        return self.V.shape[1]

    def nbytes_on_disk(self) -> int:
        """Single-precision payload size of the model file (header excluded)."""
        return 4 * self.d * (self.n_artists + self.n_tags + self.feat_dim)

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.A.copy(), self.T.copy(), self.V.copy(), self.C)

    def astype(self, dtype) -> "EmbeddingModel":
        return EmbeddingModel(
            self.A.astype(dtype), self.T.astype(dtype), self.V.astype(dtype), self.C
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingModel):
            return NotImplemented
        return self.C == other.C and all(
            a.dtype == b.dtype and np.array_equal(a, b)
            for a, b in ((self.A, other.A), (self.T, other.T), (self.V, other.V))
        )

    def __repr__(self) -> str:
        return (f"EmbeddingModel(d={self.d}, |A|={self.n_artists}, |T|={self.n_tags}, "
                f"|S|={self.feat_dim}, C={self.C})")

    # -- embeddings --------------------------------------------------------

    def embed_song(self, features: SparseVector, counter: Optional[OpCounter] = None) -> np.ndarray:
        """V s, touching only the columns of V at the nonzeros of s."""
        if not isinstance(features, SparseVector):
            raise DataInvariantError("song query must be a SparseVector")
        if features.dim != self.feat_dim:
            raise DimensionMismatchError(f"song dim {features.dim} != model |S| {self.feat_dim}")
        if counter is not None:
            counter.add(features.nnz * self.d)
        if features.nnz == 0:
            return np.zeros(self.d)
        return self.V[:, features.indices] @ features.values

    def _check_artist(self, artist) -> int:
        if isinstance(artist, SparseVector) or int(artist) != artist:
            raise DataInvariantError("artist query must be an integer id")
        artist = int(artist)
        if not 0 <= artist < self.n_artists:
            raise DataInvariantError(f"artist id {artist} out of range [0, {self.n_artists})")
        return artist

    def query_vector(self, task: TaskId, query: Query, counter: Optional[OpCounter] = None) -> np.ndarray:
        if task.query_kind == "artist":
            return self.A[:, self._check_artist(query)]
        return self.embed_song(query, counter)

    def label_vector(self, task: TaskId, label: Query) -> np.ndarray:
        kind = task.label_kind
        if kind == "artist":
            return self.A[:, self._check_artist(label)]
        if kind == "tag":
            if isinstance(label, SparseVector) or not 0 <= int(label) < self.n_tags:
                raise DataInvariantError(f"tag id {label} out of range [0, {self.n_tags})")
            return self.T[:, int(label)]
        return self.embed_song(label)

    # -- scoring -----------------------------------------------------------

    def score(self, task: TaskId, query: Query, candidate: Query) -> float:
        """Score one candidate label (or song) for a query."""
        return float(np.dot(self.label_vector(task, candidate), self.query_vector(task, query)))

    def score_all(
        self,
        task: TaskId,
        query: Query,
        corpus: Optional[SongCorpus] = None,
        counter: Optional[OpCounter] = None,
    ) -> np.ndarray:
        """Scores of every label in the task's universe (corpus songs for sp/ss)."""
        u = self.query_vector(task, query, counter)
        kind = task.label_kind
        if kind == "song":
            if corpus is None:
                raise ConfigError(f"task {task.value} needs a song corpus to rank")
            labels = corpus.embeddings(self)
            if counter is not None:
                counter.add(labels.shape[0] * self.d)
            return labels @ u
        labels = self.A if kind == "artist" else self.T
        if counter is not None:
            counter.add(labels.shape[1] * self.d)
        return u @ labels

    def rank_all(
        self,
        task: TaskId,
        query: Query,
        K: int,
        corpus: Optional[SongCorpus] = None,
        exclude: Iterable[int] = (),
        counter: Optional[OpCounter] = None,
    ) -> RankedList:
        """Top-K labels by score; sa queries never rank themselves.

        An ss query is a feature vector, not a corpus index, so when the query
        song is in `corpus` the caller must pass its index in `exclude`.
        """
        return _rank(self, task, query, K, corpus, exclude, counter)

    # -- constraints -------------------------------------------------------

    def project_columns(self, touched: Optional[Dict[str, Iterable[int]]] = None) -> int:
        """Project columns onto the ball of radius C.

        `touched` maps "A"/"T"/"V" to column ids; None projects every column.
        """
        moved = 0
        for name in ("A", "T", "V"):
            if touched is None:
                moved += project_matrix_columns(getattr(self, name), self.C)
            elif name in touched:
                moved += project_matrix_columns(getattr(self, name), self.C, touched[name])
        return moved

    def max_column_norm(self) -> float:
        norms = [np.linalg.norm(M, axis=0).max() for M in (self.A, self.T, self.V) if M.shape[1]]
        return float(max(norms)) if norms else 0.0


def _rank(scorer, task: TaskId, query: Query, K: int, corpus, exclude, counter) -> RankedList:
    if K < 1:
        raise ConfigError(f"K must be at least 1, got {K}")
    scores = scorer.score_all(task, query, corpus=corpus, counter=counter)
    exclude = list(exclude)
    if task is TaskId.SIM_ARTIST:
        exclude.append(int(query))
    return RankedList.from_scores(scores, k=K, exclude=exclude)


class EnsembleModel:
    """Sum of member scores; members may differ in d but share every label universe."""

    def __init__(self, models: Sequence[EmbeddingModel]):
        models = list(models)
        if not models:
            raise ConfigError("an ensemble needs at least one model")
        first = models[0]
        for m in models[1:]:
            if (m.n_artists, m.n_tags, m.feat_dim) != (first.n_artists, first.n_tags, first.feat_dim):
                raise DataInvariantError(
                    f"ensemble label universes differ: {m!r} vs {first!r}"
                )
        self.members = models

    @property
    def n_artists(self) -> int:
        return self.members[0].n_artists

    @property
    def n_tags(self) -> int:
        return self.members[0].n_tags

    @property
    def feat_dim(self) -> int:
        return self.members[0].feat_dim

    def score(self, task: TaskId, query: Query, candidate: Query) -> float:
        total = 0.0
        for m in self.members:
            total += m.score(task, query, candidate)
        return total

    def score_all(self, task, query, corpus=None, counter=None) -> np.ndarray:
        total = self.members[0].score_all(task, query, corpus=corpus, counter=counter)
        for m in self.members[1:]:
            total = total + m.score_all(task, query, corpus=corpus, counter=counter)
        return total

    def rank_all(self, task, query, K, corpus=None, exclude=(), counter=None) -> RankedList:
        return _rank(self, task, query, K, corpus, exclude, counter)


def ensemble_score(models: Sequence[EmbeddingModel], task: TaskId, query: Query, label: Query) -> float:
    """f_i^ensemble = Σ_m f_i^m (a plain sum; ranks the same as the average)."""
    return EnsembleModel(models).score(task, query, label)
