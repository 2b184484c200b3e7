"""
Domain types and the line-oriented dataset format.

A dataset file is UTF-8 TSV with a header declaring the label universes and
the feature dimension, then one song per line:

    #dims<TAB>|A|<TAB>|T|<TAB>|S|
    song_id<TAB>artist_ids_csv<TAB>tag_ids_csv<TAB>idx:value idx:value ...

Empty artist/tag/feature fields are allowed (cold-start songs).
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix

from core.errors import DataInvariantError, DatasetFormatError, DimensionMismatchError

logger = logging.getLogger(__name__)

DIMS_HEADER = "#dims"


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sparse real vector: strictly increasing indices, no stored zeros."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dim", int(self.dim))

        if self.dim <= 0:
            raise DataInvariantError(f"sparse vector dim must be positive, got {self.dim}")
        if len(indices) != len(values):
            raise DataInvariantError(
                f"{len(indices)} indices but {len(values)} values in sparse vector"
            )
        if len(indices) == 0:
            return
        if np.any(np.diff(indices) <= 0):
            raise DataInvariantError("sparse vector indices must be strictly increasing")
        if indices[0] < 0 or indices[-1] >= self.dim:
            raise DataInvariantError(
                f"sparse vector index out of range [0, {self.dim})"
            )
        if np.any(values == 0.0):
            raise DataInvariantError("sparse vector stores an explicit zero")
        if not np.all(np.isfinite(values)):
            raise DataInvariantError("sparse vector has a non-finite value")

    @classmethod
    def empty(cls, dim: int) -> "SparseVector":
        return cls(np.empty(0, dtype=np.int64), np.empty(0), dim)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, float]], dim: int) -> "SparseVector":
        """Build from (index, value) pairs in any order; zero values are dropped."""
        pairs = [(int(i), float(v)) for i, v in pairs if float(v) != 0.0]
        pairs.sort()
        for (a, _), (b, _) in zip(pairs, pairs[1:]):
            if a == b:
                raise DataInvariantError(f"duplicate feature index {a}")
        if not pairs:
            return cls.empty(dim)
        idx, vals = zip(*pairs)
        return cls(np.array(idx, dtype=np.int64), np.array(vals), dim)

    @classmethod
    def from_dense(cls, dense: Sequence[float]) -> "SparseVector":
        dense = np.asarray(dense, dtype=np.float64).reshape(-1)
        nz = np.flatnonzero(dense)
        return cls(nz, dense[nz], len(dense))

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def items(self) -> List[Tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def dot(self, other: "SparseVector") -> float:
        if other.dim != self.dim:
            raise DimensionMismatchError(f"dot of dim {self.dim} with dim {other.dim}")
        _, ia, ib = np.intersect1d(self.indices, other.indices, assume_unique=True, return_indices=True)
        return float(np.dot(self.values[ia], other.values[ib]))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def scaled(self, factor: float) -> "SparseVector":
        if factor == 0.0:
            return SparseVector.empty(self.dim)
        return SparseVector(self.indices, self.values * factor, self.dim)

    def concat(self, other: "SparseVector") -> "SparseVector":
        """Stack two feature blocks; `other`'s indices are offset by this vector's dim."""
        return SparseVector(
            np.concatenate([self.indices, other.indices + self.dim]),
            np.concatenate([self.values, other.values]),
            self.dim + other.dim,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"SparseVector(dim={self.dim}, nnz={self.nnz})"


def _as_id_tuple(ids: Iterable[int], what: str) -> Tuple[int, ...]:
    ids = [int(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise DataInvariantError(f"duplicate {what} id in {ids}")
    return tuple(sorted(ids))


@dataclass(frozen=True)
class SongRecord:
    """One training triplet: artist ids, tag ids and audio features."""

    song_id: str
    artists: Tuple[int, ...]
    tags: Tuple[int, ...]
    features: SparseVector

    def __post_init__(self):
        object.__setattr__(self, "artists", _as_id_tuple(self.artists, "artist"))
        object.__setattr__(self, "tags", _as_id_tuple(self.tags, "tag"))


@dataclass
class Dataset:
    """Songs plus the declared sizes of the artist, tag and feature spaces."""

    records: List[SongRecord]
    n_artists: int
    n_tags: int
    feat_dim: int

    def __post_init__(self):
        if self.feat_dim <= 0:
            raise DataInvariantError(f"feat_dim must be positive, got {self.feat_dim}")
        if self.n_artists < 0 or self.n_tags < 0:
            raise DataInvariantError("label universe sizes must be non-negative")
        for rec in self.records:
            if rec.features.dim != self.feat_dim:
                raise DimensionMismatchError(
                    f"song {rec.song_id}: feature dim {rec.features.dim} != {self.feat_dim}"
                )
            if rec.artists and rec.artists[-1] >= self.n_artists:
                raise DataInvariantError(f"song {rec.song_id}: artist id out of range")
            if rec.tags and rec.tags[-1] >= self.n_tags:
                raise DataInvariantError(f"song {rec.song_id}: tag id out of range")
            if (rec.artists and rec.artists[0] < 0) or (rec.tags and rec.tags[0] < 0):
                raise DataInvariantError(f"song {rec.song_id}: negative label id")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def song_ids(self) -> List[str]:
        return [r.song_id for r in self.records]

    @property
    def features(self) -> List[SparseVector]:
        return [r.features for r in self.records]

    @cached_property
    def feature_matrix(self) -> csr_matrix:
        """Songs × features matrix in CSR form."""
        indptr = np.zeros(len(self.records) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([r.features.nnz for r in self.records])
        if self.records:
            indices = np.concatenate([r.features.indices for r in self.records])
            data = np.concatenate([r.features.values for r in self.records])
        else:
            indices = np.empty(0, dtype=np.int64)
            data = np.empty(0)
        return csr_matrix((data, indices, indptr), shape=(len(self.records), self.feat_dim))

    @cached_property
    def songs_by_artist(self) -> Dict[int, np.ndarray]:
        """Artist id -> sorted indices of the songs credited to it."""
        groups: Dict[int, List[int]] = {}
        for i, rec in enumerate(self.records):
            for a in rec.artists:
                groups.setdefault(a, []).append(i)
        return {a: np.array(idx, dtype=np.int64) for a, idx in sorted(groups.items())}

    def same_artist_songs(self, i: int) -> np.ndarray:
        """Indices of the other songs sharing at least one artist with song i."""
        groups = self.songs_by_artist
        rec = self.records[i]
        if not rec.artists:
            return np.empty(0, dtype=np.int64)
        peers = np.unique(np.concatenate([groups[a] for a in rec.artists]))
        return peers[peers != i]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self.records[i] for i in indices], self.n_artists, self.n_tags, self.feat_dim)


@dataclass(frozen=True, eq=False)
class RankedList:
    """Labels ordered by descending score, ties broken by ascending label id."""

    labels: np.ndarray
    scores: np.ndarray

    @classmethod
    def from_scores(
        cls,
        scores: Sequence[float],
        k: Optional[int] = None,
        exclude: Iterable[int] = (),
    ) -> "RankedList":
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        ids = np.arange(len(scores), dtype=np.int64)
        exclude = np.fromiter((int(e) for e in exclude), dtype=np.int64)
        if len(exclude):
            keep = np.ones(len(scores), dtype=bool)
            keep[exclude[(exclude >= 0) & (exclude < len(scores))]] = False
            ids, scores = ids[keep], scores[keep]
        # lexsort: last key is primary
        order = np.lexsort((ids, -scores))
        if k is not None:
            order = order[:k]
        return cls(ids[order], scores[order])

    @property
    def items(self) -> List[Tuple[int, float]]:
        return [(int(l), float(s)) for l, s in zip(self.labels, self.scores)]

    def top(self, k: int) -> np.ndarray:
        return self.labels[:k]

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RankedList):
            return NotImplemented
        return np.array_equal(self.labels, other.labels) and np.array_equal(self.scores, other.scores)


# ---------------------------------------------------------------------------
# TSV formats
# ---------------------------------------------------------------------------

def _parse_ids(field_text: str, bound: int, what: str, line_no: int, path: str) -> Tuple[int, ...]:
    if not field_text.strip():
        return ()
    ids = []
    for token in field_text.split(","):
        token = token.strip()
        try:
            value = int(token)
        except ValueError:
            raise DatasetFormatError(f"bad {what} id {token!r}", line_no, path)
        if value < 0 or value >= bound:
            raise DatasetFormatError(f"{what} id {value} out of range [0, {bound})", line_no, path)
        ids.append(value)
    if len(set(ids)) != len(ids):
        raise DatasetFormatError(f"duplicate {what} id", line_no, path)
    return tuple(ids)


def _parse_features(field_text: str, dim: int, line_no: int, path: str) -> SparseVector:
    pairs = {}
    for token in field_text.split():
        idx_text, sep, val_text = token.partition(":")
        if not sep:
            raise DatasetFormatError(f"feature {token!r} is not index:value", line_no, path)
        try:
            idx = int(idx_text)
            val = float(val_text)
        except ValueError:
            raise DatasetFormatError(f"bad feature {token!r}", line_no, path)
        if idx < 0 or idx >= dim:
            raise DatasetFormatError(f"feature index {idx} out of range [0, {dim})", line_no, path)
        if idx in pairs:
            raise DatasetFormatError(f"duplicate feature index {idx}", line_no, path)
        if not np.isfinite(val):
            raise DatasetFormatError(f"non-finite feature value at index {idx}", line_no, path)
        pairs[idx] = val
    return SparseVector.from_pairs(pairs.items(), dim)


def _parse_header(line: str, line_no: int, path: str) -> Tuple[int, int, int]:
    fields = line.split("\t")
    if len(fields) != 4 or fields[0] != DIMS_HEADER:
        raise DatasetFormatError(
            f"expected header '{DIMS_HEADER}\\t<|A|>\\t<|T|>\\t<|S|>'", line_no, path
        )
    try:
        n_artists, n_tags, feat_dim = (int(f) for f in fields[1:])
    except ValueError:
        raise DatasetFormatError("header dimensions must be integers", line_no, path)
    if n_artists < 0 or n_tags < 0 or feat_dim <= 0:
        raise DatasetFormatError("header dimensions out of range", line_no, path)
    return n_artists, n_tags, feat_dim


def _decoded_lines(f, path: str) -> Iterator[str]:
    for line_no, raw in enumerate(f, 1):
        try:
            yield raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DatasetFormatError(f"invalid UTF-8 at byte {e.start}", line_no, path)


def parse_dataset(lines: Iterable[str], path: str = "<string>") -> Dataset:
    """Parse dataset lines; every violation is reported with its line number."""
    dims = None
    records: List[SongRecord] = []
    seen_ids = set()

    for line_no, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if dims is None:
            dims = _parse_header(line, line_no, path)
            continue
        if line.startswith("#"):
            continue

        n_artists, n_tags, feat_dim = dims
        fields = line.split("\t")
        if len(fields) != 4:
            raise DatasetFormatError(f"expected 4 tab-separated fields, got {len(fields)}", line_no, path)
        song_id, artist_text, tag_text, feat_text = fields
        if not song_id:
            raise DatasetFormatError("empty song id", line_no, path)
        if song_id in seen_ids:
            raise DatasetFormatError(f"duplicate song id {song_id!r}", line_no, path)
        seen_ids.add(song_id)

        records.append(SongRecord(
            song_id=song_id,
            artists=_parse_ids(artist_text, n_artists, "artist", line_no, path),
            tags=_parse_ids(tag_text, n_tags, "tag", line_no, path),
            features=_parse_features(feat_text, feat_dim, line_no, path),
        ))

    if dims is None:
        raise DatasetFormatError("missing #dims header", 1, path)
    return Dataset(records, *dims)


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Load a dataset file; record order follows line order."""
    path = Path(path)
    with open(path, "rb") as f:
        dataset = parse_dataset(_decoded_lines(f, str(path)), str(path))
    logger.info("Loaded %d songs from %s (|A|=%d, |T|=%d, |S|=%d)",
                len(dataset), path, dataset.n_artists, dataset.n_tags, dataset.feat_dim)
    return dataset


def format_features(features: SparseVector) -> str:
    return " ".join(f"{i}:{v!r}" for i, v in features.items())


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{DIMS_HEADER}\t{dataset.n_artists}\t{dataset.n_tags}\t{dataset.feat_dim}\n")
        for rec in dataset.records:
            artists = ",".join(str(a) for a in rec.artists)
            tags = ",".join(str(t) for t in rec.tags)
            f.write(f"{rec.song_id}\t{artists}\t{tags}\t{format_features(rec.features)}\n")
    return path


def load_artist_similarity(path: Union[str, Path], n_artists: int) -> Dict[int, Tuple[int, ...]]:
    """Read `artist_id TAB similar_artist_ids_csv` lines; self-references are dropped."""
    path = Path(path)
    similar: Dict[int, Tuple[int, ...]] = {}
    with open(path, "rb") as f:
        for line_no, raw in enumerate(_decoded_lines(f, str(path)), 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DatasetFormatError(f"expected 2 tab-separated fields, got {len(fields)}", line_no, str(path))
            key = _parse_ids(fields[0], n_artists, "artist", line_no, str(path))
            if len(key) != 1:
                raise DatasetFormatError("expected exactly one query artist id", line_no, str(path))
            artist = key[0]
            if artist in similar:
                raise DatasetFormatError(f"duplicate artist {artist}", line_no, str(path))
            peers = _parse_ids(fields[1], n_artists, "artist", line_no, str(path))
            similar[artist] = tuple(sorted(p for p in peers if p != artist))
    return similar


def save_artist_similarity(similar: Dict[int, Sequence[int]], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for artist in sorted(similar):
            f.write(f"{artist}\t{','.join(str(p) for p in similar[artist])}\n")
    return path
