"""
Seeded synthetic datasets with a known shared latent structure.

Artists and tags live in a latent space; every song takes the latent point of
its artist plus jitter, is tagged with the tags closest to that point, and
gets sparse features that are a noisy linear image of it. The same latent
space drives every task, which is what the multi-task studies need.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from core.dataset import Dataset, SongRecord, SparseVector, save_artist_similarity, save_dataset
from core.embedding_model import EmbeddingModel
from core.errors import ConfigError

logger = logging.getLogger(__name__)

# std of a song's offset from its artist on the artist's active latent dims
SONG_JITTER = 0.3


@dataclass(frozen=True)
class SynthSpec:
    n_songs: int = 2000
    n_artists: int = 100
    n_tags: int = 50
    feat_dim: int = 200
    latent_dim: int = 20
    noise_sigma: float = 0.1
    seed: int = 0
    tags_per_song: int = 3
    # artist popularity ∝ 1/(rank+1)^zipf; 0 is uniform
    zipf: float = 0.0
    valid_frac: float = 0.1
    test_frac: float = 0.2
    # active latent dims per artist; None means max(2, latent_dim // 4)
    artist_support: Optional[int] = None
    artist_neighbours: int = 5

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n_songs < 3:
            raise ConfigError("need at least 3 songs to make train/valid/test splits")
        if self.n_artists < 1 or self.n_tags < 1 or self.feat_dim < 1 or self.latent_dim < 1:
            raise ConfigError("sizes must be positive")
        if self.latent_dim > self.feat_dim:
            raise ConfigError(f"latent_dim {self.latent_dim} exceeds feat_dim {self.feat_dim}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if not 1 <= self.tags_per_song <= self.n_tags:
            raise ConfigError(f"tags_per_song must be in [1, {self.n_tags}]")
        if self.zipf < 0:
            raise ConfigError("zipf exponent must be non-negative")
        if not (0 < self.valid_frac < 1 and 0 < self.test_frac < 1 and self.valid_frac + self.test_frac < 1):
            raise ConfigError("split fractions must be in (0, 1) and leave room for training songs")
        if self.artist_support is not None and not 1 <= self.artist_support <= self.latent_dim:
            raise ConfigError(f"artist_support must be in [1, {self.latent_dim}]")
        if self.artist_neighbours < 0:
            raise ConfigError("artist_neighbours must be non-negative")

    @property
    def support(self) -> int:
        if self.artist_support is not None:
            return self.artist_support
        return min(self.latent_dim, max(2, self.latent_dim // 4))


@dataclass
class SynthTruth:
    """The generating parameters, kept for constructing reference models."""

    artist_latents: np.ndarray   # latent_dim × |A|
    tag_latents: np.ndarray      # latent_dim × |T|
    decoder: np.ndarray          # latent_dim × |S|, left inverse of the feature map
    song_latents: np.ndarray     # latent_dim × n_songs

    def optimal_model(self, C: float = 1.0) -> EmbeddingModel:
        """A = artist latents, T = tag latents, V = decoder, uniformly scaled into the norm ball.

        With noise_sigma = 0, V s recovers the song latent exactly, so every
        song's top tag ranks first.
        """
        mats = (self.artist_latents, self.tag_latents, self.decoder)
        top = max(float(np.linalg.norm(M, axis=0).max()) for M in mats if M.shape[1])
        scale = C / top
        return EmbeddingModel(*(M * scale for M in mats), C)


def _split_sizes(n: int, valid_frac: float, test_frac: float) -> Tuple[int, int, int]:
    n_valid = max(1, int(round(n * valid_frac)))
    n_test = max(1, int(round(n * test_frac)))
    n_train = n - n_valid - n_test
    if n_train < 1:
        raise ConfigError(f"{n} songs leave no training split")
    return n_train, n_valid, n_test


def _split(records: List[SongRecord], spec: SynthSpec, rng: np.random.Generator,
           n_artists: int, n_tags: int, feat_dim: int) -> Tuple[Dataset, Dataset, Dataset]:
    n_train, n_valid, _ = _split_sizes(len(records), spec.valid_frac, spec.test_frac)
    order = rng.permutation(len(records))
    parts = (np.sort(order[:n_train]), np.sort(order[n_train:n_train + n_valid]),
             np.sort(order[n_train + n_valid:]))
    return tuple(Dataset([records[i] for i in idx], n_artists, n_tags, feat_dim) for idx in parts)


def gen_latent_with_truth(spec: SynthSpec) -> Tuple[Dataset, Dataset, Dataset, SynthTruth, Dict[int, Tuple[int, ...]]]:
    """(train, valid, test, truth, artist similarity)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    L, support = spec.latent_dim, spec.support

    artists = np.zeros((L, spec.n_artists))
    for a in range(spec.n_artists):
        active = rng.choice(L, size=support, replace=False)
        artists[active, a] = rng.normal(size=support)
    artists /= np.maximum(np.linalg.norm(artists, axis=0), 1e-12)
    tags = rng.normal(size=(L, spec.n_tags))
    tags /= np.linalg.norm(tags, axis=0)

    # each latent dim owns a disjoint block of feature indices with positive weights
    blocks = np.array_split(rng.permutation(spec.feat_dim), L)
    weights = [rng.uniform(0.5, 1.5, size=len(b)) for b in blocks]
    decoder = np.zeros((L, spec.feat_dim))
    for r, (b, w) in enumerate(zip(blocks, weights)):
        decoder[r, b] = w / np.dot(w, w)

    popularity = 1.0 / np.arange(1, spec.n_artists + 1) ** spec.zipf
    popularity /= popularity.sum()
    artist_of = rng.choice(spec.n_artists, size=spec.n_songs, p=popularity)

    n_spurious = max(1, spec.feat_dim // 100)
    song_latents = np.zeros((L, spec.n_songs))
    records = []
    for i, a in enumerate(artist_of):
        active = np.flatnonzero(artists[:, a])
        z = artists[:, a].copy()
        z[active] += SONG_JITTER * rng.normal(size=len(active))
        song_latents[:, i] = z

        song_tags = np.argsort(-(tags.T @ z), kind="stable")[:spec.tags_per_song]

        x = np.zeros(spec.feat_dim)
        for r in active:
            x[blocks[r]] = weights[r] * z[r]
        if spec.noise_sigma > 0:
            on = np.flatnonzero(x)
            x[on] += spec.noise_sigma * rng.normal(size=len(on))
            spurious = rng.choice(spec.feat_dim, size=n_spurious, replace=False)
            x[spurious] += np.abs(spec.noise_sigma * rng.normal(size=n_spurious))

        records.append(SongRecord(f"s{i:06d}", (int(a),), tuple(int(t) for t in song_tags),
                                  SparseVector.from_dense(x)))

    train, valid, test = _split(records, spec, rng, spec.n_artists, spec.n_tags, spec.feat_dim)
    truth = SynthTruth(artists, tags, decoder, song_latents)
    similarity = artist_similarity_from_latents(artists, spec.artist_neighbours)
    logger.info("Generated %d/%d/%d songs (|A|=%d, |T|=%d, |S|=%d, sigma=%g)",
                len(train), len(valid), len(test), spec.n_artists, spec.n_tags, spec.feat_dim, spec.noise_sigma)
    return train, valid, test, truth, similarity


def gen_latent(spec: SynthSpec) -> Tuple[Dataset, Dataset, Dataset]:
    train, valid, test, _, _ = gen_latent_with_truth(spec)
    return train, valid, test


def artist_similarity_from_latents(artist_latents: np.ndarray, n_neighbours: int) -> Dict[int, Tuple[int, ...]]:
    """Each artist's n nearest artists by latent cosine, ties by id."""
    n = artist_latents.shape[1]
    n_neighbours = min(n_neighbours, n - 1)
    if n_neighbours <= 0:
        return {}
    sims = artist_latents.T @ artist_latents
    out = {}
    for a in range(n):
        order = [int(b) for b in np.lexsort((np.arange(n), -sims[a])) if b != a]
        out[a] = tuple(sorted(order[:n_neighbours]))
    return out


def gen_separable() -> Tuple[Dataset, Dataset, Dataset]:
    """20 songs, 4 tags, features one-hot by tag, artist = tag; 12/4/4 split.

    Every split holds every tag, so a perfect ranking exists for tp, ap and ss.
    """
    n_tags = 4
    records = []
    for i in range(20):
        t = i % n_tags
        records.append(SongRecord(f"s{i:02d}", (t,), (t,), SparseVector.from_pairs([(t, 1.0)], n_tags)))
    parts = (records[:12], records[12:16], records[16:])
    return tuple(Dataset(p, n_tags, n_tags, n_tags) for p in parts)


PRESETS = {
    "latent": SynthSpec(),
    # noise-free, full-rank features: a perfect linear tag model exists
    "latent-clean": SynthSpec(n_songs=500, n_artists=20, n_tags=10, feat_dim=10, latent_dim=10, noise_sigma=0.0),
    "small": SynthSpec(n_songs=400, n_artists=20, n_tags=15, feat_dim=60, latent_dim=8),
}


def resolve_spec(preset: str, **overrides) -> SynthSpec:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r} (expected separable or one of {', '.join(PRESETS)})")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(PRESETS[preset], **overrides)


def write_synth(out_dir: Union[str, Path], preset: str = "latent", **overrides) -> Dict[str, Path]:
    """Write train/valid/test TSVs (and artist_sim.tsv for latent presets) into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    similarity = None
    if preset == "separable":
        train, valid, test = gen_separable()
    else:
        train, valid, test, _, similarity = gen_latent_with_truth(resolve_spec(preset, **overrides))

    paths = {
        "train": save_dataset(train, out_dir / "train.tsv"),
        "valid": save_dataset(valid, out_dir / "valid.tsv"),
        "test": save_dataset(test, out_dir / "test.tsv"),
    }
    if similarity:
        paths["artist_sim"] = save_artist_similarity(similarity, out_dir / "artist_sim.tsv")
    return paths
