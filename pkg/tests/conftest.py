"""Shared fixtures for the songspace test suite."""

import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import numpy as np
import pytest

from core.dataset import Dataset, SongRecord, SparseVector
from core.embedding_model import EmbeddingModel
from core.synthgen import gen_separable


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the slow studies")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: directional studies that train many models")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def separable():
    """(train, valid, test) with 4 tags, features one-hot by tag."""
    return gen_separable()


def random_sparse(rng: np.random.Generator, dim: int, nnz: int, integer=False) -> SparseVector:
    idx = np.sort(rng.choice(dim, size=nnz, replace=False))
    if integer:
        return SparseVector(idx, rng.integers(1, 4, size=nnz).astype(np.float64), dim)
    return SparseVector(idx, rng.normal(size=nnz) + 3.0, dim)


def random_model(rng: np.random.Generator, d=4, n_artists=6, n_tags=5, feat_dim=12, C=1.0,
                 integer=False) -> EmbeddingModel:
    """Random model; `integer` draws small integers so every dot product is exact."""
    def draw(shape):
        if integer:
            return rng.integers(-3, 4, size=shape).astype(np.float64)
        return rng.normal(size=shape)
    return EmbeddingModel(draw((d, n_artists)), draw((d, n_tags)), draw((d, feat_dim)), C)


def random_dataset(rng: np.random.Generator, n_songs=12, n_artists=4, n_tags=5, feat_dim=12,
                   integer=False) -> Dataset:
    """Each song has one artist, one or two tags and a few features."""
    records = []
    for i in range(n_songs):
        artist = int(rng.integers(n_artists))
        tags = tuple(sorted(rng.choice(n_tags, size=int(rng.integers(1, 3)), replace=False).tolist()))
        idx = np.sort(rng.choice(feat_dim, size=3, replace=False))
        if integer:
            vals = rng.integers(1, 4, size=3).astype(np.float64)
        else:
            vals = rng.uniform(0.5, 2.0, size=3)
        records.append(SongRecord(f"song{i}", (artist,), tags, SparseVector(idx, vals, feat_dim)))
    return Dataset(records, n_artists, n_tags, feat_dim)
