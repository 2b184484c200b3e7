"""Tests for the synthetic dataset generators."""

from dataclasses import replace

import pytest

from core.dataset import load_artist_similarity, load_dataset
from core.embedding_model import TaskId
from core.errors import ConfigError
from core.evaluation import evaluate
from core.synthgen import PRESETS, SynthSpec, gen_latent, gen_latent_with_truth, gen_separable, resolve_spec, write_synth

SMALL = SynthSpec(n_songs=200, n_artists=10, n_tags=8, feat_dim=30, latent_dim=6, seed=4)


def _as_rows(dataset):
    return [(r.song_id, r.artists, r.tags, r.features.items) for r in dataset.records]


def test_same_seed_same_data():
    for a, b in zip(gen_latent(SMALL), gen_latent(SMALL)):
        assert _as_rows(a) == _as_rows(b)


def test_different_seed_different_data():
    a, _, _ = gen_latent(SMALL)
    b, _, _ = gen_latent(replace(SMALL, seed=5))
    assert _as_rows(a) != _as_rows(b)


def test_splits_are_disjoint_and_complete():
    train, valid, test = gen_latent(SMALL)
    ids = [set(d.song_ids) for d in (train, valid, test)]
    assert not ids[0] & ids[1] and not ids[0] & ids[2] and not ids[1] & ids[2]
    assert sum(len(s) for s in ids) == SMALL.n_songs
    assert (len(train), len(valid), len(test)) == (140, 20, 40)


def test_records_respect_universes():
    for ds in gen_latent(SMALL):
        assert (ds.n_artists, ds.n_tags, ds.feat_dim) == (10, 8, 30)
        for rec in ds.records:
            assert len(rec.artists) == 1
            assert len(rec.tags) == SMALL.tags_per_song
            assert rec.features.nnz > 0


def test_similarity_lists():
    *_, similarity = gen_latent_with_truth(SMALL)
    assert set(similarity) == set(range(SMALL.n_artists))
    for artist, peers in similarity.items():
        assert artist not in peers
        assert len(peers) == SMALL.artist_neighbours


def test_clean_preset_has_a_perfect_tag_model():
    train, valid, test, truth, _ = gen_latent_with_truth(PRESETS["latent-clean"])
    model = truth.optimal_model(C=1.0)
    assert model.max_column_norm() <= 1.0 + 1e-9
    assert evaluate(model, test, [TaskId.TAG_PRED], [1]).precision[TaskId.TAG_PRED][1] == 1.0


def test_infeasible_specs():
    with pytest.raises(ConfigError):
        SynthSpec(latent_dim=300, feat_dim=200)
    with pytest.raises(ConfigError):
        SynthSpec(n_tags=2, tags_per_song=3)
    with pytest.raises(ConfigError):
        SynthSpec(valid_frac=0.5, test_frac=0.5)
    with pytest.raises(ConfigError):
        resolve_spec("nope")


def test_resolve_spec_overrides():
    spec = resolve_spec("small", seed=9, noise_sigma=None)
    assert spec.seed == 9
    assert spec.noise_sigma == PRESETS["small"].noise_sigma


def test_separable_shape():
    train, valid, test = gen_separable()
    assert (len(train), len(valid), len(test)) == (12, 4, 4)
    for ds in (train, valid, test):
        assert {r.tags[0] for r in ds.records} == {0, 1, 2, 3}
        for rec in ds.records:
            assert rec.artists == rec.tags
            assert rec.features.items == [(rec.tags[0], 1.0)]


def test_write_synth(tmp_path):
    paths = write_synth(tmp_path, "small", seed=1)
    assert set(paths) == {"train", "valid", "test", "artist_sim"}
    train = load_dataset(paths["train"])
    assert train.n_artists == PRESETS["small"].n_artists
    similarity = load_artist_similarity(paths["artist_sim"], train.n_artists)
    assert len(similarity) == train.n_artists

    sep = write_synth(tmp_path / "sep", "separable")
    assert "artist_sim" not in sep
    assert len(load_dataset(sep["test"])) == 4
