"""Tests for model initialisation, single SGD steps and the training loop."""

from collections import Counter

import numpy as np
import pytest

from conftest import random_dataset
from core.dataset import Dataset, SongRecord, SparseVector
from core.embedding_model import EmbeddingModel, TaskId
from core.errors import ConfigError, UnusableTaskError
from core.evaluation import evaluate
from core.losses import AlphaScheme, LossKind
from core.synthgen import SynthSpec, gen_latent
from core.trainer import (
    TrainConfig, build_task_data, init_model, pair_loss, sample_task, sgd_step, train,
    train_ensemble,
)

SIMILARITY = {0: (1, 2), 1: (0,), 2: (3,), 3: (0, 2)}


class TestInitModel:
    def test_entry_std_is_one_over_sqrt_d(self):
        model = init_model(100, 400, 300, 400, 1.0, np.random.default_rng(0))
        entries = np.concatenate([model.A.ravel(), model.T.ravel(), model.V.ravel()])
        assert entries.size >= 10 ** 5
        assert abs(entries.std() - 0.1) <= 0.01

    def test_columns_within_ball(self):
        model = init_model(16, 30, 20, 40, 0.5, np.random.default_rng(1))
        assert model.max_column_norm() <= 0.5 + 1e-6

    def test_same_seed_same_model(self):
        a = init_model(8, 5, 5, 5, 1.0, np.random.default_rng(3))
        b = init_model(8, 5, 5, 5, 1.0, np.random.default_rng(3))
        assert a == b


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(C=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(d=0)
    with pytest.raises(ConfigError):
        TrainConfig(eval_every=0)
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)
    with pytest.raises(ConfigError):
        TrainConfig(tasks=())
    assert TrainConfig(tasks="ap").tasks == (TaskId.ARTIST_PRED,)


class TestTaskData:
    def test_similar_song_positives_exclude_query(self, rng):
        ds = random_dataset(rng)
        td = build_task_data(TaskId.SIM_SONG, ds)
        for ex in td.examples:
            assert ex.query_index not in ex.positives
            assert len(ex.positives) > 0

    def test_song_prediction_positives_are_artist_songs(self, rng):
        ds = random_dataset(rng)
        td = build_task_data(TaskId.SONG_PRED, ds)
        for ex in td.examples:
            assert ex.positives.tolist() == ds.songs_by_artist[ex.query].tolist()
        assert td.n_labels == len(ds)

    def test_artist_prediction_needs_artists(self):
        recs = [SongRecord("a", (), (0,), SparseVector.from_pairs([(0, 1.0)], 2))]
        with pytest.raises(UnusableTaskError):
            build_task_data(TaskId.ARTIST_PRED, Dataset(recs, 3, 2, 2))

    def test_similar_artists_need_similarity(self, rng):
        with pytest.raises(UnusableTaskError):
            build_task_data(TaskId.SIM_ARTIST, random_dataset(rng))


def _small_model(rng, ds, d=3, scale=0.1, C=1e6):
    return EmbeddingModel(
        scale * rng.normal(size=(d, ds.n_artists)),
        scale * rng.normal(size=(d, ds.n_tags)),
        scale * rng.normal(size=(d, ds.feat_dim)),
        C,
    )


def _numeric_gradient(model, td, example, j, k, weight, eps=1e-6):
    grads = {}
    for name in ("A", "T", "V"):
        M = getattr(model, name)
        G = np.zeros_like(M)
        for idx in np.ndindex(M.shape):
            old = M[idx]
            M[idx] = old + eps
            up = pair_loss(model, td, example, j, k, weight)
            M[idx] = old - eps
            down = pair_loss(model, td, example, j, k, weight)
            M[idx] = old
            G[idx] = (up - down) / (2 * eps)
        grads[name] = G
    return grads


@pytest.mark.parametrize("loss", [LossKind.WARP, LossKind.AUC])
@pytest.mark.parametrize("task", list(TaskId))
def test_step_matches_finite_differences(task, loss):
    rng = np.random.default_rng(7)
    ds = random_dataset(rng, n_songs=10, n_artists=4, n_tags=5, feat_dim=8)
    td = build_task_data(task, ds, SIMILARITY)
    example = td.examples[0]
    model = _small_model(rng, ds)
    before = model.copy()
    gamma = 0.1

    outcome = sgd_step(model, td, example, loss, AlphaScheme.harmonic(), gamma, np.random.default_rng(11))
    assert outcome.updated
    assert outcome.positive in example.positives
    assert outcome.negative not in example.positives

    numeric = _numeric_gradient(before, td, example, outcome.positive, outcome.negative, outcome.weight)
    analytic = {n: -(getattr(model, n) - getattr(before, n)) / gamma for n in ("A", "T", "V")}
    num = np.concatenate([numeric[n].ravel() for n in ("A", "T", "V")])
    ana = np.concatenate([analytic[n].ravel() for n in ("A", "T", "V")])
    assert np.linalg.norm(ana - num) / np.linalg.norm(num) < 1e-4


def test_tag_step_touches_only_documented_slices():
    rng = np.random.default_rng(5)
    ds = random_dataset(rng, n_songs=10, n_artists=3, n_tags=6, feat_dim=9)
    td = build_task_data(TaskId.TAG_PRED, ds)
    example = td.examples[0]
    model = _small_model(rng, ds)
    before = model.copy()
    out = sgd_step(model, td, example, LossKind.WARP, AlphaScheme.harmonic(), 0.1, rng)

    np.testing.assert_array_equal(model.A, before.A)
    changed_tags = set(np.flatnonzero(np.any(model.T != before.T, axis=0)).tolist())
    assert changed_tags == {out.positive, out.negative}
    changed_feats = set(np.flatnonzero(np.any(model.V != before.V, axis=0)).tolist())
    assert changed_feats <= set(example.query.indices.tolist())
    assert set(out.touched) == {"T", "V"}


def _changed(after, before):
    return set(np.flatnonzero(np.any(after != before, axis=0)).tolist())


@pytest.mark.parametrize("task", [TaskId.ARTIST_PRED, TaskId.SONG_PRED, TaskId.SIM_ARTIST, TaskId.SIM_SONG])
def test_step_touches_only_documented_slices(task):
    rng = np.random.default_rng(11)
    ds = random_dataset(rng, n_songs=10, n_artists=4, n_tags=6, feat_dim=9)
    td = build_task_data(task, ds, SIMILARITY)
    example = td.examples[0]
    model = _small_model(rng, ds)
    before = model.copy()
    out = sgd_step(model, td, example, LossKind.WARP, AlphaScheme.harmonic(), 0.1, rng)
    assert out.updated
    j, k = out.positive, out.negative

    if task is TaskId.ARTIST_PRED:
        allowed = {"A": {j, k}, "V": set(example.query.indices.tolist())}
    elif task is TaskId.SONG_PRED:
        allowed = {"A": {example.query},
                   "V": set(td.songs[j].indices.tolist()) | set(td.songs[k].indices.tolist())}
    elif task is TaskId.SIM_ARTIST:
        allowed = {"A": {example.query, j, k}}
    else:
        allowed = {"V": set(example.query.indices.tolist()) | set(td.songs[j].indices.tolist())
                        | set(td.songs[k].indices.tolist())}

    for name in ("A", "T", "V"):
        changed = _changed(getattr(model, name), getattr(before, name))
        assert changed <= allowed.get(name, set())
    assert set(out.touched) == set(allowed)
    if task is TaskId.ARTIST_PRED:
        assert _changed(model.A, before.A) == {j, k}


def test_satisfied_margin_leaves_model_untouched():
    # one-hot features, T = 3·I: the right tag wins by 3
    recs = [SongRecord(f"s{t}", (), (t,), SparseVector.from_pairs([(t, 1.0)], 4)) for t in range(4)]
    ds = Dataset(recs, 0, 4, 4)
    td = build_task_data(TaskId.TAG_PRED, ds)
    model = EmbeddingModel(np.zeros((4, 0)), 3.0 * np.eye(4), np.eye(4), 10.0)
    before = model.copy()
    rng = np.random.default_rng(0)
    for loss in (LossKind.WARP, LossKind.AUC):
        for ex in td.examples:
            assert not sgd_step(model, td, ex, loss, AlphaScheme.harmonic(), 0.5, rng).updated
    assert model == before


def test_step_keeps_touched_columns_in_ball(rng):
    ds = random_dataset(rng)
    td = build_task_data(TaskId.SIM_SONG, ds)
    model = _small_model(rng, ds, scale=1.0, C=0.3)
    model.project_columns()
    for ex in td.examples:
        sgd_step(model, td, ex, LossKind.WARP, AlphaScheme.harmonic(), 1.0, rng)
        assert model.max_column_norm() <= 0.3 + 1e-6


def test_task_sampling_is_uniform():
    rng = np.random.default_rng(0)
    tasks = [TaskId.ARTIST_PRED, TaskId.TAG_PRED, TaskId.SIM_SONG]
    counts = Counter(sample_task(tasks, rng) for _ in range(10 ** 5))
    for t in tasks:
        assert abs(counts[t] / 10 ** 5 - 1 / 3) < 0.02


class TestTrain:
    def test_zero_steps_returns_initial_model(self, separable):
        train_set, valid, _ = separable
        config = TrainConfig(tasks=(TaskId.TAG_PRED,), d=8, max_steps=0, seed=3)
        report = train(train_set, valid, config)
        assert report.checkpoints == []
        assert report.steps_taken == 0
        assert report.model == init_model(8, 4, 4, 4, 1.0, np.random.default_rng(3))

    def test_separable_reaches_perfect_precision(self, separable):
        train_set, valid, test = separable
        config = TrainConfig(tasks=(TaskId.TAG_PRED,), d=16, gamma=0.1, max_steps=5000,
                             eval_every=100, patience=50, seed=7)
        report = train(train_set, valid, config)
        assert report.best_precision == 1.0
        assert report.checkpoints[-1].mean >= report.checkpoints[0].mean
        result = evaluate(report.model, test, [TaskId.TAG_PRED], [1])
        assert result.precision[TaskId.TAG_PRED][1] == 1.0

    def test_checkpoint_count(self, separable):
        train_set, valid, _ = separable
        config = TrainConfig(tasks=(TaskId.TAG_PRED,), d=4, max_steps=250, eval_every=100, patience=100)
        report = train(train_set, valid, config)
        assert [c.step for c in report.checkpoints] == [100, 200, 250]

    def test_same_seed_same_report(self, separable):
        train_set, valid, _ = separable
        config = TrainConfig(tasks=(TaskId.TAG_PRED, TaskId.ARTIST_PRED), d=6, max_steps=400,
                             eval_every=100, seed=11)
        assert train(train_set, valid, config) == train(train_set, valid, config)

    def test_constraints_hold_after_long_run(self):
        spec = SynthSpec(n_songs=300, n_artists=15, n_tags=10, feat_dim=40, latent_dim=6, seed=2)
        train_set, valid, _ = gen_latent(spec)
        config = TrainConfig(tasks=(TaskId.TAG_PRED, TaskId.SIM_SONG), d=8, C=0.5, gamma=0.2,
                             max_steps=10 ** 4, eval_every=2500, patience=10)
        report = train(train_set, valid, config)
        assert report.steps_taken == 10 ** 4
        assert report.model.max_column_norm() <= 0.5 + 1e-6

    def test_similar_artist_alone_without_similarity(self, separable):
        train_set, valid, _ = separable
        with pytest.raises(UnusableTaskError):
            train(train_set, valid, TrainConfig(tasks=(TaskId.SIM_ARTIST,), d=4, max_steps=10))

    def test_similar_artist_dropped_when_other_tasks_remain(self, separable, caplog):
        train_set, valid, _ = separable
        config = TrainConfig(tasks=(TaskId.TAG_PRED, TaskId.SIM_ARTIST), d=4, max_steps=20, eval_every=10)
        report = train(train_set, valid, config)
        assert set(report.checkpoints[0].precision) == {TaskId.TAG_PRED}
        assert "disabling task sa" in caplog.text

    def test_empty_validation(self, separable):
        train_set, _, _ = separable
        empty = Dataset([], 4, 4, 4)
        with pytest.raises(UnusableTaskError):
            train(train_set, empty, TrainConfig(d=4, max_steps=10))


class TestEnsemble:
    def test_members_differ(self, separable):
        train_set, valid, _ = separable
        config = TrainConfig(tasks=(TaskId.TAG_PRED,), d=8, max_steps=300, eval_every=100)
        members = train_ensemble(train_set, valid, config, 3)
        assert len(members) == 3
        assert members[0] != members[1] and members[1] != members[2]

    def test_single_member_equals_plain_train(self, separable):
        train_set, valid, _ = separable
        config = TrainConfig(tasks=(TaskId.TAG_PRED,), d=8, max_steps=300, eval_every=100, seed=4)
        (member,) = train_ensemble(train_set, valid, config, 1)
        assert member == train(train_set, valid, config).model

    def test_needs_a_member(self, separable):
        train_set, valid, _ = separable
        with pytest.raises(ConfigError):
            train_ensemble(train_set, valid, TrainConfig(d=4), 0)
