"""Tests for sparse vectors, records and the dataset/similarity file formats."""

import numpy as np
import pytest

from core.dataset import (
    Dataset, RankedList, SongRecord, SparseVector, load_artist_similarity, load_dataset,
    parse_dataset, save_artist_similarity, save_dataset,
)
from core.errors import DataInvariantError, DatasetFormatError, DimensionMismatchError


HEADER = "#dims\t10\t8\t2000"


class TestSparseVector:
    def test_from_pairs_sorts_and_drops_zeros(self):
        v = SparseVector.from_pairs([(17, 2.0), (3, 1.0), (5, 0.0)], 2000)
        assert v.items() == [(3, 1.0), (17, 2.0)]
        assert v.nnz == 2

    def test_rejects_unsorted_indices(self):
        with pytest.raises(DataInvariantError):
            SparseVector(np.array([4, 2]), np.array([1.0, 1.0]), 10)

    def test_rejects_stored_zero(self):
        with pytest.raises(DataInvariantError):
            SparseVector(np.array([1]), np.array([0.0]), 10)

    def test_rejects_index_out_of_range(self):
        with pytest.raises(DataInvariantError):
            SparseVector(np.array([10]), np.array([1.0]), 10)

    def test_duplicate_pair_index(self):
        with pytest.raises(DataInvariantError):
            SparseVector.from_pairs([(1, 1.0), (1, 2.0)], 10)

    def test_dot_matches_dense(self, rng):
        a = SparseVector.from_dense(np.where(rng.random(50) < 0.3, rng.normal(size=50), 0.0))
        b = SparseVector.from_dense(np.where(rng.random(50) < 0.3, rng.normal(size=50), 0.0))
        assert a.dot(b) == pytest.approx(float(a.to_dense() @ b.to_dense()), abs=1e-12)

    def test_dot_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            SparseVector.empty(3).dot(SparseVector.empty(4))

    def test_concat_offsets_second_block(self):
        mfcc = SparseVector.from_pairs([(1, 2.0)], 4)
        sai = SparseVector.from_pairs([(0, 1.0), (2, 3.0)], 3)
        both = mfcc.concat(sai)
        assert both.dim == 7
        assert both.items() == [(1, 2.0), (4, 1.0), (6, 3.0)]


class TestParse:
    def test_documented_line(self):
        ds = parse_dataset([HEADER, "s1\t0\t2,5\t3:1.0 17:2.0"])
        rec = ds.records[0]
        assert rec.artists == (0,)
        assert rec.tags == (2, 5)
        assert rec.features.nnz == 2
        assert (ds.n_artists, ds.n_tags, ds.feat_dim) == (10, 8, 2000)

    def test_empty_artist_field_is_cold_start(self):
        ds = parse_dataset([HEADER, "s1\t\t2\t3:1.0"])
        assert ds.records[0].artists == ()

    def test_empty_features(self):
        ds = parse_dataset([HEADER, "s1\t1\t2\t"])
        assert ds.records[0].features.nnz == 0

    def test_tag_out_of_range_reports_line(self):
        with pytest.raises(DatasetFormatError) as err:
            parse_dataset([HEADER, "s1\t0\t1\t", "s2\t0\t8\t3:1.0"], path="x.tsv")
        assert err.value.line_no == 3
        assert "x.tsv:3" in str(err.value)

    def test_duplicate_feature_index(self):
        with pytest.raises(DatasetFormatError, match="duplicate feature index"):
            parse_dataset([HEADER, "s1\t0\t1\t3:1.0 3:2.0"])

    @pytest.mark.parametrize("line", [
        "s1\t0\t1",
        "s1\tx\t1\t",
        "s1\t0\t1\t3=1.0",
        "s1\t0\t1\t3:nan",
        "s1\t0,0\t1\t",
        "\t0\t1\t",
    ])
    def test_malformed_lines(self, line):
        with pytest.raises(DatasetFormatError) as err:
            parse_dataset([HEADER, line])
        assert err.value.line_no == 2

    def test_duplicate_song_id(self):
        with pytest.raises(DatasetFormatError, match="duplicate song id"):
            parse_dataset([HEADER, "s1\t0\t1\t", "s1\t0\t1\t"])

    def test_missing_header(self):
        with pytest.raises(DatasetFormatError):
            parse_dataset(["s1\t0\t1\t3:1.0"])

    def test_comments_and_blank_lines_skipped(self):
        ds = parse_dataset([HEADER, "", "# note", "s1\t0\t1\t3:1.0", ""])
        assert len(ds) == 1


def test_save_load_dataset(tmp_path, rng):
    records = [
        SongRecord("a", (1,), (0, 3), SparseVector.from_pairs([(2, 0.1), (7, -1.5)], 9)),
        SongRecord("b", (), (), SparseVector.empty(9)),
    ]
    ds = Dataset(records, 4, 5, 9)
    loaded = load_dataset(save_dataset(ds, tmp_path / "d.tsv"))
    assert loaded.song_ids == ["a", "b"]
    assert loaded.records[0] == records[0]
    assert loaded.records[1].features.nnz == 0


def test_dataset_rejects_dim_mismatch():
    rec = SongRecord("a", (0,), (), SparseVector.empty(3))
    with pytest.raises(DimensionMismatchError):
        Dataset([rec], 1, 1, 4)


def test_song_record_rejects_duplicate_artists():
    with pytest.raises(DataInvariantError):
        SongRecord("a", (1, 1), (), SparseVector.empty(3))


def test_same_artist_songs_excludes_self():
    recs = [SongRecord(f"s{i}", (i % 2,), (), SparseVector.empty(2)) for i in range(5)]
    ds = Dataset(recs, 2, 0, 2)
    assert ds.same_artist_songs(0).tolist() == [2, 4]
    assert ds.songs_by_artist[1].tolist() == [1, 3]


def test_feature_matrix_rows(rng):
    recs = [SongRecord("a", (), (), SparseVector.from_pairs([(1, 2.0)], 4)),
            SongRecord("b", (), (), SparseVector.from_pairs([(0, 1.0), (3, 5.0)], 4))]
    X = Dataset(recs, 0, 0, 4).feature_matrix.toarray()
    np.testing.assert_array_equal(X, [[0, 2, 0, 0], [1, 0, 0, 5]])


class TestRankedList:
    def test_tie_break_by_id(self):
        ranked = RankedList.from_scores([0.5, 0.9, 0.9])
        assert ranked.labels.tolist() == [1, 2, 0]

    def test_exclude_and_truncate(self):
        ranked = RankedList.from_scores([3.0, 2.0, 1.0, 0.0], k=2, exclude=[0])
        assert ranked.labels.tolist() == [1, 2]


def test_artist_similarity_round_trip(tmp_path):
    path = save_artist_similarity({0: (1, 2), 3: (0,)}, tmp_path / "sim.tsv")
    assert load_artist_similarity(path, 4) == {0: (1, 2), 3: (0,)}


def test_artist_similarity_drops_self_and_checks_range(tmp_path):
    path = tmp_path / "sim.tsv"
    path.write_text("0\t0,1\n")
    assert load_artist_similarity(path, 2) == {0: (1,)}
    path.write_text("0\t5\n")
    with pytest.raises(DatasetFormatError):
        load_artist_similarity(path, 2)


def test_invalid_utf8_reports_path_and_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_bytes(b"#dims\t1\t1\t2\ns\xff\t0\t0\t0:1.0\n")
    with pytest.raises(DatasetFormatError, match=r"bad\.tsv:2: invalid UTF-8") as info:
        load_dataset(path)
    assert info.value.line_no == 2

    sim = tmp_path / "sim.tsv"
    sim.write_bytes(b"0\t1\n1\t\xfe0\n")
    with pytest.raises(DatasetFormatError, match=r"sim\.tsv:2:"):
        load_artist_similarity(sim, 2)
