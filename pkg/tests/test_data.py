import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnregime.data import (
    Dataset,
    DatasetFormatError,
    SketchConfig,
    Split,
    _triu_pair,
    check_known_statistics,
    convert_npz,
    generate_synthetic,
    load_dataset,
    save_dataset,
    sketch_features,
    split_fraction,
    split_per_class,
)
from gnnregime.graph import from_edge_list


def write_raw(root, meta, graph="", features="", labels=""):
    root.mkdir(parents=True, exist_ok=True)
    (root / "meta.json").write_text(json.dumps(meta))
    (root / "graph.tsv").write_text(graph)
    (root / "features.tsv").write_text(features)
    (root / "labels.tsv").write_text(labels)


META = {"name": "toy", "n_nodes": 3, "n_features": 2, "n_classes": 2}


class TestFormat:
    def test_round_trip_is_exact(self, tmp_path, rng):
        g = from_edge_list([(0, 1, 0.1 + 0.2), (1, 2), (3, 0, 1e-300)], 4)
        ds = Dataset("toy", g, rng.standard_normal((4, 3)) * 1e10, [0, 1, 1, 0], 2)
        save_dataset(ds, tmp_path / "toy")
        back = load_dataset(tmp_path / "toy")
        assert back.name == "toy" and back.n_classes == 2
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.graph.to_dense(), g.to_dense())

    def test_minimal_files(self, tmp_path):
        write_raw(tmp_path, META, "0\t1\n1\t2\t2.5\n", "1 0\n0 1\n0.5 0.5\n", "0\n1\n1\n")
        ds = load_dataset(tmp_path)
        assert ds.graph.to_dense()[1, 2] == 2.5
        assert ds.labels.tolist() == [0, 1, 1]

    def test_empty_edge_file(self, tmp_path):
        write_raw(tmp_path, META, "", "1 0\n0 1\n0.5 0.5\n", "0\n1\n1\n")
        assert load_dataset(tmp_path).graph.nnz == 0

    def test_missing_feature_row(self, tmp_path):
        write_raw(tmp_path, META, "0\t1\n", "1 0\n0 1\n", "0\n1\n1\n")
        with pytest.raises(DatasetFormatError, match="2 rows, expected 3"):
            load_dataset(tmp_path)

    def test_malformed_edge_reports_line(self, tmp_path):
        write_raw(tmp_path, META, "0\t1\n1\tx\n", "1 0\n0 1\n0.5 0.5\n", "0\n1\n1\n")
        with pytest.raises(DatasetFormatError, match="line 2"):
            load_dataset(tmp_path)

    def test_bad_feature_width_reports_line(self, tmp_path):
        write_raw(tmp_path, META, "", "1 0\n0 1 2\n0.5 0.5\n", "0\n1\n1\n")
        with pytest.raises(DatasetFormatError, match="line 2: 3 values"):
            load_dataset(tmp_path)

    def test_label_out_of_range(self, tmp_path):
        write_raw(tmp_path, META, "", "1 0\n0 1\n0.5 0.5\n", "0\n1\n2\n")
        with pytest.raises(DatasetFormatError, match="line 3"):
            load_dataset(tmp_path)

    def test_edge_out_of_range(self, tmp_path):
        write_raw(tmp_path, META, "0\t3\n", "1 0\n0 1\n0.5 0.5\n", "0\n1\n1\n")
        with pytest.raises(DatasetFormatError, match="out of range"):
            load_dataset(tmp_path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope")

    def test_known_statistics_mismatch_warns(self):
        ds = Dataset("cora", from_edge_list([], 2), np.zeros((2, 1)), [0, 1], 2)
        with pytest.warns(UserWarning, match="expected N=2485"):
            assert not check_known_statistics(ds)

    def test_absent_class_rejected(self):
        with pytest.raises(DatasetFormatError):
            Dataset("x", from_edge_list([], 2), np.zeros((2, 1)), [0, 0], 2)


def test_convert_npz_keeps_largest_component(tmp_path):
    # triangle 0-1-2 and an isolated edge 3-4; labels use codes 3 and 7
    adj = sp.csr_matrix(([1.0, 1.0, 1.0, 1.0], ([0, 1, 2, 3], [1, 2, 0, 4])), shape=(5, 5))
    attr = sp.csr_matrix(np.arange(10.0).reshape(5, 2))
    np.savez(tmp_path / "toy.npz", adj_data=adj.data, adj_indices=adj.indices,
             adj_indptr=adj.indptr, adj_shape=adj.shape, attr_data=attr.data,
             attr_indices=attr.indices, attr_indptr=attr.indptr, attr_shape=attr.shape,
             labels=np.array([3, 7, 3, 7, 7]))
    ds = convert_npz(tmp_path / "toy.npz")
    assert ds.name == "toy" and ds.n_nodes == 3 and ds.n_classes == 2
    assert ds.graph.nnz == 6 and set(np.unique(ds.graph.values)) == {1.0}
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.features.tolist() == [[0, 1], [2, 3], [4, 5]]
    assert convert_npz(tmp_path / "toy.npz", largest_cc=False).n_nodes == 5


class TestSketch:
    def test_zero_input(self):
        assert not sketch_features(np.zeros((4, 6)), 3, rng=0).any()

    def test_shape_and_determinism(self, rng):
        x = rng.standard_normal((5, 8))
        a = sketch_features(x, SketchConfig(3, seed=9))
        assert a.shape == (5, 3)
        assert np.array_equal(a, sketch_features(x, SketchConfig(3, seed=9)))
        assert not np.array_equal(a, sketch_features(x, SketchConfig(3, seed=10)))

    def test_rng_overrides_seed(self, rng):
        x = rng.standard_normal((5, 8))
        assert np.array_equal(sketch_features(x, SketchConfig(4, seed=1), rng=2),
                              sketch_features(x, SketchConfig(4, seed=2)))

    def test_preserves_distances(self):
        gen = np.random.default_rng(0)
        x = gen.standard_normal((50, 100))
        y = sketch_features(x, 2000, rng=gen)
        i, j = np.triu_indices(50, k=1)
        ratio = np.linalg.norm(y[i] - y[j], axis=1) / np.linalg.norm(x[i] - x[j], axis=1)
        assert np.max(np.abs(ratio - 1)) < 0.15

    def test_linear(self, rng):
        x, z = rng.standard_normal((2, 6, 10))
        lhs = sketch_features(2 * x - 3 * z, 4, rng=5)
        rhs = 2 * sketch_features(x, 4, rng=5) - 3 * sketch_features(z, 4, rng=5)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_invalid_dim(self):
        with pytest.raises(ValueError):
            SketchConfig(0)


def assert_partition(split, n):
    parts = np.concatenate([split.train, split.val, split.test])
    assert np.array_equal(np.sort(parts), np.arange(n))


class TestSplits:
    def test_per_class_sizes(self):
        labels = np.repeat(np.arange(7), 100)
        split = split_per_class(labels, 20, 500, rng=0)
        assert np.bincount(labels[split.train]).tolist() == [20] * 7
        assert split.val.size == 500 and split.test.size == 60
        assert_partition(split, labels.size)

    def test_per_class_singleton(self):
        split = split_per_class([0, 1, 1, 1], 1, 1, rng=0)
        assert 0 in split.train and split.train.size == 2

    def test_per_class_too_small(self):
        with pytest.raises(ValueError, match="class 0"):
            split_per_class([0, 1, 1, 1], 2, 0, rng=0)

    def test_per_class_not_enough_for_val(self):
        with pytest.raises(ValueError):
            split_per_class([0, 1, 1, 1], 1, 5, rng=0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_per_class_disjoint(self, seed):
        labels = np.random.default_rng(seed).integers(0, 3, 120)
        labels[:3] = [0, 1, 2]
        for c in range(3):
            if (labels == c).sum() < 5:
                labels[3 + 5 * c:8 + 5 * c] = c
        assert_partition(split_per_class(labels, 5, 30, rng=seed), 120)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(10, 3000), st.floats(0.01, 0.9), st.integers(0, 2**32 - 1))
    def test_fraction_sizes(self, n, frac, seed):
        n_obs = math.floor(frac * n)
        if n_obs - math.floor(0.2 * n_obs) < 1:
            return
        split = split_fraction(np.zeros(n), frac, rng=seed)
        assert split.n_observed == n_obs
        assert split.val.size == math.floor(0.2 * n_obs)
        assert_partition(split, n)

    @pytest.mark.parametrize("n, ratio", [(19717, 32.86), (2485, 4.14), (2110, 3.52)])
    def test_observed_to_feature_ratio(self, n, ratio):
        split = split_fraction(np.zeros(n), 0.5, rng=0)
        assert round(split.n_observed / 300, 2) == ratio

    def test_fraction_too_small(self):
        with pytest.raises(ValueError, match="no training nodes"):
            split_fraction(np.zeros(10), 0.05, rng=0)

    def test_fraction_out_of_range(self):
        with pytest.raises(ValueError):
            split_fraction(np.zeros(10), 1.0)

    def test_deterministic(self):
        a, b = (split_fraction(np.zeros(100), 0.3, rng=4) for _ in range(2))
        assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("train", "val", "test"))

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            Split([0, 1], [1], [2])


class TestSynthetic:
    def test_cliques(self):
        ds = generate_synthetic(5, 3, 4, intra_p=1.0, inter_p=0.0, rng=0)
        dense = ds.graph.to_dense()
        same = ds.labels[:, None] == ds.labels[None, :]
        assert np.array_equal(dense > 0, same & ~np.eye(15, dtype=bool))

    def test_no_separation_is_pure_noise(self):
        ds = generate_synthetic(500, 2, 3, feature_separation=0.0, rng=1)
        assert np.all(np.abs(ds.features.mean(axis=0)) < 3 / math.sqrt(1000))

    def test_separation_sets_mean_norm(self):
        ds = generate_synthetic(2000, 2, 3, feature_separation=4.0, rng=2)
        mean = ds.features[ds.labels == 0].mean(axis=0)
        assert abs(np.linalg.norm(mean) - 4.0) < 0.2

    @pytest.mark.parametrize("intra, inter", [(0.1, 0.1), (0.1, 0.2), (1.5, 0.1), (0.1, -0.1)])
    def test_invalid_probabilities(self, intra, inter):
        with pytest.raises(ValueError):
            generate_synthetic(intra_p=intra, inter_p=inter)

    def test_large_graph_edge_counts(self):
        ds = generate_synthetic(1500, 3, 2, intra_p=0.01, inter_p=0.001, rng=3)
        i, j = np.nonzero(sp.triu(ds.graph.to_scipy(), k=1))
        intra = int(np.sum(ds.labels[i] == ds.labels[j]))
        expected = 3 * 1500 * 1499 / 2 * 0.01
        assert abs(intra - expected) < 5 * math.sqrt(expected)
        expected_inter = 3 * 1500 * 1500 * 0.001
        assert abs(i.size - intra - expected_inter) < 5 * math.sqrt(expected_inter)

    @given(st.integers(2, 60))
    def test_triu_pair_matches_numpy(self, n):
        i, j = _triu_pair(np.arange(n * (n - 1) // 2), n)
        ref_i, ref_j = np.triu_indices(n, k=1)
        assert np.array_equal(i, ref_i) and np.array_equal(j, ref_j)
