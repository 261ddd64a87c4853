import numpy as np
import pytest

from moectr.data import (
    Batch,
    DatasetSchema,
    EncodedDataset,
    FeatureField,
    gen_synthetic,
    hash_token,
    load_synthetic_csv,
    load_table,
    load_synthetic_params,
    make_batches,
    save_synthetic_params,
    save_table,
    split_dataset,
)
from moectr.metrics import auc
from moectr.numerics import sigmoid


def reference_fnv1a_64(data: bytes) -> int:
    # independent implementation, written from the published algorithm
    value = 14695981039346656037
    for byte in data:
        value = ((value ^ byte) * 1099511628211) % 2**64
    return value


class TestHashToken:
    def test_empty_string_offset_basis(self):
        assert hash_token("", 2**64) == 14695981039346656037

    def test_against_reference(self):
        for token in ["a", "abc", "field=value", "__MISSING__", "日本語"]:
            for d in [1, 2, 97, 2**32]:
                assert hash_token(token, d) == reference_fnv1a_64(token.encode("utf-8")) % d

    def test_cardinality_one(self):
        assert hash_token("anything", 1) == 0

    def test_deterministic(self):
        assert hash_token("x", 1000) == hash_token("x", 1000)

    def test_bad_cardinality(self):
        with pytest.raises(ValueError):
            hash_token("x", 0)


SCHEMA = DatasetSchema(
    fields=(FeatureField("site", 50), FeatureField("device", 30)),
    label_column="click",
)


class TestLoadTable:
    def test_basic(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("site,device,click\ns1,d1,0\ns2,d2,1\ns3,d1,0\n")
        ds = load_table(path, SCHEMA)
        assert len(ds) == 3
        assert ds.labels.tolist() == [0.0, 1.0, 0.0]
        assert ds.indices[0, 0] == hash_token("s1", 50)
        assert ds.indices[1, 1] == hash_token("d2", 30)

    def test_missing_cell_sentinel(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("site,device,click\ns1,,1\n")
        ds = load_table(path, SCHEMA)
        assert ds.indices[0, 1] == hash_token("__MISSING__", 30)

    def test_invalid_label_line_number(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("site,device,click\na,b,0\na,b,1\na,b,0\na,b,2\n")
        with pytest.raises(ValueError, match="invalid label at line 5"):
            load_table(path, SCHEMA)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("site,click\na,0\n")
        with pytest.raises(ValueError, match="device"):
            load_table(path, SCHEMA)

    def test_extra_columns_ignored(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("site,device,click,junk\na,b,1,zzz\n")
        ds = load_table(path, SCHEMA)
        assert len(ds) == 1

    def test_indices_below_cardinality(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = "\n".join(f"s{i},d{i},{i % 2}" for i in range(200))
        path.write_text("site,device,click\n" + rows + "\n")
        ds = load_table(path, SCHEMA)
        assert (ds.indices[:, 0] < 50).all()
        assert (ds.indices[:, 1] < 30).all()


def _toy_dataset(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return EncodedDataset(
        SCHEMA,
        np.column_stack([rng.integers(0, 50, n), rng.integers(0, 30, n)]),
        (rng.random(n) < 0.5).astype(float),
    )


class TestSplitDataset:
    def test_floor_allocation(self):
        ds = _toy_dataset(10)
        tr, va, te = split_dataset(ds, (0.8, 0.1, 0.1), seed=7)
        assert (len(tr), len(va), len(te)) == (8, 1, 1)

    def test_remainder_to_train(self):
        ds = _toy_dataset(11)
        tr, va, te = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        # floors are 6/2/2, one leftover row joins train
        assert (len(tr), len(va), len(te)) == (7, 2, 2)

    def test_deterministic(self):
        ds = _toy_dataset(30)
        a = split_dataset(ds, (0.8, 0.1, 0.1), seed=3)
        b = split_dataset(ds, (0.8, 0.1, 0.1), seed=3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.indices, y.indices)
            np.testing.assert_array_equal(x.labels, y.labels)

    def test_fractions_exceed_one(self):
        with pytest.raises(ValueError, match="fractions exceed 1"):
            split_dataset(_toy_dataset(), (0.9, 0.2, 0.1), seed=0)

    def test_concatenation_reproduces_input(self):
        ds = _toy_dataset(37, seed=5)
        tr, va, te = split_dataset(ds, (0.5, 0.3, 0.2), seed=11)
        perm = np.random.default_rng(11).permutation(37)
        merged_idx = np.vstack([tr.indices, va.indices, te.indices])
        merged_y = np.concatenate([tr.labels, va.labels, te.labels])
        inverse = np.argsort(perm)
        np.testing.assert_array_equal(merged_idx[inverse], ds.indices)
        np.testing.assert_array_equal(merged_y[inverse], ds.labels)


class TestMakeBatches:
    def test_sizes(self):
        batches = make_batches(_toy_dataset(5), 2)
        assert [b.size for b in batches] == [2, 2, 1]

    def test_single_batch(self):
        batches = make_batches(_toy_dataset(4), 10)
        assert [b.size for b in batches] == [4]

    def test_shuffle_deterministic(self):
        ds = _toy_dataset(20)
        a = make_batches(ds, 6, shuffle_seed=9)
        b = make_batches(ds, 6, shuffle_seed=9)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.rows, y.rows)

    def test_rows_covered_once(self):
        ds = _toy_dataset(23)
        for seed in [None, 4]:
            batches = make_batches(ds, 5, shuffle_seed=seed)
            rows = np.concatenate([b.rows for b in batches])
            assert sorted(rows.tolist()) == list(range(23))


class TestGenSynthetic:
    def test_deterministic(self):
        a, pa = gen_synthetic(4, 20, 3, 500, seed=42)
        b, pb = gen_synthetic(4, 20, 3, 500, seed=42)
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_array_equal(a.labels, b.labels)
        for ua, ub in zip(pa.u, pb.u):
            np.testing.assert_array_equal(ua, ub)

    def test_needs_two_fields(self):
        with pytest.raises(ValueError):
            gen_synthetic(1, 10, 2, 100, seed=0)

    def test_indices_in_range(self):
        ds, _ = gen_synthetic(3, [7, 11, 13], 2, 1000, seed=1)
        for j, card in enumerate([7, 11, 13]):
            assert ds.indices[:, j].max() < card
            assert ds.indices[:, j].min() >= 0

    def test_positive_rate_matches_generator(self):
        # Monte-Carlo oracle: empirical click rate vs the mean model
        # probability under the persisted parameters
        ds, params = gen_synthetic(6, 100, 4, 100_000, seed=9)
        expected = sigmoid(params.logits(ds.indices)).mean()
        assert abs(ds.labels.mean() - expected) < 0.02

    def test_true_logit_beats_constant_scorer(self):
        ds, params = gen_synthetic(5, 50, 3, 10_000, seed=13)
        scores = params.logits(ds.indices)
        # O(n^2) pairwise oracle (vectorized): P(pos > neg) + 0.5 P(tie)
        pos = scores[ds.labels == 1.0]
        neg = scores[ds.labels == 0.0]
        greater = (pos[:, None] > neg[None, :]).sum()
        ties = (pos[:, None] == neg[None, :]).sum()
        oracle = (greater + 0.5 * ties) / (pos.size * neg.size)
        assert oracle > 0.5
        assert auc(scores, ds.labels) == pytest.approx(oracle, abs=1e-12)

    def test_params_roundtrip(self, tmp_path):
        _, params = gen_synthetic(3, [5, 6, 7], 2, 10, seed=21, c0=0.25)
        path = tmp_path / "gen.params"
        save_synthetic_params(params, path)
        loaded = load_synthetic_params(path)
        assert loaded.seed == 21
        assert loaded.c0 == 0.25
        for a, b in zip(params.u, loaded.u):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(params.v, loaded.v):
            np.testing.assert_array_equal(a, b)

    def test_csv_roundtrip(self, tmp_path):
        ds, _ = gen_synthetic(3, 9, 2, 50, seed=2)
        path = tmp_path / "synth.csv"
        save_table(ds, path)
        back = load_synthetic_csv(path, ds.schema)
        np.testing.assert_array_equal(back.indices, ds.indices)
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestEncodedDatasetValidation:
    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError, match="labels must be 0 or 1"):
            EncodedDataset(SCHEMA, np.zeros((2, 2), dtype=np.int64), np.array([0.0, 2.0]))

    def test_rejects_out_of_range_indices(self):
        idx = np.array([[50, 0], [0, 0]])
        with pytest.raises(ValueError, match="cardinality"):
            EncodedDataset(SCHEMA, idx, np.zeros(2))

    def test_batch_size(self):
        assert Batch(np.arange(4)).size == 4
