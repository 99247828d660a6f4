"""Tabular ingestion, stratified splits, and dataset round-trips."""

import numpy as np
import pytest

from decorrlab.data import (
    LabeledDataset,
    load_dataset,
    load_tabular_csv,
    save_dataset,
    split_dataset,
)
from decorrlab.numerics import RngState


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


SCHEMA = {"gender": "sensitive", "color": "categorical", "score": "continuous", "pay": "target"}


class TestLoadTabular:
    def test_small_fixture_one_hot_and_normalization(self, tmp_path):
        path = tmp_path / "toy.csv"
        _write_csv(
            path,
            ["gender", "color", "score", "pay"],
            [
                ["m", "red", 10, "hi"],
                ["f", "blue", 20, "lo"],
                ["m", "blue", 15, "lo"],
            ],
        )
        ds = load_tabular_csv(path, SCHEMA)
        assert ds.x.shape == (3, 3)  # 2 one-hot columns + 1 continuous
        onehot = ds.x[:, :2]
        np.testing.assert_allclose(onehot.sum(axis=1), 1.0)
        assert ds.x[2, 2] == pytest.approx(0.5)  # 15 in [10, 20]
        assert ds.x[0, 2] == 0.0 and ds.x[1, 2] == 1.0
        assert set(ds.meta.s_labels) == {"f", "m"}
        assert ds.y is not None and set(ds.meta.y_labels) == {"hi", "lo"}

    def test_product_sensitive_alphabet(self, tmp_path):
        path = tmp_path / "prod.csv"
        genders = ["m", "f"]
        rels = [f"r{i}" for i in range(6)]
        rows = [[g, r, 1.0] for g in genders for r in rels]
        _write_csv(path, ["gender", "rel", "v"], rows)
        schema = {"gender": "sensitive", "rel": "sensitive", "v": "continuous"}
        ds = load_tabular_csv(path, schema)
        assert len(ds.meta.s_labels) == 12
        assert len(np.unique(ds.s)) == 12

    def test_schema_must_cover_all_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        _write_csv(path, ["a", "b"], [[1, 2]])
        with pytest.raises(ValueError, match="does not cover"):
            load_tabular_csv(path, {"a": "sensitive"})

    def test_non_numeric_continuous_reports_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        _write_csv(path, ["s", "v"], [["a", 1.0], ["b", "oops"]])
        with pytest.raises(ValueError, match="row 1"):
            load_tabular_csv(path, {"s": "sensitive", "v": "continuous"})

    def test_unknown_category_at_test_time(self, tmp_path):
        train = tmp_path / "train.csv"
        test = tmp_path / "test.csv"
        _write_csv(train, ["s", "c", "v"], [["a", "x", 1.0], ["b", "y", 2.0]])
        _write_csv(test, ["s", "c", "v"], [["a", "z", 1.5]])
        schema = {"s": "sensitive", "c": "categorical", "v": "continuous"}
        meta = load_tabular_csv(train, schema).meta
        with pytest.raises(ValueError, match="'z'"):
            load_tabular_csv(test, schema, meta=meta)

    def test_test_time_values_clamped_with_count(self, tmp_path):
        train = tmp_path / "train.csv"
        test = tmp_path / "test.csv"
        _write_csv(train, ["s", "v"], [["a", 0.0], ["b", 10.0]])
        _write_csv(test, ["s", "v"], [["a", -5.0], ["b", 15.0], ["a", 5.0]])
        schema = {"s": "sensitive", "v": "continuous"}
        train_ds = load_tabular_csv(train, schema)
        with pytest.warns(UserWarning, match="clamped 2"):
            test_ds = load_tabular_csv(test, schema, meta=train_ds.meta)
        assert test_ds.clamped == 2
        np.testing.assert_allclose(test_ds.x[:, 0], [0.0, 1.0, 0.5])
        # applying to test data must not mutate the stored training range
        assert train_ds.meta.columns[1].value_range == (0.0, 10.0)


class TestSplit:
    def _dataset(self, n=1000, q=0.75):
        rng = RngState(5)
        s = (rng.uniform(n) < q).astype(int)
        x = np.asarray(rng.uniform(n * 2)).reshape(n, 2)
        return LabeledDataset(x, s)

    def test_exact_sizes(self):
        ds = self._dataset(1000)
        train, test = split_dataset(ds, 0.1, RngState(1))
        assert (train.n, test.n) == (900, 100)

    def test_stratified_within_one_sample(self):
        ds = self._dataset(2000, q=0.6)
        train, test = split_dataset(ds, 0.25, RngState(2))
        for group in (0, 1):
            want = 0.25 * (ds.s == group).sum()
            got = (test.s == group).sum()
            assert abs(got - want) <= 1.0

    def test_disjoint_and_exhaustive(self):
        ds = self._dataset(503)
        train, test = split_dataset(ds, 0.3, RngState(3))
        combined = np.vstack([train.x, test.x])
        assert combined.shape[0] == 503
        assert len({tuple(row) for row in combined}) == 503

    def test_deterministic(self):
        ds = self._dataset(400)
        a = split_dataset(ds, 0.2, RngState(9))[1]
        b = split_dataset(ds, 0.2, RngState(9))[1]
        assert a.x.tobytes() == b.x.tobytes()

    def test_bad_fractions(self):
        ds = self._dataset(50)
        for frac in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                split_dataset(ds, frac, RngState(1))

    def test_empty_side_rejected(self):
        ds = LabeledDataset(np.zeros((3, 1)), np.array([0, 0, 1]))
        with pytest.raises(ValueError):
            split_dataset(ds, 0.01, RngState(1))


class TestRoundTrip:
    def test_numeric_payload_bit_exact(self, tmp_path):
        rng = RngState(7)
        x = np.asarray(rng.uniform(60)).reshape(20, 3) * 1e3 - 500
        s = rng.integers(0, 3, 20)
        y = rng.integers(0, 2, 20)
        ds = LabeledDataset(x, s, y)
        path = tmp_path / "ds.csv"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert loaded.x.tobytes() == ds.x.tobytes()
        assert np.array_equal(loaded.s, ds.s)
        assert np.array_equal(loaded.y, ds.y)

    def test_missing_sidecar(self, tmp_path):
        path = tmp_path / "ds.csv"
        save_dataset(LabeledDataset(np.zeros((2, 1)), np.array([0, 1])), path)
        (tmp_path / "ds.csv.meta.json").unlink()
        with pytest.raises(FileNotFoundError):
            load_dataset(path)

    def test_version_mismatch(self, tmp_path):
        import json

        path = tmp_path / "ds.csv"
        save_dataset(LabeledDataset(np.zeros((2, 1)), np.array([0, 1])), path)
        sidecar = tmp_path / "ds.csv.meta.json"
        payload = json.loads(sidecar.read_text())
        payload["format_version"] = 99
        sidecar.write_text(json.dumps(payload))
        with pytest.raises(ValueError, match="version"):
            load_dataset(path)

    def test_metadata_preserves_one_hot_boundaries(self, tmp_path):
        src = tmp_path / "toy.csv"
        _write_csv(
            src,
            ["gender", "color", "score", "pay"],
            [["m", "red", 10, "hi"], ["f", "blue", 20, "lo"], ["m", "green", 15, "lo"]],
        )
        ds = load_tabular_csv(src, SCHEMA)
        path = tmp_path / "enc.csv"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        color = next(c for c in loaded.meta.columns if c.name == "color")
        assert (color.x_start, color.x_stop) == (0, 3)
        assert color.categories == ["blue", "green", "red"]
