"""Loader, standardization, and split behavior."""

import json
import warnings

import numpy as np
import pytest

from pbtune import errors
from pbtune.data import (
    LabeledDataset,
    SplitSpec,
    load_bundled,
    load_csv,
    standardize,
    stratified_split,
    write_csv,
)


def write_file(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_maps_labels_and_names(tmp_path):
    path = write_file(tmp_path, "a,b,diag\n1.0,2.0,pos\n3.5,-1.0,neg\n")
    data = load_csv(path, label_column="diag", positive_label="pos")
    assert data.feature_names == ("a", "b")
    np.testing.assert_array_equal(data.features, [[1.0, 2.0], [3.5, -1.0]])
    np.testing.assert_array_equal(data.labels, [1.0, -1.0])


def test_load_csv_label_column_anywhere(tmp_path):
    path = write_file(tmp_path, "diag,a\npos,1.0\nneg,2.0\n")
    data = load_csv(path, label_column="diag", positive_label="pos")
    np.testing.assert_array_equal(data.features, [[1.0], [2.0]])
    np.testing.assert_array_equal(data.labels, [1.0, -1.0])


def test_load_csv_drops_exact_duplicates(tmp_path):
    path = write_file(
        tmp_path,
        "a,diag\n1.0,pos\n2.0,neg\n1.0,pos\n3.0,neg\n")
    data = load_csv(path, label_column="diag", positive_label="pos")
    assert data.num_points == 3
    np.testing.assert_array_equal(data.features.ravel(), [1.0, 2.0, 3.0])


def test_load_csv_keeps_same_point_with_other_label(tmp_path):
    path = write_file(tmp_path, "a,diag\n1.0,pos\n1.0,neg\n")
    data = load_csv(path, label_column="diag", positive_label="pos")
    assert data.num_points == 2


def test_load_csv_rejects_bad_cell_with_location(tmp_path):
    path = write_file(tmp_path, "a,b,diag\n1.0,2.0,pos\n1.5,oops,neg\n")
    with pytest.raises(errors.ParseError, match="row 3.*'b'"):
        load_csv(path, label_column="diag", positive_label="pos")


def test_load_csv_rejects_ragged_row(tmp_path):
    path = write_file(tmp_path, "a,b,diag\n1.0,2.0,pos\n1.5,neg\n")
    with pytest.raises(errors.ParseError, match="row 3"):
        load_csv(path, label_column="diag", positive_label="pos")


def test_load_csv_missing_label_column(tmp_path):
    path = write_file(tmp_path, "a,b\n1.0,2.0\n")
    with pytest.raises(errors.MissingLabelColumn, match="diag"):
        load_csv(path, label_column="diag", positive_label="pos")


def test_load_csv_single_class(tmp_path):
    path = write_file(tmp_path, "a,diag\n1.0,pos\n2.0,pos\n")
    with pytest.raises(errors.SingleClassData):
        load_csv(path, label_column="diag", positive_label="pos")


def test_load_csv_too_few_rows(tmp_path):
    path = write_file(tmp_path, "a,diag\n1.0,pos\n")
    with pytest.raises(errors.InsufficientSamples):
        load_csv(path, label_column="diag", positive_label="pos")


def test_load_csv_deterministic(tmp_path):
    path = write_file(tmp_path, "a,diag\n3.0,pos\n1.0,neg\n2.0,pos\n")
    first = load_csv(path, label_column="diag", positive_label="pos")
    second = load_csv(path, label_column="diag", positive_label="pos")
    np.testing.assert_array_equal(first.features, second.features)
    np.testing.assert_array_equal(first.labels, second.labels)
    # Input order is preserved, not sorted.
    np.testing.assert_array_equal(first.features.ravel(), [3.0, 1.0, 2.0])


def test_write_csv_round_trips(tmp_path):
    data = LabeledDataset([[0.1, 2.0], [3.0, -4.25]], [1.0, -1.0],
                          feature_names=("u", "v"))
    path = tmp_path / "out.csv"
    write_csv(path, data)
    back = load_csv(path, label_column="label", positive_label="1")
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.labels, data.labels)
    assert back.feature_names == ("u", "v")


def test_standardize_two_point_column():
    # Column (1, 3): mean 2, sample std sqrt(2), so entries land at
    # -1/sqrt(2) and +1/sqrt(2).
    data = LabeledDataset([[1.0], [3.0]], [1.0, -1.0])
    out = standardize(data)
    np.testing.assert_allclose(
        out.features.ravel(),
        [-0.7071067811865475, 0.7071067811865475], rtol=0, atol=0)
    means, stds = out.standardization
    assert means[0] == 2.0
    assert stds[0] == pytest.approx(np.sqrt(2.0), rel=1e-15)


def test_standardize_constant_column_zeroed_and_flagged():
    data = LabeledDataset([[5.0, 1.0], [5.0, 3.0]], [1.0, -1.0])
    with pytest.warns(errors.ConstantColumnWarning, match=r"\[0\]"):
        out = standardize(data)
    np.testing.assert_array_equal(out.features[:, 0], [0.0, 0.0])
    assert out.standardization[1][0] == 0.0


def test_standardize_idempotent():
    rng = np.random.default_rng(7)
    data = LabeledDataset(rng.normal(size=(40, 3)) * [1.0, 50.0, 1e-3],
                          np.where(rng.random(40) < 0.5, 1.0, -1.0))
    once = standardize(data)
    twice = standardize(once)
    np.testing.assert_allclose(twice.features, once.features, atol=1e-9)


def test_standardize_with_training_statistics():
    train = LabeledDataset([[0.0], [2.0], [4.0]], [1.0, -1.0, 1.0])
    held = LabeledDataset([[6.0], [2.0]], [1.0, -1.0])
    strain = standardize(train)
    sheld = standardize(held, stats=strain.standardization)
    np.testing.assert_allclose(sheld.features.ravel(), [2.0, 0.0])
    np.testing.assert_array_equal(sheld.standardization[0],
                                  strain.standardization[0])


def test_standardize_rejects_mismatched_stats():
    data = LabeledDataset([[1.0, 2.0], [3.0, 4.0]], [1.0, -1.0])
    with pytest.raises(errors.DimensionMismatch):
        standardize(data, stats=(np.zeros(3), np.ones(3)))


def test_split_exact_counts_on_balanced_data():
    rng = np.random.default_rng(0)
    labels = np.repeat([1.0, -1.0], 50)
    data = LabeledDataset(rng.normal(size=(100, 2)), labels)
    spec = stratified_split(data, (20, 10), seed=3)
    assert spec.sizes == (20, 10, 50)
    for idx, want in ((spec.test_idx, 25), (spec.train_idx, 10),
                      (spec.val_idx, 5)):
        assert (labels[idx] > 0).sum() == want


def test_split_deterministic():
    rng = np.random.default_rng(1)
    data = LabeledDataset(rng.normal(size=(60, 2)),
                          np.where(rng.random(60) < 0.4, 1.0, -1.0))
    a = stratified_split(data, (12, 8), seed=42)
    b = stratified_split(data, (12, 8), seed=42)
    for part in ("train_idx", "val_idx", "test_idx"):
        np.testing.assert_array_equal(getattr(a, part), getattr(b, part))
    c = stratified_split(data, (12, 8), seed=43)
    assert not np.array_equal(a.train_idx, c.train_idx)


def test_split_rejects_oversized_request():
    rng = np.random.default_rng(2)
    data = LabeledDataset(rng.normal(size=(20, 1)),
                          np.where(rng.random(20) < 0.5, 1.0, -1.0))
    with pytest.raises(errors.InsufficientSamples):
        stratified_split(data, (8, 4), seed=0)


def test_split_warns_on_single_class_part():
    # One minority point: it lands in the test half, so the train part
    # comes out single-class.
    labels = np.concatenate([[-1.0], np.ones(19)])
    data = LabeledDataset(np.arange(20.0).reshape(-1, 1), labels)
    with pytest.warns(errors.DegenerateClassWarning):
        stratified_split(data, (5, 4), seed=0)


def test_split_stratification_invariants():
    rng = np.random.default_rng(99)
    data = LabeledDataset(rng.normal(size=(73, 2)),
                          np.where(rng.random(73) < 0.45, 1.0, -1.0))
    labels = data.labels
    shares = {c: (labels == c).mean() for c in (-1.0, 1.0)}
    for _ in range(1000):
        seed = int(rng.integers(0, 2**31))
        n_train = int(rng.integers(1, 30))
        n_val = int(rng.integers(1, 36 - n_train))
        with warnings.catch_warnings():
            # One-row parts are legitimately single-class here.
            warnings.simplefilter("ignore", errors.DegenerateClassWarning)
            spec = stratified_split(data, (n_train, n_val), seed=seed)
        assert spec.sizes == (n_train, n_val, 37)
        joined = np.concatenate([spec.train_idx, spec.val_idx,
                                 spec.test_idx])
        assert np.unique(joined).size == joined.size
        for idx in (spec.train_idx, spec.val_idx, spec.test_idx):
            for c, share in shares.items():
                got = (labels[idx] == c).sum()
                assert abs(got - share * idx.size) <= 1.0 + 1e-12


def test_splitspec_json_round_trip():
    spec = SplitSpec(train_idx=[3, 1], val_idx=[5], test_idx=[0, 2],
                     seed=11)
    raw = json.loads(spec.to_json())
    assert set(raw) == {"seed", "train_idx", "val_idx", "test_idx"}
    back = SplitSpec.from_json(spec.to_json())
    assert back.seed == 11
    np.testing.assert_array_equal(back.train_idx, spec.train_idx)
    np.testing.assert_array_equal(back.test_idx, spec.test_idx)


def test_splitspec_rejects_overlap():
    with pytest.raises(errors.InsufficientSamples):
        SplitSpec(train_idx=[0, 1], val_idx=[1], test_idx=[2], seed=0)


def test_bundled_cancer_dataset():
    data = load_bundled("cancer")
    assert data.num_points == 569
    assert data.num_features == 9
    assert (data.labels > 0).sum() == 212
    assert data.feature_names[0] == "mean_radius"
    assert np.isfinite(data.features).all()


def test_bundled_cancer_split_counts():
    # Largest-remainder arithmetic on the 212/357 class counts: the test
    # half takes 285 rows (106 positive), a 20-row train part takes 7
    # positives, and a 10-row validation part takes 4.
    data = load_bundled("cancer")
    spec = stratified_split(data, (20, 10), seed=5)
    assert spec.sizes == (20, 10, 285)
    labels = data.labels
    assert (labels[spec.test_idx] > 0).sum() == 106
    assert (labels[spec.train_idx] > 0).sum() == 7
    assert (labels[spec.val_idx] > 0).sum() == 4
