import logging

import numpy as np
import pytest

from tripletmine.errors import ConfigError
from tripletmine.sampler import (
    LabeledDataset,
    PKConfig,
    load_dataset_csv,
    sample_pk_batch,
    save_dataset_csv,
)
from tripletmine.seeding import derive_rng


def make_dataset(identities: int, per_identity: int, dim: int = 4, seed: int = 0) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((identities * per_identity, dim))
    labels = np.repeat(np.arange(identities), per_identity)
    return LabeledDataset(vectors, labels, [f"p{i}" for i in range(identities)])


def test_identity_index_round_trips():
    ds = make_dataset(5, 3)
    for identity, rows in ds.identity_index.items():
        assert all(ds.labels[r] == identity for r in rows)
    assert sum(len(rows) for rows in ds.identity_index.values()) == len(ds)


def test_csv_round_trip(tmp_path):
    ds = make_dataset(3, 4)
    path = tmp_path / "data.csv"
    save_dataset_csv(ds, path)
    loaded = load_dataset_csv(path)
    assert np.array_equal(loaded.vectors, ds.vectors)
    assert np.array_equal(loaded.labels, ds.labels)
    assert loaded.label_names == ds.label_names


def test_csv_header_required(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,1.0,2.0\nb,3.0,4.0\n")
    with pytest.raises(ConfigError, match="header"):
        load_dataset_csv(path)


def test_csv_labels_interned_in_first_appearance_order(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("label,x_0\nzed,1.0\nann,2.0\nzed,3.0\n")
    ds = load_dataset_csv(path)
    assert ds.label_names == ["zed", "ann"]
    assert ds.labels.tolist() == [0, 1, 0]


def test_paper_batch_size_210():
    ds = make_dataset(50, 6, dim=2)
    batch = sample_pk_batch(ds, PKConfig(42, 5), derive_rng(0))
    assert batch.vectors.shape == (210, 2)
    assert len(np.unique(batch.labels)) == 42
    counts = np.bincount(batch.labels, minlength=50)
    assert sorted(counts[counts > 0].tolist()) == [5] * 42


def test_smallest_batch_is_whole_dataset():
    ds = make_dataset(2, 2)
    batch = sample_pk_batch(ds, PKConfig(2, 2), derive_rng(1))
    assert sorted(batch.sample_ids.tolist()) == [0, 1, 2, 3]


def test_same_seed_gives_identical_batches():
    ds = make_dataset(6, 4)
    cfg = PKConfig(3, 2)
    a = sample_pk_batch(ds, cfg, derive_rng(9))
    b = sample_pk_batch(ds, cfg, derive_rng(9))
    assert np.array_equal(a.sample_ids, b.sample_ids)
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_label_multiset_is_exactly_p_times_k():
    ds = make_dataset(7, 5)
    rng = derive_rng(2)
    for _ in range(20):
        batch = sample_pk_batch(ds, PKConfig(4, 3), rng)
        counts = np.bincount(batch.labels, minlength=7)
        assert sorted(counts[counts > 0].tolist()) == [3] * 4
        assert len(np.unique(batch.labels)) == 4


def test_short_identity_sampled_with_replacement(caplog):
    vectors = np.arange(10, dtype=float).reshape(5, 2)
    labels = np.array([0, 0, 0, 1, 1])
    ds = LabeledDataset(vectors, labels, ["a", "b"])
    with caplog.at_level(logging.WARNING):
        batch = sample_pk_batch(ds, PKConfig(2, 3), derive_rng(3))
    assert "replacement" in caplog.text
    counts = np.bincount(batch.labels)
    assert counts.tolist() == [3, 3]


def test_errors_for_bad_configs():
    ds = make_dataset(3, 3)
    with pytest.raises(ConfigError, match="identities"):
        sample_pk_batch(ds, PKConfig(4, 2), derive_rng(0))
    with pytest.raises(ConfigError):
        PKConfig(1, 5)
    with pytest.raises(ConfigError):
        PKConfig(5, 1)


def test_identity_selection_roughly_uniform():
    # chi-squared style: per-identity batch participation within 3 sigma
    identities, p, batches = 8, 3, 2000
    ds = make_dataset(identities, 4)
    rng = derive_rng(4)
    counts = np.zeros(identities)
    for _ in range(batches):
        batch = sample_pk_batch(ds, PKConfig(p, 2), rng)
        counts[np.unique(batch.labels)] += 1
    expect = batches * p / identities
    sigma = np.sqrt(batches * (p / identities) * (1 - p / identities))
    assert np.all(np.abs(counts - expect) <= 3 * sigma)
