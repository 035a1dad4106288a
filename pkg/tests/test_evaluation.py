import numpy as np
import pytest

from tripletmine.errors import ConfigError
from tripletmine.evaluation import (
    PairProtocol,
    SyntheticSpec,
    distance_fold_accuracy,
    generate_synthetic,
    load_protocol_csv,
    make_pair_protocol,
    save_protocol_csv,
    split_by_identity,
    verification_accuracy,
)
from tripletmine.model import EmbedderParams
from tripletmine.sampler import LabeledDataset


def identity_embedder(dim: int) -> EmbedderParams:
    return EmbedderParams([np.eye(dim)], [np.zeros(dim)])


def test_synthetic_counts():
    ds = generate_synthetic(SyntheticSpec(identities=20, samples_per_identity=100, dim=32))
    assert len(ds) == 2000
    assert ds.num_identities == 20
    assert ds.dim == 32


def test_synthetic_deterministic_given_seed():
    spec = SyntheticSpec(identities=4, samples_per_identity=5, dim=6, seed=9)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    assert a.vectors.tobytes() == b.vectors.tobytes()
    c = generate_synthetic(SyntheticSpec(identities=4, samples_per_identity=5, dim=6, seed=10))
    assert a.vectors.tobytes() != c.vectors.tobytes()


def test_synthetic_tiny_noise_collapses_clusters():
    spec = SyntheticSpec(identities=3, samples_per_identity=10, dim=5, noise=1e-9)
    ds = generate_synthetic(spec)
    for identity, rows in ds.identity_index.items():
        block = ds.vectors[rows]
        spread = ((block - block[0]) ** 2).sum(axis=1).max()
        assert spread < 1e-12


def test_split_by_identity_disjoint():
    ds = generate_synthetic(SyntheticSpec(identities=10, samples_per_identity=4, dim=3))
    train, eval_ds = split_by_identity(ds, 3)
    assert train.num_identities == 7
    assert eval_ds.num_identities == 3
    assert set(train.label_names).isdisjoint(eval_ds.label_names)
    assert len(train) + len(eval_ds) == len(ds)
    with pytest.raises(ConfigError):
        split_by_identity(ds, 10)


def test_protocol_balance_enforced():
    with pytest.raises(ValueError, match="unbalanced"):
        PairProtocol(np.array([0, 1, 2]), np.array([3, 4, 5]), np.array([True, True, False]))
    with pytest.raises(ValueError, match="empty"):
        PairProtocol(np.array([]), np.array([]), np.array([]))


def test_make_protocol_balanced_no_duplicates():
    ds = generate_synthetic(SyntheticSpec(identities=6, samples_per_identity=10, dim=4))
    proto = make_pair_protocol(ds, pairs_per_class=20, folds=5, seed=3)
    assert len(proto) == 40
    assert proto.same.sum() == 20
    pairs = {(min(a, b), max(a, b)) for a, b in zip(proto.id_a, proto.id_b)}
    assert len(pairs) == 40
    for a, b, s in zip(proto.id_a, proto.id_b, proto.same):
        assert (ds.labels[a] == ds.labels[b]) == s


def test_protocol_csv_round_trip(tmp_path):
    ds = generate_synthetic(SyntheticSpec(identities=4, samples_per_identity=6, dim=3))
    proto = make_pair_protocol(ds, pairs_per_class=8, folds=2, seed=1)
    path = tmp_path / "protocol.csv"
    save_protocol_csv(proto, path)
    loaded = load_protocol_csv(path, folds=2)
    assert np.array_equal(loaded.id_a, proto.id_a)
    assert np.array_equal(loaded.id_b, proto.id_b)
    assert np.array_equal(loaded.same, proto.same)


def test_fold_accuracy_hand_case_half():
    # fold 0 trains on pairs (0.3 same, 0.4 diff) -> threshold 0.35, then
    # misclassifies the held-out diff pair at 0.2; fold 1 symmetric -> 0.5
    distances = np.array([0.1, 0.3, 0.2, 0.4])
    same = np.array([True, True, False, False])
    assert distance_fold_accuracy(distances, same, folds=2) == pytest.approx(0.5)


def test_fold_accuracy_hand_case_perfect():
    distances = np.array([0.1, 0.2, 0.5, 0.6])
    same = np.array([True, True, False, False])
    assert distance_fold_accuracy(distances, same, folds=2) == pytest.approx(1.0)


def test_fold_accuracy_rejects_unbalanced():
    with pytest.raises(ValueError, match="balanced"):
        distance_fold_accuracy(np.array([0.1, 0.2, 0.3]), np.array([True, False, False]), 2)


def test_random_embeddings_score_chance_level():
    # labels carry no geometric signal, so held-out accuracy sits near 0.5
    rng = np.random.default_rng(0)
    vectors = rng.standard_normal((200, 8))
    labels = np.repeat(np.arange(10), 20)
    ds = LabeledDataset(vectors, labels, [f"p{i}" for i in range(10)])
    proto = make_pair_protocol(ds, pairs_per_class=100, folds=10, seed=4)
    acc = verification_accuracy(identity_embedder(8), proto, ds)
    assert abs(acc - 0.5) <= 0.05


def test_separated_clusters_score_perfectly():
    # identity_dim=dim: plain isotropic Gaussian clusters, no nuisance subspace
    spec = SyntheticSpec(
        identities=6,
        samples_per_identity=10,
        dim=8,
        separation=50.0,
        noise=0.01,
        warp=0.0,
        identity_dim=8,
    )
    ds = generate_synthetic(spec)
    proto = make_pair_protocol(ds, pairs_per_class=30, folds=5, seed=5)
    assert verification_accuracy(identity_embedder(8), proto, ds) == 1.0


def test_accuracy_invariant_under_pair_permutation():
    spec = SyntheticSpec(identities=5, samples_per_identity=8, dim=6, separation=2.0, noise=0.8)
    ds = generate_synthetic(spec)
    proto = make_pair_protocol(ds, pairs_per_class=20, folds=4, seed=6)
    base = verification_accuracy(identity_embedder(6), proto, ds)
    rng = np.random.default_rng(7)
    for _ in range(5):
        perm = rng.permutation(len(proto))
        shuffled = PairProtocol(proto.id_a[perm], proto.id_b[perm], proto.same[perm], proto.folds)
        assert verification_accuracy(identity_embedder(6), shuffled, ds) == base


def test_protocol_ids_validated_against_dataset():
    ds = generate_synthetic(SyntheticSpec(identities=3, samples_per_identity=4, dim=3))
    proto = PairProtocol(np.array([0, 99]), np.array([1, 2]), np.array([True, False]), folds=2)
    with pytest.raises(ValueError, match="outside"):
        verification_accuracy(identity_embedder(3), proto, ds)


def test_lower_noise_never_hurts_identity_embedder():
    # isotropic clusters: same unit deviations scaled by sigma (coupled draws)
    sigmas = [1.5, 1.0, 0.6, 0.3, 0.1]
    for seed in range(5):
        accs = []
        for sigma in sigmas:
            spec = SyntheticSpec(
                identities=6,
                samples_per_identity=10,
                dim=8,
                separation=1.0,
                noise=sigma,
                warp=0.0,
                identity_dim=8,
                seed=seed,
            )
            ds = generate_synthetic(spec)
            proto = make_pair_protocol(ds, pairs_per_class=30, folds=5, seed=seed)
            accs.append(verification_accuracy(identity_embedder(8), proto, ds))
        assert all(b >= a - 1e-12 for a, b in zip(accs, accs[1:])), (seed, accs)
