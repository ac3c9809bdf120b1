import numpy as np
import pytest

from segmeld.embed import EmbeddingNet, LossConfig
from segmeld.errors import ConfigError, DimensionMismatch, InsufficientClasses, InsufficientMembers, NonFiniteLoss
from segmeld.train import (
    PatchDataset,
    TrainConfig,
    distance_gap,
    patches_from_labels,
    sample_triplet_indices,
    sample_triplets,
    separable_patches,
    sgd_step,
    train,
)


def small_ds():
    x = np.arange(12, dtype=float).reshape(3, 4)
    return PatchDataset(x, [1, 1, 2])


def test_single_class_rejected():
    ds = PatchDataset(np.zeros((3, 2)), [5, 5, 5])
    with pytest.raises(InsufficientClasses):
        sample_triplets(ds, 4, 0)


def test_no_pair_class_rejected():
    ds = PatchDataset(np.zeros((2, 2)), [1, 2])
    with pytest.raises(InsufficientMembers):
        sample_triplets(ds, 4, 0)


def test_only_feasible_triplets_from_two_plus_one():
    rows = sample_triplet_indices(small_ds(), 200, seed=3)
    # A has members {0, 1}, B has {2}: the only feasible triplets are (0,1,2), (1,0,2)
    assert {tuple(r) for r in rows.tolist()} == {(0, 1, 2), (1, 0, 2)}
    trips = sample_triplets(small_ds(), 10, seed=3)
    assert len(trips) == 10
    assert all(t.anchor_class == 1 and t.negative_class == 2 for t in trips)


def test_sampling_deterministic_and_valid(rng):
    ds = PatchDataset(rng.normal(size=(30, 3)), rng.integers(1, 5, size=30))
    a = sample_triplet_indices(ds, 500, seed=9)
    b = sample_triplet_indices(ds, 500, seed=9)
    assert np.array_equal(a, b)
    assert np.all(ds.y[a[:, 0]] == ds.y[a[:, 1]])
    assert np.all(a[:, 0] != a[:, 1])
    assert np.all(ds.y[a[:, 0]] != ds.y[a[:, 2]])


def test_learning_rate_schedule():
    cfg = TrainConfig(lr=0.1, halving_period=3)
    lrs = [cfg.lr_at(e) for e in range(9)]
    assert lrs == [0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.025, 0.025, 0.025]


def test_zero_epochs_returns_unchanged_net():
    ds = separable_patches(2, 5, 6)
    net = EmbeddingNet.init([6, 4, 3], seed=1)
    out, trace = train(net, ds, TrainConfig(epochs=0))
    assert trace == []
    assert all(np.array_equal(a, b) for a, b in zip(net.params(), out.params()))


def test_input_net_not_modified():
    ds = separable_patches(2, 5, 6)
    net = EmbeddingNet.init([6, 4, 3], seed=1)
    before = [p.copy() for p in net.params()]
    train(net, ds, TrainConfig(epochs=1, triplets=32))
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        train(EmbeddingNet.init([5, 3], seed=0), separable_patches(2, 4, 6), TrainConfig(epochs=1))


def test_weight_decay_only_shrinks_geometrically():
    ds = separable_patches(2, 5, 6)
    net = EmbeddingNet.init([6, 4, 3], seed=1)
    for b in net.biases:
        b[:] = 0.5
    before = [p.copy() for p in net.params()]

    def frozen(n_, a, p, q):
        return 0.0, n_.zero_grads()

    cfg = TrainConfig(epochs=1, triplets=64, batch_size=64, lr=0.1, weight_decay=0.01, last_layer_lr_mult=1.0)
    out, _ = train(net, ds, cfg, loss_fn=frozen)
    for a, b in zip(before, out.params()):
        assert np.allclose(b, a * (1 - 0.1 * 0.01), rtol=0, atol=1e-15)


def test_last_layer_multiplier():
    net = EmbeddingNet([np.ones((2, 2)), np.ones((2, 2))], [np.zeros(2), np.zeros(2)])
    grads = [np.ones((2, 2)), np.ones(2), np.ones((2, 2)), np.ones(2)]
    sgd_step(net, grads, lr=0.1, decay=0.0, last_layer_mult=10.0)
    assert np.allclose(net.weights[0], 0.9)
    assert np.allclose(net.weights[1], 0.0)
    assert np.allclose(net.biases[1], -1.0)


def test_non_finite_loss_aborts():
    ds = separable_patches(2, 5, 6)

    def bad(n_, a, p, q):
        return float("nan"), n_.zero_grads()

    with pytest.raises(NonFiniteLoss):
        train(EmbeddingNet.init([6, 3], seed=0), ds, TrainConfig(epochs=1, triplets=8), loss_fn=bad)


def test_training_is_bit_reproducible():
    ds = separable_patches(3, 10, 8, seed=2)
    net = EmbeddingNet.init([8, 6, 4], seed=4)
    cfg = TrainConfig(epochs=3, triplets=256, seed=7)
    a, ta = train(net, ds, cfg)
    b, tb = train(net, ds, cfg)
    assert ta == tb
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))


def test_two_class_separable_loss_decreases():
    ds = separable_patches(2, 40, 64, seed=1)
    net = EmbeddingNet.init([64, 32, 8], seed=1)
    trained, trace = train(net, ds, TrainConfig(epochs=20, triplets=2000, seed=1))
    assert len(trace) == 20
    assert trace[-1] < trace[0]
    intra, inter = distance_gap(trained, ds)
    assert intra < inter


def test_config_validation_and_json():
    with pytest.raises(ConfigError):
        TrainConfig(halving_period=0)
    cfg = TrainConfig(loss={"margin": 0.3})
    assert cfg.loss == LossConfig(margin=0.3)
    assert TrainConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_json({"bogus": 1})


def test_patches_from_labels_per_component(rng):
    img = rng.integers(0, 256, size=(10, 10, 3), dtype=np.uint8)
    lab = np.zeros((10, 10), dtype=np.int32)
    lab[0:3, 0:3] = 2
    lab[6:9, 6:9] = 2
    lab[0:3, 6:9] = 4
    x, y = patches_from_labels(img, lab, include_background=False)
    assert sorted(y) == [2, 2, 4]
    x, y = patches_from_labels(img, lab)
    assert sorted(y) == [0, 2, 2, 4]
