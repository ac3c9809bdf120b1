import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import knn_full_sort
from segmeld.embed import EmbeddingNet
from segmeld.errors import DimensionMismatch, EmptyMask, GalleryTooSmall
from segmeld.features import DESCRIPTOR_DIM
from segmeld.gallery import (
    Gallery,
    classify,
    classify_batch,
    distances,
    enroll,
    load_gallery,
    save_gallery,
)


def unit_rows(rng, n, d):
    v = rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def small():
    return Gallery([[1.0, 0.0], [0.0, 1.0], [0.8, 0.6]], [1, 2, 2])


def test_worked_example_order():
    out = classify(small(), [0.1, 0.995], k=3)
    assert [c for c, _ in out] == [2, 2, 1]
    d = [x for _, x in out]
    assert d == sorted(d)


def test_exact_match_has_zero_distance():
    (c, d), = classify(small(), [0.8, 0.6], k=1)
    assert c == 2 and d == 0.0


def test_k_equal_to_size_returns_all_sorted():
    out = classify(small(), [1.0, 0.0], k=3)
    assert len(out) == 3
    assert [c for c, _ in out] == [1, 2, 2]


def test_gallery_too_small():
    with pytest.raises(GalleryTooSmall):
        classify(small(), [1.0, 0.0], k=4)
    with pytest.raises(GalleryTooSmall):
        classify_batch(Gallery(dim=2), [[1.0, 0.0]], k=1)


def test_query_dimension_checked():
    with pytest.raises(DimensionMismatch):
        classify(small(), [1.0, 0.0, 0.0], k=1)


def test_add_rejects_non_unit_vectors():
    with pytest.raises(ValueError):
        Gallery(dim=2).add([1.0, 1.0], 3)


def test_gallery_is_immutable():
    g = small()
    g2 = g.add([0.6, 0.8], 4)
    assert len(g) == 3 and len(g2) == 4
    with pytest.raises(ValueError):
        g.vectors[0, 0] = 5.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 1000), st.integers(2, 6), st.integers(0, 2**31 - 1), st.data())
def test_matches_full_sort_oracle(n, d, seed, data):
    rng = np.random.default_rng(seed)
    vecs = unit_rows(rng, n, d)
    ids = rng.integers(0, 10, size=n)
    g = Gallery(vecs, ids)
    q = unit_rows(rng, 1, d)[0]
    k = data.draw(st.integers(1, n))
    got = classify(g, q, k)
    want = knn_full_sort(vecs.tolist(), ids.tolist(), q.tolist(), k)
    assert [c for c, _ in got] == [c for c, _ in want]
    assert np.allclose([x for _, x in got], [x for _, x in want], atol=1e-12)
    assert np.array_equal(classify_batch(g, q[None, :], k)[0], [c for c, _ in got])


def test_batch_matches_single(rng):
    g = Gallery(unit_rows(rng, 50, 4), rng.integers(0, 5, size=50))
    qs = unit_rows(rng, 20, 4)
    batch = classify_batch(g, qs, 3)
    for q, row in zip(qs, batch):
        assert [c for c, _ in classify(g, q, 3)] == list(row)


def test_permutation_changes_only_ties(rng):
    vecs = unit_rows(rng, 200, 3)
    ids = rng.integers(0, 6, size=200)
    q = unit_rows(rng, 1, 3)[0]
    perm = rng.permutation(200)
    a = classify(Gallery(vecs, ids), q, 5)
    b = classify(Gallery(vecs[perm], ids[perm]), q, 5)
    # random continuous data has no exact ties, so results agree exactly
    assert a == b


def test_distances_in_range(rng):
    g = Gallery(unit_rows(rng, 300, 8), np.zeros(300, dtype=int))
    d = distances(g, unit_rows(rng, 1, 8)[0])
    assert d.min() >= 0 and d.max() <= 2 + 1e-12


def test_enroll_appends_one_entry(rng):
    net = EmbeddingNet.init([DESCRIPTOR_DIM, 8], seed=0)
    img = rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)
    mask = np.zeros((12, 12), dtype=bool)
    mask[2:6, 2:6] = True
    g = enroll(Gallery(dim=8), img, mask, 5, net)
    assert len(g) == 1 and g.class_ids[0] == 5
    assert np.isclose(np.linalg.norm(g.vectors[0]), 1.0)
    with pytest.raises(EmptyMask):
        enroll(g, img, np.zeros((12, 12), dtype=bool), 5, net)


def test_enrolling_far_entry_leaves_results_unchanged():
    g = Gallery([[1.0, 0.0], [0.96, 0.28], [0.8, 0.6], [0.0, 1.0]], [1, 1, 2, 3])
    q = [0.995, 0.0998]
    before = classify(g, q, 3)
    after = classify(g.add([-1.0, 0.0], 9), q, 3)
    assert before == after


def test_json_round_trip(tmp_path, rng):
    g = Gallery(unit_rows(rng, 7, 5), [3, 3, 1, 0, 2, 2, 2])
    save_gallery(g, tmp_path / "g.json")
    h = load_gallery(tmp_path / "g.json")
    assert np.array_equal(g.vectors, h.vectors)
    assert np.array_equal(g.class_ids, h.class_ids)


def test_seven_views_per_class(rng):
    g = Gallery(dim=4)
    for c in range(1, 17):
        for v in unit_rows(rng, 7, 4):
            g = g.add(v, c)
    assert len(g) == 112
    assert np.all(np.bincount(g.class_ids)[1:] == 7)
