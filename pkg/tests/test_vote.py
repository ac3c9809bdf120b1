import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import recount_fuse
from segmeld.errors import DimensionMismatch, UnknownClassInExpected
from segmeld.vote import ScoreMap, TallyGrid, accumulate, fuse, read_scores, restricted_argmax, write_scores


def tally_from(counts, shape=(1, 1)):
    return TallyGrid(shape, {c: np.full(shape, n, dtype=np.int32) for c, n in counts.items()})


def test_full_mask_counts_with_multiplicity():
    t = accumulate([(np.ones((2, 3), bool), [1, 1, 2])])
    for y in range(2):
        for x in range(3):
            assert t.at(y, x) == {1: 2, 2: 1}


def test_overlap_adds():
    a = np.array([[1, 1], [0, 0]], bool)
    b = np.array([[0, 1], [0, 1]], bool)
    t = accumulate([(a, [4]), (b, [4, 5])])
    assert t.at(0, 0) == {4: 1}
    assert t.at(0, 1) == {4: 2, 5: 1}
    assert t.at(1, 0) == {}
    assert t.at(1, 1) == {4: 1, 5: 1}


def test_empty_proposals():
    t = accumulate([], shape=(3, 4))
    assert t.classes() == []
    assert np.array_equal(fuse(t, {1, 2}), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        accumulate([])


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        accumulate([(np.ones((2, 2), bool), [1]), (np.ones((3, 2), bool), [1])])


@pytest.mark.parametrize(
    "counts, expected, want",
    [
        ({1: 2, 2: 3, 3: 1}, {1, 2, 3}, 2),
        ({1: 2, 2: 3, 3: 1}, {1, 3}, 1),
        ({1: 2, 2: 2}, {1, 2}, 1),
        ({2: 4}, {1, 3}, 0),
    ],
)
def test_fuse_examples(counts, expected, want):
    assert fuse(tally_from(counts), expected)[0, 0] == want


def test_restricted_argmax_examples():
    planes = np.array([0.5, 0.9, 0.7]).reshape(3, 1, 1)
    s = ScoreMap([1, 2, 3], planes)
    assert restricted_argmax(s, {1, 3})[0, 0] == 3
    assert restricted_argmax(s, {1, 2, 3})[0, 0] == 2
    assert restricted_argmax(s, {1})[0, 0] == 1
    with pytest.raises(UnknownClassInExpected):
        restricted_argmax(s, {1, 4})


def test_restricted_argmax_single_class_constant(rng):
    s = ScoreMap([3, 8, 11], rng.random((3, 5, 6)))
    assert np.all(restricted_argmax(s, {8}) == 8)
    full = restricted_argmax(s, {3, 8, 11})
    assert np.array_equal(full, np.array([3, 8, 11])[np.argmax(s.planes, axis=0)])


def proposal_lists(max_side=8, max_props=6):
    @st.composite
    def build(draw):
        h = draw(st.integers(1, max_side))
        w = draw(st.integers(1, max_side))
        n = draw(st.integers(0, max_props))
        props = []
        for _ in range(n):
            bits = draw(st.lists(st.booleans(), min_size=h * w, max_size=h * w))
            labels = draw(st.lists(st.integers(0, 5), min_size=1, max_size=3))
            props.append((np.array(bits).reshape(h, w), labels))
        expected = draw(st.sets(st.integers(0, 5), min_size=1))
        return (h, w), props, expected
    return build()


@settings(max_examples=150, deadline=None)
@given(proposal_lists())
def test_fuse_matches_recount(case):
    shape, props, expected = case
    got = fuse(accumulate(props, shape), expected)
    assert np.array_equal(got, recount_fuse(shape, props, expected))
    assert set(np.unique(got)) <= set(expected) | {0}


@settings(max_examples=60, deadline=None)
@given(proposal_lists(), st.randoms(use_true_random=False))
def test_accumulate_order_invariant(case, rnd):
    shape, props, _ = case
    shuffled = list(props)
    rnd.shuffle(shuffled)
    a, b = accumulate(props, shape), accumulate(shuffled, shape)
    assert a.classes() == b.classes()
    assert all(np.array_equal(a.planes[c], b.planes[c]) for c in a.classes())


@settings(max_examples=100, deadline=None)
@given(proposal_lists(), st.sets(st.integers(0, 5)))
def test_expected_set_monotonicity(case, extra):
    shape, props, expected = case
    t = accumulate(props, shape)
    small = fuse(t, expected)
    big = fuse(t, expected | extra)
    changed = small != big
    added = extra - expected
    assert set(np.unique(big[changed])) <= added
    for y, x in zip(*np.nonzero(changed)):
        counts = t.at(y, x)
        assert counts.get(int(big[y, x]), 0) >= counts.get(int(small[y, x]), 0)


def test_score_files_round_trip(tmp_path, rng):
    s = ScoreMap([2, 7, 9], rng.random((3, 6, 5)) * 4 - 1)
    write_scores(s, tmp_path / "scores")
    r = read_scores(tmp_path / "scores")
    assert r.class_ids == [2, 7, 9]
    step = 5.0 / 65535
    assert np.max(np.abs(r.planes - s.planes)) <= step
    assert restricted_argmax(r, {2, 9}).shape == (6, 5)
