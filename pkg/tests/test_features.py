import numpy as np
import pytest

from segmeld.errors import DimensionMismatch, EmptyMask
from segmeld.features import DESCRIPTOR_DIM, GRID, HUE_BINS, describe_patch, hue_saturation

HIST = slice(GRID * GRID * 3, None)


def canvas(color, box, shape=(20, 20), bg=(90, 90, 90)):
    img = np.zeros(shape + (3,), dtype=np.uint8)
    img[:] = bg
    mask = np.zeros(shape, dtype=bool)
    y0, y1, x0, x1 = box
    img[y0:y1, x0:x1] = color
    mask[y0:y1, x0:x1] = True
    return img, mask


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_dimension():
    img, m = canvas((200, 10, 10), (2, 8, 2, 8))
    assert describe_patch(img, m).shape == (DESCRIPTOR_DIM,)


def test_uniform_red_concentrates_in_red_bin():
    img, m = canvas((255, 0, 0), (2, 8, 2, 8))
    hist = describe_patch(img, m)[HIST]
    assert hist[0] == 1.0 and hist[1:].sum() == 0.0


def test_hue_histogram_translation_invariant(rng):
    patch = rng.integers(0, 256, size=(5, 6, 3), dtype=np.uint8)
    shape = (20, 20)
    a_img = np.zeros(shape + (3,), dtype=np.uint8)
    b_img = np.zeros(shape + (3,), dtype=np.uint8)
    a_img[1:6, 2:8] = patch
    b_img[12:17, 9:15] = patch
    a_m = np.zeros(shape, bool)
    b_m = np.zeros(shape, bool)
    a_m[1:6, 2:8] = True
    b_m[12:17, 9:15] = True
    assert np.array_equal(describe_patch(a_img, a_m)[HIST], describe_patch(b_img, b_m)[HIST])
    assert np.array_equal(describe_patch(a_img, a_m), describe_patch(b_img, b_m))


def test_disjoint_hues_less_similar_than_same_hue():
    red1 = describe_patch(*canvas((230, 20, 20), (1, 9, 1, 9)))
    red2 = describe_patch(*canvas((200, 40, 30), (5, 15, 3, 12)))
    blue = describe_patch(*canvas((20, 40, 220), (1, 9, 1, 9)))
    assert cosine(red1, blue) < cosine(red1, red2)


def test_depends_only_on_masked_pixels(rng):
    img, m = canvas((10, 200, 10), (4, 12, 4, 12))
    noisy = img.copy()
    noisy[~m] = rng.integers(0, 256, size=(np.count_nonzero(~m), 3))
    assert np.array_equal(describe_patch(img, m), describe_patch(noisy, m))


def test_blocks_are_l1_normalised(rng):
    img = rng.integers(0, 256, size=(10, 10, 3), dtype=np.uint8)
    d = describe_patch(img, np.ones((10, 10), bool))
    assert d[: GRID * GRID * 3].sum() == pytest.approx(1.0)
    assert d[HIST].sum() == pytest.approx(1.0)
    assert HUE_BINS == 16


def test_empty_mask_and_shape_errors():
    img, m = canvas((1, 2, 3), (0, 1, 0, 1))
    with pytest.raises(EmptyMask):
        describe_patch(img, np.zeros_like(m))
    with pytest.raises(DimensionMismatch):
        describe_patch(img, np.ones((3, 3), bool))


def test_hue_matches_colorsys(rng):
    import colorsys

    px = rng.integers(0, 256, size=(50, 3), dtype=np.uint8)
    hue, sat = hue_saturation(px)
    for (r, g, b), h, s in zip(px, hue, sat):
        hh, ss, _ = colorsys.rgb_to_hsv(r / 255, g / 255, b / 255)
        assert h == pytest.approx(hh, abs=1e-12) or abs(h - hh) == pytest.approx(1.0)
        assert s == pytest.approx(ss, abs=1e-12)
