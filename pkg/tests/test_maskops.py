import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosstask.maskops import (
    BinaryMask,
    Rle,
    count_ones,
    invert_mask,
    paste_into_frame,
    pixelwise_max,
    rle_decode,
    rle_encode,
)


class TestRle:
    def test_encode_examples(self):
        mask = BinaryMask.from_array(np.array([[0, 1, 1, 0]], dtype=bool))
        assert rle_encode(mask).counts == (1, 2, 1)
        assert rle_encode(BinaryMask.zeros(2, 2)).counts == (4,)
        assert rle_encode(BinaryMask.ones(2, 2)).counts == (0, 4)

    def test_decode_examples(self):
        mask = rle_decode(Rle(1, 4, (1, 2, 1)))
        assert mask.bits.tolist() == [[False, True, True, False]]
        assert count_ones(rle_decode(Rle(2, 2, (4,)))) == 0

    def test_sum_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Rle(3, 3, (0, 4))

    def test_interior_zero_rejected(self):
        with pytest.raises(ValueError):
            Rle(1, 4, (1, 0, 3))

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            Rle(1, 4, (-1, 5))

    def test_empty_counts_rejected(self):
        with pytest.raises(ValueError):
            Rle(1, 4, ())

    def test_roundtrip_1000_random_masks(self):
        rng = np.random.default_rng(123)
        for _ in range(1000):
            h = int(rng.integers(1, 9))
            w = int(rng.integers(1, 9))
            density = rng.random()
            mask = BinaryMask(h, w, rng.random((h, w)) < density)
            assert rle_decode(rle_encode(mask)) == mask

    @settings(max_examples=300, deadline=None)
    @given(
        h=st.integers(1, 12),
        w=st.integers(1, 12),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_roundtrip_hypothesis(self, h, w, seed):
        rng = np.random.default_rng(seed)
        mask = BinaryMask(h, w, rng.random((h, w)) < rng.random())
        back = rle_decode(rle_encode(mask))
        assert back == mask

    def test_canonical_no_interior_zeros(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            mask = BinaryMask(4, 4, rng.random((4, 4)) < 0.5)
            counts = rle_encode(mask).counts
            assert all(c > 0 for c in counts[1:])
            assert sum(counts) == 16


class TestPixelwiseMax:
    def test_examples(self):
        a = BinaryMask.from_array(np.array([[0, 1]], dtype=bool))
        b = BinaryMask.from_array(np.array([[1, 0]], dtype=bool))
        assert pixelwise_max(a, b).bits.tolist() == [[True, True]]
        empty = BinaryMask.zeros(1, 2)
        assert pixelwise_max(a, empty) == a
        assert pixelwise_max(a, a) == a

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            pixelwise_max(BinaryMask.zeros(1, 2), BinaryMask.zeros(2, 1))

    def test_algebra_random(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            a, b, c = (BinaryMask(3, 4, rng.random((3, 4)) < 0.5) for _ in range(3))
            assert pixelwise_max(a, b) == pixelwise_max(b, a)
            assert pixelwise_max(pixelwise_max(a, b), c) == pixelwise_max(a, pixelwise_max(b, c))
            assert pixelwise_max(a, a) == a
            assert pixelwise_max(a, BinaryMask.zeros(3, 4)) == a

    def test_fold_order_independent(self):
        rng = np.random.default_rng(17)
        masks = [BinaryMask(4, 4, rng.random((4, 4)) < 0.3) for _ in range(6)]

        def fold(seq):
            acc = BinaryMask.zeros(4, 4)
            for m in seq:
                acc = pixelwise_max(acc, m)
            return acc

        reference = fold(masks)
        for _ in range(10):
            order = rng.permutation(len(masks))
            assert fold([masks[i] for i in order]) == reference


class TestInvertAndCount:
    def test_invert_examples(self):
        assert invert_mask(BinaryMask.zeros(2, 2)) == BinaryMask.ones(2, 2)
        rng = np.random.default_rng(3)
        m = BinaryMask(3, 3, rng.random((3, 3)) < 0.5)
        assert invert_mask(invert_mask(m)) == m

    def test_count_examples(self):
        assert count_ones(BinaryMask.zeros(3, 3)) == 0
        assert count_ones(BinaryMask.ones(3, 3)) == 9
        assert count_ones(BinaryMask.from_array(np.array([[0, 1, 1, 0]], dtype=bool))) == 2

    def test_complement_sum(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            h = int(rng.integers(1, 10))
            w = int(rng.integers(1, 10))
            m = BinaryMask(h, w, rng.random((h, w)) < rng.random())
            assert count_ones(m) + count_ones(invert_mask(m)) == h * w

    def test_single_bit(self):
        bits = np.zeros((2, 2), dtype=bool)
        bits[0, 1] = True
        assert count_ones(invert_mask(BinaryMask(2, 2, bits))) == 3


class TestPaste:
    def test_examples(self):
        one = BinaryMask.ones(1, 1)
        framed = paste_into_frame(one, (0, 0), (2, 2))
        assert framed.bits[0, 0] and count_ones(framed) == 1

        empty = BinaryMask.zeros(1, 1)
        assert count_ones(paste_into_frame(empty, (1, 1), (2, 2))) == 0

        with pytest.raises(ValueError):
            paste_into_frame(BinaryMask.ones(2, 2), (1, 1), (2, 2))

    def test_content_preserved(self):
        rng = np.random.default_rng(8)
        local = BinaryMask(2, 3, rng.random((2, 3)) < 0.5)
        framed = paste_into_frame(local, (1, 2), (5, 7))
        assert np.array_equal(framed.bits[1:3, 2:5], local.bits)
        outside = framed.bits.copy()
        outside[1:3, 2:5] = False
        assert not outside.any()
