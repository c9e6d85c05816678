"""
Unit tests for Toeplitz privacy amplification
"""

import math

import numpy as np
import pytest

from src.processors.privacy_amplification import (
    CONFIRMATION_BITS,
    DEFAULT_EPSILON,
    confirmation_hash,
    final_key_length,
    privacy_amplify,
    toeplitz_diagonals,
    toeplitz_hash,
    toeplitz_matrix,
)


def _bits(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2, size=n, dtype=np.uint8)


class TestKeyLength:
    def test_margin_only(self):
        assert final_key_length(1000, 0.0, 0) == 1000 - 128

    def test_eve_and_leakage(self):
        assert final_key_length(10_000, 0.25, 1000) == math.floor(7500 - 1000 - 128)

    def test_clamped_at_zero(self):
        assert final_key_length(100, 0.5, 0) == 0
        assert final_key_length(0, 0.0, 0) == 0

    def test_epsilon(self):
        assert final_key_length(1000, 0.0, 0, epsilon=2.0 ** -10) == 980
        with pytest.raises(ValueError):
            final_key_length(1000, 0.0, 0, epsilon=0.0)
        with pytest.raises(ValueError):
            final_key_length(1000, 0.0, 0, epsilon=1.0)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            final_key_length(-1, 0.0, 0)
        with pytest.raises(ValueError):
            final_key_length(10, -0.1, 0)


class TestToeplitzHash:
    def test_diagonals_define_matrix(self):
        m, n = 5, 7
        d = toeplitz_diagonals(m, n, seed=3)
        t = toeplitz_matrix(m, n, seed=3)
        assert len(d) == m + n - 1
        for i in range(m):
            for j in range(n):
                assert t[i, j] == d[i - j + n - 1]

    @pytest.mark.parametrize("m, n", [(1, 1), (3, 10), (16, 40), (64, 65)])
    def test_fft_product_matches_matrix(self, m, n):
        x = _bits(n, seed=m + n)
        expected = (toeplitz_matrix(m, n, seed=7).astype(np.int64) @ x.astype(np.int64)) % 2
        np.testing.assert_array_equal(toeplitz_hash(x, m, seed=7), expected.astype(np.uint8))

    def test_long_input_matches_matrix(self):
        m, n = 300, 2000
        x = _bits(n, seed=1)
        expected = (toeplitz_matrix(m, n, seed=2).astype(np.int64) @ x.astype(np.int64)) % 2
        np.testing.assert_array_equal(toeplitz_hash(x, m, seed=2), expected.astype(np.uint8))

    def test_linear_over_gf2(self):
        x, y = _bits(500, 1), _bits(500, 2)
        hx, hy = toeplitz_hash(x, 200, seed=4), toeplitz_hash(y, 200, seed=4)
        np.testing.assert_array_equal(toeplitz_hash(x ^ y, 200, seed=4), hx ^ hy)

    def test_seeded(self):
        x = _bits(400, 5)
        np.testing.assert_array_equal(toeplitz_hash(x, 100, seed=9), toeplitz_hash(x, 100, seed=9))
        assert not np.array_equal(toeplitz_hash(x, 100, seed=9), toeplitz_hash(x, 100, seed=10))

    def test_output_is_balanced(self):
        """Ones count within four standard deviations of m/2."""
        m = 4096
        y = toeplitz_hash(_bits(8192, 6), m, seed=12)
        assert abs(int(y.sum()) - m / 2) < 4 * math.sqrt(m) / 2

    def test_degenerate_sizes(self):
        assert len(toeplitz_hash(_bits(10, 0), 0, seed=1)) == 0
        np.testing.assert_array_equal(toeplitz_hash(np.zeros(0, dtype=np.uint8), 3, seed=1), np.zeros(3))


class TestAmplify:
    def test_length(self):
        key = privacy_amplify(_bits(2000, 3), 0.1, 300, seed=5)
        assert len(key) == final_key_length(2000, 0.1, 300)
        assert set(np.unique(key)) <= {0, 1}

    def test_same_input_same_key(self):
        bits = _bits(1000, 8)
        np.testing.assert_array_equal(privacy_amplify(bits, 0.0, 0, seed=1), privacy_amplify(bits.copy(), 0.0, 0, seed=1))

    def test_empty_key(self):
        key = privacy_amplify(_bits(100, 1), 0.0, 0)
        assert key.dtype == np.uint8
        assert len(key) == 0

    def test_default_epsilon(self):
        assert DEFAULT_EPSILON == 2.0 ** -64


class TestConfirmation:
    def test_packed_length(self):
        tag = confirmation_hash(_bits(300, 1), seed=3)
        assert isinstance(tag, bytes)
        assert len(tag) == CONFIRMATION_BITS // 8

    def test_single_flip_changes_tag(self):
        bits = _bits(300, 2)
        flipped = bits.copy()
        flipped[17] ^= 1
        assert confirmation_hash(bits, seed=3) != confirmation_hash(flipped, seed=3)
