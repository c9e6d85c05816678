"""
Privacy Amplification - Toeplitz universal hashing over GF(2).

A Toeplitz matrix is constant along its diagonals, so an m x n hash needs
only m + n - 1 random bits. With T[i, j] = d[i - j + n - 1] the product
T.x is a slice of the ordinary convolution d * x, computed with an FFT and
reduced mod 2.
"""

import logging
import math

import numpy as np
from scipy import linalg, signal

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 2.0 ** -64
CONFIRMATION_BITS = 128


def final_key_length(n: int, eve_bits_per_symbol: float, leakage_bits: int, epsilon: float = DEFAULT_EPSILON) -> int:
    """m = floor(n (1 - eve) - leakage - 2 log2(1/epsilon)), never below zero."""
    if n < 0:
        raise ValueError(f"Key length must be non-negative, got n={n}")
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"Security parameter must satisfy 0 < epsilon < 1, got {epsilon}")
    if eve_bits_per_symbol < 0.0:
        raise ValueError(f"Eve's information must be non-negative, got {eve_bits_per_symbol}")
    margin = 2.0 * math.log2(1.0 / epsilon)
    m = math.floor(n * (1.0 - eve_bits_per_symbol) - leakage_bits - margin)
    return max(0, m)


def toeplitz_diagonals(m: int, n: int, seed: int) -> np.ndarray:
    """The m + n - 1 bits that define the seeded m x n Toeplitz matrix."""
    return np.random.default_rng(seed).integers(0, 2, size=m + n - 1, dtype=np.uint8)


def toeplitz_matrix(m: int, n: int, seed: int) -> np.ndarray:
    """Explicit m x n matrix; only practical for small sizes."""
    d = toeplitz_diagonals(m, n, seed)
    first_col = d[n - 1:]
    first_row = d[n - 1::-1]
    return linalg.toeplitz(first_col, first_row).astype(np.uint8)


def toeplitz_hash(bits: np.ndarray, m: int, seed: int) -> np.ndarray:
    """y = T.x mod 2 for the seeded m x len(bits) Toeplitz matrix T."""
    x = np.asarray(bits, dtype=np.uint8)
    n = len(x)
    if m <= 0:
        return np.zeros(0, dtype=np.uint8)
    if n == 0:
        return np.zeros(m, dtype=np.uint8)
    d = toeplitz_diagonals(m, n, seed)
    full = signal.fftconvolve(d.astype(np.float64), x.astype(np.float64), mode="full")
    counts = np.rint(full[n - 1:n - 1 + m]).astype(np.int64)
    return (counts & 1).astype(np.uint8)


def privacy_amplify(
    bits: np.ndarray,
    eve_bits_per_symbol: float,
    leakage_bits: int,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
) -> np.ndarray:
    """Compress a reconciled string to its extractable secret part.

    Args:
        bits: Reconciled bits, equal on both sides.
        eve_bits_per_symbol: Eve's information per kept symbol.
        leakage_bits: Parities disclosed during reconciliation.
        epsilon: Security parameter.
        seed: Public seed selecting the Toeplitz matrix.

    Returns:
        Final key bits; empty when the length formula gives m <= 0.
    """
    n = len(bits)
    m = final_key_length(n, eve_bits_per_symbol, leakage_bits, epsilon)
    if m == 0:
        logger.warning(
            f"Privacy amplification leaves no key (n={n}, eve={eve_bits_per_symbol:.4f}, leakage={leakage_bits})"
        )
        return np.zeros(0, dtype=np.uint8)
    key = toeplitz_hash(bits, m, seed)
    logger.info(f"Privacy amplification: {n} -> {m} bits")
    return key


def confirmation_hash(bits: np.ndarray, seed: int, length: int = CONFIRMATION_BITS) -> bytes:
    """Packed universal hash of a final key for key confirmation."""
    return np.packbits(toeplitz_hash(bits, length, seed)).tobytes()
