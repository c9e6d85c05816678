"""
Cascade Reconciler - interactive parity-exchange error correction.

Bob holds the noisy string and asks Alice (the reference, direct
reconciliation) for parities of index blocks through a ParityOracle:

1. Pass 1 splits the key into blocks of k1 = ceil(0.73 / QBER) bits
2. Each later pass doubles the block size and reorders the key with a seeded shuffle
3. A block whose parities disagree is halved until the wrong bit is found (1 parity per step)
4. Every flip is cascaded back: the bit's blocks in all processed passes are re-checked

A string can also be split into frames (disjoint position sets with their
own QBER estimates) that are reconciled one after another.

Every parity Alice discloses is counted in ``leakage_bits``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from src.core.security import binary_entropy

logger = logging.getLogger(__name__)

DEFAULT_PASSES = 4
BLOCK_CONSTANT = 0.73
MAX_QBER = 0.25
# Generator stream tag for the pass shuffles, [seed, 5, frame, pass].
SHUFFLE_STREAM = 5


class ParityOracle(Protocol):
    """Answers parity queries about the reference string."""

    def parities(self, blocks: Sequence[np.ndarray]) -> list[int]:
        ...


class LocalParityOracle:
    """Parity oracle backed by Alice's bits held in the same process."""

    def __init__(self, alice_bits: np.ndarray):
        self._bits = np.asarray(alice_bits, dtype=np.uint8)
        self.queries = 0

    def parities(self, blocks: Sequence[np.ndarray]) -> list[int]:
        self.queries += 1
        return [int(self._bits[np.asarray(b, dtype=np.int64)].sum() & 1) for b in blocks]


class SubsetParityOracle:
    """Parity oracle for a sub-string whose local indices map through ``positions``."""

    def __init__(self, oracle: ParityOracle, positions: np.ndarray):
        self._oracle = oracle
        self._positions = np.asarray(positions, dtype=np.int64)

    def parities(self, blocks: Sequence[np.ndarray]) -> list[int]:
        return self._oracle.parities([self._positions[np.asarray(b, dtype=np.int64)] for b in blocks])


@dataclass
class CascadeResult:
    bob_bits: np.ndarray
    leakage_bits: int
    corrections: int
    success: bool
    leakage_per_pass: list[int] = field(default_factory=list)


def initial_block_size(qber: float) -> int:
    """k1 = ceil(0.73 / QBER)."""
    if not (0.0 < qber < MAX_QBER):
        raise ValueError(f"QBER estimate must satisfy 0 < qber < {MAX_QBER}, got {qber}")
    return max(2, math.ceil(BLOCK_CONSTANT / qber))


def pass_permutation(n: int, pass_index: int, seed: int, frame: int = 0) -> np.ndarray:
    """Index order used by one pass: identity first, seeded shuffles afterwards."""
    if pass_index == 0:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng([seed, SHUFFLE_STREAM, frame, pass_index])
    return rng.permutation(n).astype(np.int64)


class _Pass:
    """Block layout of one pass plus Alice's disclosed top-level parities."""

    def __init__(self, order: np.ndarray, block_size: int):
        n = len(order)
        self.order = order
        self.block_size = block_size
        self.block_of = np.empty(n, dtype=np.int64)
        self.block_of[order] = np.arange(n, dtype=np.int64) // block_size
        self.n_blocks = math.ceil(n / block_size)
        self.alice_parity = np.zeros(self.n_blocks, dtype=np.uint8)

    def block(self, b: int) -> np.ndarray:
        return self.order[b * self.block_size:(b + 1) * self.block_size]

    def blocks(self) -> list[np.ndarray]:
        return [self.block(b) for b in range(self.n_blocks)]


class CascadeReconciler:
    """Bob's side of Cascade, talking to Alice through a :class:`ParityOracle`.

    Args:
        passes: Number of passes (block size doubles each pass, capped at n).
        seed: Seed for the shuffles of passes 2 and later.
        initial_block: Override for k1; by default derived from the QBER estimate.
    """

    def __init__(self, passes: int = DEFAULT_PASSES, seed: int = 0, initial_block: Optional[int] = None):
        if passes < 1:
            raise ValueError(f"Cascade needs at least one pass, got {passes}")
        if initial_block is not None and initial_block < 1:
            raise ValueError(f"Initial block size must be positive, got {initial_block}")
        self.passes = passes
        self.seed = seed
        self.initial_block = initial_block

    def reconcile(self, bob_bits: np.ndarray, qber_est: float, oracle: ParityOracle, frame: int = 0) -> CascadeResult:
        bits = np.array(bob_bits, dtype=np.uint8, copy=True)
        n = len(bits)
        k1 = initial_block_size(qber_est)
        if self.initial_block is not None:
            k1 = self.initial_block

        self._leakage = 0
        self._corrections = 0
        per_pass: list[int] = []
        if n == 0:
            return CascadeResult(bob_bits=bits, leakage_bits=0, corrections=0, success=True)

        done: list[_Pass] = []
        for p in range(self.passes):
            size = min(k1 * (2 ** p), n)
            layout = _Pass(pass_permutation(n, p, self.seed, frame), size)
            layout.alice_parity[:] = oracle.parities(layout.blocks())
            self._leakage += layout.n_blocks
            done.append(layout)

            queue = [(p, b) for b in range(layout.n_blocks) if self._parity(bits, layout.block(b)) != layout.alice_parity[b]]
            logger.debug(f"Cascade pass {p + 1}: block size {size}, {len(queue)}/{layout.n_blocks} odd blocks")

            while queue:
                q, b = queue.pop()
                owner = done[q]
                block = owner.block(b)
                if self._parity(bits, block) == owner.alice_parity[b]:
                    continue
                i = self._binary_search(bits, block, oracle)
                bits[i] ^= 1
                self._corrections += 1
                for r, other in enumerate(done):
                    if r != q:
                        queue.append((r, int(other.block_of[i])))

            per_pass.append(self._leakage)

        consistent = all(
            self._parity(bits, layout.block(b)) == layout.alice_parity[b]
            for layout in done
            for b in range(layout.n_blocks)
        )
        logger.info(
            f"Cascade frame {frame}: n={n}, k1={k1}, passes={self.passes}, "
            f"corrections={self._corrections}, leakage={self._leakage} bits"
        )
        return CascadeResult(
            bob_bits=bits,
            leakage_bits=self._leakage,
            corrections=self._corrections,
            success=consistent,
            leakage_per_pass=per_pass,
        )

    def reconcile_frames(
        self,
        bob_bits: np.ndarray,
        frames: Sequence[tuple[np.ndarray, float]],
        oracle: ParityOracle,
    ) -> CascadeResult:
        """Reconcile each frame (positions, QBER estimate) on its own.

        Leakage, corrections and the per-pass leakage totals add up over
        frames; positions outside every frame are left untouched.
        """
        bits = np.array(bob_bits, dtype=np.uint8, copy=True)
        leakage = corrections = 0
        success = True
        per_pass = [0] * self.passes if len(frames) else []
        for k, (positions, qber_est) in enumerate(frames):
            positions = np.asarray(positions, dtype=np.int64)
            result = self.reconcile(bits[positions], qber_est, SubsetParityOracle(oracle, positions), frame=k)
            bits[positions] = result.bob_bits
            leakage += result.leakage_bits
            corrections += result.corrections
            success = success and result.success
            for p, total in enumerate(result.leakage_per_pass):
                per_pass[p] += total
        return CascadeResult(
            bob_bits=bits,
            leakage_bits=leakage,
            corrections=corrections,
            success=success,
            leakage_per_pass=per_pass,
        )

    @staticmethod
    def _parity(bits: np.ndarray, block: np.ndarray) -> int:
        return int(bits[block].sum() & 1)

    def _binary_search(self, bits: np.ndarray, block: np.ndarray, oracle: ParityOracle) -> int:
        """Locate one wrong bit in a block with odd error parity."""
        while len(block) > 1:
            half = len(block) // 2
            left = block[:half]
            alice = oracle.parities([left])[0]
            self._leakage += 1
            block = left if self._parity(bits, left) != alice else block[half:]
        return int(block[0])


def cascade_reconcile(
    alice_bits: np.ndarray,
    bob_bits: np.ndarray,
    qber_est: float,
    passes: int = DEFAULT_PASSES,
    seed: int = 0,
    initial_block: Optional[int] = None,
) -> CascadeResult:
    """Run Cascade against a local copy of Alice's string.

    ``success`` reports whether Bob's corrected string equals Alice's.
    """
    alice = np.asarray(alice_bits, dtype=np.uint8)
    bob = np.asarray(bob_bits, dtype=np.uint8)
    if alice.shape != bob.shape or alice.ndim != 1:
        raise ValueError(f"Bit strings must be 1-D and equal length, got {alice.shape} and {bob.shape}")

    reconciler = CascadeReconciler(passes=passes, seed=seed, initial_block=initial_block)
    result = reconciler.reconcile(bob, qber_est, LocalParityOracle(alice))
    result.success = bool(np.array_equal(result.bob_bits, alice))
    if not result.success:
        remaining = int(np.count_nonzero(result.bob_bits != alice))
        logger.warning(f"Cascade left {remaining} mismatched bits after {passes} passes")
    return result


def reconciliation_efficiency(leakage_bits: int, n: int, qber: float) -> float:
    """leakage / (n * h2(QBER)); 1.0 is the Shannon limit."""
    return leakage_bits / (n * float(binary_entropy(qber)))
