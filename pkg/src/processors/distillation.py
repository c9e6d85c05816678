"""
Distillation - sifting, post-selection, bit encoding and stage accounting.

Cascade reconciliation and privacy amplification live in their own modules;
this one prepares their inputs and summarizes the chain as a stage table.
"""

import logging
from dataclasses import dataclass, fields
from enum import Enum
from typing import Iterator, Optional

import numpy as np

from src.core.gaussian_source import Basis, PartyRecords, alice_estimate
from src.core.security import Attack, PointAssessments, SecurityContext, assess_points

logger = logging.getLogger(__name__)

QBER_FLOOR = 1e-4
QBER_CEILING = 0.24

# Upper edges of the predicted-error-rate groups reconciled as separate frames.
RELIABILITY_EDGES = (1e-5, 1e-3, 3e-3, 1e-2, 3e-2)


class Stage(str, Enum):
    RAW = "raw"
    POST_SELECTED = "post-selected"
    RECONCILED = "reconciled"
    FINAL = "final"


class PointClass(str, Enum):
    ERROR_FREE = "error-free"
    BIT_FLIP = "bit-flip"
    INSECURE = "insecure"


class EveBound(str, Enum):
    MEAN = "mean"
    MAX = "max"


# ── Sifting ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SiftedPair:
    index: int
    basis: Basis
    y_a: float
    y_b: float


@dataclass
class SiftedBatch:
    """Compatible-basis pairs, column-wise. ``y_a`` is Alice's scaled estimate."""

    index: np.ndarray
    basis: np.ndarray
    y_a: np.ndarray
    y_b: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> SiftedPair:
        return SiftedPair(int(self.index[i]), Basis(int(self.basis[i])), float(self.y_a[i]), float(self.y_b[i]))

    def __iter__(self) -> Iterator[SiftedPair]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, selector: np.ndarray) -> "SiftedBatch":
        return SiftedBatch(**{f.name: getattr(self, f.name)[selector] for f in fields(self)})


def sift(alice: PartyRecords, bob: PartyRecords, V: float) -> SiftedBatch:
    """Keep the symbols both parties measured in the same basis.

    Exact zeros carry no sign and are dropped here as well.
    """
    if len(alice) != len(bob) or not np.array_equal(alice.index, bob.index):
        raise ValueError(f"Record sequences are misaligned ({len(alice)} vs {len(bob)} records)")

    same = alice.basis == bob.basis
    nonzero = (alice.value != 0.0) & (bob.value != 0.0)
    keep = same & nonzero
    dropped_zeros = int(np.count_nonzero(same & ~nonzero))
    if dropped_zeros:
        logger.debug(f"Sifting dropped {dropped_zeros} exact zeros")

    batch = SiftedBatch(
        index=alice.index[keep].copy(),
        basis=alice.basis[keep].copy(),
        y_a=np.asarray(alice_estimate(alice.value[keep], V), dtype=float),
        y_b=bob.value[keep].astype(float),
    )
    logger.info(f"Sifting: kept {len(batch)}/{len(alice)} symbols")
    return batch


# ── Post-selection ──────────────────────────────────────────────────

def select_secure(
    y_a_abs: np.ndarray,
    y_b_abs: np.ndarray,
    ctx: SecurityContext,
    attack: Optional[Attack] = None,
    enabled: bool = True,
    efficiency: float = 1.0,
) -> tuple[np.ndarray, PointAssessments]:
    """Boolean keep-mask from announced magnitudes.

    A point is kept when (1 - eve_info) - efficiency * h2(p) > 0, so
    ``efficiency=1`` keeps exactly the positive net rates and larger values
    charge each point for reconciliation above the Shannon limit.
    With ``enabled=False`` every point with two non-zero magnitudes is kept.
    """
    if efficiency < 1.0:
        raise ValueError(f"Reconciliation efficiency must be >= 1, got {efficiency}")
    attack = Attack(attack) if attack is not None else ctx.attack
    assessments = assess_points(y_a_abs, y_b_abs, ctx)
    nonzero = (assessments.y_A_abs > 0.0) & (assessments.y_B_abs > 0.0)
    if enabled:
        margin = assessments.net(attack) - (efficiency - 1.0) * (1.0 - assessments.i_ab)
        mask = nonzero & (margin > 0.0)
    else:
        mask = nonzero
    return mask, assessments


@dataclass
class PostSelection:
    kept: np.ndarray
    assessments: PointAssessments
    attack: Attack

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(len(self.assessments), dtype=bool)
        m[self.kept] = True
        return m

    def kept_assessments(self) -> PointAssessments:
        return self.assessments.subset(self.kept)


def postselect(
    pairs: SiftedBatch,
    ctx: SecurityContext,
    attack: Optional[Attack] = None,
    enabled: bool = True,
    efficiency: float = 1.0,
) -> PostSelection:
    """Keep exactly the pairs with a positive net rate under ``attack``.

    See :func:`select_secure` for the ``efficiency`` margin.
    """
    attack = Attack(attack) if attack is not None else ctx.attack
    mask, assessments = select_secure(np.abs(pairs.y_a), np.abs(pairs.y_b), ctx, attack, enabled, efficiency)
    kept = np.flatnonzero(mask)
    logger.info(f"Post-selection ({attack.value}): kept {len(kept)}/{len(pairs)} pairs")
    return PostSelection(kept=kept, assessments=assessments, attack=attack)


def classify_points(pairs: SiftedBatch, selection: PostSelection) -> np.ndarray:
    """Label each pair error-free, bit-flip or insecure (discarded)."""
    labels = np.full(len(pairs), PointClass.INSECURE.value, dtype=object)
    if len(selection.kept):
        kept = pairs.subset(selection.kept)
        a, b = encode_bits(kept.basis, kept.y_a, kept.y_b)
        labels[selection.kept] = np.where(a == b, PointClass.ERROR_FREE.value, PointClass.BIT_FLIP.value)
    return labels


# ── Encoding ────────────────────────────────────────────────────────

def _require_nonzero(values: np.ndarray) -> None:
    if np.any(values == 0.0):
        raise RuntimeError("Zero quadrature value reached the bit encoder")


def alice_bits(values: np.ndarray) -> np.ndarray:
    """Alice: 1 for a positive fluctuation in either basis."""
    values = np.asarray(values, dtype=float)
    _require_nonzero(values)
    return (values > 0.0).astype(np.uint8)


def bob_bits(basis: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Bob: phase reads like Alice, amplitude is flipped (the beams are anticorrelated)."""
    values = np.asarray(values, dtype=float)
    _require_nonzero(values)
    amplitude = np.asarray(basis) == Basis.AMPLITUDE
    return np.where(amplitude, values < 0.0, values > 0.0).astype(np.uint8)


def encode_bits(basis: np.ndarray, y_a: np.ndarray, y_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return alice_bits(y_a), bob_bits(basis, y_b)


# ── Frames and bounds ───────────────────────────────────────────────

@dataclass
class BitFrame:
    stage: Stage
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    leakage_bits: int = 0
    eve_bits_per_symbol: float = 0.0

    def __post_init__(self) -> None:
        self.stage = Stage(self.stage)
        if len(self.alice_bits) != len(self.bob_bits):
            raise ValueError("Both sides of a frame must hold the same number of bits")
        if self.stage in (Stage.RECONCILED, Stage.FINAL) and not np.array_equal(self.alice_bits, self.bob_bits):
            raise ValueError(f"Bits differ at stage '{self.stage.value}'")

    @property
    def error_rate(self) -> float:
        if len(self.alice_bits) == 0:
            return 0.0
        return float(np.mean(self.alice_bits != self.bob_bits))


def eve_bound(kept: PointAssessments, attack: Attack, mode: EveBound = EveBound.MEAN) -> float:
    """Eve's information per kept symbol; zero when nothing is kept."""
    if len(kept) == 0:
        return 0.0
    info = kept.eve_info(Attack(attack))
    return float(info.max() if EveBound(mode) is EveBound.MAX else info.mean())


def expected_qber(p: np.ndarray) -> float:
    """Mean predicted error rate over kept points, clamped for Cascade."""
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        return QBER_FLOOR
    return float(np.clip(p.mean(), QBER_FLOOR, QBER_CEILING))


def reliability_frames(p: np.ndarray, edges: tuple[float, ...] = RELIABILITY_EDGES) -> list[tuple[np.ndarray, float]]:
    """Group kept positions by predicted error rate.

    Each group is reconciled as its own Cascade frame with its own QBER
    estimate, so leakage follows the mean of h2(p) instead of h2 of the
    mean p. Empty groups are skipped.
    """
    p = np.asarray(p, dtype=float)
    labels = np.digitize(p, edges)
    frames = []
    for label in np.unique(labels):
        positions = np.flatnonzero(labels == label)
        frames.append((positions, expected_qber(p[positions])))
    logger.debug(f"Reliability frames: {[len(pos) for pos, _ in frames]}")
    return frames


# ── Stage accounting ────────────────────────────────────────────────

@dataclass(frozen=True)
class StageRow:
    stage: Stage
    i_ab: float
    eve_info: float
    net: float
    retained_fraction: float
    rate_kbps: float


@dataclass
class StageReport:
    attack: Attack
    symbol_rate_hz: float
    rows: list[StageRow]

    def row(self, stage: Stage) -> StageRow:
        for r in self.rows:
            if r.stage is Stage(stage):
                return r
        raise KeyError(stage)

    def to_dict(self) -> dict:
        return {
            "attack": self.attack.value,
            "symbol_rate_hz": self.symbol_rate_hz,
            "rows": [
                {
                    "stage": r.stage.value,
                    "i_ab": r.i_ab,
                    "eve_info": r.eve_info,
                    "net": r.net,
                    "retained_fraction": r.retained_fraction,
                    "rate_kbps": r.rate_kbps,
                }
                for r in self.rows
            ],
        }


def stage_accounting(
    *,
    n_symbols: int,
    symbol_rate_hz: float,
    attack: Attack,
    raw_i_ab: float,
    raw_eve: float,
    kept: PointAssessments,
    eve_bits_per_symbol: float,
    leakage_bits: int,
    final_bits: int,
) -> StageReport:
    """Four-row stage table for one run.

    Raw data is reported at the symbol rate. Every later row's rate is
    symbol_rate_kHz * retained_fraction * net.
    """
    if n_symbols <= 0:
        raise ValueError(f"Stage accounting needs n_symbols > 0, got {n_symbols}")
    attack = Attack(attack)
    khz = symbol_rate_hz / 1e3
    n_kept = len(kept)

    def row(stage: Stage, i_ab: float, eve: float, fraction: float) -> StageRow:
        net = i_ab - eve
        return StageRow(stage, i_ab, eve, net, fraction, khz * fraction * net)

    ps_fraction = n_kept / n_symbols
    ps_i_ab = float(kept.i_ab.mean()) if n_kept else 0.0
    ps_eve = eve_bits_per_symbol if n_kept else 0.0
    # Eve learns at most one bit per kept symbol.
    rec_eve = min(1.0, ps_eve + leakage_bits / n_kept) if n_kept else 0.0

    rows = [
        StageRow(Stage.RAW, raw_i_ab, raw_eve, raw_i_ab - raw_eve, 1.0, khz),
        row(Stage.POST_SELECTED, ps_i_ab, ps_eve, ps_fraction),
        row(Stage.RECONCILED, 1.0 if n_kept else 0.0, rec_eve, ps_fraction),
        row(Stage.FINAL, 1.0 if final_bits else 0.0, 0.0, final_bits / n_symbols),
    ]
    return StageReport(attack=attack, symbol_rate_hz=symbol_rate_hz, rows=rows)
