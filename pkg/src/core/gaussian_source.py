"""
Gaussian EPR Source Module

Models the two-mode Gaussian source, the lossy/noisy channel towards Bob
(with the beam-splitter tap an eavesdropper would hold), the block-wise
random basis choice of the homodyne detectors, and channel calibration from
measured variances.

All quadratures are in shot-noise units (N0 = 1).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterator, Optional

import numpy as np

logger = logging.getLogger(__name__)

# Symbols drawn per seeded block; results do not depend on worker count.
SAMPLE_BLOCK = 65536

# Inferred excess noise may dip this far below zero from rounding alone.
CALIBRATION_TOLERANCE = 1e-6

# Stream ids under the run seed.
_SOURCE_STREAM = 0
_CHANNEL_STREAM = 1


class CalibrationError(ValueError):
    """Measured variances are inconsistent with the source/channel model."""


class SourceMode(str, Enum):
    MINIMUM_UNCERTAINTY = "minimum"
    EFFECTIVE = "effective"


class Basis(IntEnum):
    """Homodyne measurement basis."""

    AMPLITUDE = 0  # X
    PHASE = 1      # Y

    @property
    def symbol(self) -> str:
        return "X" if self is Basis.AMPLITUDE else "Y"


# ── Source ──────────────────────────────────────────────────────────

def variance_from_r(r: float) -> float:
    """Quadrature variance V = cosh(2r) of a minimum-uncertainty EPR pair."""
    if r < 0:
        raise ValueError(f"Correlation parameter must be non-negative, got r={r}")
    return math.cosh(2.0 * r)


def squeezing_db(r: float) -> float:
    """Correlation variance relative to the two-mode shot-noise level, in dB.

    <(Y_a - Y_b)^2> = 2 e^{-2r} against 2 N0, so the level is 10 log10(e^{-2r}).
    """
    if r < 0:
        raise ValueError(f"Correlation parameter must be non-negative, got r={r}")
    return 10.0 * math.log10(math.exp(-2.0 * r))


@dataclass(frozen=True)
class SourceModel:
    """Effective variance and correlation of the EPR pair.

    In effective-V mode (the default) ``V`` parameterizes the state directly
    and ``r`` is only used for squeezing-level reporting.
    """

    V: float
    r: float = 0.0
    mode: SourceMode = SourceMode.EFFECTIVE

    def __post_init__(self) -> None:
        if not math.isfinite(self.V) or self.V < 1.0:
            raise ValueError(f"Source variance must satisfy V >= 1, got V={self.V}")
        if self.r < 0:
            raise ValueError(f"Correlation parameter must be non-negative, got r={self.r}")
        if self.mode is SourceMode.MINIMUM_UNCERTAINTY and abs(self.V - math.cosh(2 * self.r)) >= 1e-12:
            raise ValueError(
                f"Minimum-uncertainty source needs V = cosh(2r); got V={self.V}, r={self.r}"
            )

    @classmethod
    def from_r(cls, r: float) -> SourceModel:
        return cls(V=variance_from_r(r), r=r, mode=SourceMode.MINIMUM_UNCERTAINTY)

    @classmethod
    def effective(cls, V: float, r: Optional[float] = None) -> SourceModel:
        if V < 1.0:
            raise ValueError(f"Source variance must satisfy V >= 1, got V={V}")
        if r is None:
            r = 0.5 * math.acosh(V)
        return cls(V=V, r=r, mode=SourceMode.EFFECTIVE)

    @property
    def correlation(self) -> float:
        """|<X_a X_b>| = <Y_a Y_b> = sqrt(V^2 - 1)."""
        return math.sqrt(self.V * self.V - 1.0)

    @property
    def alpha(self) -> float:
        """Alice's optimal estimator scale <Y_b Y_a> / <Y_a^2>."""
        return self.correlation / self.V

    @property
    def alice_variance(self) -> float:
        """V_A = alpha^2 V = V - 1/V."""
        return self.V - 1.0 / self.V

    @property
    def conditional_variance(self) -> float:
        return conditional_variance(self.V)


def covariance_4d(model: SourceModel) -> np.ndarray:
    """Covariance over (X_a, Y_a, X_b, Y_b)."""
    V = model.V
    if V < 1.0:
        raise ValueError(f"Source variance must satisfy V >= 1, got V={V}")
    c = math.sqrt(V * V - 1.0)
    return np.array([
        [V, 0.0, -c, 0.0],
        [0.0, V, 0.0, c],
        [-c, 0.0, V, 0.0],
        [0.0, c, 0.0, V],
    ])


def _sample_block(chol: np.ndarray, seed: int, block: int, count: int) -> np.ndarray:
    rng = np.random.default_rng([seed, _SOURCE_STREAM, block])
    return rng.standard_normal((count, 4)) @ chol.T


def sample_pairs(
    model: SourceModel,
    n: int,
    rng_seed: int,
    block_size: int = SAMPLE_BLOCK,
    workers: int = 1,
) -> np.ndarray:
    """Draw ``n`` i.i.d. phase-space points (X_a, Y_a, X_b, Y_b).

    Each block of ``block_size`` rows uses its own generator seeded with
    (seed, block index), so the output is the same for any ``workers``.

    Returns:
        Array of shape (n, 4)
    """
    if n < 1:
        raise ValueError(f"Sample count must be positive, got n={n}")
    if block_size < 1:
        raise ValueError(f"block_size must be positive, got {block_size}")

    chol = np.linalg.cholesky(covariance_4d(model))
    counts = [min(block_size, n - start) for start in range(0, n, block_size)]

    if workers > 1 and len(counts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(
                lambda item: _sample_block(chol, rng_seed, item[0], item[1]),
                enumerate(counts),
            ))
    else:
        blocks = [_sample_block(chol, rng_seed, b, c) for b, c in enumerate(counts)]

    return np.concatenate(blocks, axis=0)


def alice_estimate(y_a, V: float):
    """Y_A = alpha * y_a with alpha = sqrt(V^2 - 1) / V.

    The same scale applies to amplitude values; their sign is handled at
    encoding.
    """
    if V < 1.0:
        raise ValueError(f"Source variance must satisfy V >= 1, got V={V}")
    return (math.sqrt(V * V - 1.0) / V) * y_a


def conditional_variance(V: float) -> float:
    """V_s = 1/V: what remains unknown about Bob's quadrature given Y_A."""
    if V < 1.0:
        raise ValueError(f"Source variance must satisfy V >= 1, got V={V}")
    return 1.0 / V


# ── Channel ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ChannelModel:
    """Lossy Gaussian channel with excess noise."""

    eta: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"Transmittivity must satisfy 0 < eta <= 1, got eta={self.eta}")
        if self.delta < 0.0:
            raise ValueError(f"Excess noise must be non-negative, got delta={self.delta}")

    @classmethod
    def from_efficiencies(
        cls,
        attenuator: float,
        detector_efficiency: float,
        delta: float = 0.0,
    ) -> ChannelModel:
        """Total transmittivity of an attenuator followed by an imperfect detector."""
        return cls(eta=attenuator * detector_efficiency, delta=delta)

    @property
    def is_valid(self) -> bool:
        """Secure distillation needs 2*eta > delta."""
        return 2.0 * self.eta > self.delta


def apply_channel(bob_in, ch: ChannelModel, rng: np.random.Generator, with_tap: bool = True):
    """Send Bob's mode through the channel.

    bob_out = sqrt(eta) b + sqrt(1-eta) g1 + sqrt(delta) g2
    eve_out = sqrt(1-eta) b - sqrt(eta) g1

    Returns:
        (bob_out, eve_out); eve_out is None when ``with_tap`` is False
    """
    b = np.asarray(bob_in, dtype=float)
    g1 = rng.standard_normal(b.shape)
    g2 = rng.standard_normal(b.shape)

    sqrt_eta = math.sqrt(ch.eta)
    sqrt_loss = math.sqrt(1.0 - ch.eta)
    bob_out = sqrt_eta * b + sqrt_loss * g1 + math.sqrt(ch.delta) * g2
    eve_out = sqrt_loss * b - sqrt_eta * g1 if with_tap else None

    if b.ndim == 0:
        bob_out = float(bob_out)
        eve_out = float(eve_out) if eve_out is not None else None
    return bob_out, eve_out


# ── Calibration ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class CalibrationReport:
    V_A: float
    V_A_meas: float
    V_B_meas: float
    V: float
    V_s: float
    delta: float
    eta: float

    def channel(self) -> ChannelModel:
        return ChannelModel(eta=self.eta, delta=self.delta)

    def source(self) -> SourceModel:
        return SourceModel.effective(self.V)


def calibrate(V_A_meas: float, V_B_meas: float, eta: float) -> CalibrationReport:
    """Infer V, V_s and delta from Alice's attenuated and Bob's measured variances.

    V_A' = eta V_A + 1 - eta,  V_A = V - 1/V,
    V_B  = eta V_A + eta V_s + 1 - eta + delta.
    """
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"Transmittivity must satisfy 0 < eta <= 1, got eta={eta}")
    if V_A_meas <= 1.0 - eta:
        raise CalibrationError(
            f"Alice variance {V_A_meas} is not above the loss floor 1 - eta = {1.0 - eta}"
        )

    V_A = (V_A_meas - (1.0 - eta)) / eta
    V = (V_A + math.sqrt(V_A * V_A + 4.0)) / 2.0
    V_s = 1.0 / V
    delta = V_B_meas - eta * V_A - eta * V_s - (1.0 - eta)

    if delta < -CALIBRATION_TOLERANCE:
        raise CalibrationError(
            f"Inferred excess noise is negative (delta={delta:.6g}); "
            f"V_B={V_B_meas} is below the pure-loss prediction"
        )
    delta = max(delta, 0.0)

    logger.debug(f"Calibrated V={V:.4f}, V_s={V_s:.4f}, delta={delta:.4f} at eta={eta}")
    return CalibrationReport(
        V_A=V_A, V_A_meas=V_A_meas, V_B_meas=V_B_meas, V=V, V_s=V_s, delta=delta, eta=eta,
    )


@dataclass(frozen=True)
class ChannelEstimate:
    """Channel parameters estimated from a disclosed subset of sifted data."""

    V: float
    eta: float
    delta: float
    samples: int


def estimate_channel(
    alice_values: np.ndarray,
    bob_values: np.ndarray,
    basis: Optional[np.ndarray] = None,
) -> ChannelEstimate:
    """Estimate (V, eta, delta) from raw same-basis quadrature pairs.

    V from Alice's variance, eta from |Cov|^2 / (V^2 - 1), delta from Bob's
    variance minus the pure-loss prediction. Pass ``basis`` when the pairs mix
    both quadratures so amplitude pairs are sign-aligned first.
    """
    a = np.asarray(alice_values, dtype=float)
    b = np.asarray(bob_values, dtype=float)
    if basis is not None:
        b = np.where(np.asarray(basis) == Basis.AMPLITUDE, -b, b)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("Need at least two aligned value pairs to estimate the channel")

    V = max(float(np.var(a)), 1.0)
    cov = float(np.mean((a - a.mean()) * (b - b.mean())))
    if V > 1.0:
        eta = min(max(cov * cov / (V * V - 1.0), 1e-12), 1.0)
    else:
        eta = 1.0
    delta = max(float(np.var(b)) - eta * V - (1.0 - eta), 0.0)
    return ChannelEstimate(V=V, eta=eta, delta=delta, samples=int(a.size))


# ── Timing and bases ────────────────────────────────────────────────

@dataclass(frozen=True)
class TimingConfig:
    """Basis-hold interval and per-symbol measurement time.

    ``sideband_hz`` is carried as run metadata only.
    """

    dt_switch: float = 5e-3
    dT_sample: float = 5e-7
    symbol_rate: float = 2e6
    sideband_hz: float = 2e6

    def __post_init__(self) -> None:
        if self.dT_sample <= 0:
            raise ValueError(f"dT_sample must be positive, got {self.dT_sample}")
        if self.dt_switch < self.dT_sample:
            raise ValueError(
                f"dt_switch ({self.dt_switch}) must not be shorter than dT_sample ({self.dT_sample})"
            )
        if self.symbol_rate <= 0:
            raise ValueError(f"symbol_rate must be positive, got {self.symbol_rate}")

    @property
    def block_length(self) -> int:
        """Symbols measured in one basis before the next switch."""
        return max(1, int(round(self.dt_switch / self.dT_sample)))


def basis_schedule(timing: TimingConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-symbol bases for one party: constant within blocks, uniform across blocks."""
    if n < 0:
        raise ValueError(f"Symbol count must be non-negative, got n={n}")
    length = timing.block_length
    n_blocks = -(-n // length)
    block_bases = rng.integers(0, 2, size=n_blocks, dtype=np.int8)
    return np.repeat(block_bases, length)[:n]


# ── Records ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class QuadratureRecord:
    """One party's outcome at one symbol; ``tap`` is Eve's mode on Bob's side."""

    index: int
    basis: Basis
    value: float
    tap: Optional[float] = None


@dataclass
class PartyRecords:
    """A party's record sequence, stored column-wise."""

    index: np.ndarray
    basis: np.ndarray
    value: np.ndarray
    tap: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        n = len(self.index)
        if len(self.basis) != n or len(self.value) != n:
            raise ValueError("Record columns must have equal length")
        if self.tap is not None and len(self.tap) != n:
            raise ValueError("Tap column must match record length")

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> QuadratureRecord:
        tap = float(self.tap[i]) if self.tap is not None else None
        return QuadratureRecord(int(self.index[i]), Basis(int(self.basis[i])), float(self.value[i]), tap)

    def __iter__(self) -> Iterator[QuadratureRecord]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_records(cls, records: list[QuadratureRecord]) -> PartyRecords:
        taps = [r.tap for r in records]
        return cls(
            index=np.array([r.index for r in records], dtype=np.int64),
            basis=np.array([int(r.basis) for r in records], dtype=np.int8),
            value=np.array([r.value for r in records], dtype=float),
            tap=np.array(taps, dtype=float) if records and all(t is not None for t in taps) else None,
        )


def measure(
    model: SourceModel,
    channel: ChannelModel,
    timing: TimingConfig,
    n: int,
    seed: int,
    alice_rng: np.random.Generator,
    bob_rng: np.random.Generator,
) -> tuple[PartyRecords, PartyRecords]:
    """Run ``n`` symbols of the source with both homodyne detectors.

    The source draws full (X_a, Y_a, X_b, Y_b) tuples and each party reads
    the component matching its own, independently chosen basis. Bob's
    component then passes through the channel.
    """
    points = sample_pairs(model, n, seed)
    alice_bases = basis_schedule(timing, n, alice_rng)
    bob_bases = basis_schedule(timing, n, bob_rng)

    rows = np.arange(n)
    alice_values = points[rows, alice_bases.astype(np.int64)]
    bob_in = points[rows, 2 + bob_bases.astype(np.int64)]

    channel_rng = np.random.default_rng([seed, _CHANNEL_STREAM])
    bob_values, eve_values = apply_channel(bob_in, channel, channel_rng)

    logger.info(
        f"Measured {n} symbols (V={model.V:.3f}, eta={channel.eta}, delta={channel.delta}, "
        f"block={timing.block_length})"
    )
    index = rows.astype(np.int64)
    alice = PartyRecords(index=index, basis=alice_bases, value=alice_values)
    bob = PartyRecords(index=index.copy(), basis=bob_bases, value=np.asarray(bob_values), tap=eve_values)
    return alice, bob
