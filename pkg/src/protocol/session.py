"""
Protocol Session - Alice and Bob as explicit state machines.

Message sequence (A = Alice, B = Bob)::

    A -> B  BASIS_BATCH          one basis per hold block
    B -> A  SIFT_KEEP            compatible block ids
    A -> B  ABS_VALS             |Y_A| of every sifted symbol
    B -> A  PS_KEEP              post-selected positions + QBER estimate
    B <-> A CASCADE_PARITY_REQ / CASCADE_PARITY_RESP   (repeated)
    B -> A  PA_SEED              hash seed, confirmation seed, final length
    B -> A  KEY_HASH             confirmation hash of Bob's key
    A -> B  KEY_HASH | ABORT

Bob reconciles the kept bits as separate Cascade frames grouped by predicted
error rate; Alice only answers parity requests and never needs the grouping.
Each party only ever sees its own records plus what crosses the transport.
Either side may send ABORT in any phase; the peer stops on receipt.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from src.core.gaussian_source import PartyRecords, alice_estimate, measure
from src.core.run_config import RunConfig
from src.core.security import PointAssessments
from src.processors.cascade import CascadeReconciler, CascadeResult
from src.processors.distillation import (
    alice_bits,
    bob_bits,
    eve_bound,
    expected_qber,
    reliability_frames,
    select_secure,
)
from src.processors.privacy_amplification import confirmation_hash, final_key_length, toeplitz_hash
from src.protocol import wire
from src.protocol.transport import Transcript, Transport, transport_pair
from src.protocol.wire import Message, MessageKind

logger = logging.getLogger(__name__)

_ALICE_STREAM = 2
_BOB_STREAM = 3
_SEED_STREAM = 4


class ProtocolError(RuntimeError):
    """A message arrived outside its phase or carried inconsistent content."""


class SessionAborted(RuntimeError):
    """The session was aborted by this party or its peer."""


class Role(str, Enum):
    ALICE = "alice"
    BOB = "bob"


class Phase(str, Enum):
    MEASURING = "measuring"
    SIFTING = "sifting"
    POST_SELECTING = "post-selecting"
    RECONCILING = "reconciling"
    AMPLIFYING = "amplifying"
    DONE = "done"
    ABORTED = "aborted"


PHASE_ORDER = [
    Phase.MEASURING,
    Phase.SIFTING,
    Phase.POST_SELECTING,
    Phase.RECONCILING,
    Phase.AMPLIFYING,
    Phase.DONE,
]

ACCEPTED: dict[Role, dict[Phase, frozenset]] = {
    Role.ALICE: {
        Phase.SIFTING: frozenset({MessageKind.SIFT_KEEP}),
        Phase.POST_SELECTING: frozenset({MessageKind.PS_KEEP}),
        Phase.RECONCILING: frozenset({MessageKind.CASCADE_PARITY_REQ, MessageKind.PA_SEED}),
        Phase.AMPLIFYING: frozenset({MessageKind.KEY_HASH}),
    },
    Role.BOB: {
        Phase.SIFTING: frozenset({MessageKind.BASIS_BATCH}),
        Phase.POST_SELECTING: frozenset({MessageKind.ABS_VALS}),
        Phase.RECONCILING: frozenset({MessageKind.CASCADE_PARITY_RESP}),
        Phase.AMPLIFYING: frozenset({MessageKind.KEY_HASH}),
    },
}


class SessionState:
    """Phase tracker for one party; phases only move forward (or to aborted)."""

    def __init__(self, role: Role):
        self.role = Role(role)
        self.phase = Phase.MEASURING
        self.bytes_received = 0

    @property
    def terminal(self) -> bool:
        return self.phase in (Phase.DONE, Phase.ABORTED)

    def accepts(self, kind: MessageKind) -> bool:
        if self.terminal:
            return False
        if kind is MessageKind.ABORT:
            return True
        return kind in ACCEPTED[self.role].get(self.phase, frozenset())

    def accept(self, msg: Message) -> Message:
        if not self.accepts(msg.kind):
            raise ProtocolError(f"{self.role.value}: {msg.kind.name} not accepted in phase '{self.phase.value}'")
        self.bytes_received += len(msg.payload) + wire.HEADER.size
        return msg

    def advance(self, phase: Phase) -> None:
        phase = Phase(phase)
        if self.terminal:
            raise ProtocolError(f"{self.role.value}: session already {self.phase.value}")
        if phase is not Phase.ABORTED and PHASE_ORDER.index(phase) != PHASE_ORDER.index(self.phase) + 1:
            raise ProtocolError(f"{self.role.value}: cannot move from '{self.phase.value}' to '{phase.value}'")
        logger.debug(f"{self.role.value}: {self.phase.value} -> {phase.value}")
        self.phase = phase


# ── Parties ─────────────────────────────────────────────────────────

class _PeerAborted(SessionAborted):
    pass


@dataclass
class PartyOutcome:
    role: Role
    key: np.ndarray
    phase: Phase
    reason: str = ""

    @property
    def aborted(self) -> bool:
        return self.phase is Phase.ABORTED


class _Party:
    role: Role

    def __init__(self, config: RunConfig, records: PartyRecords, transport: Transport):
        self.config = config
        self.records = records
        self.transport = transport
        self.state = SessionState(self.role)
        self.block_length = config.timing().block_length
        self.key = np.zeros(0, dtype=np.uint8)
        self.bits = np.zeros(0, dtype=np.uint8)

    def expect(self) -> Message:
        msg = self.state.accept(self.transport.recv())
        if msg.kind is MessageKind.ABORT:
            raise _PeerAborted(f"peer aborted: {msg.payload.decode('utf-8', 'replace')}")
        return msg

    def sifted_positions(self, block_ids: np.ndarray) -> np.ndarray:
        n_blocks = math.ceil(len(self.records) / self.block_length)
        if np.any(block_ids >= n_blocks) or np.any(np.diff(block_ids) <= 0):
            raise ProtocolError(f"{self.role.value}: invalid compatible block list")
        return np.flatnonzero(np.isin(self.records.index // self.block_length, block_ids))

    def block_bases(self) -> np.ndarray:
        return self.records.basis[::self.block_length]

    def run(self) -> PartyOutcome:
        try:
            self._run()
            return PartyOutcome(self.role, self.key, self.state.phase)
        except Exception as e:
            if not isinstance(e, _PeerAborted):
                self.transport.try_send_abort(f"{self.role.value}: {e}")
            if isinstance(e, SessionAborted):
                logger.warning(f"{self.role.value}: session aborted ({e})")
            else:
                logger.warning(f"{self.role.value}: session failed ({type(e).__name__}: {e})")
            if not self.state.terminal:
                self.state.advance(Phase.ABORTED)
            return PartyOutcome(self.role, np.zeros(0, dtype=np.uint8), Phase.ABORTED, str(e))
        finally:
            self.transport.close()

    def _run(self) -> None:
        raise NotImplementedError


class AliceParty(_Party):
    """Reference side: announces bases and magnitudes, answers parity queries."""

    role = Role.ALICE

    def _run(self) -> None:
        self.transport.send(Message(MessageKind.BASIS_BATCH, wire.encode_bases(self.block_bases())))
        self.state.advance(Phase.SIFTING)

        block_ids = wire.decode_indices(self.expect().payload)
        sifted = self.sifted_positions(block_ids)
        y_a = np.asarray(alice_estimate(self.records.value[sifted], self.config.source().V), dtype=float)
        self.transport.send(Message(MessageKind.ABS_VALS, wire.encode_magnitudes(np.abs(y_a))))
        self.state.advance(Phase.POST_SELECTING)

        kept, _ = wire.decode_ps_keep(self.expect().payload)
        if np.any(kept >= len(sifted)):
            raise ProtocolError("alice: post-selected position out of range")
        self.bits = alice_bits(y_a[kept])
        self.state.advance(Phase.RECONCILING)

        answered = 0
        while True:
            msg = self.expect()
            if msg.kind is MessageKind.CASCADE_PARITY_REQ:
                blocks = wire.decode_parity_request(msg.payload)
                if any(len(b) and b.max() >= len(self.bits) for b in blocks):
                    raise ProtocolError("alice: parity request indexes past the key")
                parities = [int(self.bits[b].sum() & 1) for b in blocks]
                answered += len(parities)
                self.transport.send(Message(MessageKind.CASCADE_PARITY_RESP, wire.encode_parities(parities)))
                continue
            pa_seed, confirm_seed, m = wire.decode_pa_seed(msg.payload)
            break

        ceiling = final_key_length(len(self.bits), 0.0, answered, self.config.epsilon_pa)
        if m > ceiling:
            raise ProtocolError(f"alice: final length {m} exceeds what {answered} disclosed parities allow ({ceiling})")
        self.state.advance(Phase.AMPLIFYING)
        self.key = toeplitz_hash(self.bits, m, pa_seed) if m else np.zeros(0, dtype=np.uint8)

        theirs = self.expect().payload
        mine = confirmation_hash(self.key, confirm_seed)
        if theirs != mine:
            raise SessionAborted("key confirmation hash mismatch")
        self.transport.send(Message(MessageKind.KEY_HASH, mine))
        self.state.advance(Phase.DONE)
        logger.info(f"alice: session done, {len(self.key)}-bit key")


class BobParty(_Party):
    """Post-selects, drives Cascade and chooses the privacy-amplification seeds."""

    role = Role.BOB

    def __init__(
        self,
        config: RunConfig,
        records: PartyRecords,
        transport: Transport,
        after_reconcile: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        super().__init__(config, records, transport)
        self.after_reconcile = after_reconcile
        self.kept = PointAssessments(*(np.zeros(0) for _ in range(9)))
        self.eve_bits_per_symbol = 0.0
        self.qber_est = 0.0
        self.cascade: Optional[CascadeResult] = None
        self.final_length = 0
        self.raw_bits = np.zeros(0, dtype=np.uint8)

    def _run(self) -> None:
        self.state.advance(Phase.SIFTING)
        alice_bases = wire.decode_bases(self.expect().payload)
        own = self.block_bases()
        if len(alice_bases) != len(own):
            raise ProtocolError(f"bob: {len(alice_bases)} basis blocks announced, {len(own)} measured")
        block_ids = np.flatnonzero(alice_bases == own)
        sifted = self.sifted_positions(block_ids)
        self.transport.send(Message(MessageKind.SIFT_KEEP, wire.encode_indices(block_ids)))
        self.state.advance(Phase.POST_SELECTING)

        y_a_abs = wire.decode_magnitudes(self.expect().payload)
        if len(y_a_abs) != len(sifted):
            raise ProtocolError(f"bob: {len(y_a_abs)} magnitudes for {len(sifted)} sifted symbols")
        y_b = self.records.value[sifted]
        ctx = self.config.security_context()
        mask, assessments = select_secure(
            y_a_abs, np.abs(y_b), ctx, ctx.attack, self.config.postselect, self.config.reconciliation_efficiency
        )
        kept = np.flatnonzero(mask)
        self.kept = assessments.subset(kept)
        self.eve_bits_per_symbol = eve_bound(self.kept, ctx.attack, self.config.eve_bound)
        self.qber_est = expected_qber(self.kept.p)
        self.transport.send(Message(MessageKind.PS_KEEP, wire.encode_ps_keep(kept, self.qber_est)))
        self.state.advance(Phase.RECONCILING)
        logger.info(
            f"bob: kept {len(kept)}/{len(sifted)} sifted symbols, "
            f"eve={self.eve_bits_per_symbol:.4f} bits/symbol, qber_est={self.qber_est:.4f}"
        )

        raw_bits = bob_bits(self.records.basis[sifted][kept], y_b[kept])
        self.raw_bits = raw_bits
        reconciler = CascadeReconciler(passes=self.config.cascade_passes, seed=self.config.seed)
        frames = reliability_frames(self.kept.p)
        self.cascade = reconciler.reconcile_frames(raw_bits, frames, RemoteParityOracle(self))
        self.bits = self.cascade.bob_bits
        if self.after_reconcile is not None:
            self.bits = np.asarray(self.after_reconcile(self.bits.copy()), dtype=np.uint8)

        self.final_length = final_key_length(
            len(self.bits), self.eve_bits_per_symbol, self.cascade.leakage_bits, self.config.epsilon_pa
        )
        seeds = np.random.default_rng([self.config.seed, _SEED_STREAM]).integers(0, 2 ** 63, size=2)
        pa_seed, confirm_seed = int(seeds[0]), int(seeds[1])
        self.transport.send(
            Message(MessageKind.PA_SEED, wire.encode_pa_seed(pa_seed, confirm_seed, self.final_length))
        )
        self.state.advance(Phase.AMPLIFYING)
        if self.final_length:
            self.key = toeplitz_hash(self.bits, self.final_length, pa_seed)

        mine = confirmation_hash(self.key, confirm_seed)
        self.transport.send(Message(MessageKind.KEY_HASH, mine))
        if self.expect().payload != mine:
            raise SessionAborted("key confirmation hash mismatch")
        self.state.advance(Phase.DONE)
        logger.info(f"bob: session done, {len(self.key)}-bit key")


class RemoteParityOracle:
    """Parity oracle that asks Alice over the transport."""

    def __init__(self, party: BobParty):
        self.party = party

    def parities(self, blocks):
        self.party.transport.send(Message(MessageKind.CASCADE_PARITY_REQ, wire.encode_parity_request(blocks)))
        answer = wire.decode_parities(self.party.expect().payload)
        if len(answer) != len(blocks):
            raise ProtocolError(f"bob: asked for {len(blocks)} parities, got {len(answer)}")
        return answer


# ── Transcript audit ────────────────────────────────────────────────

@dataclass(frozen=True)
class LeakageReport:
    """Public disclosures recorded in a transcript."""

    parity_bits: int
    magnitudes_announced: int
    bases_announced: int
    frames: int
    total_bytes: int


def transcript_leakage(transcript: Transcript) -> LeakageReport:
    """Count every disclosed parity bit and every announced magnitude."""
    parity_bits = magnitudes = bases = 0
    messages = transcript.messages()
    for _, msg in messages:
        if msg.kind is MessageKind.CASCADE_PARITY_RESP:
            parity_bits += len(wire.decode_parities(msg.payload))
        elif msg.kind is MessageKind.ABS_VALS:
            magnitudes += len(wire.decode_magnitudes(msg.payload))
        elif msg.kind is MessageKind.BASIS_BATCH:
            bases += len(wire.decode_bases(msg.payload))
    return LeakageReport(
        parity_bits=parity_bits,
        magnitudes_announced=magnitudes,
        bases_announced=bases,
        frames=len(messages),
        total_bytes=transcript.total_bytes,
    )


# ── Orchestration ───────────────────────────────────────────────────

@dataclass
class SessionResult:
    alice_key: np.ndarray
    bob_key: np.ndarray
    aborted: bool
    reason: str
    transcript: Transcript
    leakage: LeakageReport
    n_symbols: int
    kept: PointAssessments
    eve_bits_per_symbol: float
    qber_est: float
    qber_actual: float
    cascade: Optional[CascadeResult] = None
    stats: dict = field(default_factory=dict)

    @property
    def final_bits(self) -> int:
        return 0 if self.aborted else len(self.alice_key)

    @property
    def leakage_bits(self) -> int:
        return self.cascade.leakage_bits if self.cascade is not None else 0

    @property
    def secret_fraction(self) -> float:
        return self.final_bits / self.n_symbols


def run_session(
    config: RunConfig,
    transports: Optional[tuple[Transport, Transport]] = None,
    after_reconcile: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SessionResult:
    """Measure, then run both parties concurrently until done or aborted.

    Args:
        config: Public run parameters shared by both parties.
        transports: Connected (alice, bob) endpoints; built from ``config.transport`` if omitted.
        after_reconcile: Test hook applied to Bob's bits right after Cascade.
    """
    if transports is None:
        transports = transport_pair(config.transport)
    alice_end, bob_end = transports

    alice_rec, bob_rec = measure(
        config.source(),
        config.channel(),
        config.timing(),
        config.n_symbols,
        config.seed,
        np.random.default_rng([config.seed, _ALICE_STREAM]),
        np.random.default_rng([config.seed, _BOB_STREAM]),
    )
    alice = AliceParty(config, alice_rec, alice_end)
    bob = BobParty(config, bob_rec, bob_end, after_reconcile=after_reconcile)

    with ThreadPoolExecutor(max_workers=2, thread_name_prefix="qkd-party") as pool:
        alice_future = pool.submit(alice.run)
        bob_future = pool.submit(bob.run)
        a_out = alice_future.result()
        b_out = bob_future.result()

    aborted = a_out.aborted or b_out.aborted
    if not aborted and not np.array_equal(a_out.key, b_out.key):
        raise RuntimeError("Keys diverged despite matching confirmation hashes")

    same_length = len(alice.bits) == len(bob.raw_bits) and len(bob.raw_bits) > 0
    qber_actual = float(np.mean(alice.bits != bob.raw_bits)) if same_length else 0.0
    transcript = alice_end.transcript
    leakage = transcript_leakage(transcript)
    reason = a_out.reason or b_out.reason

    result = SessionResult(
        alice_key=np.zeros(0, dtype=np.uint8) if aborted else a_out.key,
        bob_key=np.zeros(0, dtype=np.uint8) if aborted else b_out.key,
        aborted=aborted,
        reason=reason,
        transcript=transcript,
        leakage=leakage,
        n_symbols=config.n_symbols,
        kept=bob.kept,
        eve_bits_per_symbol=bob.eve_bits_per_symbol,
        qber_est=bob.qber_est,
        qber_actual=qber_actual,
        cascade=bob.cascade,
        stats={
            "bytes": leakage.total_bytes,
            "frames": leakage.frames,
            "parity_bits": leakage.parity_bits,
            "kept": len(bob.kept),
            "final_bits": 0 if aborted else len(a_out.key),
        },
    )
    if aborted:
        logger.warning(f"Session aborted: {reason}")
    else:
        logger.info(
            f"Session done: {len(bob.kept)} kept, {result.leakage_bits} parity bits, {len(a_out.key)}-bit key"
        )
    return result
