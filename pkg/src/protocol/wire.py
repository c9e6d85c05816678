"""
Wire Format - framed classical-channel messages.

Frame layout (big-endian)::

    +----------------+--------+-------------------+
    | length (u32)   | kind   | payload           |
    | kind + payload | (u8)   | length - 1 bytes  |
    +----------------+--------+-------------------+

Payload codecs below turn protocol values into bytes. Counts and indices
are u32, seeds u64, quadrature magnitudes and QBER IEEE-754 binary64.
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

HEADER = struct.Struct(">IB")
MAX_PAYLOAD = 2 ** 32 - 2

_U32 = np.dtype(">u4")
_F8 = np.dtype(">f8")
_SEEDS = struct.Struct(">QQI")


class FrameDecodeError(ValueError):
    """Bytes do not form a well-formed frame or payload."""


class MessageKind(IntEnum):
    BASIS_BATCH = 0x01
    SIFT_KEEP = 0x02
    ABS_VALS = 0x03
    PS_KEEP = 0x04
    CASCADE_PARITY_REQ = 0x05
    CASCADE_PARITY_RESP = 0x06
    PA_SEED = 0x07
    KEY_HASH = 0x08
    ABORT = 0x09


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    payload: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MessageKind(self.kind))
        object.__setattr__(self, "payload", bytes(self.payload))
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"Payload of {len(self.payload)} bytes does not fit a frame")


# ── Frames ──────────────────────────────────────────────────────────

def frame_encode(msg: Message) -> bytes:
    return HEADER.pack(len(msg.payload) + 1, int(msg.kind)) + msg.payload


def _kind(code: int) -> MessageKind:
    try:
        return MessageKind(code)
    except ValueError:
        raise FrameDecodeError(f"Unknown message kind 0x{code:02x}") from None


def frame_decode(data: bytes) -> Message:
    """Decode exactly one frame."""
    if len(data) < HEADER.size:
        raise FrameDecodeError(f"Truncated frame: {len(data)} bytes, header needs {HEADER.size}")
    length, code = HEADER.unpack_from(data)
    if length < 1:
        raise FrameDecodeError("Declared length must count the kind byte")
    if len(data) - 4 != length:
        raise FrameDecodeError(f"Declared length {length} but {len(data) - 4} bytes follow the length field")
    return Message(_kind(code), data[HEADER.size:])


def iter_frames(buffer: bytes) -> Iterator[Message]:
    """Split a concatenation of frames (a transcript dump)."""
    pos = 0
    while pos < len(buffer):
        if len(buffer) - pos < HEADER.size:
            raise FrameDecodeError(f"Truncated frame at offset {pos}")
        (length,) = struct.unpack_from(">I", buffer, pos)
        end = pos + 4 + length
        if end > len(buffer):
            raise FrameDecodeError(f"Frame at offset {pos} runs past the end of the buffer")
        yield frame_decode(buffer[pos:end])
        pos = end


# ── Payload helpers ─────────────────────────────────────────────────

class _Reader:
    def __init__(self, payload: bytes, what: str):
        self.payload = payload
        self.pos = 0
        self.what = what

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.payload):
            raise FrameDecodeError(f"{self.what}: payload truncated")
        chunk = self.payload[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        return np.frombuffer(self.take(count * dtype.itemsize), dtype=dtype)

    def finish(self) -> None:
        if self.pos != len(self.payload):
            raise FrameDecodeError(f"{self.what}: {len(self.payload) - self.pos} trailing bytes")


def _counted(values: np.ndarray, dtype: np.dtype) -> bytes:
    arr = np.asarray(values)
    return struct.pack(">I", len(arr)) + arr.astype(dtype).tobytes()


def encode_bases(bases: np.ndarray) -> bytes:
    return _counted(bases, np.dtype(np.uint8))


def decode_bases(payload: bytes) -> np.ndarray:
    r = _Reader(payload, "BASIS_BATCH")
    out = r.array(np.dtype(np.uint8), r.u32()).astype(np.int8)
    r.finish()
    if np.any(out > 1):
        raise FrameDecodeError("BASIS_BATCH: basis codes must be 0 or 1")
    return out


def encode_indices(indices: np.ndarray) -> bytes:
    return _counted(indices, _U32)


def decode_indices(payload: bytes, what: str = "SIFT_KEEP") -> np.ndarray:
    r = _Reader(payload, what)
    out = r.array(_U32, r.u32()).astype(np.int64)
    r.finish()
    return out


def encode_magnitudes(values: np.ndarray) -> bytes:
    return _counted(values, _F8)


def decode_magnitudes(payload: bytes) -> np.ndarray:
    r = _Reader(payload, "ABS_VALS")
    out = r.array(_F8, r.u32()).astype(float)
    r.finish()
    return out


def encode_ps_keep(positions: np.ndarray, qber: float) -> bytes:
    return _counted(positions, _U32) + struct.pack(">d", qber)


def decode_ps_keep(payload: bytes) -> tuple[np.ndarray, float]:
    r = _Reader(payload, "PS_KEEP")
    positions = r.array(_U32, r.u32()).astype(np.int64)
    (qber,) = struct.unpack(">d", r.take(8))
    r.finish()
    return positions, qber


def encode_parity_request(blocks: Sequence[np.ndarray]) -> bytes:
    parts = [struct.pack(">I", len(blocks))]
    for block in blocks:
        parts.append(_counted(block, _U32))
    return b"".join(parts)


def decode_parity_request(payload: bytes) -> list[np.ndarray]:
    r = _Reader(payload, "CASCADE_PARITY_REQ")
    blocks = [r.array(_U32, r.u32()).astype(np.int64) for _ in range(r.u32())]
    r.finish()
    return blocks


def encode_parities(parities: Sequence[int]) -> bytes:
    bits = np.asarray(parities, dtype=np.uint8)
    return struct.pack(">I", len(bits)) + np.packbits(bits).tobytes()


def decode_parities(payload: bytes) -> list[int]:
    r = _Reader(payload, "CASCADE_PARITY_RESP")
    count = r.u32()
    packed = r.array(np.dtype(np.uint8), (count + 7) // 8)
    r.finish()
    return [int(b) for b in np.unpackbits(packed, count=count)]


def encode_pa_seed(pa_seed: int, confirm_seed: int, m: int) -> bytes:
    return _SEEDS.pack(pa_seed, confirm_seed, m)


def decode_pa_seed(payload: bytes) -> tuple[int, int, int]:
    if len(payload) != _SEEDS.size:
        raise FrameDecodeError(f"PA_SEED: expected {_SEEDS.size} bytes, got {len(payload)}")
    return _SEEDS.unpack(payload)
