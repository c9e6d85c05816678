"""
Transports - ordered, reliable, bidirectional frame channels.

Two implementations with the same contract:
- QueueTransport: in-process queues carrying encoded frames (test default)
- SocketTransport: a connected stream socket pair with the same framing

Both ends of a pair record every sent frame into a shared Transcript.
"""

import logging
import queue
import socket
import threading
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from config.settings import Settings
from src.protocol.wire import HEADER, Message, MessageKind, frame_decode, frame_encode

logger = logging.getLogger(__name__)


class TransportError(RuntimeError):
    """The channel was closed or timed out."""


@dataclass
class Transcript:
    """Public record of every frame sent by either party, in send order."""

    frames: list[tuple[str, bytes]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, sender: str, frame: bytes) -> None:
        with self._lock:
            self.frames.append((sender, frame))

    @property
    def total_bytes(self) -> int:
        with self._lock:
            return sum(len(f) for _, f in self.frames)

    def messages(self) -> list[tuple[str, Message]]:
        with self._lock:
            return [(sender, frame_decode(f)) for sender, f in self.frames]

    def kind_counts(self) -> Counter:
        return Counter(msg.kind for _, msg in self.messages())

    def dump(self) -> bytes:
        """Raw frames concatenated in send order."""
        with self._lock:
            return b"".join(f for _, f in self.frames)


class Transport(ABC):
    """One endpoint of a frame channel."""

    def __init__(self, name: str, transcript: Transcript, timeout: Optional[float] = None):
        self.name = name
        self.transcript = transcript
        self.timeout = timeout if timeout is not None else Settings.TRANSPORT_TIMEOUT_S

    def send(self, msg: Message) -> None:
        frame = frame_encode(msg)
        # Recorded before delivery so a reply can never precede its request.
        self.transcript.record(self.name, frame)
        self._send_frame(frame)
        logger.debug(f"{self.name} -> {msg.kind.name} ({len(msg.payload)} bytes)")

    def recv(self) -> Message:
        msg = frame_decode(self._recv_frame())
        logger.debug(f"{self.name} <- {msg.kind.name} ({len(msg.payload)} bytes)")
        return msg

    def try_send_abort(self, reason: str) -> None:
        """Best-effort ABORT; failures are logged, not raised."""
        try:
            self.send(Message(MessageKind.ABORT, reason.encode("utf-8")))
        except Exception as e:
            logger.debug(f"{self.name}: could not deliver ABORT ({e})")

    @abstractmethod
    def _send_frame(self, frame: bytes) -> None:
        ...

    @abstractmethod
    def _recv_frame(self) -> bytes:
        ...

    @abstractmethod
    def close(self) -> None:
        ...


class QueueTransport(Transport):
    _CLOSED = object()

    def __init__(self, name: str, transcript: Transcript, inbox: queue.Queue, outbox: queue.Queue,
                 timeout: Optional[float] = None):
        super().__init__(name, transcript, timeout)
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False

    @classmethod
    def pair(cls, transcript: Optional[Transcript] = None, timeout: Optional[float] = None):
        transcript = transcript if transcript is not None else Transcript()
        a_to_b: queue.Queue = queue.Queue()
        b_to_a: queue.Queue = queue.Queue()
        alice = cls("alice", transcript, inbox=b_to_a, outbox=a_to_b, timeout=timeout)
        bob = cls("bob", transcript, inbox=a_to_b, outbox=b_to_a, timeout=timeout)
        return alice, bob

    def _send_frame(self, frame: bytes) -> None:
        if self._closed:
            raise TransportError(f"{self.name}: transport is closed")
        self._outbox.put(frame)

    def _recv_frame(self) -> bytes:
        try:
            item = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"{self.name}: no frame within {self.timeout}s") from None
        if item is self._CLOSED:
            raise TransportError(f"{self.name}: peer closed the channel")
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(self._CLOSED)


class SocketTransport(Transport):
    def __init__(self, name: str, transcript: Transcript, sock: socket.socket, timeout: Optional[float] = None):
        super().__init__(name, transcript, timeout)
        self._sock = sock
        self._sock.settimeout(self.timeout)

    @classmethod
    def pair(cls, transcript: Optional[Transcript] = None, timeout: Optional[float] = None):
        transcript = transcript if transcript is not None else Transcript()
        a, b = socket.socketpair()
        return cls("alice", transcript, a, timeout), cls("bob", transcript, b, timeout)

    def _send_frame(self, frame: bytes) -> None:
        try:
            self._sock.sendall(frame)
        except OSError as e:
            raise TransportError(f"{self.name}: send failed ({e})") from e

    def _read_exact(self, size: int) -> bytes:
        chunks = []
        remaining = size
        while remaining:
            try:
                chunk = self._sock.recv(remaining)
            except socket.timeout:
                raise TransportError(f"{self.name}: no frame within {self.timeout}s") from None
            except OSError as e:
                raise TransportError(f"{self.name}: receive failed ({e})") from e
            if not chunk:
                raise TransportError(f"{self.name}: peer closed the channel")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def _recv_frame(self) -> bytes:
        header = self._read_exact(HEADER.size)
        length = int.from_bytes(header[:4], "big")
        return header + self._read_exact(length - 1) if length >= 1 else header

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def transport_pair(kind: str, transcript: Optional[Transcript] = None, timeout: Optional[float] = None):
    """Connected (alice, bob) endpoints of the named kind: ``queue`` or ``socket``."""
    if kind == "queue":
        return QueueTransport.pair(transcript, timeout)
    if kind == "socket":
        return SocketTransport.pair(transcript, timeout)
    raise ValueError(f"Unknown transport '{kind}' (expected 'queue' or 'socket')")
