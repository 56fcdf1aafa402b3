"""
Message channels between the two aggregation servers.

Frames are ``u64 LE length | u16 LE tag length | tag (utf-8) | payload``.
Byte counters only count payload bytes; formula-level costs are charged
separately through :meth:`Endpoint.charge`.
"""

import hashlib
import logging
import queue
import socket
import struct
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

from ..config import load_settings
from ..exceptions import (
    ClosedChannelError,
    ProtocolTimeoutError,
    TagMismatchError,
    TransportError,
)
from ..utils.network_utils import connect_with_retries, find_free_port

logger = logging.getLogger(__name__)

LENGTH_HEADER = struct.Struct('<Q')
TAG_HEADER = struct.Struct('<H')
_POLL_INTERVAL = 0.05


def encode_frame(tag: str, payload: bytes) -> bytes:
    tag_bytes = tag.encode('utf-8')
    body = TAG_HEADER.pack(len(tag_bytes)) + tag_bytes + payload
    return LENGTH_HEADER.pack(len(body)) + body


def decode_frame_body(body: bytes) -> Tuple[str, bytes]:
    """Split a frame body (everything after the length header) into tag and payload."""
    (tag_len,) = TAG_HEADER.unpack_from(body, 0)
    start = TAG_HEADER.size
    tag = body[start:start + tag_len].decode('utf-8')
    return tag, body[start + tag_len:]


@dataclass
class TranscriptCounters:
    """
    Communication counters for a session or one protocol scope.

    ``accounted`` holds formula-level counters charged by protocols
    (``accounted_bits``, ``ciphertexts``, ``multiplications``, ``ot_instances``).
    """
    protocol_tag: str = 'session'
    bytes_sent: int = 0
    bytes_received: int = 0
    rounds: int = 0
    messages_sent: int = 0
    messages_received: int = 0
    accounted: Dict[str, int] = field(default_factory=dict)

    def charge(self, **amounts: int) -> None:
        for key, value in amounts.items():
            self.accounted[key] = self.accounted.get(key, 0) + int(value)

    def copy(self) -> 'TranscriptCounters':
        return TranscriptCounters(
            self.protocol_tag, self.bytes_sent, self.bytes_received, self.rounds,
            self.messages_sent, self.messages_received, dict(self.accounted)
        )

    def merge(self, other: 'TranscriptCounters') -> None:
        self.bytes_sent += other.bytes_sent
        self.bytes_received += other.bytes_received
        self.rounds += other.rounds
        self.messages_sent += other.messages_sent
        self.messages_received += other.messages_received
        self.charge(**other.accounted)

    def since(self, earlier: 'TranscriptCounters') -> 'TranscriptCounters':
        """Counter increase relative to an earlier snapshot of the same counters."""
        accounted = {
            key: value - earlier.accounted.get(key, 0)
            for key, value in self.accounted.items()
        }
        return TranscriptCounters(
            self.protocol_tag,
            self.bytes_sent - earlier.bytes_sent,
            self.bytes_received - earlier.bytes_received,
            self.rounds - earlier.rounds,
            self.messages_sent - earlier.messages_sent,
            self.messages_received - earlier.messages_received,
            {k: v for k, v in accounted.items() if v},
        )

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'protocol': self.protocol_tag,
            'bytes_sent': self.bytes_sent,
            'bytes_received': self.bytes_received,
            'rounds': self.rounds,
            'messages_sent': self.messages_sent,
            'messages_received': self.messages_received,
        }
        data.update(self.accounted)
        return data


class Endpoint:
    """
    One server's end of the link to its peer.

    Subclasses provide ``_put_frame`` / ``_get_frame`` / ``_shutdown``.
    A round is counted whenever the message direction changes, a barrier
    is pending, or a simultaneous exchange happens.
    """

    def __init__(self, party_id: int, recv_timeout: Optional[float] = None):
        if party_id not in (0, 1):
            raise ValueError(f"party_id must be 0 or 1, got {party_id}")
        self.party_id = party_id
        self.recv_timeout = recv_timeout
        self.counters = TranscriptCounters('session')
        self.protocol_totals: Dict[str, TranscriptCounters] = {}
        self._scopes: List[TranscriptCounters] = []
        self._last_direction: Optional[str] = None
        self._barrier = False
        self._digest = hashlib.sha256()
        self.closed = False

    # -- subclass hooks ---------------------------------------------------
    def _put_frame(self, frame: bytes) -> None:
        raise NotImplementedError

    def _get_frame(self) -> bytes:
        raise NotImplementedError

    def _shutdown(self) -> None:
        pass

    # -- accounting -------------------------------------------------------
    def _active(self) -> List[TranscriptCounters]:
        return [self.counters] + self._scopes

    def _tick(self, direction: str) -> None:
        if (self._barrier or self._last_direction is None
                or direction == 'both' or direction != self._last_direction):
            for counters in self._active():
                counters.rounds += 1
        self._barrier = False
        self._last_direction = direction

    def barrier(self) -> None:
        """Force the next message to start a new round."""
        self._barrier = True

    def charge(self, **amounts: int) -> None:
        """Charge formula-level costs to the session and every open protocol scope."""
        for counters in self._active():
            counters.charge(**amounts)

    @contextmanager
    def protocol(self, tag: str) -> Iterator[TranscriptCounters]:
        """
        Scope the counters of one protocol invocation.

        Entering a scope declares a barrier. Nested scopes are all charged.
        The finished scope is added to ``protocol_totals[tag]``.
        """
        scope = TranscriptCounters(tag)
        self._scopes.append(scope)
        self.barrier()
        try:
            yield scope
        finally:
            self._scopes.remove(scope)
            self.protocol_totals.setdefault(tag, TranscriptCounters(tag)).merge(scope)

    def snapshot(self) -> TranscriptCounters:
        return self.counters.copy()

    def transcript_digest(self) -> str:
        """SHA-256 over every frame sent and received so far, in order."""
        return self._digest.copy().hexdigest()

    # -- messaging --------------------------------------------------------
    def _send_raw(self, payload: bytes, tag: str) -> None:
        if self.closed:
            raise ClosedChannelError(f"endpoint {self.party_id} is closed")
        frame = encode_frame(tag, payload)
        self._put_frame(frame)
        self._digest.update(b'>' + frame)
        for counters in self._active():
            counters.bytes_sent += len(payload)
            counters.messages_sent += 1

    def _receive_raw(self, tag: str) -> bytes:
        frame = self._get_frame()
        self._digest.update(b'<' + frame)
        received_tag, payload = decode_frame_body(frame[LENGTH_HEADER.size:])
        if received_tag != tag:
            raise TagMismatchError(tag, received_tag)
        for counters in self._active():
            counters.bytes_received += len(payload)
            counters.messages_received += 1
        return payload

    def send(self, payload: bytes, tag: str) -> None:
        """
        Send one tagged payload to the peer.

        Args:
            payload: Bytes to deliver
            tag: Protocol label the receiver must expect

        Raises:
            ClosedChannelError: if this endpoint or the peer has terminated
        """
        self._tick('send')
        self._send_raw(payload, tag)

    def receive(self, tag: str) -> bytes:
        """
        Receive the next payload from the peer.

        Args:
            tag: Expected protocol label

        Returns:
            The peer's payload, byte for byte

        Raises:
            TagMismatchError: if the peer sent a frame with another tag
            ProtocolTimeoutError: if nothing arrives within the receive timeout
            ClosedChannelError: if the peer has terminated
        """
        self._tick('recv')
        return self._receive_raw(tag)

    def exchange(self, payload: bytes, tag: str) -> bytes:
        """Send and receive simultaneously; both directions count as one round."""
        self._tick('both')
        self._send_raw(payload, tag)
        return self._receive_raw(tag)

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._shutdown()

    def __enter__(self) -> 'Endpoint':
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class InProcessEndpoint(Endpoint):
    """Endpoint backed by a pair of in-memory queues shared with its peer."""

    def __init__(
        self,
        party_id: int,
        inbox: 'queue.Queue[bytes]',
        outbox: 'queue.Queue[bytes]',
        closed_flag: threading.Event,
        recv_timeout: Optional[float] = None
    ):
        super().__init__(party_id, recv_timeout)
        self._inbox = inbox
        self._outbox = outbox
        self._closed_flag = closed_flag

    def _put_frame(self, frame: bytes) -> None:
        if self._closed_flag.is_set():
            raise ClosedChannelError("peer endpoint has terminated")
        self._outbox.put(frame)

    def _get_frame(self) -> bytes:
        waited = 0.0
        while True:
            try:
                return self._inbox.get(timeout=_POLL_INTERVAL)
            except queue.Empty:
                if self._closed_flag.is_set():
                    raise ClosedChannelError("peer endpoint has terminated")
                waited += _POLL_INTERVAL
                if self.recv_timeout is not None and waited >= self.recv_timeout:
                    raise ProtocolTimeoutError(
                        f"party {self.party_id}: no frame within {self.recv_timeout}s"
                    )

    def _shutdown(self) -> None:
        self._closed_flag.set()


def in_process_pair(recv_timeout: Optional[float] = None) -> Tuple[InProcessEndpoint, InProcessEndpoint]:
    """Create two connected in-memory endpoints (party 0, party 1)."""
    to_one: 'queue.Queue[bytes]' = queue.Queue()
    to_zero: 'queue.Queue[bytes]' = queue.Queue()
    closed = threading.Event()
    return (
        InProcessEndpoint(0, to_zero, to_one, closed, recv_timeout),
        InProcessEndpoint(1, to_one, to_zero, closed, recv_timeout),
    )


class TcpEndpoint(Endpoint):
    """
    Endpoint over a TCP stream.

    A reader thread drains the socket into a queue so two simultaneous
    large sends cannot deadlock on full kernel buffers.
    """

    def __init__(self, party_id: int, sock: socket.socket, recv_timeout: Optional[float] = None):
        super().__init__(party_id, recv_timeout)
        self._sock = sock
        self._sock.settimeout(None)
        self._handshake()
        self._frames: 'queue.Queue[Optional[bytes]]' = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True,
                                        name=f"flurp-reader-{party_id}")
        self._reader.start()

    def _recv_exact(self, size: int) -> bytes:
        chunks = []
        remaining = size
        while remaining:
            chunk = self._sock.recv(min(remaining, 1 << 20))
            if not chunk:
                raise ClosedChannelError("peer closed the connection")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b''.join(chunks)

    def _handshake(self) -> None:
        try:
            self._sock.sendall(bytes([self.party_id]))
            peer = self._recv_exact(1)[0]
        except OSError as e:
            raise TransportError(f"handshake failed: {e}") from e
        if peer == self.party_id:
            raise TransportError(f"both endpoints claim party id {peer}")
        logger.debug(f"Party {self.party_id} connected to party {peer}")

    def _read_loop(self) -> None:
        try:
            while True:
                header = self._recv_exact(LENGTH_HEADER.size)
                (length,) = LENGTH_HEADER.unpack(header)
                self._frames.put(header + self._recv_exact(length))
        except (OSError, ClosedChannelError):
            self._frames.put(None)

    def _put_frame(self, frame: bytes) -> None:
        try:
            self._sock.sendall(frame)
        except OSError as e:
            raise ClosedChannelError(f"send failed: {e}") from e

    def _get_frame(self) -> bytes:
        try:
            frame = self._frames.get(timeout=self.recv_timeout)
        except queue.Empty:
            raise ProtocolTimeoutError(
                f"party {self.party_id}: no frame within {self.recv_timeout}s"
            )
        if frame is None:
            self._frames.put(None)
            raise ClosedChannelError("peer closed the connection")
        return frame

    def _shutdown(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    @classmethod
    def listen(
        cls,
        host: str,
        port: int,
        party_id: int = 0,
        recv_timeout: Optional[float] = None
    ) -> 'TcpEndpoint':
        """
        Accept exactly one peer connection.

        Args:
            host: Interface to bind
            port: Port to listen on
            party_id: This server's party id
            recv_timeout: Seconds to wait for frames and for the peer to connect

        Returns:
            Connected endpoint
        """
        settings = load_settings()
        timeout = settings.recv_timeout if recv_timeout is None else recv_timeout
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
            server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            server.bind((host, port))
            server.listen(1)
            server.settimeout(timeout)
            logger.info(f"Party {party_id} listening on {host}:{port}")
            try:
                conn, addr = server.accept()
            except socket.timeout as e:
                raise ProtocolTimeoutError(f"no peer connected to {host}:{port} within {timeout}s") from e
        logger.info(f"Accepted peer from {addr[0]}:{addr[1]}")
        return cls(party_id, conn, timeout)

    @classmethod
    def connect(
        cls,
        host: str,
        port: int,
        party_id: int = 1,
        recv_timeout: Optional[float] = None,
        retries: Optional[int] = None
    ) -> 'TcpEndpoint':
        """Connect to a listening peer, retrying while it starts up."""
        settings = load_settings()
        timeout = settings.recv_timeout if recv_timeout is None else recv_timeout
        attempts = settings.connect_retries if retries is None else retries
        sock = connect_with_retries(host, port, retries=attempts)
        logger.info(f"Party {party_id} connected to {host}:{port}")
        return cls(party_id, sock, timeout)


def tcp_pair(host: str = '127.0.0.1', recv_timeout: Optional[float] = None) -> Tuple[TcpEndpoint, TcpEndpoint]:
    """Create two endpoints connected over localhost TCP (party 0 listens)."""
    port = find_free_port(host)
    with ThreadPoolExecutor(max_workers=1) as pool:
        listener = pool.submit(TcpEndpoint.listen, host, port, 0, recv_timeout)
        one = TcpEndpoint.connect(host, port, 1, recv_timeout)
        zero = listener.result()
    return zero, one


def run_pair(
    party0: Callable[[Endpoint], Any],
    party1: Callable[[Endpoint], Any],
    pair: Optional[Tuple[Endpoint, Endpoint]] = None
) -> Tuple[Any, Any]:
    """
    Run the two halves of a protocol concurrently.

    Args:
        party0: Callable executed with party 0's endpoint
        party1: Callable executed with party 1's endpoint
        pair: Existing endpoints; a fresh in-process pair is created (and
            closed afterwards) when omitted

    Returns:
        Tuple of (party 0 result, party 1 result)

    Raises:
        The first error raised by either party; both endpoints are closed
        so the other party unblocks.
    """
    owned = pair is None
    endpoints = in_process_pair() if owned else pair
    with ThreadPoolExecutor(max_workers=2, thread_name_prefix='flurp-party') as pool:
        futures = [pool.submit(party0, endpoints[0]), pool.submit(party1, endpoints[1])]
        done, _ = wait(futures, return_when=FIRST_EXCEPTION)
        first_error = next((f.exception() for f in futures if f in done and f.exception()), None)
        if first_error is not None:
            logger.error(f"Protocol failed: {first_error!r}")
            for endpoint in endpoints:
                endpoint.close()
            wait(futures)
            errors = [f.exception() for f in futures if f.exception() is not None]
            original = next((e for e in errors if not isinstance(e, ClosedChannelError)), first_error)
            raise original
        results = (futures[0].result(), futures[1].result())
    if owned:
        for endpoint in endpoints:
            endpoint.close()
    return results
