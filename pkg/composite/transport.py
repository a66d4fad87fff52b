"""
Collective transport between ranks.

`Transport` is the contract the compositing protocol is written against.
`InProcessRendezvous` hands one `InProcessTransport` per rank to workers
running in a single address space; every collective is a barrier.
"""

import struct
import threading
from abc import ABC, abstractmethod

from common.errors import ProtocolError, TransportError

FRAME_HEADER = struct.Struct("<BQ")


def frame(step: int, payload: bytes) -> bytes:
    return FRAME_HEADER.pack(step, len(payload)) + bytes(payload)


def unframe(data: bytes, step: int, rank: int) -> bytes:
    """Payload of a framed message; the step id and length must match."""
    if len(data) < FRAME_HEADER.size:
        raise ProtocolError(rank, step, f"frame of {len(data)} bytes has no header")
    got_step, length = FRAME_HEADER.unpack_from(data)
    if got_step != step:
        raise ProtocolError(rank, step, f"expected step {step}, received step {got_step}")
    payload = data[FRAME_HEADER.size:]
    if len(payload) != length:
        raise ProtocolError(rank, step, f"frame announces {length} bytes, carries {len(payload)}")
    return bytes(payload)


class Transport(ABC):
    rank: int
    size: int

    @property
    def is_master(self) -> bool:
        return self.rank == 0

    @abstractmethod
    def all_to_all_variable(self, buffers: list[bytes]) -> list[bytes]:
        """buffers[j] goes to rank j; returns the buffer each rank sent to me, by source rank."""

    @abstractmethod
    def send_to_master(self, payload: bytes) -> None:
        ...

    @abstractmethod
    def master_receive_all(self) -> list[bytes]:
        ...

    @abstractmethod
    def barrier(self) -> None:
        ...

    def abort(self) -> None:
        pass


class InProcessRendezvous:
    """Shared mailboxes and a barrier for `size` ranks."""

    def __init__(self, size: int, timeout: float = 120.0):
        if size < 1:
            raise ValueError(f"rank count must be >= 1, got {size}")
        self.size = size
        self._barrier = threading.Barrier(size, timeout=timeout)
        self._slots = [[b""] * size for _ in range(size)]
        self._master_box = [b""] * size
        self.bytes_sent = [0] * size

    def endpoint(self, rank: int) -> "InProcessTransport":
        if not 0 <= rank < self.size:
            raise ValueError(f"rank {rank} out of range for {self.size} ranks")
        return InProcessTransport(self, rank)

    def endpoints(self) -> list["InProcessTransport"]:
        return [self.endpoint(r) for r in range(self.size)]

    def wait(self, rank: int) -> None:
        try:
            self._barrier.wait()
        except threading.BrokenBarrierError:
            raise TransportError(f"rank {rank}: rendezvous broken (another rank failed or timed out)")

    def abort(self) -> None:
        self._barrier.abort()


class InProcessTransport(Transport):
    def __init__(self, hub: InProcessRendezvous, rank: int):
        self.hub = hub
        self.rank = rank
        self.size = hub.size

    def all_to_all_variable(self, buffers: list[bytes]) -> list[bytes]:
        if len(buffers) != self.size:
            raise TransportError(f"rank {self.rank}: {len(buffers)} buffers for {self.size} ranks")
        for dest, buf in enumerate(buffers):
            self.hub._slots[self.rank][dest] = bytes(buf)
            self.hub.bytes_sent[self.rank] += len(buf)
        self.hub.wait(self.rank)
        received = [self.hub._slots[src][self.rank] for src in range(self.size)]
        # Second barrier keeps the next collective from overwriting unread slots
        self.hub.wait(self.rank)
        return received

    def send_to_master(self, payload: bytes) -> None:
        self.hub._master_box[self.rank] = bytes(payload)
        self.hub.bytes_sent[self.rank] += len(payload)
        self.hub.wait(self.rank)

    def master_receive_all(self) -> list[bytes]:
        if not self.is_master:
            raise TransportError(f"rank {self.rank} is not the master")
        return list(self.hub._master_box)

    def barrier(self) -> None:
        self.hub.wait(self.rank)

    def abort(self) -> None:
        self.hub.abort()
