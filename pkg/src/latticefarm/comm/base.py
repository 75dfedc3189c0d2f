"""Communicator interface and the collectives built on point-to-point messages.

Wire frame (both backends use the same framing when bytes cross a socket)::

    offset  size  field
    0       4     magic  0x4D52464C ("LFRM" little-endian), uint32
    4       4     tag    int32
    8       4     source uint32
    12      4     length uint32, payload bytes
    16      ...   payload

User tags are non-negative; negative tags are reserved for collectives.
"""

import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass

from ..errors import MessageTooLarge

FRAME = struct.Struct("<IiII")
MAGIC = 0x4D52464C
MAX_MESSAGE = 64 * 1024 * 1024

TAG_REDUCE = -1
TAG_BCAST = -2
TAG_BARRIER_IN = -3
TAG_BARRIER_OUT = -4
TAG_GATHER = -5
TAG_HANDSHAKE = -1000
TAG_HALO = -100  # minus (2 * dim + side)

_DOUBLE = struct.Struct("<d")


@dataclass(frozen=True)
class Message:
    source: int
    dest: int
    tag: int
    payload: bytes

    def encode(self):
        return FRAME.pack(MAGIC, self.tag, self.source, len(self.payload)) + self.payload


class Communicator(ABC):
    """One rank's endpoint. Collectives must be entered by every rank in the same order."""

    backend = "abstract"

    def __init__(self, rank, size, timeout=60.0, max_message=MAX_MESSAGE):
        self.rank = rank
        self.size = size
        self.timeout = timeout
        self.max_message = max_message

    def _check_peer(self, peer):
        if not 0 <= peer < self.size or peer == self.rank:
            raise ValueError(f"rank {self.rank}: invalid peer {peer}")

    def send(self, dest, tag, payload):
        self._check_peer(dest)
        payload = bytes(payload)
        if len(payload) > self.max_message:
            raise MessageTooLarge(f"{len(payload)} bytes exceeds limit {self.max_message}")
        self._send(dest, int(tag), payload)

    def recv(self, source, tag, timeout=None):
        self._check_peer(source)
        return self._recv(source, int(tag), self.timeout if timeout is None else timeout)

    @abstractmethod
    def _send(self, dest, tag, payload): ...

    @abstractmethod
    def _recv(self, source, tag, timeout): ...

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # collectives: gather to rank 0 in ascending rank order, then broadcast

    def gather_bytes(self, payload, tag=TAG_GATHER):
        """Rank 0 gets the list of every rank's payload; others get None."""
        if self.rank != 0:
            self.send(0, tag, payload)
            return None
        return [bytes(payload)] + [self.recv(r, tag) for r in range(1, self.size)]

    def bcast_bytes(self, payload=None, tag=TAG_BCAST):
        if self.rank == 0:
            for r in range(1, self.size):
                self.send(r, tag, payload)
            return bytes(payload)
        return self.recv(0, tag)

    def allreduce(self, value, op):
        parts = self.gather_bytes(_DOUBLE.pack(value), TAG_REDUCE)
        out = None
        if self.rank == 0:
            vals = [_DOUBLE.unpack(p)[0] for p in parts]
            acc = vals[0]
            for v in vals[1:]:
                acc = op(acc, v)
            out = _DOUBLE.pack(acc)
        return _DOUBLE.unpack(self.bcast_bytes(out, TAG_REDUCE))[0]

    def allreduce_sum(self, value):
        """Left-to-right sum over ranks 0..size-1; bit-identical on every rank."""
        return self.allreduce(float(value), lambda a, b: a + b)

    def allreduce_max(self, value):
        return self.allreduce(float(value), max)

    def barrier(self):
        if self.size == 1:
            return
        if self.rank == 0:
            for r in range(1, self.size):
                self.recv(r, TAG_BARRIER_IN)
            for r in range(1, self.size):
                self.send(r, TAG_BARRIER_OUT, b"")
        else:
            self.send(0, TAG_BARRIER_IN, b"")
            self.recv(0, TAG_BARRIER_OUT)
