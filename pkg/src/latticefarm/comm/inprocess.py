"""Ranks as threads of one process, with one FIFO queue per (source, dest, tag)."""

import queue
import threading
import time

from ..errors import PeerClosed, Timeout
from .base import Communicator

_POLL = 0.05


class InProcessWorld:
    def __init__(self, size):
        if size < 1:
            raise ValueError("size must be >= 1")
        self.size = size
        self._queues = {}
        self._lock = threading.Lock()
        self.closed = set()

    def channel(self, src, dst, tag):
        key = (src, dst, tag)
        q = self._queues.get(key)
        if q is None:
            with self._lock:
                q = self._queues.setdefault(key, queue.Queue())
        return q

    def communicators(self, timeout=60.0, **kw):
        return [InProcessComm(self, r, timeout=timeout, **kw) for r in range(self.size)]


class InProcessComm(Communicator):
    backend = "inprocess"

    def __init__(self, world, rank, timeout=60.0, **kw):
        super().__init__(rank, world.size, timeout=timeout, **kw)
        self.world = world

    def _send(self, dest, tag, payload):
        if dest in self.world.closed:
            raise PeerClosed(f"rank {dest} has exited")
        self.world.channel(self.rank, dest, tag).put(payload)

    def _recv(self, source, tag, timeout):
        q = self.world.channel(source, self.rank, tag)
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            try:
                return q.get(timeout=_POLL)
            except queue.Empty:
                pass
            if source in self.world.closed and q.empty():
                raise PeerClosed(f"rank {source} exited before sending tag {tag}")
            if deadline is not None and time.monotonic() > deadline:
                raise Timeout(f"rank {self.rank}: no message from {source} tag {tag} within {timeout}s")

    def close(self):
        self.world.closed.add(self.rank)
