"""TCP backend: full mesh of sockets, one reader thread per peer.

Rendezvous: rank 0 listens at the configured address. Every other rank opens
its own listener, connects to rank 0 and announces ``(rank, listen address)``.
Rank 0 answers with the address table; then rank r connects to ranks
1..r-1 and accepts from ranks r+1..size-1. Each connection starts with a
handshake frame carrying the connecting rank in the source field.
"""

import json
import os
import queue
import socket
import threading
import time

from ..errors import DuplicateRank, PeerClosed, RendezvousTimeout, Timeout
from .base import FRAME, MAGIC, MAX_MESSAGE, TAG_HANDSHAKE, Communicator, Message

_CLOSED = object()


def parse_address(addr):
    if isinstance(addr, tuple):
        return addr[0], int(addr[1])
    host, _, port = str(addr).rpartition(":")
    return host or "127.0.0.1", int(port)


def default_address():
    return parse_address(os.environ.get("LATTICEFARM_RENDEZVOUS", "127.0.0.1:29500"))


def _recv_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise ConnectionError("peer closed connection")
        buf += chunk
    return bytes(buf)


def _read_frame(sock, limit):
    magic, tag, source, length = FRAME.unpack(_recv_exact(sock, FRAME.size))
    if magic != MAGIC:
        raise ConnectionError(f"bad frame magic {magic:#x}")
    if length > limit:
        raise ConnectionError(f"frame of {length} bytes exceeds limit")
    return tag, source, _recv_exact(sock, length)


def _connect(addr, deadline):
    while True:
        try:
            s = socket.create_connection(addr, timeout=max(0.1, min(1.0, deadline - time.monotonic())))
            s.settimeout(None)
            s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return s
        except OSError:
            if time.monotonic() > deadline:
                raise RendezvousTimeout(f"cannot reach rendezvous at {addr[0]}:{addr[1]}") from None
            time.sleep(0.05)


def _accept(listener, deadline):
    listener.settimeout(max(0.01, deadline - time.monotonic()))
    try:
        s, _ = listener.accept()
    except socket.timeout:
        raise RendezvousTimeout("timed out waiting for peers to connect") from None
    s.settimeout(None)
    s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return s


def make_listener(addr=("127.0.0.1", 0)):
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(addr)
    srv.listen(128)
    return srv


class SocketComm(Communicator):
    backend = "socket"

    def __init__(self, rank, size, address=None, timeout=60.0, rendezvous_timeout=30.0,
                 listener=None, max_message=MAX_MESSAGE):
        """Join the mesh. Rank 0 may pass an already-bound ``listener`` (useful with port 0)."""
        super().__init__(rank, size, timeout=timeout, max_message=max_message)
        self.address = parse_address(address) if address is not None else default_address()
        self._socks = {}
        self._send_locks = {}
        self._inbox = {}
        self._inbox_lock = threading.Lock()
        self._closed_peers = set()
        self._readers = []
        self._closing = False
        if size > 1:
            self._rendezvous(listener, time.monotonic() + rendezvous_timeout)
        elif listener is not None:
            listener.close()
        for peer, s in self._socks.items():
            self._send_locks[peer] = threading.Lock()
            t = threading.Thread(target=self._reader, args=(peer, s), daemon=True,
                                 name=f"lf-reader-{rank}-{peer}")
            t.start()
            self._readers.append(t)

    def _hello(self, s, payload=b""):
        s.sendall(Message(self.rank, -1, TAG_HANDSHAKE, payload).encode())

    def _rendezvous(self, listener, deadline):
        size = self.size
        if self.rank == 0:
            srv = listener or make_listener(self.address)
            try:
                table = {0: list(srv.getsockname())}
                while len(self._socks) < size - 1:
                    s = _accept(srv, deadline)
                    _, src, payload = _read_frame(s, self.max_message)
                    if src in self._socks or not 0 < src < size:
                        s.close()
                        raise DuplicateRank(f"rank {src} announced twice or out of range")
                    self._socks[src] = s
                    table[src] = json.loads(payload)
                blob = json.dumps(table).encode()
                for s in self._socks.values():
                    self._hello(s, blob)
            finally:
                srv.close()
            return

        own = listener or make_listener((self.address[0], 0))
        try:
            s0 = _connect(self.address, deadline)
            self._hello(s0, json.dumps(list(own.getsockname())).encode())
            self._socks[0] = s0
            s0.settimeout(max(0.1, deadline - time.monotonic()))
            try:
                _, _, payload = _read_frame(s0, self.max_message)
            except (socket.timeout, ConnectionError) as exc:
                raise RendezvousTimeout(f"no address table from rank 0: {exc}") from None
            s0.settimeout(None)
            table = {int(k): tuple(v) for k, v in json.loads(payload).items()}
            for peer in range(1, self.rank):
                s = _connect(table[peer], deadline)
                self._hello(s)
                self._socks[peer] = s
            for _ in range(self.rank + 1, size):
                s = _accept(own, deadline)
                _, src, _ = _read_frame(s, self.max_message)
                if src in self._socks or not self.rank < src < size:
                    s.close()
                    raise DuplicateRank(f"rank {src} connected twice or out of order")
                self._socks[src] = s
        finally:
            own.close()

    def _box(self, peer, tag):
        key = (peer, tag)
        q = self._inbox.get(key)
        if q is None:
            with self._inbox_lock:
                q = self._inbox.setdefault(key, queue.Queue())
        return q

    def _reader(self, peer, s):
        try:
            while True:
                tag, src, payload = _read_frame(s, self.max_message)
                self._box(src, tag).put(payload)
        except (OSError, ConnectionError, ValueError):
            pass
        finally:
            self._closed_peers.add(peer)
            with self._inbox_lock:
                boxes = [q for (p, _), q in self._inbox.items() if p == peer]
            for q in boxes:
                q.put(_CLOSED)

    def _send(self, dest, tag, payload):
        frame = Message(self.rank, dest, tag, payload).encode()
        try:
            with self._send_locks[dest]:
                self._socks[dest].sendall(frame)
        except OSError as exc:
            raise PeerClosed(f"send to rank {dest} failed: {exc}") from None

    def _recv(self, source, tag, timeout):
        q = self._box(source, tag)
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            try:
                item = q.get(timeout=0.05)
            except queue.Empty:
                if source in self._closed_peers and q.empty():
                    raise PeerClosed(f"rank {source} closed before sending tag {tag}") from None
                if deadline is not None and time.monotonic() > deadline:
                    raise Timeout(f"rank {self.rank}: no message from {source} tag {tag} within {timeout}s") from None
                continue
            if item is _CLOSED:
                q.put(_CLOSED)
                raise PeerClosed(f"rank {source} closed before sending tag {tag}")
            return item

    def close(self):
        if self._closing:
            return
        self._closing = True
        for s in self._socks.values():
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
