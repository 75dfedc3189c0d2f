import hashlib
import struct
import threading
import time

import numpy as np
import pytest

from latticefarm.comm import comm_init, run_ranks
from latticefarm.comm.base import FRAME, MAGIC, Message
from latticefarm.comm.socket import SocketComm, make_listener
from latticefarm.errors import (
    DuplicateRank, MessageTooLarge, PeerClosed, RendezvousTimeout, Timeout,
)

BACKENDS = ["inprocess", "socket"]


def test_inprocess_init_sizes():
    (c,) = comm_init("inprocess", 1)
    assert (c.rank, c.size) == (0, 1)
    comms = comm_init("inprocess", 4)
    assert [c.rank for c in comms] == [0, 1, 2, 3]


def test_bad_backend_and_size():
    with pytest.raises(ValueError):
        comm_init("carrier-pigeon", 2)
    with pytest.raises(ValueError):
        comm_init("inprocess", 0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ping_and_fifo(backend):
    def body(c):
        if c.rank == 0:
            c.send(1, 5, b"abc")
            c.send(1, 5, b"second")
            return None
        return c.recv(0, 5), c.recv(0, 5)

    assert run_ranks(2, body, backend=backend)[1] == (b"abc", b"second")


@pytest.mark.parametrize("backend", BACKENDS)
def test_tags_are_separate_channels(backend):
    def body(c):
        if c.rank == 0:
            c.send(1, 1, b"one")
            c.send(1, 2, b"two")
            return None
        return c.recv(0, 2), c.recv(0, 1)

    assert run_ranks(2, body, backend=backend)[1] == (b"two", b"one")


@pytest.mark.parametrize("backend", BACKENDS)
def test_one_mib_round_trip(backend):
    payload = np.random.default_rng(1).integers(0, 256, 1 << 20, dtype=np.uint8).tobytes()

    def body(c):
        if c.rank == 0:
            c.send(1, 3, payload)
            return hashlib.sha256(c.recv(1, 3)).hexdigest()
        c.send(0, 3, c.recv(0, 3))
        return None

    assert run_ranks(2, body, backend=backend)[0] == hashlib.sha256(payload).hexdigest()


@pytest.mark.parametrize("backend", BACKENDS)
def test_allreduce_fixed_order(backend):
    vals = (1e16, 1.0, -1e16, 1.0)
    oracle = 0.0
    for v in vals:
        oracle += v
    out = run_ranks(4, lambda c: c.allreduce_sum(vals[c.rank]), backend=backend)
    assert [struct.pack("<d", x) for x in out] == [struct.pack("<d", oracle)] * 4
    assert oracle == 1.0  # order matters: a tree sum would give 2.0 or 0.0


def test_allreduce_rank_sum_and_identity():
    assert run_ranks(4, lambda c: c.allreduce_sum(float(c.rank))) == [6.0] * 4
    assert run_ranks(1, lambda c: c.allreduce_sum(2.5)) == [2.5]
    assert run_ranks(3, lambda c: c.allreduce_max(float(c.rank))) == [2.0] * 3


@pytest.mark.parametrize("backend", BACKENDS)
def test_barrier_no_early_exit(backend):
    """Staggered arrivals; every exit is stamped after the last arrival."""
    lock = threading.Lock()
    clock = [0]
    arrive, leave = {}, {}

    def tick():
        with lock:
            clock[0] += 1
            return clock[0]

    def body(c):
        time.sleep(0.05 * c.rank)
        arrive[c.rank] = tick()
        c.barrier()
        leave[c.rank] = tick()
        for _ in range(100):
            c.barrier()

    run_ranks(4, body, backend=backend)
    assert min(leave.values()) > max(arrive.values())


def test_barrier_single_rank_noop():
    run_ranks(1, lambda c: c.barrier())


@pytest.mark.parametrize("backend", BACKENDS)
def test_fifo_stress(backend):
    n = 100_000

    def body(c):
        if c.rank == 0:
            for i in range(n):
                c.send(1, 9, i.to_bytes(4, "little"))
            return None
        got = [int.from_bytes(c.recv(0, 9), "little") for _ in range(n)]
        return got == list(range(n))

    assert run_ranks(2, body, backend=backend, timeout=120)[1]


def test_send_to_self_rejected():
    def body(c):
        with pytest.raises(ValueError):
            c.send(c.rank, 1, b"x")
        with pytest.raises(ValueError):
            c.send(5, 1, b"x")

    run_ranks(2, body)


@pytest.mark.parametrize("backend", BACKENDS)
def test_message_too_large(backend):
    def body(c):
        if c.rank == 0:
            with pytest.raises(MessageTooLarge):
                c.send(1, 1, bytes(1025))

    run_ranks(2, body, backend=backend, max_message=1024)


def test_recv_timeout():
    a, b = comm_init("inprocess", 2, timeout=0.2)
    with pytest.raises(Timeout):
        b.recv(0, 1)


@pytest.mark.parametrize("backend", BACKENDS)
def test_peer_closed(backend):
    def body(c):
        if c.rank == 0:
            c.close()
            return None
        with pytest.raises(PeerClosed):
            c.recv(0, 1)
        return True

    # rank 0 closes before the final barrier, so the run itself reports the closure
    with pytest.raises((PeerClosed, Timeout)):
        run_ranks(2, body, backend=backend, timeout=5)


def test_rendezvous_timeout_dead_address():
    with pytest.raises(RendezvousTimeout):
        SocketComm(1, 2, address=("127.0.0.1", 1), rendezvous_timeout=0.5)


def test_duplicate_rank_rejected():
    listener = make_listener()
    addr = listener.getsockname()
    errors = []

    def root():
        try:
            SocketComm(0, 3, address=addr, listener=listener, rendezvous_timeout=5)
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    def joiner():
        try:
            SocketComm(1, 3, address=addr, rendezvous_timeout=3)
        except Exception:  # noqa: BLE001
            pass

    threads = [threading.Thread(target=root)] + [threading.Thread(target=joiner) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(15)
    assert any(isinstance(e, DuplicateRank) for e in errors)


def test_frame_layout():
    m = Message(source=2, dest=0, tag=7, payload=b"hello")
    raw = m.encode()
    assert len(raw) == FRAME.size + 5 == 21
    assert FRAME.unpack(raw[:16]) == (MAGIC, 7, 2, 5)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gather_and_bcast(backend):
    def body(c):
        parts = c.gather_bytes(bytes([c.rank]) * (c.rank + 1))
        got = c.bcast_bytes(b"root" if c.rank == 0 else None)
        return parts, got

    out = run_ranks(3, body, backend=backend)
    assert out[0][0] == [b"\x00", b"\x01\x01", b"\x02\x02\x02"]
    assert out[1][0] is None
    assert all(o[1] == b"root" for o in out)
