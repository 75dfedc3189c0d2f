"""Minimal message passing: point-to-point, fixed-order collectives, halo exchange."""

import threading

from ..errors import PeerClosed, Timeout
from .base import MAX_MESSAGE, Communicator, Message
from .halo import field_checksum, gather_field, halo_exchange, scatter_field
from .inprocess import InProcessComm, InProcessWorld
from .socket import SocketComm, make_listener

BACKENDS = ("inprocess", "socket")


def comm_init(backend, size, rank=None, address=None, timeout=60.0, rendezvous_timeout=30.0,
              max_message=MAX_MESSAGE):
    """Create communicators.

    ``inprocess`` returns the list of all ``size`` rank endpoints (drive each
    from its own thread). ``socket`` joins the mesh as ``rank`` and returns
    that single endpoint.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if backend == "inprocess":
        return InProcessWorld(size).communicators(timeout=timeout, max_message=max_message)
    if backend == "socket":
        if rank is None:
            raise ValueError("socket backend needs this process's rank")
        return SocketComm(rank, size, address=address, timeout=timeout,
                          rendezvous_timeout=rendezvous_timeout, max_message=max_message)
    raise ValueError(f"unknown backend {backend!r}")


def run_ranks(size, fn, backend="inprocess", timeout=60.0, **kw):
    """Run ``fn(comm)`` on ``size`` ranks as threads of this process; return per-rank results.

    With ``backend="socket"`` every thread still talks over real TCP sockets.
    The first failing rank's exception (lowest rank) is re-raised.
    """
    results = [None] * size
    errors = [None] * size

    if backend == "inprocess":
        comms = comm_init("inprocess", size, timeout=timeout, **kw)

        def make(r):
            return comms[r]
    elif backend == "socket":
        listener = make_listener(("127.0.0.1", 0))
        address = listener.getsockname()

        def make(r):
            return SocketComm(r, size, address=address, timeout=timeout,
                              listener=listener if r == 0 else None, **kw)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    def body(r):
        comm = None
        try:
            comm = make(r)
            results[r] = fn(comm)
            comm.barrier()
        except BaseException as exc:  # noqa: BLE001 - re-raised below
            errors[r] = exc
        finally:
            if comm is not None:
                comm.close()

    if size == 1:
        body(0)
    else:
        threads = [threading.Thread(target=body, args=(r,), name=f"lf-rank-{r}") for r in range(size)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    failed = [e for e in errors if e is not None]
    if failed:
        # a peer's PeerClosed/Timeout is usually fallout from the real failure
        root = [e for e in failed if not isinstance(e, (PeerClosed, Timeout))]
        raise (root or failed)[0]
    return results


__all__ = [
    "BACKENDS", "Communicator", "InProcessComm", "InProcessWorld", "Message", "SocketComm",
    "comm_init", "field_checksum", "gather_field", "halo_exchange", "run_ranks", "scatter_field",
]
