"""Halo exchange and whole-field gather/scatter over a communicator."""

import numpy as np

from ..kernels import active as _k
from ..lattice import NDIM, GaugeField, global_block_slices
from .base import TAG_GATHER, TAG_HALO


def _slab(axis, sl):
    idx = [slice(None)] * NDIM
    idx[axis] = sl
    return tuple(idx)


def halo_exchange(field: GaugeField, comm):
    """Refresh every halo slab from its owner.

    Dimensions go x, y, z, t; within one, the negative-direction shift
    (low interior slab to the lower neighbour) precedes the positive one.
    Slabs span the full padded extent of the other axes, so corner halos
    pick up values already exchanged in earlier dimensions.
    """
    g = field.geometry
    h = g.halo_depth
    a = field.links
    coords = g.rank_coords(field.rank)
    for d in range(NDIM):
        axis = NDIM - 1 - d
        l = g.local_dims[d]
        lo_int, hi_int = _slab(axis, slice(h, 2 * h)), _slab(axis, slice(l, l + h))
        lo_halo, hi_halo = _slab(axis, slice(0, h)), _slab(axis, slice(l + h, l + 2 * h))
        if g.rank_grid[d] == 1:
            a[hi_halo] = a[lo_int]
            a[lo_halo] = a[hi_int]
            continue
        lower = g.neighbor_rank(field.rank, d, -1)
        upper = g.neighbor_rank(field.rank, d, +1)
        even = coords[d] % 2 == 0
        _shift(comm, a, lower, lo_int, upper, hi_halo, TAG_HALO - 2 * d, even)
        _shift(comm, a, upper, hi_int, lower, lo_halo, TAG_HALO - 2 * d - 1, even)


def _shift(comm, a, dest, src_sl, source, dst_sl, tag, send_first):
    payload = np.ascontiguousarray(a[src_sl]).tobytes()
    shape = a[dst_sl].shape
    if send_first:
        comm.send(dest, tag, payload)
        data = comm.recv(source, tag)
    else:
        data = comm.recv(source, tag)
        comm.send(dest, tag, payload)
    a[dst_sl] = np.frombuffer(data, dtype=a.dtype).reshape(shape)


def gather_field(field: GaugeField, comm):
    """Whole lattice as a (Lt, Lz, Ly, Lx, 4, 3, 3) array on rank 0, None elsewhere."""
    g = field.geometry
    parts = comm.gather_bytes(field.local_block().tobytes(), TAG_GATHER)
    if parts is None:
        return None
    out = np.empty(tuple(reversed(g.global_dims)) + (NDIM, 3, 3), dtype=np.complex128)
    block = tuple(reversed(g.local_dims)) + (NDIM, 3, 3)
    for r, p in enumerate(parts):
        out[global_block_slices(g, r)] = np.frombuffer(p, dtype=np.complex128).reshape(block)
    return out


def scatter_field(global_links, geometry, comm, **meta):
    """Inverse of gather_field: rank 0 supplies the array, every rank gets its GaugeField."""
    f = GaugeField.cold(geometry, comm.rank, **meta)
    block = tuple(reversed(geometry.local_dims)) + (NDIM, 3, 3)
    if comm.rank == 0:
        for r in range(1, comm.size):
            comm.send(r, TAG_GATHER, np.ascontiguousarray(global_links[global_block_slices(geometry, r)]).tobytes())
        f.set_local_block(global_links[global_block_slices(geometry, 0)])
    else:
        f.set_local_block(np.frombuffer(comm.recv(0, TAG_GATHER), dtype=np.complex128).reshape(block))
    halo_exchange(f, comm)
    return f


def payload_bytes(global_links):
    """Little-endian doubles, x-fastest sites, mu, row-major 3x3, (re, im) per entry."""
    return np.ascontiguousarray(global_links, dtype="<c16").tobytes()


def checksum_bytes(data):
    return int(_k.fnv1a64(np.frombuffer(data, dtype=np.uint8)))


def field_checksum(field: GaugeField, comm):
    """64-bit FNV-1a of the global payload, identical on every rank."""
    full = gather_field(field, comm)
    blob = checksum_bytes(payload_bytes(full)).to_bytes(8, "little") if full is not None else None
    return int.from_bytes(comm.bcast_bytes(blob), "little")
