"""Gauge configuration files.

Layout::

    latticefarm-v1
    dims Lx Ly Lz Lt
    rank_grid Px Py Pz Pt        (grid at write time, informational)
    beta <float>
    c0 <float>
    c1 <float>
    sweeps <int>
    seed <int>
    <payload>   V*4*9 complex entries as little-endian float64 (re, im);
                sites x fastest, then mu = 0..3, then row-major 3x3
    <footer>    64-bit FNV-1a of the payload bytes, little-endian uint64
"""

import json

import numpy as np

from .comm.halo import checksum_bytes, gather_field, payload_bytes, scatter_field
from .errors import ChecksumMismatch, FormatError
from .lattice import NDIM
from .su3 import UNITARITY_TOL

MAGIC = b"latticefarm-v1"
_FIELDS = ("dims", "rank_grid", "beta", "c0", "c1", "sweeps", "seed")


def write_config(path, global_links, meta, rank_grid=(1, 1, 1, 1)):
    """Serial writer for a whole-lattice (Lt, Lz, Ly, Lx, 4, 3, 3) array."""
    lt, lz, ly, lx = global_links.shape[:4]
    payload = payload_bytes(global_links)
    header = "\n".join([
        MAGIC.decode(),
        f"dims {lx} {ly} {lz} {lt}",
        "rank_grid " + " ".join(str(int(p)) for p in rank_grid),
        f"beta {float(meta.get('beta', 0.0))!r}",
        f"c0 {float(meta.get('c0', 1.0))!r}",
        f"c1 {float(meta.get('c1', 0.0))!r}",
        f"sweeps {int(meta.get('sweep', 0))}",
        f"seed {int(meta.get('seed', 0))}",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)
        fh.write(checksum_bytes(payload).to_bytes(8, "little"))


def read_config(path, check_unitarity=True, tol=UNITARITY_TOL):
    """Return (global_links, meta). Raises FormatError / ChecksumMismatch."""
    with open(path, "rb") as fh:
        lines = [fh.readline() for _ in range(1 + len(_FIELDS))]
        rest = fh.read()
    if lines[0].rstrip(b"\n") != MAGIC:
        raise FormatError(f"{path}: not a latticefarm-v1 file")
    meta = {}
    try:
        for key, raw in zip(_FIELDS, lines[1:]):
            name, *vals = raw.decode("ascii").split()
            if name != key:
                raise FormatError(f"{path}: expected header field {key!r}, found {name!r}")
            if key in ("dims", "rank_grid"):
                meta[key] = tuple(int(v) for v in vals)
            elif key in ("sweeps", "seed"):
                meta[key] = int(vals[0])
            else:
                meta[key] = float(vals[0])
    except (ValueError, IndexError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from None
    if len(meta["dims"]) != NDIM:
        raise FormatError(f"{path}: dims needs four entries")
    lx, ly, lz, lt = meta["dims"]
    nbytes = lx * ly * lz * lt * NDIM * 9 * 16
    if len(rest) != nbytes + 8:
        raise FormatError(f"{path}: expected {nbytes + 8} bytes after header, found {len(rest)}")
    payload, footer = rest[:nbytes], rest[nbytes:]
    if checksum_bytes(payload) != int.from_bytes(footer, "little"):
        raise ChecksumMismatch(f"{path}: payload checksum mismatch")
    links = np.frombuffer(payload, dtype="<c16").astype(np.complex128).reshape(lt, lz, ly, lx, NDIM, 3, 3)
    if check_unitarity:
        u = links.reshape(-1, 3, 3)
        if not np.all(np.isfinite(u.view(np.float64))):
            raise FormatError(f"{path}: non-finite link entries")
        err = np.max(np.abs(np.conj(np.swapaxes(u, -1, -2)) @ u - np.eye(3)))
        det = np.max(np.abs(np.linalg.det(u) - 1.0))
        if err > tol or det > tol:
            raise FormatError(f"{path}: links not in SU(3) (unitarity {err:.2e}, det {det:.2e})")
    return links, meta


def save_field(path, field, comm):
    """Collective: gather to rank 0 and write."""
    full = gather_field(field, comm)
    if comm.rank == 0:
        write_config(path, full, field.meta(), field.geometry.rank_grid)
    comm.barrier()


def load_field(path, geometry, comm):
    """Collective: rank 0 reads, every rank receives its block with fresh halos."""
    if comm.rank == 0:
        links, meta = read_config(path)
        if tuple(meta["dims"]) != tuple(geometry.global_dims):
            raise FormatError(f"{path}: file dims {meta['dims']} differ from {geometry.global_dims}")
        hdr = json.dumps([meta["beta"], meta["c0"], meta["c1"], meta["sweeps"], meta["seed"]]).encode()
    else:
        links, hdr = None, None
    beta, c0, c1, sweep, seed = json.loads(comm.bcast_bytes(hdr))
    return scatter_field(links, geometry, comm, beta=beta, c0=c0, c1=c1, sweep=sweep, seed=seed)
