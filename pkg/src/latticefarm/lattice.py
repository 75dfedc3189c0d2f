"""4D periodic lattice geometry, rank-grid decomposition, and gauge-field storage.

Coordinates are ``(x, y, z, t)`` with x fastest everywhere: in the global
lexicographic site index, in the rank numbering, and in memory. Local arrays
are laid out ``[t, z, y, x, mu, row, col]`` with a halo of ``halo_depth``
sites on both sides of every dimension.
"""

from dataclasses import dataclass, field
from functools import cached_property
from math import prod

import numpy as np

from .errors import BadDecomposition, HaloMiss, OutOfBounds, SizeMismatch
from .rng import HOT_START_SWEEP
from .su3 import random_su3_batch, unitarity_error

NDIM = 4
HALO_DEPTH = 2


def _check_coord(coord, dims):
    if len(coord) != NDIM or any(not 0 <= c < L for c, L in zip(coord, dims)):
        raise OutOfBounds(f"site {tuple(coord)} outside lattice {tuple(dims)}")


def site_index(coord, dims):
    """Lexicographic index ``x + Lx*(y + Ly*(z + Lz*t))``."""
    _check_coord(coord, dims)
    x, y, z, t = coord
    Lx, Ly, Lz, _ = dims
    return x + Lx * (y + Ly * (z + Lz * t))


def site_coord(index, dims):
    if not 0 <= index < prod(dims):
        raise OutOfBounds(f"site index {index} outside [0, {prod(dims)})")
    out = []
    for L in dims:
        out.append(index % L)
        index //= L
    return tuple(out)


def neighbor(coord, mu, sign, dims):
    c = list(coord)
    c[mu] = (c[mu] + sign) % dims[mu]
    return tuple(c)


def parity_class(coord, m):
    if m not in (2, 4):
        raise ValueError("schedule modulus must be 2 or 4")
    x, y, z, t = (c % m for c in coord)
    return x + m * (y + m * (z + m * t))


@dataclass(frozen=True)
class Geometry:
    global_dims: tuple
    rank_grid: tuple
    local_dims: tuple
    halo_depth: int = HALO_DEPTH

    @property
    def size(self):
        return prod(self.rank_grid)

    @property
    def volume(self):
        return prod(self.global_dims)

    @property
    def local_volume(self):
        return prod(self.local_dims)

    @property
    def decomposed(self):
        return tuple(p > 1 for p in self.rank_grid)

    def rank_coords(self, rank):
        if not 0 <= rank < self.size:
            raise OutOfBounds(f"rank {rank} outside [0, {self.size})")
        out = []
        for p in self.rank_grid:
            out.append(rank % p)
            rank //= p
        return tuple(out)

    def rank_of(self, rank_coords):
        px, py, pz, pt = (c % p for c, p in zip(rank_coords, self.rank_grid))
        Px, Py, Pz, _ = self.rank_grid
        return px + Px * (py + Py * (pz + Pz * pt))

    def neighbor_rank(self, rank, mu, sign):
        c = list(self.rank_coords(rank))
        c[mu] += sign
        return self.rank_of(c)

    def origin(self, rank):
        return tuple(c * l for c, l in zip(self.rank_coords(rank), self.local_dims))

    @property
    def padded_dims(self):
        return tuple(l + 2 * self.halo_depth for l in self.local_dims)

    @property
    def array_shape(self):
        """Padded site shape in memory order (t, z, y, x)."""
        return tuple(reversed(self.padded_dims))

    @property
    def strides(self):
        """Flat padded-index step for a unit move in each direction mu."""
        px, py, pz, _ = self.padded_dims
        return np.array([1, px, px * py, px * py * pz], dtype=np.int64)

    def padded_flat(self, local):
        """Flat padded index of a local coordinate (interior starts at 0, halo is negative/overflow)."""
        h = self.halo_depth
        return int(sum((c + h) * s for c, s in zip(local, self.strides)))


def build_geometry(global_dims, rank_grid, comm_size, halo_depth=HALO_DEPTH, min_local=None):
    """Validate a decomposition and return its Geometry.

    ``min_local`` raises the minimum local extent for decomposed dimensions
    (the improved action asks for 4).
    """
    global_dims = tuple(int(d) for d in global_dims)
    rank_grid = tuple(int(p) for p in rank_grid)
    if len(global_dims) != NDIM or len(rank_grid) != NDIM:
        raise BadDecomposition("dims and rank grid need four entries")
    if any(d <= 0 for d in global_dims) or any(p <= 0 for p in rank_grid):
        raise BadDecomposition("dims and rank grid must be positive")
    for mu, (L, P) in enumerate(zip(global_dims, rank_grid)):
        if L % P:
            raise BadDecomposition(f"dimension {mu}: extent {L} not divisible by {P} ranks")
    if prod(rank_grid) != comm_size:
        raise SizeMismatch(f"rank grid {rank_grid} needs {prod(rank_grid)} ranks, communicator has {comm_size}")
    local = tuple(L // P for L, P in zip(global_dims, rank_grid))
    need = max(halo_depth, min_local or 0)
    for mu, (l, P) in enumerate(zip(local, rank_grid)):
        floor = need if P > 1 else halo_depth
        if l < floor:
            raise BadDecomposition(f"dimension {mu}: local extent {l} below minimum {floor}")
    return Geometry(global_dims, rank_grid, local, halo_depth)


def owner_rank(coord, geometry):
    _check_coord(coord, geometry.global_dims)
    return geometry.rank_of([c // l for c, l in zip(coord, geometry.local_dims)])


@dataclass
class GaugeField:
    """Rank-local links with halos plus run metadata."""

    geometry: Geometry
    rank: int
    links: np.ndarray
    beta: float = 0.0
    c0: float = 1.0
    c1: float = 0.0
    sweep: int = 0
    seed: int = 0
    _class_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def cold(cls, geometry, rank, **meta):
        links = np.zeros(geometry.array_shape + (NDIM, 3, 3), dtype=np.complex128)
        links[..., 0, 0] = links[..., 1, 1] = links[..., 2, 2] = 1.0
        return cls(geometry, rank, links, **meta)

    @classmethod
    def hot(cls, geometry, rank, seed, **meta):
        f = cls.cold(geometry, rank, seed=seed, **meta)
        idx, gsite = f.interior_sites
        sites = np.repeat(gsite, NDIM)
        mus = np.tile(np.arange(NDIM, dtype=np.int64), gsite.shape[0])
        f.flat[np.repeat(idx, NDIM), mus] = random_su3_batch(seed, sites, mus, HOT_START_SWEEP)
        return f

    @property
    def flat(self):
        return self.links.reshape(-1, NDIM, 3, 3)

    @property
    def origin(self):
        return self.geometry.origin(self.rank)

    def interior(self):
        h = self.geometry.halo_depth
        return self.links[h:-h, h:-h, h:-h, h:-h]

    @cached_property
    def interior_sites(self):
        """(padded flat index, global site index) of every owned site, global lexicographic order."""
        g = self.geometry
        lx, ly, lz, lt = g.local_dims
        t, z, y, x = np.meshgrid(np.arange(lt), np.arange(lz), np.arange(ly), np.arange(lx), indexing="ij")
        local = [a.ravel() for a in (x, y, z, t)]
        h = g.halo_depth
        idx = sum((c + h) * s for c, s in zip(local, g.strides))
        glob = [c + o for c, o in zip(local, self.origin)]
        Lx, Ly, Lz, _ = g.global_dims
        gsite = glob[0] + Lx * (glob[1] + Ly * (glob[2] + Lz * glob[3]))
        return idx.astype(np.int64), gsite.astype(np.int64)

    def global_coords(self):
        _, gsite = self.interior_sites
        out = []
        rem = gsite.copy()
        for L in self.geometry.global_dims:
            out.append(rem % L)
            rem //= L
        return out

    def class_sites(self, m):
        """Owned sites per schedule class, each list in global lexicographic order."""
        if m not in self._class_cache:
            idx, gsite = self.interior_sites
            x, y, z, t = (c % m for c in self.global_coords())
            cls = x + m * (y + m * (z + m * t))
            self._class_cache[m] = [(idx[cls == c], gsite[cls == c]) for c in range(m ** NDIM)]
        return self._class_cache[m]

    def local_index(self, coord):
        """Padded flat index holding global site ``coord``; HaloMiss if not resident.

        Owned sites resolve to the interior; otherwise the nearest halo copy.
        """
        g = self.geometry
        _check_coord(coord, g.global_dims)
        h = g.halo_depth
        local = []
        for c, o, l, L in zip(coord, self.origin, g.local_dims, g.global_dims):
            rel = (c - o) % L
            if rel < l:
                local.append(rel)
            elif rel - L >= -h:
                local.append(rel - L)
            elif rel < l + h:
                local.append(rel)
            else:
                raise HaloMiss(f"site {tuple(coord)} not resident on rank {self.rank}")
        return g.padded_flat(local), tuple(local)

    def require_reach(self, local, reach_lo, reach_hi):
        """HaloMiss unless every offset in [reach_lo, reach_hi] per dim stays in padded storage."""
        h = self.geometry.halo_depth
        for c, l, lo, hi in zip(local, self.geometry.local_dims, reach_lo, reach_hi):
            if c + lo < -h or c + hi >= l + h:
                raise HaloMiss(f"loop at local site {local} leaves the halo")

    def max_unitarity_error(self):
        return unitarity_error(self.interior())

    def local_block(self):
        """Owned links as a contiguous (lt, lz, ly, lx, 4, 3, 3) array."""
        return np.ascontiguousarray(self.interior())

    def set_local_block(self, block):
        self.interior()[...] = block

    def meta(self):
        return dict(beta=self.beta, c0=self.c0, c1=self.c1, sweep=self.sweep, seed=self.seed)


def global_block_slices(geometry, rank):
    """Slices of the global (t, z, y, x) array owned by ``rank``."""
    o = geometry.origin(rank)
    return tuple(slice(s, s + l) for s, l in reversed(list(zip(o, geometry.local_dims))))
