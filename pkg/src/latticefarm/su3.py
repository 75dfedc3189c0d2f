"""3x3 complex, SU(3) and SU(2) helpers for single matrices.

Matrices are ``numpy.ndarray`` of shape (3, 3), dtype complex128. SU(2)
elements are carried as quaternion parameters ``(a0, a1, a2, a3)``.
"""

from typing import NamedTuple

import numpy as np

from .errors import DegenerateMatrix
from .kernels import active as _k
from .kernels._np import matmul
from .rng import RngKey

SUBGROUPS = ((0, 1), (1, 2), (0, 2))
UNITARITY_TOL = 1e-10


class SU2Params(NamedTuple):
    a0: float
    a1: float
    a2: float
    a3: float

    def norm2(self):
        return self.a0 ** 2 + self.a1 ** 2 + self.a2 ** 2 + self.a3 ** 2


def identity():
    return np.eye(3, dtype=np.complex128)


def mat_mul(a, b):
    return matmul(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))


def adjoint(a):
    return np.conj(np.asarray(a, dtype=np.complex128)).T.copy()


def trace_re(a):
    return float(a[0, 0].real + a[1, 1].real + a[2, 2].real)


def unitarity_error(u):
    """Max absolute entry of U^dagger U - I (works on batches too)."""
    u = np.asarray(u)
    prod = np.conj(np.swapaxes(u, -1, -2)) @ u
    return float(np.max(np.abs(prod - np.eye(3))))


def is_su3(u, tol=UNITARITY_TOL):
    u = np.asarray(u)
    if not np.all(np.isfinite(u.view(np.float64))):
        return False
    return unitarity_error(u) <= tol and float(np.max(np.abs(np.linalg.det(u) - 1.0))) <= tol


def reunitarize(m):
    """Project a near-unitary matrix onto SU(3) by Gram-Schmidt on the first two rows."""
    out = np.array(m, dtype=np.complex128).reshape(1, 3, 3)
    if _k.reunitarize_many(out) != 0:
        raise DegenerateMatrix("first two rows are (nearly) linearly dependent")
    return out[0]


def su2_matrix(s):
    a0, a1, a2, a3 = s
    return np.array([[a0 + 1j * a3, a2 + 1j * a1], [-a2 + 1j * a1, a0 - 1j * a3]], dtype=np.complex128)


def su2_mul(x, y):
    """Parameters of the product su2_matrix(x) @ su2_matrix(y)."""
    x0, x1, x2, x3 = x
    y0, y1, y2, y3 = y
    return SU2Params(
        x0 * y0 - (x1 * y1 + x2 * y2 + x3 * y3),
        x0 * y1 + y0 * x1 - (x2 * y3 - x3 * y2),
        x0 * y2 + y0 * x2 - (x3 * y1 - x1 * y3),
        x0 * y3 + y0 * x3 - (x1 * y2 - x2 * y1),
    )


def embed_su2(s, subgroup):
    """SU(2) element placed in rows/cols ``SUBGROUPS[subgroup]`` of the identity."""
    i, j = SUBGROUPS[subgroup]
    out = identity()
    blk = su2_matrix(s)
    out[i, i], out[i, j] = blk[0, 0], blk[0, 1]
    out[j, i], out[j, j] = blk[1, 0], blk[1, 1]
    return out


def su2_project(w, subgroup):
    """Quaternion vector b with Re tr(embed(a) @ w) = a . b + const."""
    i, j = SUBGROUPS[subgroup]
    return SU2Params(
        w[i, i].real + w[j, j].real,
        -w[i, j].imag - w[j, i].imag,
        w[j, i].real - w[i, j].real,
        w[j, j].imag - w[i, i].imag,
    )


def random_su3(key: RngKey):
    """Product of three Haar-random SU(2) subgroup elements; deterministic in ``key``."""
    return random_su3_batch(key.seed, np.array([key.site]), np.array([key.mu]), key.sweep, key.draw)[0]


def random_su3_batch(seed, sites, mus, sweep, block0=0):
    sites = np.ascontiguousarray(sites, dtype=np.int64)
    mus = np.ascontiguousarray(mus, dtype=np.int64)
    out = np.empty((sites.shape[0], 3, 3), dtype=np.complex128)
    k0, k1 = seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF
    _k.random_su3_many(sites, mus, sweep, block0, k0, k1, out)
    return out
