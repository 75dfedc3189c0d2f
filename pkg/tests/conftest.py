import numpy as np
import pytest

from latticefarm import kernels
from latticefarm.lattice import GaugeField, build_geometry


@pytest.fixture(params=[k.NAME for k in kernels.available()])
def kern(request):
    """Each kernel backend in turn (numba and pure numpy)."""
    return {k.NAME: k for k in kernels.available()}[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def serial_field(dims=(4, 4, 4, 4), hot=True, seed=5, **meta):
    g = build_geometry(dims, (1, 1, 1, 1), 1)
    if hot:
        return GaugeField.hot(g, 0, seed, **meta)
    return GaugeField.cold(g, 0, **meta)


def random_su3_np(rng, n=None):
    """Haar SU(3) via QR of a complex Gaussian matrix (independent of the package)."""
    shape = (3, 3) if n is None else (n, 3, 3)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    q = q * (d / np.abs(d))[..., None, :]
    det = np.linalg.det(q)
    return q / (det ** (1 / 3))[..., None, None]
