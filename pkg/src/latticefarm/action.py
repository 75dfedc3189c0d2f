"""Plaquette + 1x2 rectangle gauge action: loops, staples, global observables.

Normalisation: ``S = beta * sum_x [c0 * sum_{mu<nu} (1 - P_mu_nu(x))
+ c1 * sum_{mu!=nu} (1 - R_mu_nu(x))]`` with ``P, R = Re tr(loop) / 3``; the
part of S depending on one link U is ``-(beta/3) Re tr(U @ staple^dagger)``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import paths
from .kernels import active as _k
from .lattice import NDIM, GaugeField

PRESETS = {
    "wilson": (1.0, 0.0),
    "symanzik": (5.0 / 3.0, -1.0 / 12.0),
}


@dataclass(frozen=True)
class ActionCoeffs:
    beta: float
    c0: float = 1.0
    c1: float = 0.0
    preset: str = "wilson"

    @classmethod
    def from_preset(cls, name, beta):
        try:
            c0, c1 = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown action preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(float(beta), c0, c1, name)

    @property
    def improved(self):
        return self.c1 != 0.0


@lru_cache(maxsize=64)
def _staple_tables(strides):
    s = np.array(strides, dtype=np.int64)
    return [
        (
            paths.flat_offsets(paths.STAPLE_OFF[mu], s),
            np.ascontiguousarray(paths.STAPLE_DIR[mu]),
            np.ascontiguousarray(paths.STAPLE_DAG[mu]),
            np.ascontiguousarray(paths.STAPLE_LEN[mu]),
        )
        for mu in range(NDIM)
    ]


def staple_tables(geometry):
    """Per-direction (flat offsets, dirs, daggers, lengths) of the 24 staple paths."""
    return _staple_tables(tuple(int(x) for x in geometry.strides))


@lru_cache(maxsize=64)
def _loop_tables(strides):
    s = np.array(strides, dtype=np.int64)
    return paths.flat_offsets(paths.LOOP_OFF, s), paths.LOOP_DIR, paths.LOOP_DAG, paths.LOOP_LEN


def loop_tables(geometry):
    return _loop_tables(tuple(int(x) for x in geometry.strides))


def _single_loop(field, site, moves):
    links = paths.moves_to_links(moves)
    idx, local = field.local_index(site)
    off = np.array([l[0] for l in links], dtype=np.int64)
    # links are stored at their base site, so only base sites must be resident
    field.require_reach(local, off.min(axis=0), off.max(axis=0))
    foff = paths.flat_offsets(off, field.geometry.strides)
    dirs = np.array([l[1] for l in links], dtype=np.int64)
    dags = np.array([int(l[2]) for l in links], dtype=np.int64)
    out = np.empty(1)
    _k.loop_values(field.flat, np.array([idx], dtype=np.int64), foff, dirs, dags, len(links), out)
    return float(out[0])


def plaquette(field: GaugeField, site, mu, nu):
    """Re tr of the 1x1 loop at global ``site`` in the (mu, nu) plane, over 3."""
    if mu == nu:
        raise ValueError("plaquette needs mu != nu")
    return _single_loop(field, site, paths.plaquette_moves(mu, nu))


def rectangle(field: GaugeField, site, mu, nu):
    """Re tr of the 1x2 loop long in mu, over 3."""
    if mu == nu:
        raise ValueError("rectangle needs mu != nu")
    return _single_loop(field, site, paths.rectangle_moves(mu, nu))


def local_loop_sums(field: GaugeField, rectangles=True):
    """Sums over owned sites of plaquette (6 planes) and rectangle (12 orientations) values."""
    foff, dirs, dags, lens = loop_tables(field.geometry)
    idx, _ = field.interior_sites
    out = np.zeros(2)
    nloops = paths.N_LOOPS if rectangles else paths.N_PLAQ_LOOPS
    _k.loop_sums(field.flat, idx, foff, dirs, dags, lens, nloops, paths.N_PLAQ_LOOPS, out)
    return float(out[0]), float(out[1])


def avg_plaquette(field: GaugeField, comm):
    """Halos must be fresh. Same value on every rank."""
    sp, _ = local_loop_sums(field, rectangles=False)
    return comm.allreduce_sum(sp) / (paths.N_PLAQ_LOOPS * field.geometry.volume)


def avg_rectangle(field: GaugeField, comm):
    _, sr = local_loop_sums(field)
    return comm.allreduce_sum(sr) / ((paths.N_LOOPS - paths.N_PLAQ_LOOPS) * field.geometry.volume)


def observables(field: GaugeField, comm, coeffs: ActionCoeffs):
    """(avg_plaquette, avg_rectangle, total_action) from one pass over the loops."""
    sp, sr = local_loop_sums(field)
    sp = comm.allreduce_sum(sp)
    sr = comm.allreduce_sum(sr)
    V = field.geometry.volume
    npl, nre = paths.N_PLAQ_LOOPS * V, (paths.N_LOOPS - paths.N_PLAQ_LOOPS) * V
    action = coeffs.beta * (coeffs.c0 * (npl - sp) + coeffs.c1 * (nre - sr))
    return sp / npl, sr / nre, action


def total_action(field: GaugeField, comm, coeffs: ActionCoeffs):
    return observables(field, comm, coeffs)[2]


def staple_sum(field: GaugeField, site, mu, coeffs: ActionCoeffs):
    """Weighted staple of link (site, mu): c0 * plaquette staples + c1 * rectangle staples."""
    idx, local = field.local_index(site)
    off = paths.STAPLE_OFF[mu] if coeffs.improved else paths.STAPLE_OFF[mu][: paths.N_PLAQ_STAPLES]
    field.require_reach(local, off.reshape(-1, NDIM).min(axis=0), off.reshape(-1, NDIM).max(axis=0))
    foff, dirs, dags, lens = staple_tables(field.geometry)[mu]
    out = np.empty((1, 3, 3), dtype=np.complex128)
    _k.staples(field.flat, np.array([idx], dtype=np.int64), foff, dirs, dags, lens,
               paths.N_PLAQ_STAPLES, coeffs.c0, coeffs.c1, out)
    return out[0]


def local_action(u, staple, beta):
    """Link-dependent part of the action, ``-(beta/3) Re tr(U staple^dagger)``."""
    return -(beta / 3.0) * float(np.real(np.trace(u @ np.conj(staple).T)))
