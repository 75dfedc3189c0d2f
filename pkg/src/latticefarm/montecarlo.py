"""Cabibbo-Marinari heatbath and overrelaxation with a layout-independent schedule.

One sweep visits directions mu = 0..3; for each, site classes
``c = parity_class(x, m)`` in ascending order. Before each class the halos are
refreshed and every rank updates its own links of that class. Links in one
class never sit in each other's staples, so the result does not depend on how
the lattice is split; together with the counter-based RNG this makes runs
bit-identical across rank grids.
"""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import paths
from .action import ActionCoeffs, observables, staple_tables
from .comm.halo import halo_exchange
from .errors import DegenerateMatrix, DegenerateStaple, NonConvergence, ValidationError
from .kernels import active as _k
from .lattice import NDIM, GaugeField, build_geometry
from .rng import RngKey, seed_words
from .su3 import SU2Params

log = logging.getLogger(__name__)

MAX_TRIALS = 10_000


@dataclass(frozen=True)
class UpdateParams:
    coeffs: ActionCoeffs
    n_heatbath: int = 1
    n_overrelax: int = 0
    reunitarize_every: int = 10
    modulus: int = 0  # 0 picks 2 for the Wilson action, 4 otherwise
    max_trials: int = MAX_TRIALS

    @property
    def m(self):
        if self.modulus:
            return self.modulus
        return 4 if self.coeffs.improved else 2

    def validate(self, geometry=None):
        if self.m not in (2, 4):
            raise ValidationError("modulus", "schedule modulus must be 2 or 4")
        if self.coeffs.improved and self.m != 4:
            raise ValidationError("modulus", "rectangle terms need schedule modulus 4")
        if self.n_heatbath < 0 or self.n_overrelax < 0 or self.n_heatbath + self.n_overrelax == 0:
            raise ValidationError("n_heatbath", "need at least one update hit per link")
        if self.reunitarize_every < 0:
            raise ValidationError("reunitarize_every", "must be >= 0")
        if geometry is not None:
            for mu, L in enumerate(geometry.global_dims):
                if L % self.m:
                    raise ValidationError(
                        "dims", f"extent {L} in direction {mu} not divisible by schedule modulus {self.m}")
        return self

    @property
    def hits(self):
        return self.n_heatbath + self.n_overrelax


@dataclass
class SweepStats:
    links_updated: int = 0
    wall_seconds: float = 0.0
    compute_seconds: float = 0.0
    comm_seconds: float = 0.0
    sampler_trials: int = 0
    sampler_draws: int = 0
    skipped_overrelax: int = 0

    @property
    def kp_rejection_rate(self):
        if not self.sampler_trials:
            return 0.0
        return 1.0 - self.sampler_draws / self.sampler_trials

    def __iadd__(self, other):
        for f in ("links_updated", "wall_seconds", "compute_seconds", "comm_seconds",
                  "sampler_trials", "sampler_draws", "skipped_overrelax"):
            setattr(self, f, getattr(self, f) + getattr(other, f))
        return self


def su2_heatbath_draw(k, beta_eff, key: RngKey, max_trials=MAX_TRIALS):
    """One SU(2) element with a0 ~ sqrt(1 - a0^2) exp(beta_eff * k * a0)."""
    if k < 0 or beta_eff <= 0:
        raise ValueError("need k >= 0 and beta_eff > 0")
    out = np.empty((1, 4))
    k0, k1 = key.words
    res = _k.su2_draw_many(np.array([beta_eff * k]), np.array([key.site], dtype=np.int64), key.mu,
                           key.sweep, key.draw, k0, k1, max_trials, out)
    if res < 0:
        raise NonConvergence(f"sampler exceeded {max_trials} trials at beta_eff*k={beta_eff * k}")
    return SU2Params(*(float(v) for v in out[0]))


def sample_su2(alpha, n, seed, mu=0, sweep=0, max_trials=MAX_TRIALS):
    """``n`` independent draws at coupling ``alpha = beta_eff * k`` (streams site=0..n-1).

    Returns (draws (n, 4), total accept-reject trials).
    """
    out = np.empty((n, 4))
    k0, k1 = seed_words(seed)
    res = _k.su2_draw_many(np.full(n, float(alpha)), np.arange(n, dtype=np.int64), mu, sweep, 0,
                           k0, k1, max_trials, out)
    if res < 0:
        raise NonConvergence(f"sampler exceeded {max_trials} trials at alpha={alpha}")
    return out, int(res)


def heatbath_link(u, staple, coeffs: ActionCoeffs, key: RngKey, max_trials=MAX_TRIALS):
    """Three subgroup heatbath steps on ``u``; returns the new link."""
    k0, k1 = key.words
    out, _, _, err = _k.heatbath_one(np.ascontiguousarray(u, dtype=np.complex128),
                                     np.ascontiguousarray(staple, dtype=np.complex128),
                                     coeffs.beta, key.site, key.mu, key.sweep, key.draw, k0, k1, max_trials)
    if err:
        raise NonConvergence("heatbath sampler did not converge")
    return out


def overrelax_link(u, staple, strict=False):
    """Action-preserving reflection in each subgroup.

    Subgroups whose staple projection vanishes are skipped; with ``strict``
    that raises DegenerateStaple instead.
    """
    out, skipped = _k.overrelax_one(np.ascontiguousarray(u, dtype=np.complex128),
                                    np.ascontiguousarray(staple, dtype=np.complex128))
    if strict and skipped:
        raise DegenerateStaple(f"{skipped} subgroup projection(s) vanished")
    return out


def reunitarize_field(field: GaugeField):
    idx, _ = field.interior_sites
    mats = np.ascontiguousarray(field.flat[idx]).reshape(-1, 3, 3)
    if _k.reunitarize_many(mats):
        raise DegenerateMatrix("link became singular before reprojection")
    field.flat[idx] = mats.reshape(-1, NDIM, 3, 3)


def sweep(field: GaugeField, comm, params: UpdateParams, sweep_no, clock=time.perf_counter):
    """One full update of every link. Collective."""
    c = params.coeffs
    m = params.m
    k0, k1 = seed_words(field.seed)
    tables = staple_tables(field.geometry)
    classes = field.class_sites(m)
    counts = np.zeros(3, dtype=np.int64)
    stats = SweepStats()
    start = clock()
    local_links = 0
    for mu in range(NDIM):
        foff, dirs, dags, lens = tables[mu]
        for idx, gsite in classes:
            t0 = clock()
            halo_exchange(field, comm)
            t1 = clock()
            stats.comm_seconds += t1 - t0
            if idx.size:
                err = _k.update_links(field.flat, idx, gsite, mu, sweep_no, k0, k1, c.beta, c.c0, c.c1,
                                      params.n_heatbath, params.n_overrelax, foff, dirs, dags, lens,
                                      paths.N_PLAQ_STAPLES, params.max_trials, counts)
                if err:
                    raise NonConvergence(f"sampler stalled in sweep {sweep_no}, mu={mu}")
                local_links += idx.size * params.hits
            stats.compute_seconds += clock() - t1
    if params.reunitarize_every and (sweep_no + 1) % params.reunitarize_every == 0:
        t0 = clock()
        reunitarize_field(field)
        stats.compute_seconds += clock() - t0
    field.sweep = sweep_no + 1
    stats.wall_seconds = clock() - start
    stats.links_updated = int(comm.allreduce_sum(local_links))
    stats.sampler_trials = int(comm.allreduce_sum(counts[0]))
    stats.sampler_draws = int(comm.allreduce_sum(counts[1]))
    stats.skipped_overrelax = int(comm.allreduce_sum(counts[2]))
    return stats


@dataclass
class SimulationConfig:
    dims: tuple = (4, 4, 4, 4)
    rank_grid: tuple = (1, 1, 1, 1)
    beta: float = 5.7
    preset: str = "wilson"
    thermalization: int = 0
    sweeps: int = 10
    seed: int = 1
    start: str = "cold"
    n_heatbath: int = 1
    n_overrelax: int = 0
    reunitarize_every: int = 10
    modulus: int = 0
    load_path: str = None
    save_path: str = None
    trace_path: str = None  # CSV; a .json mirror is written next to it

    def coeffs(self):
        return ActionCoeffs.from_preset(self.preset, self.beta)

    def update_params(self):
        return UpdateParams(self.coeffs(), self.n_heatbath, self.n_overrelax, self.reunitarize_every,
                            self.modulus)

    def geometry(self, size):
        return build_geometry(self.dims, self.rank_grid, size)


@dataclass
class TraceRecord:
    sweep: int
    avg_plaquette: float
    avg_rectangle: float
    action: float


TRACE_COLUMNS = ("sweep", "avg_plaquette", "avg_rectangle", "action")


def initial_field(cfg: SimulationConfig, comm):
    from .fieldio import load_field

    geometry = cfg.geometry(comm.size)
    c = cfg.coeffs()
    meta = dict(beta=c.beta, c0=c.c0, c1=c.c1, seed=cfg.seed)
    if cfg.load_path:
        f = load_field(cfg.load_path, geometry, comm)
        f.beta, f.c0, f.c1, f.seed = c.beta, c.c0, c.c1, cfg.seed
        return f
    if cfg.start == "hot":
        return GaugeField.hot(geometry, comm.rank, **meta)
    if cfg.start == "cold":
        return GaugeField.cold(geometry, comm.rank, **meta)
    raise ValidationError("start", f"unknown start {cfg.start!r}")


@dataclass
class SimulationResult:
    trace: list
    field: GaugeField = field(repr=False)
    stats: SweepStats = None


def run_simulation(cfg: SimulationConfig, comm, on_record=None):
    """Thermalise, then measure after each of ``cfg.sweeps`` sweeps. Collective.

    Rank 0 appends each record to ``cfg.trace_path`` as it is produced, so a
    failure leaves the partial trace (CSV and JSON) on disk.
    """
    params = cfg.update_params()
    field_ = initial_field(cfg, comm)
    params.validate(field_.geometry)
    coeffs = cfg.coeffs()
    writer = _TraceWriter(cfg.trace_path) if comm.rank == 0 and cfg.trace_path else None
    trace = []
    total = SweepStats()
    s = field_.sweep
    try:
        for _ in range(cfg.thermalization):
            total += sweep(field_, comm, params, s)
            s += 1
        for _ in range(cfg.sweeps):
            total += sweep(field_, comm, params, s)
            s += 1
            halo_exchange(field_, comm)
            rec = TraceRecord(s, *observables(field_, comm, coeffs))
            trace.append(rec)
            if writer:
                writer.write(rec)
            if on_record:
                on_record(rec)
    finally:
        if writer:
            writer.close()
    if cfg.save_path:
        from .fieldio import save_field

        save_field(cfg.save_path, field_, comm)
    return SimulationResult(trace, field_, total)


class _TraceWriter:
    def __init__(self, path):
        self.path = str(path)
        self.records = []
        self._fh = open(self.path, "w", newline="")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(TRACE_COLUMNS)
        self._fh.flush()

    def write(self, rec):
        self.records.append(asdict(rec))
        self._csv.writerow([rec.sweep, repr(rec.avg_plaquette), repr(rec.avg_rectangle), repr(rec.action)])
        self._fh.flush()

    def close(self):
        self._fh.close()
        json_path = self.path[:-4] + ".json" if self.path.endswith(".csv") else self.path + ".json"
        with open(json_path, "w") as fh:
            json.dump(self.records, fh, indent=1)
