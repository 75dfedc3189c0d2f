"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N ... PASS|FAIL`` line to the terminal
(also under output capture) and then asserts. Run alone with

    pytest tests/test_acceptance.py -v
"""

import dataclasses
import hashlib
import struct
import time

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.optimize import brentq

from latticefarm import bench, paths
from latticefarm.action import ActionCoeffs, observables, staple_sum
from latticefarm.comm import field_checksum, halo_exchange, run_ranks
from latticefarm.lattice import GaugeField, build_geometry, parity_class
from latticefarm.montecarlo import SimulationConfig, UpdateParams, run_simulation, sample_su2, su2_heatbath_draw, sweep
from latticefarm.rng import RngKey


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n} {title}: {'PASS' if ok else 'FAIL'} ({detail})")
    return emit


def _blocked_error(x, nblocks=20):
    b = np.array_split(np.asarray(x), nblocks)
    means = np.array([v.mean() for v in b])
    return means.std(ddof=1) / np.sqrt(nblocks)


# 1 -------------------------------------------------------------------------

def test_criterion_1_decomposition_invariance(report):
    t0 = time.perf_counter()
    cfg = SimulationConfig(dims=(4, 4, 4, 4), beta=2.0, preset="wilson", sweeps=20, seed=20240611, start="hot")
    sums = {}
    for backend in ("inprocess", "socket"):
        for grid in ((1, 1, 1, 1), (1, 1, 1, 2), (1, 1, 2, 2)):
            c = dataclasses.replace(cfg, rank_grid=grid)
            out = run_ranks(int(np.prod(grid)),
                            lambda comm: field_checksum(run_simulation(c, comm).field, comm), backend=backend)
            assert len(set(out)) == 1
            sums[(backend, grid)] = out[0]
    elapsed = time.perf_counter() - t0
    ok = len(set(sums.values())) == 1 and elapsed < 60
    report(1, "decomposition invariance", ok,
           f"{len(sums)} runs, checksum {next(iter(sums.values())):016x}, distinct={len(set(sums.values()))}, "
           f"{elapsed:.1f}s")
    assert ok


# 2 -------------------------------------------------------------------------

def _equiprobable_edges(alpha, nbins):
    w = lambda x: np.sqrt(max(0.0, 1 - x * x)) * np.exp(alpha * (x - 1))  # noqa: E731
    z = quad(w, -1, 1, limit=200)[0]
    cdf = lambda x: quad(w, -1, x, limit=200)[0] / z  # noqa: E731
    inner = [brentq(lambda x, q=q: cdf(x) - q, -1, 1, xtol=1e-14) for q in np.arange(1, nbins) / nbins]
    return np.concatenate([[-1.0], inner, [1.0]])


def test_criterion_2_sampler_chi_square(report):
    t0 = time.perf_counter()
    n, nbins = 1_000_000, 50
    pvals = {}
    for alpha in (0.5, 2.0, 8.0):
        # batch draws go through the same kernel; spot-check against the scalar API
        draws, _ = sample_su2(alpha, n, seed=777)
        for i in (0, 1, n // 2, n - 1):
            one = su2_heatbath_draw(alpha, 1.0, RngKey(777, site=i))
            assert np.array_equal(np.array(one), draws[i])
        edges = _equiprobable_edges(alpha, nbins)
        counts, _ = np.histogram(draws[:, 0], bins=edges)
        pvals[alpha] = stats.chisquare(counts, np.full(nbins, n / nbins)).pvalue
    elapsed = time.perf_counter() - t0
    ok = all(p > 0.01 for p in pvals.values()) and elapsed < 60
    report(2, "sampler chi-square", ok,
           ", ".join(f"alpha={a}: p={p:.3f}" for a, p in pvals.items()) + f", {elapsed:.1f}s")
    assert ok


# 3 -------------------------------------------------------------------------

def _plaquette_series(beta, sweeps, therm, start, seed):
    cfg = SimulationConfig(dims=(4, 4, 4, 4), beta=beta, sweeps=sweeps, thermalization=therm,
                           start=start, seed=seed)
    res = run_ranks(1, lambda c: run_simulation(cfg, c))[0]
    return np.array([r.avg_plaquette for r in res.trace])


def test_criterion_3_physics_cross_check(report):
    from oracles import metropolis

    t0 = time.perf_counter()
    hb = _plaquette_series(0.5, 400, 50, "hot", 31)
    mp, acc = metropolis.run(0.5, L=4, therm=50, measure=400, hits=10, seed=5)
    d = abs(hb.mean() - mp.mean())
    sigma = np.hypot(_blocked_error(hb), _blocked_error(mp))
    ok_a = d < 3 * sigma

    free = _plaquette_series(1e-6, 200, 0, "hot", 32)
    ok_b = abs(free.mean()) < 5 * _blocked_error(free)

    frozen = _plaquette_series(1e6, 50, 0, "cold", 33)
    ok_c = frozen[-1] >= 0.999 and frozen.min() >= 0.999

    elapsed = time.perf_counter() - t0
    ok = ok_a and ok_b and ok_c and elapsed < 300
    report(3, "physics cross-check", ok,
           f"beta=0.5 heatbath {hb.mean():.5f} vs Metropolis {mp.mean():.5f} "
           f"(|d|={d:.2e}, 3sigma={3 * sigma:.2e}, acc={acc:.2f}); "
           f"beta=1e-6 {free.mean():+.5f}+-{_blocked_error(free):.5f}; beta=1e6 min {frozen.min():.6f}; "
           f"{elapsed:.1f}s")
    assert ok


# 4 -------------------------------------------------------------------------

def _expm_i(h, eps):
    w, v = np.linalg.eigh(h)
    return (v * np.exp(1j * eps * w)) @ v.conj().T


def test_criterion_4_improved_action_consistency(report):
    worst, cold_ok = run_ranks(1, _fd_probes)[0]
    ok = worst <= 1e-6 and cold_ok
    report(4, "improved-action consistency", ok,
           f"max |FD - staple| over 100 probes = {worst:.2e}, cold staple 8.5*I exact: {cold_ok}")
    assert ok


def _fd_probes(comm):
    coeffs = ActionCoeffs.from_preset("symanzik", 2.0)
    g = build_geometry((4, 4, 4, 4), (1, 1, 1, 1), 1)
    f = GaugeField.hot(g, 0, 404)

    def action():
        halo_exchange(f, comm)
        return observables(f, comm, coeffs)[2]

    halo_exchange(f, comm)
    rng = np.random.default_rng(4)
    eps = 1e-5
    worst = 0.0
    for _ in range(100):
        x = tuple(int(v) for v in rng.integers(0, 4, 4))
        mu = int(rng.integers(0, 4))
        h = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        h = 0.5 * (h + h.conj().T)
        h -= np.trace(h) / 3 * np.eye(3)
        idx, _ = f.local_index(x)
        u0 = f.flat[idx, mu].copy()
        st = staple_sum(f, x, mu, coeffs)
        want = -(coeffs.beta / 3) * np.trace(1j * h @ u0 @ st.conj().T).real
        f.flat[idx, mu] = _expm_i(h, eps) @ u0
        sp = action()
        f.flat[idx, mu] = _expm_i(h, -eps) @ u0
        sm = action()
        f.flat[idx, mu] = u0
        halo_exchange(f, comm)
        worst = max(worst, abs((sp - sm) / (2 * eps) - want))

    cold = GaugeField.cold(g, 0)
    halo_exchange(cold, comm)
    cold_ok = all(np.array_equal(staple_sum(cold, (1, 2, 3, 0), mu, coeffs), 8.5 * np.eye(3)) for mu in range(4))
    return worst, cold_ok


# 5 -------------------------------------------------------------------------

class _Clock:
    def __init__(self, *t):
        self.t = list(t)

    def __call__(self):
        return self.t.pop(0)


def test_criterion_5_benchmark_formula_fixtures(report):
    link = run_ranks(1, lambda c: bench.bench_link_update(SimulationConfig(sweeps=10), c,
                                                          clock=_Clock(0.0, 0.0747)))[0]
    pp = run_ranks(2, lambda c: bench.bench_pingpong(
        c, sizes=[1_000_000], reps=1, clock=_Clock(0.0, 0.1739) if c.rank == 0 else (lambda: 0.0)))[0]
    us = link.us_per_link_inclusive
    mbs = pp.rows[0].mb_per_sec
    c1, c2 = bench.cost_per_mflop(14000, 2000), bench.cost_per_mflop(630000, 7200)
    ok = (link.links_updated == 10240 and f"{us:.1f}" == "7.3" and f"{mbs:.1f}" == "11.5"
          and c1 == 7.0 and c2 == 87.5)
    report(5, "benchmark formula fixtures", ok,
           f"{us:.4f} us/link, {mbs:.4f} MB/s, cost {c1} and {c2} $/Mflop")
    assert ok


# 6 -------------------------------------------------------------------------

def test_criterion_6_flops_benchmark(report):
    rep = bench.bench_flops(100, "double", seed=0)
    text = bench.render_report([rep]).decode()
    ok = rep.mflops > 0 and rep.residual < bench.RESIDUAL_LIMIT and rep.flops == 686_666 and "686666" in text
    report(6, "flops benchmark", ok,
           f"n=100 double: {rep.flops} flops, {rep.mflops:.1f} Mflops, scaled residual {rep.residual:.3f}")
    assert ok


# 7 -------------------------------------------------------------------------

def test_criterion_7_transport(report):
    n = 100_000
    payload = np.random.default_rng(7).integers(0, 256, 1 << 20, dtype=np.uint8).tobytes()
    digest = hashlib.sha256(payload).hexdigest()
    vals = (1e16, 1.0, -1e16, 1.0)
    oracle = 0.0
    for v in vals:
        oracle += v
    results = {}
    for backend in ("inprocess", "socket"):
        def stress(c):
            if c.rank == 0:
                for i in range(n):
                    c.send(1, 11, i.to_bytes(4, "little"))
                c.send(1, 12, payload)
                return hashlib.sha256(c.recv(1, 12)).hexdigest()
            seq = [int.from_bytes(c.recv(0, 11), "little") for _ in range(n)]
            c.send(0, 12, c.recv(0, 12))
            return seq == list(range(n))

        fifo_ok, echo = run_ranks(2, stress, backend=backend, timeout=120)[::-1]
        red = run_ranks(4, lambda c: c.allreduce_sum(vals[c.rank]), backend=backend)
        red_ok = {struct.pack("<d", r) for r in red} == {struct.pack("<d", oracle)}
        results[backend] = (fifo_ok, echo == digest, red_ok)
    ok = all(all(v) for v in results.values())
    report(7, "transport", ok, "; ".join(
        f"{b}: fifo={r[0]}, 1MiB={r[1]}, allreduce={r[2]}" for b, r in results.items()) + f", oracle={oracle}")
    assert ok


# 8 -------------------------------------------------------------------------

def test_criterion_8_unitarity(report):
    coeffs = ActionCoeffs.from_preset("wilson", 2.0)
    params = UpdateParams(coeffs, reunitarize_every=10)
    g = build_geometry((4, 4, 4, 4), (1, 1, 1, 1), 1)

    def body(c):
        f = GaugeField.hot(g, 0, 88, beta=2.0)
        worst = 0.0
        for s in range(100):
            sweep(f, c, params, s)
            u = f.interior().reshape(-1, 3, 3)
            dev = np.conj(np.swapaxes(u, 1, 2)) @ u - np.eye(3)
            # matrix infinity norm: max absolute row sum
            worst = max(worst, float(np.abs(dev).sum(axis=2).max()))
        return worst

    worst = run_ranks(1, body)[0]
    ok = worst < 1e-10
    report(8, "unitarity", ok, f"max ||U^+U - I||_inf over 100 sweeps = {worst:.2e}")
    assert ok


# 9 -------------------------------------------------------------------------

def _footprint(x, mu, dims):
    """Links (site, dir) read by the staples of link (x, mu)."""
    out = set()
    for k in range(paths.N_STAPLES):
        for j in range(paths.STAPLE_LEN[mu, k]):
            y = tuple((xi + o) % L for xi, o, L in zip(x, paths.STAPLE_OFF[mu, k, j], dims))
            out.add((y, int(paths.STAPLE_DIR[mu, k, j])))
    return out


def _schedule_conflicts(dims, m, staple_count=paths.N_STAPLES):
    sites = list(np.ndindex(*dims))
    by_class = {}
    for x in sites:
        by_class.setdefault(parity_class(x, m), []).append(x)
    conflicts = 0
    phases = 0
    for mu in range(4):
        for c in range(m ** 4):
            phase = {(x, mu) for x in by_class.get(c, [])}
            phases += 1
            for x, _ in phase:
                fp = _footprint(x, mu, dims)
                assert (x, mu) not in fp
                conflicts += len(fp & phase)
    return phases, conflicts


def test_criterion_9_schedule_safety(report):
    phases, conflicts = _schedule_conflicts((8, 8, 8, 8), 4)
    # control: the same check catches the clash an m=2 schedule would have with rectangles
    _, control = _schedule_conflicts((4, 4, 4, 4), 2)
    ok = phases == 4 * 4 ** 4 and conflicts == 0 and control > 0
    report(9, "schedule safety", ok,
           f"{phases} (mu, class) phases on 8^4 with m=4, {conflicts} conflicts; m=2 control finds {control}")
    assert ok
