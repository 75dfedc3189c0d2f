import csv
import io
import itertools
import json

import numpy as np
import pytest

from latticefarm import bench
from latticefarm.comm import run_ranks
from latticefarm.errors import NonPositiveThroughput, NotEnoughRanks, SingularMatrix
from latticefarm.montecarlo import SimulationConfig


class FakeClock:
    """Returns the queued readings in order."""

    def __init__(self, *readings):
        self.readings = list(readings)

    def __call__(self):
        return self.readings.pop(0)


class StepClock:
    def __init__(self, step):
        self.t, self.step = 0.0, step

    def __call__(self):
        self.t += self.step
        return self.t


def test_link_update_fixture():
    rep = run_ranks(1, lambda c: bench.bench_link_update(SimulationConfig(sweeps=10), c,
                                                         clock=FakeClock(0.0, 0.0747)))[0]
    assert rep.links_updated == 10 * 4 * 256 == 10240
    assert round(rep.us_per_link_inclusive, 1) == 7.3
    assert rep.us_per_link_inclusive == 1e6 * 0.0747 / 10240
    assert rep.us_per_link_compute <= rep.us_per_link_inclusive


def test_link_update_counts_scale():
    cfg = SimulationConfig(sweeps=2, n_overrelax=1)
    a = run_ranks(1, lambda c: bench.bench_link_update(cfg, c))[0]
    cfg2 = SimulationConfig(sweeps=4, n_overrelax=1)
    b = run_ranks(1, lambda c: bench.bench_link_update(cfg2, c))[0]
    assert a.links_updated == 4 * 256 * 2 * 2
    assert b.links_updated == 2 * a.links_updated


def test_link_update_same_report_on_all_ranks():
    cfg = SimulationConfig(sweeps=2, rank_grid=(1, 1, 1, 2))
    a, b = run_ranks(2, lambda c: bench.bench_link_update(cfg, c))
    assert a == b


def test_pingpong_fixture():
    # warm-up is untimed; the timed loop sees 0.0 then reps * 0.1739
    def body(c):
        clock = FakeClock(0.0, 0.1739) if c.rank == 0 else None
        return bench.bench_pingpong(c, sizes=[1_000_000], reps=1, clock=clock or (lambda: 0.0))

    rep = run_ranks(2, body)[0]
    row = rep.rows[0]
    assert row.mb_per_sec == 2 * 1_000_000 / (0.1739 * 1e6)
    assert round(row.mb_per_sec, 1) == 11.5


def test_pingpong_latency_extrapolation():
    rows = [bench.PingPongRow(100, 1, 2e-5, 0), bench.PingPongRow(200, 1, 3e-5, 0)]
    # t(0) = 1e-5 round trip -> 5 us one way
    assert bench._latency_us(rows) == pytest.approx(5.0)
    zero = [bench.PingPongRow(0, 1, 4e-5, 0), bench.PingPongRow(10, 1, 5e-5, 0)]
    assert bench._latency_us(zero) == pytest.approx(20.0)


def test_pingpong_real_clock_sane():
    out = run_ranks(3, lambda c: bench.bench_pingpong(c, sizes=[0, 4096, 65536], reps=3))
    rep = out[0]
    assert all(o == rep for o in out)
    for r in rep.rows:
        assert r.mean_round_trip > 0
        assert r.mb_per_sec == bench.bandwidth_mb(r.size, r.mean_round_trip)
        assert np.isfinite(r.mb_per_sec)
    assert [r.size for r in rep.rows] == [0, 4096, 65536]


def test_pingpong_needs_two_ranks():
    with pytest.raises(NotEnoughRanks):
        run_ranks(1, lambda c: bench.bench_pingpong(c))


def test_flop_count():
    assert bench.lu_flops(100) == 686_666
    assert bench.lu_flops(2) == 13


def test_flops_fixture():
    rep = bench.bench_flops(100, clock=FakeClock(0.0, 0.01))
    assert rep.flops == 686_666
    assert round(rep.mflops, 1) == 68.7


def test_flops_identity_system():
    n = 6
    e1 = np.eye(n)[0]
    rep = bench.bench_flops(n, system=(np.eye(n), e1))
    assert rep.residual == 0.0
    assert np.array_equal(bench.lu_solve_system(np.eye(n), e1), e1)


@pytest.mark.parametrize("n", [10, 50, 100, 200])
def test_flops_residual_many_seeds(n):
    for seed in range(20):
        rep = bench.bench_flops(n, seed=seed, clock=StepClock(1e-3))
        assert rep.residual < bench.RESIDUAL_LIMIT
        assert rep.mflops > 0


def test_flops_single_precision():
    rep = bench.bench_flops(50, precision="single")
    assert rep.residual < bench.RESIDUAL_LIMIT


def test_singular_system_fails_after_retry():
    with pytest.raises(SingularMatrix):
        bench.bench_flops(3, system=(np.zeros((3, 3)), np.ones(3)))


def test_solver_matches_scipy(rng):
    from scipy.linalg import lu_factor, lu_solve

    a = rng.uniform(-1, 1, (30, 30))
    b = rng.uniform(-1, 1, 30)
    assert np.allclose(bench.lu_solve_system(a, b), lu_solve(lu_factor(a), b), rtol=1e-10)


def test_cost_per_mflop():
    assert bench.cost_per_mflop(14000, 2000) == 7.0
    assert bench.cost_per_mflop(630000, 7200) == 87.5
    assert bench.cost_per_mflop(0, 1000) == 0.0
    with pytest.raises(NonPositiveThroughput):
        bench.cost_per_mflop(10, 0)


def _reports():
    link = bench.LinkBenchReport((4, 4, 4, 4), 1, "wilson", 10, 10240, 0.0747, 0.05, 7.294921875, 4.8828125)
    comm = bench.CommBenchReport([bench.PingPongRow(1_000_000, 5, 0.1739, 11.50086256469235)], 12.5)
    flops = bench.FlopsReport(100, "double", 686666, 0.01, 68.6666, 0.01, 0)
    return [link, comm, flops]


def test_text_report_has_literature_rows():
    txt = bench.render_report(_reports()).decode()
    for machine, us, mbs in (("SX-4", "4.50", "45"), ("SR2201", "31.4", "28"),
                             ("Cenju-3", "57.42", "8.1"), ("Paragon", "149", "9.0")):
        line = next(l for l in txt.splitlines() if l.startswith(machine))
        assert line.split()[1:] == [us, mbs, "literature"]
    assert "7.29" in txt and "11.5" in txt
    assert "686666" in txt


def test_csv_report():
    rows = list(csv.reader(io.StringIO(bench.render_report(_reports(), "csv").decode())))
    assert rows[0] == ["machine", "usec_per_link", "mb_per_sec"]
    assert len(rows) - 1 == len(bench.REFERENCE_ROWS) + 1


def test_json_round_trip():
    reps = _reports()
    data = bench.render_report(reps, "json")
    assert json.loads(data)["mb_bytes"] == 1_000_000
    assert bench.parse_reports(data) == reps


def test_render_rejects_empty_and_unknown():
    with pytest.raises(ValueError):
        bench.render_report([])
    with pytest.raises(ValueError):
        bench.render_report(_reports(), "xml")


def test_formula_helpers():
    assert bench.us_per_link(1.0, 1_000_000) == 1.0
    assert bench.mflops(2_000_000, 2.0) == 1.0
    with pytest.raises(NonPositiveThroughput):
        bench.mflops(1, 0)
    for n, t in itertools.product([1, 1000], [0.5, 2.0]):
        assert bench.bandwidth_mb(n, t) == 2 * n / (t * 1e6)
