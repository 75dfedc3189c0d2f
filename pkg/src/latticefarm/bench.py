"""Link-update timing, ping-pong bandwidth, LU Mflops, cost quotient and reporting.

Every timer is injected (``clock``), so rate formulas can be pinned with a
fake clock. MB means 10**6 bytes throughout.
"""

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .comm.base import TAG_REDUCE
from .errors import NonPositiveThroughput, NotEnoughRanks, SingularMatrix
from .kernels import active as _k
from .montecarlo import SimulationConfig, initial_field, sweep

MB = 1_000_000
TAG_PING = 7001

# published comparison rows (machine, usec_per_link, mb_per_sec), kept as printed
REFERENCE_ROWS = (
    ("SX-4", "4.50", "45"),
    ("SR2201", "31.4", "28"),
    ("Cenju-3", "57.42", "8.1"),
    ("Paragon", "149", "9.0"),
)


@dataclass
class LinkBenchReport:
    dims: tuple
    ranks: int
    preset: str
    sweeps: int
    links_updated: int
    seconds_inclusive: float
    seconds_compute: float
    us_per_link_inclusive: float
    us_per_link_compute: float
    kind: str = "link"


@dataclass
class PingPongRow:
    size: int
    round_trips: int
    mean_round_trip: float
    mb_per_sec: float


@dataclass
class CommBenchReport:
    rows: list
    latency_us: float
    mb_definition: int = MB
    kind: str = "comm"

    @property
    def peak_mb_per_sec(self):
        return max((r.mb_per_sec for r in self.rows), default=0.0)


@dataclass
class FlopsReport:
    n: int
    precision: str
    flops: int
    seconds: float
    mflops: float
    residual: float
    seed: int = 0
    kind: str = "flops"


def us_per_link(seconds, links):
    return 1e6 * seconds / links


def bandwidth_mb(nbytes, round_trip):
    """Both directions counted: 2N bytes per round trip."""
    return 2.0 * nbytes / (round_trip * MB)


def lu_flops(n):
    """(2/3) n^3 + 2 n^2, truncated toward zero."""
    return (2 * n**3) // 3 + 2 * n * n


def mflops(flops, seconds):
    if seconds <= 0:
        raise NonPositiveThroughput("elapsed time must be positive")
    return flops / (seconds * 1e6)


def cost_per_mflop(total_cost_usd, aggregate_mflops):
    """Dollars per sustained Mflop."""
    if total_cost_usd < 0:
        raise ValueError("cost must be >= 0")
    if not aggregate_mflops > 0:
        raise NonPositiveThroughput("aggregate Mflops must be positive")
    return total_cost_usd / aggregate_mflops


def bench_link_update(config: SimulationConfig, comm, warmup=1, clock=time.perf_counter):
    """Warm up, then time ``config.sweeps`` full sweeps. Collective; every rank gets the same report.

    ``clock`` times the whole region; the compute-only split comes from the
    sweeps' own monotonic timers and is capped at the inclusive time.
    """
    params = config.update_params()
    f = initial_field(config, comm)
    params.validate(f.geometry)
    s = f.sweep
    for _ in range(warmup):
        sweep(f, comm, params, s)
        s += 1
    comm.barrier()
    links = 0
    compute = 0.0
    t0 = clock()
    for _ in range(config.sweeps):
        st = sweep(f, comm, params, s)
        s += 1
        links += st.links_updated
        compute += st.compute_seconds
    inclusive = clock() - t0
    inclusive = comm.allreduce_max(inclusive)
    compute = min(comm.allreduce_max(compute), inclusive)
    if links <= 0 or inclusive <= 0:
        raise NonPositiveThroughput("timed region updated no links or took no time")
    return LinkBenchReport(
        tuple(config.dims), comm.size, config.preset, config.sweeps, links, inclusive, compute,
        us_per_link(inclusive, links), us_per_link(compute, links),
    )


def bench_pingpong(comm, sizes=(0, 1024, 65536, 1 << 20), reps=20, clock=time.perf_counter):
    """Round trips between ranks 0 and 1; other ranks wait at the final barrier."""
    if comm.size < 2:
        raise NotEnoughRanks("ping-pong needs at least 2 ranks")
    sizes = sorted(int(s) for s in sizes)
    if not sizes or sizes[0] < 0 or reps < 1:
        raise ValueError("need non-negative sizes and reps >= 1")
    rows = []
    for n in sizes:
        payload = bytes(n)
        if comm.rank == 0:
            comm.send(1, TAG_PING, payload)  # untimed warm-up
            comm.recv(1, TAG_PING)
            t0 = clock()
            for _ in range(reps):
                comm.send(1, TAG_PING, payload)
                comm.recv(1, TAG_PING)
            rt = (clock() - t0) / reps
            rows.append(PingPongRow(n, reps, rt, bandwidth_mb(n, rt) if rt > 0 else float("inf")))
        elif comm.rank == 1:
            for _ in range(reps + 1):
                comm.send(0, TAG_PING, comm.recv(0, TAG_PING))
    comm.barrier()
    blob = json.dumps([asdict(r) for r in rows]).encode() if comm.rank == 0 else None
    rows = [PingPongRow(**r) for r in json.loads(comm.bcast_bytes(blob, TAG_REDUCE))]
    return CommBenchReport(rows, latency_us=_latency_us(rows))


def _latency_us(rows):
    """Half the round trip extrapolated linearly to a zero-byte message."""
    if len(rows) == 1:
        return 0.5e6 * rows[0].mean_round_trip
    (n0, t0), (n1, t1) = (rows[0].size, rows[0].mean_round_trip), (rows[1].size, rows[1].mean_round_trip)
    t_zero = t0 - n0 * (t1 - t0) / (n1 - n0) if n1 != n0 else t0
    return 0.5e6 * max(t_zero, 0.0)


def random_system(n, seed, dtype=np.float64):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-0.5, 0.5, (n, n)).astype(dtype)
    b = rng.uniform(-0.5, 0.5, n).astype(dtype)
    return a, b


def lu_solve_system(a, b):
    """Solve A x = b with the package's own partial-pivot LU. Raises SingularMatrix."""
    lu = np.array(a, copy=True, order="C")
    piv = np.empty(lu.shape[0], dtype=np.int64)
    bad = _k.lu_factor(lu, piv)
    if bad:
        raise SingularMatrix(f"zero pivot in column {bad - 1}")
    x = np.array(b, copy=True)
    _k.lu_solve(lu, piv, x)
    return x


def scaled_residual(a, x, b):
    eps = np.finfo(a.dtype).eps
    r = a.astype(np.float64) @ x.astype(np.float64) - b.astype(np.float64)
    denom = np.abs(a).sum(axis=1).max() * np.abs(x).max() * a.shape[0] * eps
    num = np.abs(r).max()
    return 0.0 if num == 0 else float(num / denom)


RESIDUAL_LIMIT = 10.0


def bench_flops(n=100, precision="double", seed=0, clock=time.perf_counter, system=None):
    """Time factor + solve of a random dense system and report Mflops."""
    if n < 2:
        raise ValueError("n must be >= 2")
    dtype = {"double": np.float64, "single": np.float32}.get(precision)
    if dtype is None:
        raise ValueError(f"precision must be 'single' or 'double', not {precision!r}")
    lu_solve_system(np.eye(2, dtype=dtype), np.ones(2, dtype=dtype))  # compile outside the timer
    for attempt, s in enumerate((seed, seed + 1)):
        a, b = system if system is not None else random_system(n, s, dtype)
        a = np.ascontiguousarray(a, dtype=dtype)
        b = np.ascontiguousarray(b, dtype=dtype)
        try:
            t0 = clock()
            x = lu_solve_system(a, b)
            elapsed = clock() - t0
        except SingularMatrix:
            if attempt or system is not None:
                raise
            continue
        res = scaled_residual(a, x, b)
        if not res < RESIDUAL_LIMIT:
            raise SingularMatrix(f"scaled residual {res:.3g} exceeds {RESIDUAL_LIMIT}")
        flops = lu_flops(n)
        return FlopsReport(n, precision, flops, elapsed, mflops(flops, elapsed), res, s)
    raise AssertionError("unreachable")


_KINDS = {"link": LinkBenchReport, "comm": CommBenchReport, "flops": FlopsReport}


def _to_dict(r):
    d = asdict(r)
    if isinstance(r, LinkBenchReport):
        d["dims"] = list(r.dims)
    return d


def _from_dict(d):
    cls = _KINDS[d["kind"]]
    d = dict(d)
    if cls is LinkBenchReport:
        d["dims"] = tuple(d["dims"])
    if cls is CommBenchReport:
        d["rows"] = [PingPongRow(**row) for row in d["rows"]]
    return cls(**{f.name: d[f.name] for f in fields(cls)})


def parse_reports(data):
    """Inverse of ``render_report(..., "json")``."""
    return [_from_dict(d) for d in json.loads(data)["reports"]]


def _measured_row(reports, machine):
    link = next((r for r in reports if isinstance(r, LinkBenchReport)), None)
    comm = next((r for r in reports if isinstance(r, CommBenchReport)), None)
    return (machine,
            link.us_per_link_inclusive if link else None,
            comm.peak_mb_per_sec if comm else None)


def _fmt(v, width, prec):
    return f"{'-':>{width}}" if v is None else f"{v:>{width}.{prec}f}"


def render_report(reports, fmt="text", machine="this run"):
    """Text table, CSV or JSON bytes for one or more reports."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to render")
    if fmt == "json":
        return json.dumps({"mb_bytes": MB, "reports": [_to_dict(r) for r in reports]}, indent=1).encode()
    machine_row = _measured_row(reports, machine)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("machine", "usec_per_link", "mb_per_sec"))
        w.writerows(REFERENCE_ROWS)
        m, us, mbs = machine_row
        w.writerow((m, "" if us is None else repr(us), "" if mbs is None else repr(mbs)))
        return buf.getvalue().encode()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = [f"{'machine':<16}{'usec/link':>12}{'MB/s':>10}  source", "-" * 48]
    for m, us, mbs in REFERENCE_ROWS:
        lines.append(f"{m:<16}{us:>12}{mbs:>10}  literature")
    m, us, mbs = machine_row
    lines.append(f"{m:<16}{_fmt(us, 12, 2)}{_fmt(mbs, 10, 1)}  measured")
    for r in reports:
        lines.append("")
        lines.extend(_detail(r))
    return ("\n".join(lines) + "\n").encode()


def _detail(r):
    if isinstance(r, LinkBenchReport):
        dims = "x".join(str(d) for d in r.dims)
        return [
            f"link update: {dims}, {r.ranks} rank(s), {r.preset}, {r.sweeps} sweeps, {r.links_updated} links",
            f"  inclusive     {r.seconds_inclusive:.6f} s  {r.us_per_link_inclusive:.3f} us/link",
            f"  compute only  {r.seconds_compute:.6f} s  {r.us_per_link_compute:.3f} us/link",
        ]
    if isinstance(r, CommBenchReport):
        out = [f"ping-pong (MB = {MB} bytes), latency {r.latency_us:.2f} us",
               f"  {'bytes':>10}{'trips':>7}{'round trip s':>15}{'MB/s':>12}"]
        out += [f"  {x.size:>10}{x.round_trips:>7}{x.mean_round_trip:>15.3e}{x.mb_per_sec:>12.2f}" for x in r.rows]
        return out
    if isinstance(r, FlopsReport):
        return [f"LU n={r.n} {r.precision}: flops {r.flops}, {r.seconds:.6f} s, "
                f"{r.mflops:.1f} Mflops, residual {r.residual:.3f}"]
    return [repr(r)]


__all__ = [
    "CommBenchReport", "FlopsReport", "LinkBenchReport", "PingPongRow", "REFERENCE_ROWS",
    "bandwidth_mb", "bench_flops", "bench_link_update", "bench_pingpong", "cost_per_mflop",
    "lu_flops", "lu_solve_system", "mflops", "parse_reports", "render_report", "us_per_link",
]
