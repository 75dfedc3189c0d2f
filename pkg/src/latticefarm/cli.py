"""Command line: configuration, mode dispatch and rank launching.

Modes are subcommands. A config file (JSON, or TOML on Python 3.11+) supplies
defaults and command-line flags override it. Socket runs re-execute this
program once per rank; workers recognise themselves by environment variables:

    LATTICEFARM_WORKER       set to 1 in worker processes
    LATTICEFARM_RANK         this worker's rank
    LATTICEFARM_SIZE         number of ranks
    LATTICEFARM_RENDEZVOUS   host:port of rank 0's listener
"""

import argparse
import dataclasses
import json
import logging
import os
import socket
import subprocess
import sys
import time
from dataclasses import dataclass, fields
from math import prod
from pathlib import Path

from . import bench
from .action import PRESETS, ActionCoeffs
from .comm import BACKENDS, run_ranks
from .comm.socket import SocketComm, default_address, parse_address
from .errors import LatticeFarmError, LaunchFailure, ValidationError
from .lattice import build_geometry
from .montecarlo import SimulationConfig, UpdateParams, run_simulation

MODES = ("simulate", "bench-qcd", "bench-comm", "bench-flops", "cost")
FORMATS = ("text", "csv", "json")
ENV_WORKER = "LATTICEFARM_WORKER"
ENV_RANK = "LATTICEFARM_RANK"
ENV_SIZE = "LATTICEFARM_SIZE"
ENV_RENDEZVOUS = "LATTICEFARM_RENDEZVOUS"

@dataclass
class RunConfig:
    mode: str = "simulate"
    dims: tuple = (4, 4, 4, 4)
    rank_grid: tuple = (1, 1, 1, 1)
    ranks: int = None  # optional cross-check against the grid
    beta: float = 5.7
    preset: str = "wilson"
    sweeps: int = 10
    thermalization: int = 0
    warmup: int = 1
    seed: int = 1
    start: str = "cold"
    n_heatbath: int = 1
    n_overrelax: int = 0
    reunitarize_every: int = 10
    modulus: int = 0
    backend: str = "inprocess"
    rendezvous: str = None
    timeout: float = 60.0
    rendezvous_timeout: float = 30.0
    format: str = "text"
    output: str = "latticefarm-out"
    load: str = None
    save: str = None
    sizes: tuple = (0, 1024, 65536, 1 << 20)
    reps: int = 20
    n: int = 100
    precision: str = "double"
    total_cost: float = None
    mflops: float = None

    @property
    def size(self):
        if self.mode == "bench-flops" or self.mode == "cost":
            return 1
        return prod(self.rank_grid)

    def simulation(self, trace_path=None):
        return SimulationConfig(
            dims=tuple(self.dims), rank_grid=tuple(self.rank_grid), beta=self.beta, preset=self.preset,
            thermalization=self.thermalization, sweeps=self.sweeps, seed=self.seed, start=self.start,
            n_heatbath=self.n_heatbath, n_overrelax=self.n_overrelax,
            reunitarize_every=self.reunitarize_every, modulus=self.modulus,
            load_path=self.load, save_path=self.save, trace_path=trace_path,
        )

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=1)

    def validate(self):
        _check(self.mode in MODES, "mode", f"must be one of {', '.join(MODES)}")
        _check(self.backend in BACKENDS, "backend", f"must be one of {', '.join(BACKENDS)}")
        _check(self.format in FORMATS, "format", f"must be one of {', '.join(FORMATS)}")
        _check(self.timeout > 0 and self.rendezvous_timeout > 0, "timeout", "timeouts must be positive")
        if self.rendezvous is not None:
            try:
                parse_address(self.rendezvous)
            except ValueError as exc:
                raise ValidationError("rendezvous", str(exc)) from None
        if self.mode == "cost":
            _check(self.total_cost is not None and self.total_cost >= 0, "total_cost", "need a cost >= 0")
            _check(self.mflops is not None and self.mflops > 0, "mflops", "need aggregate Mflops > 0")
            return self
        if self.mode == "bench-flops":
            _check(self.n >= 2, "n", "matrix order must be >= 2")
            _check(self.precision in ("single", "double"), "precision", "must be single or double")
            return self
        _check(len(self.rank_grid) == 4 and all(p >= 1 for p in self.rank_grid), "rank_grid",
               "needs four positive entries")
        if self.ranks is not None:
            _check(self.ranks == prod(self.rank_grid), "ranks",
                   f"rank grid {tuple(self.rank_grid)} holds {prod(self.rank_grid)} ranks, not {self.ranks}")
        if self.mode == "bench-comm":
            _check(self.size >= 2, "rank_grid", "ping-pong needs at least 2 ranks")
            _check(len(self.sizes) > 0 and all(s >= 0 for s in self.sizes), "sizes",
                   "need non-negative payload sizes")
            _check(self.reps >= 1, "reps", "must be >= 1")
            return self
        # simulate / bench-qcd
        _check(self.preset in PRESETS, "preset", f"must be one of {', '.join(sorted(PRESETS))}")
        _check(self.start in ("hot", "cold"), "start", "must be hot or cold")
        _check(self.sweeps >= 0 and self.thermalization >= 0 and self.warmup >= 0, "sweeps",
               "sweep counts must be >= 0")
        _check(0 <= self.seed < 2**64, "seed", "must fit in 64 bits")
        _check(self.beta > 0, "beta", "must be positive")
        coeffs = ActionCoeffs.from_preset(self.preset, self.beta)
        try:
            geometry = build_geometry(self.dims, self.rank_grid, self.size)
        except LatticeFarmError as exc:
            raise ValidationError("rank_grid", str(exc)) from None
        params = UpdateParams(coeffs, self.n_heatbath, self.n_overrelax, self.reunitarize_every, self.modulus)
        params.validate(geometry)
        if self.mode == "bench-qcd":
            _check(self.sweeps >= 1, "sweeps", "need at least one timed sweep")
        if self.load:
            _check(Path(self.load).is_file(), "load", f"no such file: {self.load}")
        return self


def _check(ok, field, message):
    if not ok:
        raise ValidationError(field, message)


_TUPLES = ("dims", "rank_grid", "sizes")


def _coerce(key, value):
    if key in _TUPLES:
        if not isinstance(value, (list, tuple)):
            raise ValidationError(key, "expected a list")
        return tuple(int(v) for v in value)
    return value


def load_config_file(path):
    path = Path(path)
    try:
        if path.suffix == ".toml":
            import tomllib  # stdlib from 3.11

            data = tomllib.loads(path.read_text())
        else:
            data = json.loads(path.read_text())
    except ImportError:
        raise ValidationError("config", "TOML config files need Python 3.11+; use JSON") from None
    except (OSError, ValueError) as exc:
        raise ValidationError("config", f"cannot read {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config", "top level must be a table of settings")
    return {k.replace("-", "_"): v for k, v in data.items()}


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="JSON (or TOML) file with default settings")
    g.add_argument("--dims", type=int, nargs=4, metavar=("LX", "LY", "LZ", "LT"))
    g.add_argument("--rank-grid", type=int, nargs=4, metavar=("PX", "PY", "PZ", "PT"))
    g.add_argument("--ranks", type=int, help="expected rank count (checked against the grid)")
    g.add_argument("--backend", choices=BACKENDS)
    g.add_argument("--rendezvous", help="host:port of rank 0 (socket backend)")
    g.add_argument("--timeout", type=float, help="receive timeout in seconds")
    g.add_argument("--rendezvous-timeout", type=float)
    g.add_argument("--format", choices=FORMATS)
    g.add_argument("--output", help="directory for traces, reports and per-rank logs")
    s = common.add_argument_group("simulation")
    s.add_argument("--beta", type=float)
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--sweeps", type=int)
    s.add_argument("--thermalization", type=int)
    s.add_argument("--warmup", type=int, help="untimed sweeps before bench-qcd timing")
    s.add_argument("--seed", type=int)
    s.add_argument("--start", choices=("hot", "cold"))
    s.add_argument("--n-heatbath", type=int)
    s.add_argument("--n-overrelax", type=int)
    s.add_argument("--reunitarize-every", type=int)
    s.add_argument("--modulus", type=int, choices=(2, 4))
    s.add_argument("--load", help="start from this configuration file")
    s.add_argument("--save", help="write the final configuration here")

    parser = argparse.ArgumentParser(prog="latticefarm", description="SU(3) lattice gauge simulator and benchmarks")
    sub = parser.add_subparsers(dest="mode", required=True)
    sub.add_parser("simulate", parents=[common], help="run a simulation and write the observable trace")
    sub.add_parser("bench-qcd", parents=[common], help="time link updates")
    p = sub.add_parser("bench-comm", parents=[common], help="ping-pong bandwidth between ranks 0 and 1")
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--reps", type=int)
    p = sub.add_parser("bench-flops", parents=[common], help="LU factor-and-solve Mflops")
    p.add_argument("--n", type=int)
    p.add_argument("--precision", choices=("single", "double"))
    p = sub.add_parser("cost", parents=[common], help="dollars per Mflop")
    p.add_argument("total_cost", type=float, nargs="?", help="system cost in USD")
    p.add_argument("mflops", type=float, nargs="?", help="aggregate Mflops")
    return parser


def parse_config(argv=None, config_file=None):
    """Merge defaults, config file and flags into a validated RunConfig."""
    ns = vars(build_parser().parse_args(argv))
    values = {}
    path = ns.pop("config", None) or config_file
    if path:
        values.update(load_config_file(path))
    values.update({k: v for k, v in ns.items() if v is not None})
    names = {f.name for f in fields(RunConfig)}
    for key in values:
        if key not in names:
            raise ValidationError(key, "unknown setting")
    try:
        cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ValidationError("config", str(exc)) from None
    return cfg.validate()


def _rank_logger(cfg, rank):
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    logger = logging.getLogger(f"latticefarm.rank{rank}")
    logger.setLevel(logging.INFO)
    logger.propagate = False
    for h in list(logger.handlers):
        logger.removeHandler(h)
        h.close()
    h = logging.FileHandler(out / f"rank-{rank}.log", mode="w")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logger.addHandler(h)
    return logger


def _emit(cfg, name, data):
    """Write a rank-0 result file and echo it to the console."""
    ext = {"text": "txt", "csv": "csv", "json": "json"}[cfg.format]
    path = Path(cfg.output) / f"{name}.{ext}"
    path.write_bytes(data)
    sys.stdout.write(data.decode())
    sys.stdout.flush()


def _run_simulate(cfg, comm, logger):
    trace = str(Path(cfg.output) / "trace.csv") if comm.rank == 0 else None
    console = comm.rank == 0 and cfg.format != "json"

    def show(rec):
        logger.info("sweep %d plaquette %.12f", rec.sweep, rec.avg_plaquette)
        if not console:
            return
        if cfg.format == "csv":
            print(f"{rec.sweep},{rec.avg_plaquette!r},{rec.avg_rectangle!r},{rec.action!r}", flush=True)
        else:
            print(f"{rec.sweep:6d} {rec.avg_plaquette:.10f} {rec.avg_rectangle:.10f} {rec.action:.6f}", flush=True)

    if console:
        print("sweep,avg_plaquette,avg_rectangle,action" if cfg.format == "csv"
              else f"{'sweep':>6} {'plaquette':>12} {'rectangle':>12} {'action':>12}", flush=True)
    res = run_simulation(cfg.simulation(trace), comm, on_record=show)
    if comm.rank == 0 and cfg.format == "json":
        print(json.dumps([dataclasses.asdict(r) for r in res.trace], indent=1))
    return res.trace


def _run_bench_qcd(cfg, comm, logger):
    sim = dataclasses.replace(cfg.simulation(), load_path=cfg.load, save_path=None)
    rep = bench.bench_link_update(sim, comm, warmup=cfg.warmup)
    logger.info("bench-qcd %s", rep)
    if comm.rank == 0:
        _emit(cfg, "bench-qcd", bench.render_report([rep], cfg.format))
    return rep


def _run_bench_comm(cfg, comm, logger):
    rep = bench.bench_pingpong(comm, cfg.sizes, cfg.reps)
    logger.info("bench-comm %s", rep)
    if comm.rank == 0:
        _emit(cfg, "bench-comm", bench.render_report([rep], cfg.format))
    return rep


def _run_bench_flops(cfg, comm, logger):
    rep = bench.bench_flops(cfg.n, cfg.precision, cfg.seed)
    logger.info("bench-flops %s", rep)
    _emit(cfg, "bench-flops", bench.render_report([rep], cfg.format))
    return rep


def _run_cost(cfg):
    value = bench.cost_per_mflop(cfg.total_cost, cfg.mflops)
    print(value)
    return value


_MODE_FN = {"simulate": _run_simulate, "bench-qcd": _run_bench_qcd, "bench-comm": _run_bench_comm,
            "bench-flops": _run_bench_flops}


def run_rank(cfg, comm):
    """Execute the configured mode as one rank."""
    logger = _rank_logger(cfg, comm.rank)
    logger.info("rank %d/%d mode %s", comm.rank, comm.size, cfg.mode)
    try:
        out = _MODE_FN[cfg.mode](cfg, comm, logger)
    except BaseException as exc:
        logger.error("failed: %s: %s", type(exc).__name__, exc)
        raise
    finally:
        for h in logger.handlers:
            h.flush()
    logger.info("done")
    return out


def _report_failure(exc):
    print(f"latticefarm: {type(exc).__name__}: {exc}", file=sys.stderr)


def launch(cfg):
    """Run the configured mode on all ranks; return a process exit status."""
    if cfg.mode == "cost":
        _run_cost(cfg)
        return 0
    if os.environ.get(ENV_WORKER):
        return _worker(cfg)
    Path(cfg.output).mkdir(parents=True, exist_ok=True)
    if cfg.mode == "bench-flops" or cfg.backend == "inprocess":
        try:
            run_ranks(cfg.size, lambda comm: run_rank(cfg, comm), backend="inprocess", timeout=cfg.timeout)
        except Exception as exc:  # noqa: BLE001 - any rank failure becomes the exit status
            _report_failure(exc)
            return 1
        return 0
    return _spawn_workers(cfg)


def _free_address():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return f"127.0.0.1:{s.getsockname()[1]}"


def _spawn_workers(cfg, grace=10.0):
    out = Path(cfg.output)
    cfg_path = out / "run-config.json"
    cfg_path.write_text(cfg.to_json())
    address = cfg.rendezvous or _free_address()
    procs = []
    try:
        for r in range(cfg.size):
            env = dict(os.environ, **{ENV_WORKER: "1", ENV_RANK: str(r), ENV_SIZE: str(cfg.size),
                                      ENV_RENDEZVOUS: address})
            procs.append(subprocess.Popen(
                [sys.executable, "-m", "latticefarm", cfg.mode, "--config", str(cfg_path)],
                env=env,
                stdout=None if r == 0 else subprocess.DEVNULL,
                stderr=None if r == 0 else open(out / f"rank-{r}.stderr", "w"),
            ))
    except OSError as exc:
        for p in procs:
            p.kill()
        raise LaunchFailure(f"cannot start worker: {exc}") from exc
    deadline = None
    while any(p.poll() is None for p in procs):
        if deadline is None and any(p.returncode not in (None, 0) for p in procs):
            deadline = time.monotonic() + grace
        if deadline is not None and time.monotonic() > deadline:
            for p in procs:
                if p.poll() is None:
                    p.kill()
        time.sleep(0.05)
    codes = [p.wait() for p in procs]
    for p in procs:
        if p.stderr:
            p.stderr.close()
    bad = [(r, c) for r, c in enumerate(codes) if c != 0]
    if bad:
        print("latticefarm: rank(s) failed: " + ", ".join(f"{r} (exit {c})" for r, c in bad), file=sys.stderr)
        return 1
    return 0


def _worker(cfg):
    try:
        rank = int(os.environ[ENV_RANK])
        size = int(os.environ.get(ENV_SIZE, cfg.size))
        address = os.environ.get(ENV_RENDEZVOUS) or cfg.rendezvous or default_address()
        if size != cfg.size:
            raise LaunchFailure(f"{ENV_SIZE}={size} but the rank grid needs {cfg.size}")
    except (KeyError, ValueError) as exc:
        _report_failure(LaunchFailure(f"bad worker environment: {exc}"))
        return 2
    except LaunchFailure as exc:
        _report_failure(exc)
        return 2
    comm = None
    try:
        comm = SocketComm(rank, size, address=address, timeout=cfg.timeout,
                          rendezvous_timeout=cfg.rendezvous_timeout)
        run_rank(cfg, comm)
        comm.barrier()
    except Exception as exc:  # noqa: BLE001
        _report_failure(exc)
        return 1
    finally:
        if comm is not None:
            comm.close()
    return 0


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except ValidationError as exc:
        print(f"latticefarm: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        return launch(cfg)
    except LatticeFarmError as exc:
        _report_failure(exc)
        return 1
