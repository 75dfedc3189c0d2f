"""Sweep throughput of the numba kernels against the pure-numpy fallback.

Each path runs in its own interpreter, selected with LATTICEFARM_DISABLE_JIT,
so module-level dispatch is exercised exactly as users would hit it.

    python benchmarks/bench_kernels.py --dims 8 8 8 8 --sweeps 5 --preset symanzik
"""

import argparse
import json
import os
import subprocess
import sys


def worker(args):
    from latticefarm import _accel
    from latticefarm.bench import bench_link_update
    from latticefarm.comm import run_ranks
    from latticefarm.montecarlo import SimulationConfig

    cfg = SimulationConfig(dims=tuple(args.dims), beta=args.beta, preset=args.preset, sweeps=args.sweeps,
                           start="hot", seed=7)
    rep = run_ranks(1, lambda c: bench_link_update(cfg, c, warmup=1))[0]
    print(json.dumps(dict(numba=_accel.USE_NUMBA, us_inclusive=rep.us_per_link_inclusive,
                          us_compute=rep.us_per_link_compute, links=rep.links_updated)))


def run_path(disable_jit, argv):
    env = dict(os.environ, LATTICEFARM_DISABLE_JIT="1" if disable_jit else "0")
    out = subprocess.run([sys.executable, __file__, "--worker", *argv], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--dims", type=int, nargs=4, default=[4, 4, 4, 4])
    p.add_argument("--sweeps", type=int, default=3)
    p.add_argument("--beta", type=float, default=5.7)
    p.add_argument("--preset", choices=("wilson", "symanzik"), default="wilson")
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.worker:
        return worker(args)
    passthrough = ["--dims", *map(str, args.dims), "--sweeps", str(args.sweeps), "--beta", str(args.beta),
                   "--preset", args.preset]
    nb = run_path(False, passthrough)
    np_ = run_path(True, passthrough)
    print(f"lattice {'x'.join(map(str, args.dims))}, {args.preset}, {args.sweeps} sweeps, "
          f"{nb['links']} link updates per path")
    print(f"{'path':<8}{'usec/link':>12}{'compute':>12}")
    for name, r in (("numba", nb), ("numpy", np_)):
        print(f"{name:<8}{r['us_inclusive']:>12.3f}{r['us_compute']:>12.3f}")
    print(f"compute speedup numba/numpy: {np_['us_compute'] / nb['us_compute']:.1f}x")


if __name__ == "__main__":
    main()
