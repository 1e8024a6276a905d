"""Numba vs pure-numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeats 3] [--quick]

Both backends live in the same process; the switch flips the flag the package
reads at call time (``HFSDIFF_DISABLE_NUMBA=1`` at import does the same for a
whole run). Each row also checks that the two backends return identical arrays.
"""
import argparse
import time

import numpy as np

from hfsdiff.denoiser import Architecture, DenoiserNet
from hfsdiff.diffusion import BetaSchedule, DiffusionSpec, forward_chain
from hfsdiff.kernels import _accel
from hfsdiff.rng import RngStream


def best_of(fn, repeats):
    out, best = None, np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(quick):
    n_norm = 200_000 if quick else 2_000_000
    chain_batch, chain_steps = (200, 200) if quick else (500, 1000)
    spec = DiffusionSpec("HFS_VP", BetaSchedule(N=chain_steps), n_l=4)
    x0 = np.broadcast_to(RngStream(1).complex_normal((16, 16)), (chain_batch, 16, 16))
    net = DenoiserNet(DiffusionSpec("HFS_VP", n_l=4), Architecture())
    xt = RngStream(2).complex_normal((8, 16, 16))
    t = RngStream(3).uniform(8)
    target = RngStream(4).complex_normal((8, 16, 16))
    return [
        (f"normals x{n_norm}", lambda: RngStream(7).normal(n_norm)),
        (f"forward chain {chain_batch}x16x16, {chain_steps} steps",
         lambda: forward_chain(x0, spec, chain_steps, RngStream(8))),
        ("denoiser loss+grad, batch 8, 16x16", lambda: net.loss_and_grad(xt, t, target)[1][0]),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable (or HFSDIFF_DISABLE_NUMBA is set); nothing to compare")

    print(f"{'kernel':<44}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  identical")
    for label, fn in cases(args.quick):
        _accel.USE_NUMBA = True
        fn()  # compile outside the timed region
        t_nb, a = best_of(fn, args.repeats)
        _accel.USE_NUMBA = False
        t_np, b = best_of(fn, args.repeats)
        _accel.USE_NUMBA = True
        same = np.array_equal(a, b)
        print(f"{label:<44}{t_nb:>10.3f}{t_np:>10.3f}{t_np / t_nb:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
