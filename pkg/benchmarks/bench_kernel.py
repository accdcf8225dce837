"""Compare the compiled and pure-Python Euler-Maruyama kernels.

    python3 benchmarks/bench_kernel.py [--steps N] [--repeat R]

Both backends integrate the same blocks from the same normals; the script
checks that the paths agree bit for bit and reports steps per second.
"""
import argparse
import time

import numpy as np

from shcsp import kernel
from shcsp.parser import parse_block

BLOCKS = {
    "ou-1d": ("{d[s] = -s dt + 0.5 dW & s < 1000}", {"s": 0.3}),
    "gbm-1d": ("{d[s] = -s dt + s dW & s > 0}", {"s": 0.5}),
    "aircraft-2d": (
        "{d[x, y] = v*[cos(piecewise(y > 0: -pi/4, y < 0: pi/4, else: 0)), "
        "sin(piecewise(y > 0: -pi/4, y < 0: pi/4, else: 0))] dt + I2 dW & x <= 1000000}",
        {"x": 0.0, "y": 0.1, "v": 1.0},
    ),
}


def bench(prog, v0, z, h, steps, backend, repeat):
    best = float("inf")
    out = np.empty((steps, prog.d))
    for _ in range(repeat):
        v = v0.copy()
        t = time.perf_counter()
        taken, status = kernel.integrate(prog, v, z, h, steps, out, backend=backend)
        best = min(best, time.perf_counter() - t)
    return best, out[:taken].copy(), status


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(12345)
    backends = kernel.available_backends()
    print(f"backends: {', '.join(backends)}; {args.steps} steps, best of {args.repeat}")
    print(f"{'block':<14}{'backend':<10}{'seconds':>10}{'Msteps/s':>10}{'speedup':>9}  identical")
    for name, (text, vals) in BLOCKS.items():
        prog = kernel.compile_block(parse_block(text))
        v0 = np.array([vals[n] for n in prog.names], dtype=np.float64)
        z = rng.standard_normal(args.steps * prog.k)
        results = {b: bench(prog, v0, z, 1e-4, args.steps, b, args.repeat) for b in backends}
        ref = results["python"]
        for b in backends:
            secs, path, _ = results[b]
            same = path.shape == ref[1].shape and np.array_equal(path, ref[1])
            speed = ref[0] / secs
            print(f"{name:<14}{b:<10}{secs:>10.4f}{args.steps / secs / 1e6:>10.3f}{speed:>9.1f}  {same}")


if __name__ == "__main__":
    main()
