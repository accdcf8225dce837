"""Pure-Python Euler–Maruyama loop, the fallback for ``_kernel``."""
import math

from .expr import EvaluationError

_EVAL_FAILURES = (EvaluationError, ValueError, OverflowError, ZeroDivisionError)


def integrate(coeff_fn, guard_fn, d, k, v, z, h, nsteps, out):
    sqrt_h = math.sqrt(h)
    state = [float(x) for x in v]
    zs = z.tolist()
    isfinite = math.isfinite
    for step in range(nsteps):
        try:
            c = coeff_fn(state)
        except _EVAL_FAILURES:
            v[:] = state
            return step, 2
        base = step * k
        new = [0.0] * d
        for i in range(d):
            s = state[i] + c[i] * h
            row = d + i * k
            for j in range(k):
                s = s + c[row + j] * (sqrt_h * zs[base + j])
            new[i] = s
        finite = True
        for i in range(d):
            state[i] = new[i]
            out[step, i] = new[i]
            if not isfinite(new[i]):
                finite = False
        if not finite:
            v[:] = state
            return step + 1, 3
        try:
            ok = guard_fn(state)[0]
        except _EVAL_FAILURES:
            v[:] = state
            return step + 1, 2
        if not ok:
            v[:] = state
            return step + 1, 1
    v[:] = state
    return nsteps, 0
