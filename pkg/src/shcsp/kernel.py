"""Euler–Maruyama stepping kernels.

Two interchangeable backends advance a compiled SDE block by a number of
steps:

* ``shcsp._kernel`` (Cython) interprets the block's bytecode in C;
* ``shcsp._pykernel`` runs Python functions generated from the same
  expressions.

Both perform the same floating point operations in the same order, so they
give bit-identical paths.  The compiled one is used when importable; set
``SHCSP_KERNEL=python`` to force the fallback.

Status codes returned by ``integrate``:

====  =====================================================
0     all steps taken, domain true after each
1     domain false after the last step taken
2     evaluation error (division by zero, sqrt of negative)
3     non-finite state after the last step taken
====  =====================================================
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .expr import Bytecode, compile_function, free_vars
from .syntax import SdeBlock

OK, GUARD_FALSE, EVAL_ERROR, NON_FINITE = 0, 1, 2, 3

from . import _pykernel

try:
    from . import _kernel as _ckernel
except ImportError:  # extension not built
    _ckernel = None


def available_backends() -> list[str]:
    return (["cython"] if _ckernel is not None else []) + ["python"]


def default_backend() -> str:
    forced = os.environ.get("SHCSP_KERNEL", "").strip().lower()
    if forced == "python" or _ckernel is None:
        return "python"
    return "cython"


class BlockCompileError(ValueError):
    pass


@dataclass
class KernelProgram:
    """A block lowered for the kernels.

    The state vector ``v`` holds the block variables first, then the
    parameters (other variables the coefficients read, constant while the
    block evolves).
    """

    block: SdeBlock
    names: tuple
    d: int
    k: int
    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    entries: np.ndarray
    max_depth: int
    coeff_fn: object  # v -> (b_1..b_d, sigma_11..sigma_dk)
    guard_fn: object  # v -> bool

    @property
    def params(self) -> tuple:
        return self.names[self.d:]


def compile_block(block: SdeBlock) -> KernelProgram:
    problems = block.problems()
    if problems:
        raise BlockCompileError("; ".join(problems))
    d, k = block.dim, block.brownian_dim
    coeffs = list(block.drift) + [e for row in block.diffusion for e in row]
    read = set()
    for e in coeffs + [block.domain]:
        read |= free_vars(e)
    if "now" in read and "now" not in block.vars:
        raise BlockCompileError("time-dependent coefficients are not supported (block reads now)")
    params = tuple(sorted(read - set(block.vars)))
    names = tuple(block.vars) + params
    index = {n: i for i, n in enumerate(names)}
    code = Bytecode()
    for e in coeffs:
        code.add(e, index)
    code.add(block.domain, index)
    return KernelProgram(
        block=block,
        names=names,
        d=d,
        k=k,
        ops=np.asarray(code.ops, dtype=np.int32),
        args=np.asarray(code.args, dtype=np.int32),
        consts=np.asarray(code.consts or [0.0], dtype=np.float64),
        entries=np.asarray(code.entries, dtype=np.int32).reshape(-1, 2),
        max_depth=max(code.max_depth, 1),
        coeff_fn=compile_function(coeffs, index),
        guard_fn=compile_function([block.domain], index),
    )


def guard(prog: KernelProgram, v) -> bool:
    return bool(prog.guard_fn(v)[0])


def integrate(prog: KernelProgram, v: np.ndarray, z: np.ndarray, h: float, nsteps: int,
              out: np.ndarray, backend: str | None = None) -> tuple[int, int]:
    """Take up to ``nsteps`` steps of size ``h`` in place on ``v``.

    ``z`` holds ``nsteps * k`` standard normals; ``out[i]`` receives the
    block state after step ``i``.  Returns ``(steps_taken, status)``.
    """
    backend = backend or default_backend()
    if nsteps <= 0:
        return 0, OK
    if backend == "cython":
        if _ckernel is None:
            raise RuntimeError("compiled kernel is not available")
        return _ckernel.integrate(prog.ops, prog.args, prog.consts, prog.entries, prog.d, prog.k,
                                  prog.max_depth, v, z, h, nsteps, out)
    return _pykernel.integrate(prog.coeff_fn, prog.guard_fn, prog.d, prog.k, v, z, h, nsteps, out)
