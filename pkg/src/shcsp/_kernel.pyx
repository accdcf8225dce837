# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler–Maruyama loop over block bytecode.

Mirrors ``_pykernel.integrate`` operation for operation.
"""
from libc.math cimport sin, cos, exp, sqrt, fabs, isfinite, isinf
from libc.stdlib cimport malloc, free

cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_NEG = 2
    OP_ADD = 3
    OP_SUB = 4
    OP_MUL = 5
    OP_DIV = 6
    OP_SIN = 7
    OP_COS = 8
    OP_EXP = 9
    OP_SQRT = 10
    OP_ABS = 11
    OP_SGN = 12
    OP_MIN = 13
    OP_MAX = 14
    OP_LT = 15
    OP_LE = 16
    OP_EQ = 17
    OP_GE = 18
    OP_GT = 19
    OP_NOT = 20
    OP_AND = 21
    OP_OR = 22
    OP_JIF = 23
    OP_JMP = 24


cdef inline double _truth(bint b) nogil:
    return 1.0 if b else 0.0


cdef int _eval(const int* ops, const int* args, const double* consts, int start, int end,
               const double* v, double* stack, double* result) noexcept nogil:
    cdef int pc = start
    cdef int sp = 0
    cdef int op
    cdef double a, b, r
    while pc < end:
        op = ops[pc]
        if op == OP_CONST:
            stack[sp] = consts[args[pc]]
            sp += 1
        elif op == OP_VAR:
            stack[sp] = v[args[pc]]
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            if stack[sp] == 0.0:
                return 1
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == OP_SIN:
            a = stack[sp - 1]
            if isinf(a):
                return 1
            stack[sp - 1] = sin(a)
        elif op == OP_COS:
            a = stack[sp - 1]
            if isinf(a):
                return 1
            stack[sp - 1] = cos(a)
        elif op == OP_EXP:
            a = stack[sp - 1]
            r = exp(a)
            if isinf(r) and not isinf(a):
                return 1
            stack[sp - 1] = r
        elif op == OP_SQRT:
            a = stack[sp - 1]
            if a < 0:
                return 1
            stack[sp - 1] = sqrt(a)
        elif op == OP_ABS:
            stack[sp - 1] = fabs(stack[sp - 1])
        elif op == OP_SGN:
            a = stack[sp - 1]
            stack[sp - 1] = <double>((a > 0) - (a < 0))
        elif op == OP_MIN:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            stack[sp - 1] = b if b < a else a
        elif op == OP_MAX:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            stack[sp - 1] = b if b > a else a
        elif op == OP_LT:
            sp -= 1
            stack[sp - 1] = _truth(stack[sp - 1] < stack[sp])
        elif op == OP_LE:
            sp -= 1
            stack[sp - 1] = _truth(stack[sp - 1] <= stack[sp])
        elif op == OP_EQ:
            sp -= 1
            stack[sp - 1] = _truth(stack[sp - 1] == stack[sp])
        elif op == OP_GE:
            sp -= 1
            stack[sp - 1] = _truth(stack[sp - 1] >= stack[sp])
        elif op == OP_GT:
            sp -= 1
            stack[sp - 1] = _truth(stack[sp - 1] > stack[sp])
        elif op == OP_NOT:
            stack[sp - 1] = _truth(stack[sp - 1] == 0.0)
        elif op == OP_AND:
            sp -= 1
            stack[sp - 1] = _truth(stack[sp - 1] != 0.0 and stack[sp] != 0.0)
        elif op == OP_OR:
            sp -= 1
            stack[sp - 1] = _truth(stack[sp - 1] != 0.0 or stack[sp] != 0.0)
        elif op == OP_JIF:
            sp -= 1
            if stack[sp] == 0.0:
                pc = args[pc]
                continue
        elif op == OP_JMP:
            pc = args[pc]
            continue
        else:
            return 2
        pc += 1
    result[0] = stack[0]
    return 0


def integrate(const int[::1] ops, const int[::1] args, const double[::1] consts,
              const int[:, ::1] entries, int d, int k, int max_depth,
              double[::1] v, const double[::1] z, double h, int nsteps, double[:, ::1] out):
    cdef int ncoeff = d + d * k
    cdef int guard_entry = ncoeff
    cdef double sqrt_h = sqrt(h)
    cdef double* stack = <double*> malloc((max_depth + 1) * sizeof(double))
    cdef double* c = <double*> malloc((ncoeff + 1) * sizeof(double))
    cdef double* new = <double*> malloc((d + 1) * sizeof(double))
    cdef double s, g
    cdef int step, i, j, e, base, row, status = 0, taken = nsteps
    cdef bint finite
    if stack == NULL or c == NULL or new == NULL:
        free(stack)
        free(c)
        free(new)
        raise MemoryError()
    try:
        with nogil:
            for step in range(nsteps):
                for e in range(ncoeff):
                    if _eval(&ops[0], &args[0], &consts[0], entries[e, 0], entries[e, 1],
                             &v[0], stack, &c[e]) != 0:
                        status = 2
                        break
                if status != 0:
                    taken = step
                    break
                base = step * k
                for i in range(d):
                    s = v[i] + c[i] * h
                    row = d + i * k
                    for j in range(k):
                        s = s + c[row + j] * (sqrt_h * z[base + j])
                    new[i] = s
                finite = True
                for i in range(d):
                    v[i] = new[i]
                    out[step, i] = new[i]
                    if not isfinite(new[i]):
                        finite = False
                if not finite:
                    status = 3
                    taken = step + 1
                    break
                if _eval(&ops[0], &args[0], &consts[0], entries[guard_entry, 0],
                         entries[guard_entry, 1], &v[0], stack, &g) != 0:
                    status = 2
                    taken = step + 1
                    break
                if g == 0.0:
                    status = 1
                    taken = step + 1
                    break
    finally:
        free(stack)
        free(c)
        free(new)
    return taken, status
