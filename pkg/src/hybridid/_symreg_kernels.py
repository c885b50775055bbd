"""Compiled stack-machine evaluator for postfix expression programs."""

import numpy as np

from ._accel import njit

OP_VAR = 0
OP_CONST = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4


@njit
def eval_postfix(codes, args, consts, XT, depth):
    """Evaluate a postfix program column-wise. ``XT`` is (d, N)."""
    N = XT.shape[1]
    stack = np.empty((depth, N))
    sp = 0
    for k in range(codes.shape[0]):
        c = codes[k]
        if c == OP_VAR:
            a = args[k]
            for i in range(N):
                stack[sp, i] = XT[a, i]
            sp += 1
        elif c == OP_CONST:
            v = consts[args[k]]
            for i in range(N):
                stack[sp, i] = v
            sp += 1
        elif c == OP_ADD:
            for i in range(N):
                stack[sp - 2, i] += stack[sp - 1, i]
            sp -= 1
        elif c == OP_SUB:
            for i in range(N):
                stack[sp - 2, i] -= stack[sp - 1, i]
            sp -= 1
        else:
            for i in range(N):
                stack[sp - 2, i] *= stack[sp - 1, i]
            sp -= 1
    out = stack[0].copy()
    for i in range(N):
        if not np.isfinite(out[i]):
            out[i] = np.inf
    return out
