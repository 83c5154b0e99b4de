#!/usr/bin/env python3
"""Solve an SDPA sparse (.dat-s) file with CVXPY and print the status.

The file is read as the SDPA dual pair used by lpvjump exports:
primal  min <C, X>  s.t.  <A_k, X> = b_k,  X psd (block diagonal),
with C = -F_0, A_k = F_k and b = c. Negative block sizes are diagonal
(nonnegative orthant) blocks.

Usage: sdpa_check.py FILE [FILE ...] [--solver CLARABEL]
Prints one line per file: `<path> <feasible|infeasible|unknown> <cvxpy status>`.
"""

import argparse
import re
import sys

import cvxpy as cp
import numpy as np


def read_sdpa(path):
    with open(path) as fh:
        lines = [l.strip() for l in fh if l.strip() and l.strip()[0] not in '"*']
    tok = lambda s: [t for t in re.split(r"[\s,{}()]+", s) if t]
    m = int(tok(lines[0])[0])
    nblocks = int(tok(lines[1])[0])
    sizes = [int(t) for t in tok(lines[2])[:nblocks]]
    c = np.array([float(t) for t in tok(lines[3])[:m]])
    F = [[dict() for _ in sizes] for _ in range(m + 1)]
    for line in lines[4:]:
        k, b, i, j, v = tok(line)[:5]
        F[int(k)][int(b) - 1][(int(i) - 1, int(j) - 1)] = float(v)
    return m, sizes, c, F


def solve(path, solver):
    m, sizes, c, F = read_sdpa(path)
    # a pure feasibility problem over a cone is invariant under positive
    # scaling of b; bring the tiny epsilon floors to unit size
    if not any(F[0]) and np.abs(c).max() > 0:
        c = c / np.abs(c).max()
    X = []
    cons = []
    for s in sizes:
        if s > 0:
            v = cp.Variable((s, s), symmetric=True)
            cons.append(v >> 0)
        else:
            v = cp.Variable(-s, nonneg=True)
        X.append(v)

    def inner(mat):
        terms = []
        for b, entries in enumerate(mat):
            for (i, j), val in entries.items():
                if sizes[b] > 0:
                    w = val if i == j else 2 * val
                    terms.append(w * X[b][i, j])
                else:
                    terms.append(val * X[b][i])
        return cp.sum(cp.hstack(terms)) if terms else cp.Constant(0.0)

    for k in range(1, m + 1):
        cons.append(inner(F[k]) == c[k - 1])
    prob = cp.Problem(cp.Minimize(-inner(F[0])), cons)
    try:
        prob.solve(solver=solver)
    except cp.error.SolverError as e:
        return "unknown", f"solver_error:{e}"
    st = prob.status
    if st in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE, cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return "feasible", st
    if st in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return "infeasible", st
    return "unknown", st


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("files", nargs="+")
    ap.add_argument("--solver", default="CLARABEL")
    args = ap.parse_args()
    for f in args.files:
        verdict, st = solve(f, args.solver)
        print(f, verdict, st)
    return 0


if __name__ == "__main__":
    sys.exit(main())
