"""Independent oracles for the test suite.

Everything here is deliberately written from scratch (plain Python loops,
brute-force enumeration) so it shares no code path with the package under
test.
"""
import itertools
import math

import numpy as np


def scan_stats(rewards, columns, capacity):
    """Full scan for max |reward|, max |entry|, min/max per-column budget."""
    n = len(rewards)
    r_bar = 0.0
    for r in rewards:
        r_bar = max(r_bar, abs(float(r)))
    a_bar = 0.0
    for row in columns:
        for v in row:
            a_bar = max(a_bar, abs(float(v)))
    budgets = [float(c) / n for c in capacity]
    return r_bar, a_bar, min(budgets), max(budgets)


def elementwise_violation(columns, capacity, x):
    """Positive-part violation norm computed entry by entry."""
    total = 0.0
    for i, row in enumerate(columns):
        used = 0.0
        for j, v in enumerate(row):
            used += float(v) * float(x[j])
        over = used - float(capacity[i])
        if over > 0.0:
            total += over * over
    return math.sqrt(total)


def saa_objective(rewards, columns, capacity, p):
    n = len(rewards)
    m = len(capacity)
    value = 0.0
    for i in range(m):
        value += (float(capacity[i]) / n) * float(p[i])
    acc = 0.0
    for j in range(n):
        slack = float(rewards[j])
        for i in range(m):
            slack -= float(columns[i][j]) * float(p[i])
        if slack > 0.0:
            acc += slack
    return value + acc / n


def box_lp_vertex_oracle(rewards, columns, capacity, tol=1e-9):
    """Best objective of ``max r@x, Ax<=b, 0<=x<=1`` by candidate-vertex enumeration.

    A vertex pins n constraints: k rows are solved as equalities for k chosen
    variables while every other variable sits on a box face.  Feasible only
    for small n and m.
    """
    r = np.asarray(rewards, dtype=float)
    A = np.asarray(columns, dtype=float)
    b = np.asarray(capacity, dtype=float)
    m, n = A.shape
    best = -math.inf
    for k in range(0, min(m, n) + 1):
        nf = n - k
        combos = ((np.arange(1 << nf)[:, None] >> np.arange(nf)) & 1).astype(float)
        for rows in itertools.combinations(range(m), k):
            R = list(rows)
            for free in itertools.combinations(range(n), k):
                F = list(free)
                Fx = [j for j in range(n) if j not in free]
                if k:
                    M = A[np.ix_(R, F)]
                    rhs = b[R][:, None] - A[np.ix_(R, Fx)] @ combos.T if nf else b[R][:, None]
                    try:
                        Y = np.linalg.solve(M, rhs)
                    except np.linalg.LinAlgError:
                        continue
                else:
                    Y = np.zeros((0, combos.shape[0]))
                X = np.empty((combos.shape[0], n))
                if nf:
                    X[:, Fx] = combos
                if k:
                    X[:, F] = Y.T
                feasible = ((X >= -tol).all(axis=1)
                            & (X <= 1.0 + tol).all(axis=1)
                            & ((X @ A.T) <= b + tol).all(axis=1))
                if feasible.any():
                    cand = float((X[feasible] @ r).max())
                    if cand > best:
                        best = cand
    return best


def reference_one_pass(rewards, columns, capacity, gammas, *, gate=False, nonstationary=False):
    """Straight-line re-implementation of the one-pass runs, in plain Python.

    ``columns[t]`` is the usage vector of column t.  Returns the realized
    decisions, the final prices, and the full price history (prices after
    each step, starting with the zero vector).
    """
    n = len(rewards)
    m = len(capacity)
    d = [float(capacity[i]) / n for i in range(m)]
    b_rem = [float(c) for c in capacity]
    consumed = [0.0] * m
    p = [0.0] * m
    history = [list(p)]
    decisions = []
    for t in range(n):
        a = columns[t]
        score = 0.0
        for i in range(m):
            score += float(a[i]) * p[i]
        tentative = 1 if float(rewards[t]) > score else 0
        realized = tentative
        if gate and tentative:
            for i in range(m):
                if consumed[i] + float(a[i]) > float(capacity[i]):
                    realized = 0
                    break
        if realized:
            for i in range(m):
                consumed[i] += float(a[i])
        decisions.append(realized)
        g = gammas[t]
        if nonstationary:
            for i in range(m):
                b_rem[i] -= float(a[i]) * realized
            if t + 1 < n:
                target = [b_rem[i] / (n - (t + 1)) for i in range(m)]
                p = [max(p[i] + g * (float(a[i]) * realized - target[i]), 0.0) for i in range(m)]
        else:
            driver = tentative if gate else realized
            p = [max(p[i] + g * (float(a[i]) * driver - d[i]), 0.0) for i in range(m)]
        history.append(list(p))
    return decisions, p, history


def subgradient_price_cap(rewards, columns, capacity):
    """Plain-python evaluation of the price-norm cap from the instance extremes."""
    r_bar, a_bar, d_lo, d_hi = scan_stats(rewards, columns, capacity)
    m = len(capacity)
    return (2.0 * r_bar + m * (a_bar + d_hi) ** 2) / d_lo + m * (a_bar + d_hi)
