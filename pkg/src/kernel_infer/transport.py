"""Exact discrete optimal transport by the transportation (network) simplex.

Balanced problem: supplies ``a`` (n,), demands ``b`` (m,), cost ``C`` (n, m).
The basis is a spanning tree of the bipartite row/column graph with n+m-1
cells; node potentials give reduced costs, and entering cells are chosen by
Dantzig's rule. The result is a vertex of the transportation polytope, so
the cost is exact up to floating-point summation.
"""

from __future__ import annotations

from collections import deque

import numpy as np


class TransportError(RuntimeError):
    pass


def _initial_basis(a, b, C):
    n, m = C.shape
    ra, rb = a.copy(), b.copy()
    row_done = np.zeros(n, bool)
    col_done = np.zeros(m, bool)
    rows_left, cols_left = n, m
    cells, flows = [], []
    for flat in np.argsort(C, axis=None, kind="stable"):
        i, j = divmod(int(flat), m)
        if row_done[i] or col_done[j]:
            continue
        x = min(ra[i], rb[j])
        cells.append((i, j))
        flows.append(max(x, 0.0))
        ra[i] -= x
        rb[j] -= x
        if rows_left == 1 and cols_left == 1:
            break
        # retire exactly one line per allocation so the basis stays a tree
        if rows_left > 1 and (ra[i] <= rb[j] or cols_left == 1):
            row_done[i] = True
            rows_left -= 1
        else:
            col_done[j] = True
            cols_left -= 1
    return cells, flows


def _potentials(n, m, adj, C):
    u = np.zeros(n)
    v = np.zeros(m)
    seen = np.zeros(n + m, bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < n:
                v[nb - n] = C[node, nb - n] - u[node]
            else:
                u[nb] = C[nb, node - n] - v[node - n]
            queue.append(nb)
    return u, v


def _tree_path(adj, src, dst):
    parent = {src: None}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if node == dst:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [dst]
    while path[-1] != src:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_transport(a, b, C, max_iter: int = 1_000_000):
    """Return ``(cost, plan)`` of the optimal coupling between ``a`` and ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    if a.shape != (n,) or b.shape != (m,):
        raise ValueError("shape mismatch between weights and cost matrix")
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum()):
        raise ValueError("transport problem is not balanced")

    flow = np.zeros((n, m))
    is_basic = np.zeros((n, m), bool)
    adj = [set() for _ in range(n + m)]
    for (i, j), x in zip(*_initial_basis(a, b, C)):
        flow[i, j] = x
        is_basic[i, j] = True
        adj[i].add(n + j)
        adj[n + j].add(i)

    tol = 1e-12 * max(1.0, float(np.max(np.abs(C))))
    for _ in range(max_iter):
        u, v = _potentials(n, m, adj, C)
        reduced = C - u[:, None] - v[None, :]
        reduced[is_basic] = 0.0
        flat = int(np.argmin(reduced))
        if reduced.flat[flat] >= -tol:
            break
        i, j = divmod(flat, m)
        path = _tree_path(adj, i, n + j)
        # edges along the row->column path alternate -, +, -, ..., -
        minus, plus = [], []
        for k in range(len(path) - 1):
            p, q = path[k], path[k + 1]
            cell = (p, q - n) if p < n else (q, p - n)
            (minus if k % 2 == 0 else plus).append(cell)
        theta = min(flow[c] for c in minus)
        leave = next(c for c in minus if flow[c] == theta)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[i, j] = theta
        flow[leave] = 0.0
        is_basic[leave] = False
        is_basic[i, j] = True
        li, lj = leave
        adj[li].discard(n + lj)
        adj[n + lj].discard(li)
        adj[i].add(n + j)
        adj[n + j].add(i)
    else:
        raise TransportError(f"network simplex did not converge in {max_iter} pivots")

    cells = np.nonzero(is_basic)
    return float(np.dot(flow[cells], C[cells])), flow
