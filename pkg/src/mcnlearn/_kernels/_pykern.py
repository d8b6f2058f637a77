"""Pure-Python kernels: reference implementation of the hot graph loops.

Same contracts as the compiled twin in ``_ckern.pyx``; kept deliberately
simple so it can serve as the correctness reference in tests.
"""

import numpy as np


def reachable_mask(indptr, indices, n, seeds):
    """Depth-first reachability over a CSR adjacency.

    Returns a uint8 array of length ``n`` with 1 for every node reachable
    from ``seeds`` (seeds included).
    """
    visited = np.zeros(n, dtype=np.uint8)
    stack = []
    for s in seeds:
        s = int(s)
        if not visited[s]:
            visited[s] = 1
            stack.append(s)
    while stack:
        v = stack.pop()
        for u in indices[indptr[v] : indptr[v + 1]]:
            if not visited[u]:
                visited[u] = 1
                stack.append(int(u))
    return visited


def saved_weight(indptr, indices, n, weights, seeds):
    """Total weight of nodes NOT reachable from ``seeds``."""
    visited = reachable_mask(indptr, indices, n, seeds)
    total = 0
    for i in range(n):
        if not visited[i]:
            total += int(weights[i])
    return total


def ldp(indptr, indices, n):
    """Local degree profile: (deg, min, max, mean, std) of neighbour degrees.

    ``std`` is the population standard deviation; isolated nodes get all
    zeros.
    """
    out = np.zeros((n, 5), dtype=np.float64)
    deg = np.diff(indptr).astype(np.float64)
    for v in range(n):
        lo, hi = int(indptr[v]), int(indptr[v + 1])
        d = hi - lo
        out[v, 0] = d
        if d == 0:
            continue
        nd = deg[indices[lo:hi]]
        out[v, 1] = nd.min()
        out[v, 2] = nd.max()
        mean = nd.mean()
        out[v, 3] = mean
        out[v, 4] = np.sqrt(np.mean((nd - mean) ** 2))
    return out
