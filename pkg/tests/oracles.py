"""Independent reference implementations used by the tests."""
import functools
import itertools
import math

import numpy as np


@functools.lru_cache(maxsize=None)
def _bases(n, m):
    """Nonsingular column subsets of the (reduced) transportation constraint matrix."""
    A = np.zeros((n + m, n * m))
    for i in range(n):
        for j in range(m):
            A[i, i * m + j] = 1.0
            A[n + j, i * m + j] = 1.0
    A = A[:-1]  # one constraint is redundant
    k = n + m - 1
    subsets = np.array(list(itertools.combinations(range(n * m), k)), dtype=int)
    mats = A[:, subsets].transpose(1, 0, 2)  # (S, k, k)
    keep = np.abs(np.linalg.det(mats)) > 1e-9
    return subsets[keep], mats[keep]


def polytope_ot(a, b, M):
    """Exact OT cost as the minimum over the vertices of the transportation polytope."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = len(a), len(b)
    subsets, mats = _bases(n, m)
    rhs = np.concatenate([a, b])[:-1]
    x = np.linalg.solve(mats, np.broadcast_to(rhs, (len(mats), len(rhs)))[..., None])[..., 0]
    feasible = np.all(x >= -1e-12, axis=1)
    cost = (x * M.reshape(-1)[subsets]).sum(1)
    return float(cost[feasible].min())


def truncated_w1_oracle(X, a, Y, b, u):
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    if a.sum() == 0 and b.sum() == 0:
        return 0.0
    if a.sum() == 0 or b.sum() == 0:
        return float(u)
    M = np.minimum(np.linalg.norm(X[:, None] - Y[None], axis=-1), u)
    return polytope_ot(a, b, M)


def hausdorff_oracle(A, B):
    D = np.linalg.norm(np.asarray(A)[:, None] - np.asarray(B)[None], axis=-1)
    return max(D.min(1).max(), D.min(0).max())
