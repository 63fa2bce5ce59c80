"""Exact small-instance optimal transport, used as a ground-truth oracle."""

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog


def w1_exact_2d(masses_a, masses_b, centers_x, centers_y):
    """W1 between two grid measures on the square with the sup metric.

    Solves the full transportation LP; only viable for small grids.
    """
    a = np.asarray(masses_a, dtype=float).ravel()
    b = np.asarray(masses_b, dtype=float).ravel()
    keep_a = a > 0
    keep_b = b > 0
    gx, gy = np.meshgrid(centers_x, centers_y, indexing="ij")
    pa = np.column_stack([gx.ravel()[keep_a], gy.ravel()[keep_a]])
    pb = np.column_stack([gx.ravel()[keep_b], gy.ravel()[keep_b]])
    a = a[keep_a] / a[keep_a].sum()
    b = b[keep_b] / b[keep_b].sum()
    b *= a.sum() / b.sum()  # balance to the last ulp
    na, nb = a.size, b.size
    cost = np.maximum(
        np.abs(pa[:, 0][:, None] - pb[:, 0][None, :]),
        np.abs(pa[:, 1][:, None] - pb[:, 1][None, :]),
    ).ravel()
    rows_i = np.repeat(np.arange(na), nb)
    rows_j = na + np.tile(np.arange(nb), na)
    cols = np.arange(na * nb)
    a_eq = sp.coo_matrix(
        (np.ones(2 * na * nb), (np.concatenate([rows_i, rows_j]), np.concatenate([cols, cols]))),
        shape=(na + nb, na * nb),
    ).tocsc()[:-1]  # the final demand row is linearly dependent
    b_eq = np.concatenate([a, b])[:-1]
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.success, res.message
    return float(res.fun)
