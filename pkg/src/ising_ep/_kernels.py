"""Compiled Metropolis kernels.

Random numbers are drawn by the caller and passed in, so the kernels are
pure functions of their arguments.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def local_fields(indptr, indices, data, h, s):
    n = s.shape[0]
    f = h.copy()
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * s[indices[k]]
        f[i] += acc
    return f


@numba.njit(cache=True)
def sweep_inplace(indptr, indices, data, s, f, temperature, order, uniforms):
    """One pass of single-spin Metropolis proposals in the given order.

    ``f`` holds the local fields ``sum_j J_ij s_j + h_i`` and is kept in sync.
    """
    for t in range(order.shape[0]):
        i = order[t]
        dE = -2.0 * s[i] * f[i]
        if dE < 0.0:
            flip = True
        elif temperature > 0.0:
            flip = uniforms[t] < np.exp(-dE / temperature)
        else:
            flip = False
        if flip:
            s[i] = -s[i]
            delta = 2.0 * s[i]
            for k in range(indptr[i], indptr[i + 1]):
                f[indices[k]] += data[k] * delta


@numba.njit(cache=True)
def anneal_batch(indptr, indices, data, h, init, temps, orders, uniforms):
    """Run ``len(temps)`` sweeps on each row of ``init``.

    orders/uniforms have shape (reads, sweeps, n).
    """
    out = init.copy()
    for r in range(out.shape[0]):
        s = out[r]
        f = local_fields(indptr, indices, data, h, s.astype(np.float64))
        for k in range(temps.shape[0]):
            sweep_inplace(indptr, indices, data, s, f, temps[k], orders[r, k], uniforms[r, k])
    return out


@numba.njit(cache=True)
def chain_histogram(indptr, indices, data, h, init, temperature, orders, uniforms, counts):
    """Fixed-temperature chain; after each sweep, bump ``counts`` at the state's index.

    State index uses the lexicographic order of the enumeration helpers.
    """
    s = init.copy()
    n = s.shape[0]
    f = local_fields(indptr, indices, data, h, s.astype(np.float64))
    for k in range(orders.shape[0]):
        sweep_inplace(indptr, indices, data, s, f, temperature, orders[k], uniforms[k])
        idx = 0
        for i in range(n):
            idx = idx * 2 + (1 if s[i] > 0 else 0)
        counts[idx] += 1
    return s
