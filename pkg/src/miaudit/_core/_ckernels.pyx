# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def masked_norm_coo(eu, ew, keep_node, Py_ssize_t n):
    cdef const long long[::1] u = np.ascontiguousarray(eu, dtype=np.int64)
    cdef const long long[::1] w = np.ascontiguousarray(ew, dtype=np.int64)
    cdef const unsigned char[::1] keepn = np.ascontiguousarray(keep_node, dtype=np.uint8)
    cdef Py_ssize_t m = u.shape[0], i, k = 0, kept = 0
    cdef double[::1] deg = np.ones(n, dtype=np.float64)
    for i in range(m):
        if keepn[u[i]] and keepn[w[i]]:
            deg[u[i]] += 1.0
            deg[w[i]] += 1.0
            kept += 1
    rows_a = np.empty(n + 2 * kept, dtype=np.int64)
    cols_a = np.empty(n + 2 * kept, dtype=np.int64)
    vals_a = np.empty(n + 2 * kept, dtype=np.float64)
    cdef long long[::1] rows = rows_a
    cdef long long[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    cdef double wt
    for i in range(n):
        rows[i] = i
        cols[i] = i
        vals[i] = 1.0 / deg[i]
    for i in range(m):
        if keepn[u[i]] and keepn[w[i]]:
            wt = 1.0 / sqrt(deg[u[i]] * deg[w[i]])
            rows[n + k] = u[i]
            cols[n + k] = w[i]
            vals[n + k] = wt
            rows[n + kept + k] = w[i]
            cols[n + kept + k] = u[i]
            vals[n + kept + k] = wt
            k += 1
    return rows_a, cols_a, vals_a


def mh_steps(log_table, long long state, flips, log_u,
             Py_ssize_t first_record, Py_ssize_t thinning):
    cdef const double[::1] table = np.ascontiguousarray(log_table, dtype=np.float64)
    cdef const long long[::1] fl = np.ascontiguousarray(flips, dtype=np.int64)
    cdef const double[::1] lu = np.ascontiguousarray(log_u, dtype=np.float64)
    cdef Py_ssize_t T = fl.shape[0], t, r = 0
    cdef Py_ssize_t nxt = first_record if first_record >= 0 else T
    cdef Py_ssize_t n_rec = 0
    if first_record >= 0 and first_record < T:
        n_rec = (T - 1 - first_record) // thinning + 1
    records_a = np.empty(n_rec, dtype=np.int64)
    cdef long long[::1] records = records_a
    cdef long long cur = state, prop
    cdef double cur_lp = table[cur], prop_lp
    cdef long long accepted = 0
    for t in range(T):
        prop = cur ^ fl[t]
        prop_lp = table[prop]
        if prop_lp - cur_lp > lu[t]:
            cur = prop
            cur_lp = prop_lp
            accepted += 1
        if t == nxt:
            records[r] = cur
            r += 1
            nxt += thinning
    return cur, accepted, records_a
