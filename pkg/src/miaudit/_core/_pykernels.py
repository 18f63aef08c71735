"""Pure-Python/NumPy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation so that both backends
produce bit-identical results from the same random draws.
"""
import numpy as np


def masked_norm_coo(eu, ew, keep_node, n):
    """Symmetric-normalised adjacency with self-loops, restricted to kept nodes.

    Returns COO triplets ``(rows, cols, vals)``: ``n`` self-loops first, then
    each retained edge in both directions.
    """
    eu = np.asarray(eu, dtype=np.int64)
    ew = np.asarray(ew, dtype=np.int64)
    keep_node = np.asarray(keep_node, dtype=np.uint8)
    keep = (keep_node[eu] & keep_node[ew]).astype(bool)
    ku, kw = eu[keep], ew[keep]
    deg = np.ones(n, dtype=np.float64)
    np.add.at(deg, ku, 1.0)
    np.add.at(deg, kw, 1.0)
    w = 1.0 / np.sqrt(deg[ku] * deg[kw])
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([loops, ku, kw])
    cols = np.concatenate([loops, kw, ku])
    vals = np.concatenate([1.0 / deg, w, w])
    return rows, cols, vals


def mh_steps(log_table, state, flips, log_u, first_record, thinning):
    """Run ``len(flips)`` Metropolis-Hastings steps over a tabulated log target.

    The state is an integer code; a proposal XORs it with ``flips[t]`` and is
    accepted iff ``log_table[prop] - log_table[state] > log_u[t]``. The state
    after local step ``t`` is recorded when ``t >= first_record`` and
    ``(t - first_record) % thinning == 0``.
    """
    table = log_table.tolist()
    fl = flips.tolist()
    lu = log_u.tolist()
    cur = int(state)
    cur_lp = table[cur]
    accepted = 0
    records = []
    nxt = first_record if first_record >= 0 else len(fl)
    for t in range(len(fl)):
        prop = cur ^ fl[t]
        prop_lp = table[prop]
        if prop_lp - cur_lp > lu[t]:
            cur = prop
            cur_lp = prop_lp
            accepted += 1
        if t == nxt:
            records.append(cur)
            nxt += thinning
    return cur, accepted, np.asarray(records, dtype=np.int64)
