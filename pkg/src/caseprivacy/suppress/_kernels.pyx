# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Hash-partition kernels for equivalence-class computation.

Both functions must return exactly what the numpy versions in
``_kernels_py`` return; the test suite checks this.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()


cdef inline uint64_t _mix(uint64_t x) noexcept nogil:
    # splitmix64 finaliser
    x ^= x >> 30
    x *= <uint64_t>0xbf58476d1ce4e5b9ULL
    x ^= x >> 27
    x *= <uint64_t>0x94d049bb133111ebULL
    x ^= x >> 31
    return x


cdef Py_ssize_t _capacity(Py_ssize_t n):
    cdef Py_ssize_t cap = 16
    while cap < 2 * n + 2:
        cap <<= 1
    return cap


def group_first_seen(const int64_t[::1] keys):
    """Group ids numbered by first appearance, plus the size of each group."""
    cdef Py_ssize_t n = keys.shape[0]
    cdef Py_ssize_t cap = _capacity(n)
    cdef uint64_t mask = <uint64_t>(cap - 1)
    slot_key_arr = np.empty(cap, dtype=np.int64)
    slot_id_arr = np.full(cap, -1, dtype=np.int64)
    ids_arr = np.empty(n, dtype=np.int64)
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] slot_key = slot_key_arr
    cdef int64_t[::1] slot_id = slot_id_arr
    cdef int64_t[::1] ids = ids_arr
    cdef int64_t[::1] counts = counts_arr
    cdef Py_ssize_t i
    cdef int64_t k, g = 0, sid
    cdef uint64_t h
    with nogil:
        for i in range(n):
            k = keys[i]
            h = _mix(<uint64_t>k) & mask
            while True:
                sid = slot_id[h]
                if sid == -1:
                    slot_id[h] = g
                    slot_key[h] = k
                    ids[i] = g
                    counts[g] = 1
                    g += 1
                    break
                if slot_key[h] == k:
                    ids[i] = sid
                    counts[sid] += 1
                    break
                h = (h + 1) & mask
    return ids_arr, counts_arr[:g].copy()


def count_distinct(const int64_t[::1] group_ids, const int64_t[::1] values, Py_ssize_t n_groups):
    """Number of distinct non-negative ``values`` per group; negatives are skipped."""
    cdef Py_ssize_t n = group_ids.shape[0]
    cdef Py_ssize_t cap = _capacity(n)
    cdef uint64_t mask = <uint64_t>(cap - 1)
    tab_g_arr = np.full(cap, -1, dtype=np.int64)
    tab_v_arr = np.empty(cap, dtype=np.int64)
    out_arr = np.zeros(n_groups, dtype=np.int64)
    cdef int64_t[::1] tab_g = tab_g_arr
    cdef int64_t[::1] tab_v = tab_v_arr
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t i
    cdef int64_t g, v
    cdef uint64_t h
    with nogil:
        for i in range(n):
            v = values[i]
            if v < 0:
                continue
            g = group_ids[i]
            h = _mix(<uint64_t>g * <uint64_t>0x9e3779b97f4a7c15ULL ^ _mix(<uint64_t>v)) & mask
            while True:
                if tab_g[h] == -1:
                    tab_g[h] = g
                    tab_v[h] = v
                    out[g] += 1
                    break
                if tab_g[h] == g and tab_v[h] == v:
                    break
                h = (h + 1) & mask
    return out_arr
