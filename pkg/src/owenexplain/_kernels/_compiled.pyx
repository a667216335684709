"""Cython kernel core: blur, batch coalition masking, subset-table Shapley.

Semantics match owenexplain._kernels._pure; the pure module is the
reference implementation for the cross-backend equivalence tests.
"""

import math

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, lgamma

cnp.import_array()

BACKEND = "compiled"


def gaussian_kernel(double sigma):
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    radius = max(1, int(math.ceil(3.0 * sigma)))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    return weights / weights.sum()


def gaussian_blur(data, shape, double sigma):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] kernel = gaussian_kernel(sigma)
    cdef Py_ssize_t radius = (kernel.shape[0] - 1) // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.ascontiguousarray(
        data, dtype=np.float64
    ).copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(arr)
    cdef Py_ssize_t total = arr.shape[0]
    cdef Py_ssize_t axis, dim, inner, outer, o, i, p, tap, src, base
    cdef double acc
    cdef Py_ssize_t rank = len(shape)
    cdef Py_ssize_t ksize = kernel.shape[0]

    dims = [int(d) for d in shape]
    for axis in range(rank):
        dim = dims[axis]
        if dim == 1:
            continue
        inner = 1
        for i in range(axis + 1, rank):
            inner *= dims[i]
        outer = total // (dim * inner)
        for o in range(outer):
            for i in range(inner):
                base = o * dim * inner + i
                for p in range(dim):
                    acc = 0.0
                    for tap in range(ksize):
                        src = p + tap - radius
                        if src < 0:
                            src = 0
                        elif src >= dim:
                            src = dim - 1
                        acc += kernel[tap] * arr[base + src * inner]
                    out[base + p * inner] = acc
        arr, out = out, arr
    return np.asarray(arr)


def apply_masks(x, fill, cell_atom, active):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fv = np.ascontiguousarray(fill, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ca = np.ascontiguousarray(cell_atom, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef Py_ssize_t n_rows = act.shape[0]
    cdef Py_ssize_t n_cells = xv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_rows, n_cells), dtype=np.float64)
    cdef Py_ssize_t r, c
    for r in range(n_rows):
        for c in range(n_cells):
            if act[r, ca[c]]:
                out[r, c] = xv[c]
            else:
                out[r, c] = fv[c]
    return out


def popcounts(int n):
    cdef Py_ssize_t size = 1 << n
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] counts = np.zeros(size, dtype=np.uint8)
    cdef Py_ssize_t m
    cdef unsigned int v
    cdef unsigned char c
    for m in range(size):
        v = <unsigned int> m
        c = 0
        while v:
            v &= v - 1
            c += 1
        counts[m] = c
    return counts


def shapley_from_table(values, int n):
    cdef Py_ssize_t size = 1 << n
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.ascontiguousarray(values, dtype=np.float64)
    if v.shape[0] != size:
        raise ValueError("value table must have length 2**n")
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] counts = popcounts(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] weights = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t s, i, m
    for s in range(n):
        weights[s] = exp(lgamma(s + 1) + lgamma(n - s) - lgamma(n + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] phi = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t bit
    cdef double acc
    for i in range(n):
        bit = 1 << i
        acc = 0.0
        for m in range(size):
            if m & bit:
                continue
            acc += weights[counts[m]] * (v[m | bit] - v[m])
        phi[i] = acc
    return phi
