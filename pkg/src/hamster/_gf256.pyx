# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled GF(2^8) region kernels."""

import numpy as np
cimport numpy as cnp

from .gf256 import MUL_TABLE

cnp.import_array()

cdef const unsigned char[:, ::1] _MUL = np.ascontiguousarray(MUL_TABLE, dtype=np.uint8)


def matmul(coeffs, rows):
    """Multiply an (r x k) coefficient matrix by k equal-length byte rows."""
    cdef const unsigned char[:, ::1] c = np.ascontiguousarray(coeffs, dtype=np.uint8)
    cdef const unsigned char[:, ::1] d = np.ascontiguousarray(rows, dtype=np.uint8)
    cdef Py_ssize_t r = c.shape[0], k = c.shape[1], length = d.shape[1]
    out_arr = np.zeros((r, length), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, t
    cdef unsigned char coef
    cdef const unsigned char* row_tab
    with nogil:
        for i in range(r):
            for j in range(k):
                coef = c[i, j]
                if coef == 0:
                    continue
                if coef == 1:
                    for t in range(length):
                        out[i, t] ^= d[j, t]
                else:
                    row_tab = &_MUL[coef, 0]
                    for t in range(length):
                        out[i, t] ^= row_tab[d[j, t]]
    return out_arr
