"""Pure numpy GF(2^8) region kernels, used when the compiled extension is absent."""

import numpy as np

from .gf256 import MUL_TABLE


def matmul(coeffs, rows):
    """Multiply an (r x k) coefficient matrix by k equal-length byte rows.

    ``coeffs`` is a uint8 array of shape (r, k); ``rows`` is a uint8 array
    of shape (k, L).  Returns a uint8 array of shape (r, L).
    """
    coeffs = np.asarray(coeffs, dtype=np.uint8)
    rows = np.asarray(rows, dtype=np.uint8)
    r, k = coeffs.shape
    out = np.zeros((r, rows.shape[1]), dtype=np.uint8)
    for i in range(r):
        acc = out[i]
        for j in range(k):
            c = coeffs[i, j]
            if c == 0:
                continue
            if c == 1:
                acc ^= rows[j]
            else:
                acc ^= MUL_TABLE[c][rows[j]]
    return out
