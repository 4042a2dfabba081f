"""Arithmetic over GF(2^8) with the 0x11D reduction polynomial.

Scalar helpers live here; the bulk region multiply (``matmul``) comes from the
compiled ``_gf256`` extension when it is built and from a numpy fallback
otherwise.  ``BACKEND`` names whichever was selected.
"""

import os

import numpy as np

PRIM_POLY = 0x11D
FIELD_SIZE = 256

EXP = np.zeros(512, dtype=np.uint8)
LOG = np.zeros(256, dtype=np.int32)

_x = 1
for _i in range(255):
    EXP[_i] = _x
    LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= PRIM_POLY
for _i in range(255, 512):
    EXP[_i] = EXP[_i - 255]
del _x, _i


def _build_mul_table():
    table = np.zeros((256, 256), dtype=np.uint8)
    nz = np.arange(1, 256)
    for a in range(1, 256):
        table[a, 1:] = EXP[(LOG[a] + LOG[nz]) % 255]
    return table


MUL_TABLE = _build_mul_table()


def mul(a, b):
    if a == 0 or b == 0:
        return 0
    return int(EXP[LOG[a] + LOG[b]])


def inv(a):
    if a == 0:
        raise ZeroDivisionError("zero has no inverse in GF(2^8)")
    return int(EXP[255 - LOG[a]])


def power(a, e):
    if e == 0:
        return 1
    if a == 0:
        return 0
    return int(EXP[(LOG[a] * e) % 255])


def mat_inverse(matrix):
    """Invert a square matrix (list of lists of ints) by Gauss-Jordan elimination."""
    size = len(matrix)
    aug = [list(row) + [1 if i == j else 0 for j in range(size)] for i, row in enumerate(matrix)]
    for col in range(size):
        pivot = next((r for r in range(col, size) if aug[r][col]), None)
        if pivot is None:
            raise ValueError("matrix is singular over GF(2^8)")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        scale = inv(aug[col][col])
        aug[col] = [mul(v, scale) for v in aug[col]]
        for r in range(size):
            factor = aug[r][col]
            if r != col and factor:
                pr = aug[col]
                aug[r] = [v ^ mul(factor, p) for v, p in zip(aug[r], pr)]
    return [row[size:] for row in aug]


def mat_mul(a, b):
    """Small dense matrix product over GF(2^8) (lists of lists)."""
    out = []
    for row in a:
        new = []
        for j in range(len(b[0])):
            acc = 0
            for t, v in enumerate(row):
                if v:
                    acc ^= mul(v, b[t][j])
            new.append(acc)
        out.append(new)
    return out


def _select_backend():
    if os.environ.get("HAMSTER_PURE_PYTHON"):
        from . import _gf256_py as mod
        return mod.matmul, "python"
    try:
        from . import _gf256 as mod
    except ImportError:
        from . import _gf256_py as mod
        return mod.matmul, "python"
    return mod.matmul, "compiled"


matmul, BACKEND = _select_backend()
