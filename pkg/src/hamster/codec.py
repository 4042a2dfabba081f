"""Systematic (n, k) Reed-Solomon erasure coding over GF(2^8).

The generator is a Vandermonde matrix evaluated at the points 0..n-1,
right-multiplied by the inverse of its top k x k block, so the first k
rows are the identity and any k rows remain invertible.

Payloads are padded with a single 0x01 terminator followed by zeros up to
a multiple of k; decoding strips the zeros and checks the terminator.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import gf256

FIELD_BITS = 8
PAD_TERMINATOR = 0x01


class CodecError(Exception):
    """Base class for codec failures."""


class ParameterError(CodecError, ValueError):
    pass


class InsufficientChunksError(CodecError):
    pass


class ChunkFormatError(CodecError):
    pass


class CorruptionError(CodecError):
    pass


@dataclass(frozen=True)
class CodecParams:
    n: int
    k: int
    field_bits: int = FIELD_BITS

    def __post_init__(self):
        if self.field_bits != FIELD_BITS:
            raise ParameterError("only 8-bit symbols are supported")
        if not 1 <= self.k <= self.n:
            raise ParameterError(f"need 1 <= k <= n, got n={self.n} k={self.k}")
        if self.n >= 1 << self.field_bits:
            raise ParameterError(f"n={self.n} requires a field larger than 2^{self.field_bits}")


@dataclass(frozen=True)
class Chunk:
    index: int
    data: bytes


@lru_cache(maxsize=None)
def generator_matrix(n, k):
    """Systematic n x k generator as a uint8 array."""
    CodecParams(n, k)
    vander = [[gf256.power(x, j) for j in range(k)] for x in range(n)]
    top_inv = gf256.mat_inverse(vander[:k])
    gen = gf256.mat_mul(vander, top_inv)
    return np.array(gen, dtype=np.uint8)


@lru_cache(maxsize=4096)
def _decode_matrix(n, k, indices):
    gen = generator_matrix(n, k)
    sub = [[int(v) for v in gen[i]] for i in indices]
    return np.array(gf256.mat_inverse(sub), dtype=np.uint8)


def pad(payload, k):
    padded_len = -(-(len(payload) + 1) // k) * k
    return bytes(payload) + bytes([PAD_TERMINATOR]) + bytes(padded_len - len(payload) - 1)


def unpad(data):
    stripped = data.rstrip(b"\x00")
    if not stripped or stripped[-1] != PAD_TERMINATOR:
        raise CorruptionError("padding terminator absent")
    return stripped[:-1]


def chunk_length(payload_len, k):
    return -(-(payload_len + 1) // k)


def encode(payload, params):
    """Encode ``payload`` into ``params.n`` chunks; chunks 0..k-1 carry the data."""
    if not payload:
        raise ParameterError("payload must be non-empty")
    n, k = params.n, params.k
    padded = pad(payload, k)
    data = np.frombuffer(padded, dtype=np.uint8).reshape(k, -1)
    chunks = [Chunk(i, data[i].tobytes()) for i in range(k)]
    if n > k:
        parity = gf256.matmul(generator_matrix(n, k)[k:], data)
        chunks.extend(Chunk(k + i, parity[i].tobytes()) for i in range(n - k))
    return chunks


def encode_work(payload_len, params):
    """Finite-field multiply-adds spent by ``encode``."""
    return (params.n - params.k) * chunk_length(payload_len, params.k) * params.k


def decode(chunks, params):
    """Recover the payload from any k chunks with distinct indices (erasure-only)."""
    n, k = params.n, params.k
    by_index = {}
    for c in chunks:
        if not 0 <= c.index < n:
            raise ChunkFormatError(f"chunk index {c.index} out of range")
        by_index.setdefault(c.index, c.data)
    if len(by_index) < k:
        raise InsufficientChunksError(f"need {k} distinct chunks, got {len(by_index)}")
    lengths = {len(d) for d in by_index.values()}
    if len(lengths) != 1:
        raise ChunkFormatError("chunks have inconsistent lengths")
    if lengths.pop() == 0:
        raise ChunkFormatError("empty chunks")
    # prefer systematic chunks: fewer field operations
    indices = tuple(sorted(by_index)[:k])
    if indices == tuple(range(k)):
        return unpad(b"".join(by_index[i] for i in indices))
    rows = np.stack([np.frombuffer(by_index[i], dtype=np.uint8) for i in indices])
    data = gf256.matmul(_decode_matrix(n, k, indices), rows)
    return unpad(data.tobytes())
