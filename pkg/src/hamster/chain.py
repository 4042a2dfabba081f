"""Consensus data model: blocks, identifier blocks, segments, certificates.

All encodings are length-prefixed, fixed-width big-endian, so they are
bit-stable for hashing and double as the wire format for byte accounting.
"""

from dataclasses import dataclass
from functools import cached_property

from . import codec, merkle
from .crypto import HASH_SIZE, QuorumSignature, hash_bytes

REQUEST_DIGEST_SIZE = 32


class ChainError(ValueError):
    pass


def _opt_hash(h):
    return b"\x00" if h is None else b"\x01" + h


@dataclass(frozen=True)
class Block:
    height: int
    batch: tuple
    # content root of the parent block, None for the first block
    predecessor: bytes = None

    def encode(self):
        return b"".join(
            [
                self.height.to_bytes(8, "big"),
                len(self.batch).to_bytes(4, "big"),
                *self.batch,
                _opt_hash(self.predecessor),
            ]
        )

    @classmethod
    def decode(cls, data):
        try:
            height = int.from_bytes(data[0:8], "big")
            count = int.from_bytes(data[8:12], "big")
            pos = 12
            if pos + count * REQUEST_DIGEST_SIZE > len(data):
                raise ChainError("batch overruns block encoding")
            batch = tuple(
                data[pos + i * REQUEST_DIGEST_SIZE: pos + (i + 1) * REQUEST_DIGEST_SIZE]
                for i in range(count)
            )
            pos += count * REQUEST_DIGEST_SIZE
            flag = data[pos]
            pred = None
            if flag == 1:
                pred = data[pos + 1: pos + 1 + HASH_SIZE]
                pos += HASH_SIZE
            elif flag != 0:
                raise ChainError("bad predecessor flag")
            pos += 1
        except IndexError as exc:
            raise ChainError("truncated block encoding") from exc
        if pos != len(data) or any(len(d) != REQUEST_DIGEST_SIZE for d in batch):
            raise ChainError("malformed block encoding")
        if pred is not None and len(pred) != HASH_SIZE:
            raise ChainError("truncated predecessor")
        return cls(height, batch, pred)


@dataclass(frozen=True)
class IdentifierBlock:
    height: int
    content_root: bytes
    predecessor_hash: bytes = None

    @cached_property
    def encoded(self):
        return self.height.to_bytes(8, "big") + self.content_root + _opt_hash(self.predecessor_hash)

    @cached_property
    def digest(self):
        return hash_bytes(self.encoded)

    def wire_size(self):
        return len(self.encoded)


GENESIS = IdentifierBlock(0, bytes(HASH_SIZE), None)


@dataclass(frozen=True)
class Segment:
    owner: int
    chunk: bytes
    identifier: IdentifierBlock

    def encode(self):
        return (
            self.owner.to_bytes(4, "big")
            + len(self.chunk).to_bytes(4, "big")
            + self.chunk
            + self.identifier.encoded
        )


def vote_digest(identifier, view):
    return hash_bytes(b"vote" + view.to_bytes(8, "big", signed=True) + identifier.digest)


@dataclass(frozen=True)
class Certificate:
    view: int
    identifier: IdentifierBlock
    quorum: QuorumSignature

    @property
    def rank(self):
        return (self.view, self.identifier.height)

    @property
    def is_genesis(self):
        return self.view < 0 and self.identifier == GENESIS

    @cached_property
    def encoded(self):
        return self.view.to_bytes(8, "big", signed=True) + self.identifier.encoded + self.quorum.encode()

    def wire_size(self):
        return len(self.encoded)

    def verify(self, crypto, threshold):
        if self.is_genesis:
            return True
        if self.view < 0:
            return False
        return crypto.verify_quorum(self.quorum, vote_digest(self.identifier, self.view), threshold)


GENESIS_CERT = Certificate(-1, GENESIS, QuorumSignature((), ()))


def rank_compare(c1, c2):
    """-1, 0 or 1 comparing certificates by (view, height)."""
    a, b = c1.rank, c2.rank
    return (a > b) - (a < b)


def extends(a, b, store):
    """Whether identifier block ``a`` extends ``b``.

    ``store`` maps identifier digests to known identifier blocks; walking off
    the known ancestry answers False.  Every identifier extends genesis.
    """
    if b == GENESIS:
        return True
    cur = a
    while cur is not None and cur.height > b.height:
        if cur.predecessor_hash is None:
            return False
        cur = store.get(cur.predecessor_hash)
    return cur is not None and cur.digest == b.digest


def make_block(batch, parent=None, params=None, parent_root=None):
    """Chain a new block onto ``parent`` (or start the chain when it is None).

    The predecessor link is the parent's content root; pass ``parent_root``
    when it is already known, otherwise ``params`` is used to derive it.
    """
    if not batch:
        raise ChainError("a block needs at least one request")
    batch = tuple(bytes(d) for d in batch)
    if any(len(d) != REQUEST_DIGEST_SIZE for d in batch):
        raise ChainError("request digests must be 32 bytes")
    if parent is None:
        return Block(1, batch, None)
    if parent_root is None:
        if params is None:
            raise ChainError("need codec params or parent_root to link a block")
        parent_root = content_root(parent, params)
    return Block(parent.height + 1, batch, parent_root)


def encode_block(block, params):
    return codec.encode(block.encode(), params)


def content_root(block, params):
    return merkle.root_of([c.data for c in encode_block(block, params)])


def derive_identifier(block, chunks, predecessor=None):
    """Identifier block for ``block`` given its encoded chunks and I_{h-1}."""
    root = merkle.root_of([c.data for c in chunks])
    if block.height == 1 or predecessor is None or predecessor == GENESIS:
        return IdentifierBlock(block.height, root, None)
    if predecessor.height != block.height - 1:
        raise ChainError("predecessor identifier height mismatch")
    return IdentifierBlock(block.height, root, predecessor.digest)
