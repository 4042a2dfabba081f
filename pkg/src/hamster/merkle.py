"""Merkle commitments over ordered chunk vectors.

Leaf i is ``hash(i as 4-byte big-endian || chunk_i)``; an internal node is
``hash(left || right)``.  A level with an odd number of nodes duplicates its
last node.
"""

from dataclasses import dataclass

from .crypto import hash_bytes

LEFT = "L"
RIGHT = "R"


class MerkleError(ValueError):
    pass


def leaf_hash(index, chunk):
    return hash_bytes(index.to_bytes(4, "big") + bytes(chunk))


def node_hash(left, right):
    return hash_bytes(left + right)


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    # (digest, side) pairs from leaf to root; side is where the sibling sits
    siblings: tuple

    def wire_size(self):
        return 4 + 1 + len(self.siblings) * 33

    def encode(self):
        out = [self.leaf_index.to_bytes(4, "big"), len(self.siblings).to_bytes(1, "big")]
        for digest, side in self.siblings:
            out.append(digest + (b"\x00" if side == LEFT else b"\x01"))
        return b"".join(out)


class MerkleTree:
    """Immutable tree over a list of chunks; ``root`` is the commitment."""

    __slots__ = ("levels", "leaf_count")

    def __init__(self, chunks):
        if not chunks:
            raise MerkleError("cannot build a tree over zero chunks")
        self.leaf_count = len(chunks)
        level = [leaf_hash(i, c) for i, c in enumerate(chunks)]
        levels = [level]
        while len(level) > 1:
            if len(level) % 2:
                level = level + [level[-1]]
                levels[-1] = level
            level = [node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2)]
            levels.append(level)
        self.levels = levels

    @property
    def root(self):
        return self.levels[-1][0]

    def prove(self, index):
        n_leaves = self.leaf_count
        if not 0 <= index < n_leaves:
            raise MerkleError(f"leaf index {index} out of range [0, {n_leaves})")
        siblings = []
        pos = index
        for level in self.levels[:-1]:
            if pos % 2:
                siblings.append((level[pos - 1], LEFT))
            else:
                siblings.append((level[pos + 1], RIGHT))
            pos //= 2
        return MerkleProof(index, tuple(siblings))


def build(chunks):
    tree = MerkleTree(chunks)
    return tree.root, tree


def root_of(chunks):
    return MerkleTree(chunks).root


def prove(tree, index):
    return tree.prove(index)


def verify(root, index, chunk, proof):
    """True iff ``chunk`` is leaf ``index`` of the tree committed to by ``root``."""
    try:
        if proof.leaf_index != index:
            return False
        digest = leaf_hash(index, chunk)
        pos = index
        for sibling, side in proof.siblings:
            expected = LEFT if pos % 2 else RIGHT
            if side != expected or len(sibling) != len(digest):
                return False
            digest = node_hash(sibling, digest) if side == LEFT else node_hash(digest, sibling)
            pos //= 2
        return pos == 0 and digest == root
    except (TypeError, AttributeError, ValueError, OverflowError):
        return False


def hash_count(leaf_count):
    """Hash invocations needed to build a tree over ``leaf_count`` leaves."""
    total, width = leaf_count, leaf_count
    while width > 1:
        width = (width + 1) // 2
        total += width
    return total
