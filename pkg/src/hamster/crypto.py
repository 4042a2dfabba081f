"""Hashing, per-node signatures and quorum signatures.

Two signature schemes share one interface:

* ``"hmac"`` -- keyed SHA-256 with per-node secrets derived from the run
  seed.  Fast and deterministic; the environment object plays the role of
  the PKI and can check any node's signature.
* ``"ed25519"`` -- real asymmetric signatures via ``cryptography``.
"""

import hashlib
import hmac
from dataclasses import dataclass

HASH_SIZE = 32


def hash_bytes(data):
    return hashlib.sha256(data).digest()


class CryptoError(ValueError):
    pass


class UnknownNodeError(CryptoError):
    pass


class InsufficientVotesError(CryptoError):
    pass


@dataclass(frozen=True)
class Signature:
    signer: int
    data: bytes


@dataclass(frozen=True)
class QuorumSignature:
    """Concatenation of individual signatures from distinct signers."""

    signers: tuple
    sigs: tuple

    def wire_size(self):
        return 2 + sum(4 + len(s) for s in self.sigs)

    def encode(self):
        out = [len(self.signers).to_bytes(2, "big")]
        for signer, sig in zip(self.signers, self.sigs):
            out.append(signer.to_bytes(4, "big") + sig)
        return b"".join(out)


class CryptoEnv:
    """Key registry for nodes ``0..n-1``."""

    def __init__(self, n, seed=0, scheme="hmac"):
        self.n = n
        self.scheme = scheme
        master = hash_bytes(b"hamster-keys" + int(seed).to_bytes(8, "big", signed=True))
        if scheme == "hmac":
            self._secrets = [hash_bytes(master + i.to_bytes(4, "big")) for i in range(n)]
            self.sig_size = HASH_SIZE
        elif scheme == "ed25519":
            from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

            self._private = [
                Ed25519PrivateKey.from_private_bytes(hash_bytes(master + i.to_bytes(4, "big")))
                for i in range(n)
            ]
            self._public = [k.public_key() for k in self._private]
            self.sig_size = 64
        else:
            raise CryptoError(f"unknown signature scheme {scheme!r}")

    def _check(self, node):
        if not isinstance(node, int) or not 0 <= node < self.n:
            raise UnknownNodeError(f"unknown node {node!r}")

    def sign(self, node, digest):
        self._check(node)
        if self.scheme == "hmac":
            return Signature(node, hmac.new(self._secrets[node], digest, hashlib.sha256).digest())
        return Signature(node, self._private[node].sign(digest))

    def verify_sig(self, node, digest, sig):
        self._check(node)
        if not isinstance(sig, Signature) or sig.signer != node:
            return False
        if self.scheme == "hmac":
            expected = hmac.new(self._secrets[node], digest, hashlib.sha256).digest()
            return hmac.compare_digest(expected, sig.data)
        from cryptography.exceptions import InvalidSignature

        try:
            self._public[node].verify(sig.data, digest)
        except InvalidSignature:
            return False
        return True

    def assemble_quorum(self, votes, threshold):
        """Package ``(node, Signature)`` pairs into a quorum of distinct signers.

        Duplicate signers collapse to their first signature.
        """
        by_signer = {}
        for node, sig in votes:
            by_signer.setdefault(node, sig)
        if len(by_signer) < threshold:
            raise InsufficientVotesError(
                f"{len(by_signer)} distinct signers, need {threshold}"
            )
        signers = tuple(sorted(by_signer))
        return QuorumSignature(signers, tuple(by_signer[s].data for s in signers))

    def verify_quorum(self, quorum, digest, threshold):
        if len(set(quorum.signers)) != len(quorum.signers) or len(quorum.signers) < threshold:
            return False
        for signer, data in zip(quorum.signers, quorum.sigs):
            if not 0 <= signer < self.n:
                return False
            if not self.verify_sig(signer, digest, Signature(signer, data)):
                return False
        return True


def leader_of(view, n):
    """Round-robin leader, 0-based."""
    return view % n
