"""Protocol messages, evidence, and their canonical wire encoding.

Every message encodes as ``tag (1 byte) || body || signature``.  The signed
digest is ``hash(tag || body)``.  Follow messages carry a Merkle proof and
no signature.
"""

import dataclasses
from dataclasses import dataclass
from functools import cached_property

from . import codec, merkle
from .chain import GENESIS, Block, Certificate, IdentifierBlock, Segment
from .crypto import Signature, hash_bytes, leader_of

TAG_PROPOSAL = 1
TAG_VOTE = 2
TAG_QUIT_VIEW = 3
TAG_STATUS = 4
TAG_NEW_VIEW = 5
TAG_BLAME = 6
TAG_COMMIT = 7
TAG_FOLLOW = 8

EV_EQUIVOCATION = 1
EV_CODING_ERROR = 2
EV_SILENCE = 3


def _view(v):
    return v.to_bytes(8, "big", signed=True)


def _sig_bytes(sig):
    return sig.signer.to_bytes(4, "big") + sig.data


class SignedMessage:
    """Mixin: subclasses define ``TAG``, ``body()`` and ``signer``."""

    TAG = 0

    @cached_property
    def signing_digest(self):
        return hash_bytes(bytes([self.TAG]) + self.body())

    @cached_property
    def encoded(self):
        return bytes([self.TAG]) + self.body() + _sig_bytes(self.sig)

    @cached_property
    def wire_size(self):
        return len(self.encoded)

    def verify(self, crypto):
        return self.sig is not None and crypto.verify_sig(self.signer, self.signing_digest, self.sig)

    @classmethod
    def create(cls, crypto, signer, **fields):
        draft = cls(**fields, sig=None)
        return dataclasses.replace(draft, sig=crypto.sign(signer, draft.signing_digest))


@dataclass(frozen=True, eq=False)
class Proposal(SignedMessage):
    TAG = TAG_PROPOSAL
    view: int
    segment: Segment
    cert: Certificate
    n: int
    sig: Signature

    def body(self):
        return _view(self.view) + self.segment.encode() + self.cert.encoded

    @property
    def signer(self):
        return leader_of(self.view, self.n)

    @property
    def identifier(self):
        return self.segment.identifier

    @property
    def height(self):
        return self.segment.identifier.height


@dataclass(frozen=True, eq=False)
class Vote(SignedMessage):
    TAG = TAG_VOTE
    view: int
    identifier: IdentifierBlock
    voter: int
    sig: Signature

    def body(self):
        return _view(self.view) + self.identifier.encoded + self.voter.to_bytes(4, "big")

    @property
    def signer(self):
        return self.voter

    @cached_property
    def signing_digest(self):
        # the certificate's quorum is checked against this same digest
        from .chain import vote_digest

        return vote_digest(self.identifier, self.view)


@dataclass(frozen=True, eq=False)
class NewView(SignedMessage):
    TAG = TAG_NEW_VIEW
    view: int
    cert: Certificate
    n: int
    sig: Signature

    def body(self):
        return _view(self.view) + self.cert.encoded

    @property
    def signer(self):
        return leader_of(self.view, self.n)

    @property
    def identifier(self):
        return self.cert.identifier

    @property
    def height(self):
        return self.cert.identifier.height


@dataclass(frozen=True, eq=False)
class Status(SignedMessage):
    TAG = TAG_STATUS
    view: int
    cert: Certificate
    sender: int
    sig: Signature

    def body(self):
        return _view(self.view) + self.cert.encoded + self.sender.to_bytes(4, "big")

    @property
    def signer(self):
        return self.sender


@dataclass(frozen=True, eq=False)
class Blame(SignedMessage):
    TAG = TAG_BLAME
    view: int
    sender: int
    sig: Signature

    def body(self):
        return _view(self.view) + self.sender.to_bytes(4, "big")

    @property
    def signer(self):
        return self.sender


@dataclass(frozen=True, eq=False)
class CommitMsg(SignedMessage):
    TAG = TAG_COMMIT
    view: int
    identifier: IdentifierBlock
    sender: int
    sig: Signature

    def body(self):
        return _view(self.view) + self.identifier.encoded + self.sender.to_bytes(4, "big")

    @property
    def signer(self):
        return self.sender


@dataclass(frozen=True, eq=False)
class Follow:
    TAG = TAG_FOLLOW
    segment: Segment
    proof: merkle.MerkleProof

    @cached_property
    def encoded(self):
        return bytes([self.TAG]) + self.segment.encode() + self.proof.encode()

    @cached_property
    def wire_size(self):
        return len(self.encoded)

    @property
    def height(self):
        return self.segment.identifier.height


# --- evidence ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Equivocation:
    kind = EV_EQUIVOCATION
    first: object
    second: object

    @property
    def view(self):
        return self.first.view

    def encode(self):
        a, b = self.first.encoded, self.second.encoded
        return bytes([self.kind]) + len(a).to_bytes(4, "big") + a + b


@dataclass(frozen=True, eq=False)
class CodingError:
    kind = EV_CODING_ERROR
    proposals: tuple

    @property
    def view(self):
        return self.proposals[0].view

    def encode(self):
        parts = [bytes([self.kind]), len(self.proposals).to_bytes(2, "big")]
        for p in self.proposals:
            parts.append(len(p.encoded).to_bytes(4, "big") + p.encoded)
        return b"".join(parts)


@dataclass(frozen=True, eq=False)
class Silence:
    kind = EV_SILENCE
    blames: tuple

    @property
    def view(self):
        return self.blames[0].view

    def encode(self):
        parts = [bytes([self.kind]), len(self.blames).to_bytes(2, "big")]
        parts.extend(b.encoded for b in self.blames)
        return b"".join(parts)


@dataclass(frozen=True, eq=False)
class QuitView(SignedMessage):
    TAG = TAG_QUIT_VIEW
    view: int
    evidence: object
    sender: int
    sig: Signature

    def body(self):
        return _view(self.view) + self.evidence.encode() + self.sender.to_bytes(4, "big")

    @property
    def signer(self):
        return self.sender


def identifiers_conflict(a, b):
    """Whether two identifier blocks provably fail to extend one another.

    Decidable from the pair alone at equal heights or adjacent heights.
    """
    if a.height == b.height:
        return a.digest != b.digest
    lo, hi = (a, b) if a.height < b.height else (b, a)
    if hi.height != lo.height + 1:
        return False
    if lo == GENESIS:
        return hi.predecessor_hash is not None
    return hi.predecessor_hash != lo.digest


def coding_mismatch(proposals, params):
    """True iff decoding the proposals' chunks does not reproduce their identifier."""
    identifier = proposals[0].identifier
    chunks = [codec.Chunk(p.segment.owner, p.segment.chunk) for p in proposals]
    try:
        payload = codec.decode(chunks, params)
    except codec.CodecError:
        return True
    reencoded = codec.encode(payload, params)
    return merkle.root_of([c.data for c in reencoded]) != identifier.content_root


def verify_evidence(ev, crypto, params, f):
    """Check evidence from its contents alone."""
    n = params.n
    if isinstance(ev, Equivocation):
        a, b = ev.first, ev.second
        if not all(isinstance(m, (Proposal, NewView)) for m in (a, b)):
            return False
        if a.view != b.view or not a.verify(crypto) or not b.verify(crypto):
            return False
        return identifiers_conflict(a.identifier, b.identifier)
    if isinstance(ev, CodingError):
        props = ev.proposals
        if len(props) < f + 1 or not all(isinstance(p, Proposal) for p in props):
            return False
        view, ident = props[0].view, props[0].identifier
        owners = set()
        for p in props:
            if p.view != view or p.identifier.digest != ident.digest:
                return False
            if not 0 <= p.segment.owner < n or p.segment.owner in owners:
                return False
            owners.add(p.segment.owner)
            if not p.verify(crypto):
                return False
        return coding_mismatch(props[: f + 1], params)
    if isinstance(ev, Silence):
        blames = ev.blames
        if len({b.sender for b in blames}) < f + 1:
            return False
        view = blames[0].view
        return all(isinstance(b, Blame) and b.view == view and b.verify(crypto) for b in blames)
    return False


def parse_block(payload):
    """Decode a block payload; None when it is not a well-formed block."""
    try:
        return Block.decode(payload)
    except ValueError:
        return None
