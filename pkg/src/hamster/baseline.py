"""Honest-path Sync HotStuff steady state, used as the comparison baseline.

The leader broadcasts the full block with the certificate of its parent;
every other node forwards the proposal to all nodes, then votes on the
block hash.  The first proposal at height h+1 arms a 2-Delta timer that
commits the certified block at height h.  There is no view change.
"""

from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property

from .chain import Block
from .crypto import QuorumSignature, hash_bytes, leader_of
from .messages import SignedMessage, _view
from .node import BROADCAST, Output

TAG_SHS_PROPOSAL = 9
TAG_SHS_VOTE = 10

NO_PARENT = bytes(32)


def block_hash(block):
    return hash_bytes(block.encode())


def shs_vote_digest(view, digest):
    return hash_bytes(b"shs-vote" + _view(view) + digest)


@dataclass(frozen=True)
class BlockRef:
    height: int
    digest: bytes


@dataclass(frozen=True)
class ShsCertificate:
    view: int
    ref: BlockRef
    quorum: QuorumSignature

    @property
    def is_genesis(self):
        return self.view < 0

    @cached_property
    def encoded(self):
        return _view(self.view) + self.ref.height.to_bytes(8, "big") + self.ref.digest + self.quorum.encode()

    def verify(self, crypto, threshold):
        if self.is_genesis:
            return self.ref.height == 0
        return crypto.verify_quorum(self.quorum, shs_vote_digest(self.view, self.ref.digest), threshold)


SHS_GENESIS_CERT = ShsCertificate(-1, BlockRef(0, NO_PARENT), QuorumSignature((), ()))


@dataclass(frozen=True, eq=False)
class ShsProposal(SignedMessage):
    TAG = TAG_SHS_PROPOSAL
    view: int
    block: Block
    cert: ShsCertificate
    n: int
    sig: object

    def body(self):
        return _view(self.view) + self.block.encode() + self.cert.encoded

    @property
    def signer(self):
        return leader_of(self.view, self.n)

    @cached_property
    def ref(self):
        return BlockRef(self.block.height, block_hash(self.block))


@dataclass(frozen=True, eq=False)
class ShsVote(SignedMessage):
    TAG = TAG_SHS_VOTE
    view: int
    ref: BlockRef
    voter: int
    sig: object

    def body(self):
        return _view(self.view) + self.ref.height.to_bytes(8, "big") + self.ref.digest + self.voter.to_bytes(4, "big")

    @property
    def signer(self):
        return self.voter

    @cached_property
    def signing_digest(self):
        return shs_vote_digest(self.view, self.ref.digest)


class SyncHotStuffNode:
    honest = True

    def __init__(self, node_id, n, f, crypto, delta, requests, batch_size=1, **_ignored):
        self.id = node_id
        self.n = n
        self.f = f
        self.crypto = crypto
        self.delta = delta
        self.requests = requests
        self.batch_size = batch_size
        self.view = 0
        self.draining = False
        self.blocks = {}
        self.seen = set()
        self.armed = set()
        self.votes = defaultdict(dict)
        self.certs = {}
        self.proposed = set()
        self.committed = {}
        self.dropped = 0

    def handle(self, kind, payload, now):
        out = Output()
        if kind == "message":
            msg, sender = payload
            if isinstance(msg, ShsProposal):
                self.on_proposal(msg, sender, now, out)
            elif isinstance(msg, ShsVote):
                self.on_vote(msg, now, out)
            else:
                self.dropped += 1
        elif kind == "timer":
            if payload[0] == "commit":
                self.on_commit_timer(payload[1], now, out)
            elif payload[0] == "retry_propose":
                self.propose(payload[1], payload[2], now, out)
        elif kind == "start":
            out.notes.append(("view", 0, now))
            if leader_of(0, self.n) == self.id:
                self.propose(1, SHS_GENESIS_CERT, now, out)
        elif kind == "control" and payload == "drain":
            self.draining = True
        return out

    def propose(self, height, cert, now, out):
        if height in self.proposed or self.draining:
            return
        batch = self.requests.take(self.batch_size, now)
        if not batch:
            out.timer(self.delta / 4, ("retry_propose", height, cert))
            return
        self.proposed.add(height)
        pred = None if cert.is_genesis else cert.ref.digest
        block = Block(height, tuple(batch), pred)
        p = ShsProposal.create(self.crypto, self.id, view=self.view, block=block, cert=cert, n=self.n)
        out.work["sig"] += 1
        out.work["hash"] += 1
        out.notes.append(("propose", self.view, height, now))
        out.send(BROADCAST, p)
        self.on_proposal(p, self.id, now, out, trusted=True)

    def on_proposal(self, p, sender, now, out, trusted=False):
        ref = p.ref
        if ref.height in self.seen:
            return
        if not trusted:
            out.work["ver"] += 1
            out.work["hash"] += 1
            if p.view != self.view or not p.verify(self.crypto) or not self._cert_ok(p, out):
                self.dropped += 1
                return
        self.seen.add(ref.height)
        self.blocks[ref.digest] = p.block
        out.notes.append(("proposal_first", p.view, ref.height, now))
        if p.signer != self.id:
            out.send(BROADCAST, p)
        if not p.cert.is_genesis and p.cert.ref.height not in self.armed:
            self.armed.add(p.cert.ref.height)
            out.timer(2 * self.delta, ("commit", p.cert.ref))
        vote = ShsVote.create(self.crypto, self.id, view=self.view, ref=ref, voter=self.id)
        out.work["sig"] += 1
        out.send(BROADCAST, vote)
        out.notes.append(("vote", self.view, ref.height, now, len(self.seen)))
        self._tally(vote, now, out)

    def _cert_ok(self, p, out):
        cert = p.cert
        if p.block.height != cert.ref.height + 1:
            return False
        if (None if cert.is_genesis else cert.ref.digest) != p.block.predecessor:
            return False
        out.work["ver"] += len(cert.quorum.signers)
        return cert.verify(self.crypto, self.f + 1)

    def on_vote(self, vote, now, out):
        if vote.view != self.view or not 0 <= vote.voter < self.n:
            return
        out.work["ver"] += 1
        if not vote.verify(self.crypto):
            self.dropped += 1
            return
        self._tally(vote, now, out)

    def _tally(self, vote, now, out):
        tally = self.votes[vote.ref]
        tally.setdefault(vote.voter, vote)
        if len(tally) < self.f + 1 or vote.ref in self.certs:
            return
        quorum = self.crypto.assemble_quorum([(v, m.sig) for v, m in tally.items()], self.f + 1)
        cert = ShsCertificate(vote.view, vote.ref, quorum)
        self.certs[vote.ref] = cert
        out.notes.append(("cert", cert.view, vote.ref.height, vote.ref.digest, now))
        if leader_of(self.view, self.n) == self.id:
            self.propose(vote.ref.height + 1, cert, now, out)

    def on_commit_timer(self, ref, now, out):
        chain = []
        digest = ref.digest
        while digest is not None and digest in self.blocks:
            block = self.blocks[digest]
            if block.height in self.committed:
                break
            chain.append((block, digest))
            digest = block.predecessor
        for block, digest in reversed(chain):
            self.committed[block.height] = digest
            r = BlockRef(block.height, digest)
            out.commits.append((block.height, r))
            out.follow_commits.append((block.height, block))
            out.notes.append(("commit", block.height, digest, now))
            out.notes.append(("follow_commit", block.height, now))
