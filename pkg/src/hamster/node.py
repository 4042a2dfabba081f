"""Per-node Hamster state machine.

A node is driven entirely by ``handle(kind, payload, now)`` calls from the
network simulator and answers with an :class:`Output` describing messages
to send, timers to arm, commits, and observer notes.  The node never reads
a clock or a random source of its own.

Event kinds:

* ``"start"``   -- payload ignored; enter view 0
* ``"message"`` -- payload ``(msg, sender)``
* ``"timer"``   -- payload is the tag passed in ``Output.timers``
* ``"control"`` -- payload ``"drain"`` stops proposing and blaming
"""

from collections import defaultdict
from dataclasses import dataclass, field

from . import codec, merkle
from .chain import GENESIS, GENESIS_CERT, Block, Certificate, IdentifierBlock, Segment
from .crypto import leader_of
from .messages import (
    Blame,
    CodingError,
    CommitMsg,
    Equivocation,
    Follow,
    NewView,
    Proposal,
    QuitView,
    Silence,
    Status,
    Vote,
    identifiers_conflict,
    parse_block,
    verify_evidence,
)

PRIO_HIGH = 0
PRIO_LOW = 1

BROADCAST = None

MAX_PENDING_PER_VIEW = 8192
MAX_FOLLOW_BUFFER = 8


@dataclass
class Output:
    sends: list = field(default_factory=list)  # (dst | BROADCAST, msg, priority)
    timers: list = field(default_factory=list)  # (delay, tag)
    commits: list = field(default_factory=list)  # (height, IdentifierBlock)
    follow_commits: list = field(default_factory=list)  # (height, Block)
    evidence: list = field(default_factory=list)
    notes: list = field(default_factory=list)  # (kind, *details) for observers
    work: dict = field(default_factory=lambda: defaultdict(int))

    def send(self, dst, msg, priority=PRIO_HIGH):
        self.sends.append((dst, msg, priority))

    def timer(self, delay, tag):
        self.timers.append((delay, tag))


class HamsterNode:
    """Honest Hamster replica (standard or mobile-sluggish steady state)."""

    honest = True

    def __init__(self, node_id, n, f, crypto, delta, requests, sluggish=False, batch_size=1):
        if not 0 <= f <= (n - 1) // 2:
            raise ValueError(f"f={f} exceeds (n-1)/2 for n={n}")
        self.id = node_id
        self.n = n
        self.f = f
        self.k = f + 1
        self.params = codec.CodecParams(n, self.k)
        self.crypto = crypto
        self.delta = delta
        self.requests = requests
        self.sluggish = sluggish
        self.batch_size = batch_size

        self.view = 0
        self.view_entry = 0.0
        self.lock = GENESIS_CERT
        self.high_cert = GENESIS_CERT
        self.draining = False

        self.store = {GENESIS.digest: GENESIS}
        self.verified_certs = {GENESIS_CERT}
        self.segments = defaultdict(lambda: defaultdict(dict))
        self.forwarded_first = set()
        self.forwarded_own = set()
        self.voted = set()
        self.rejected = set()
        self.votes = defaultdict(dict)
        self.certs = {}
        self.decoded = {}
        self.armed = set()
        self.committed = {}
        self.leader_msgs = defaultdict(dict)
        self.proposed = set()
        self.votes_cast = 0
        self.blamed_levels = set()
        self.blames = defaultdict(dict)
        self.newview_handled = set()
        self.pending = defaultdict(list)

        self.proposal_senders = defaultdict(set)
        self.commit_msgs = defaultdict(dict)
        self.commit_sent = set()

        self.follow_chunks = defaultdict(dict)
        self.follow_buffer = defaultdict(list)
        self.follow_committed = {}
        self.follow_dispersed = set()
        self.follow_forwarded = set()

        self.dropped = 0

    # -- entry point --------------------------------------------------------

    def handle(self, kind, payload, now):
        out = Output()
        if kind == "message":
            msg, sender = payload
            self._dispatch(msg, sender, now, out)
        elif kind == "timer":
            self._on_timer(payload, now, out)
        elif kind == "start":
            self._enter_view(0, now, out)
        elif kind == "control":
            if payload == "drain":
                self.draining = True
        return out

    def _dispatch(self, msg, sender, now, out):
        if isinstance(msg, Proposal):
            self.on_proposal(msg, sender, now, out)
        elif isinstance(msg, Vote):
            self.on_vote(msg, now, out)
        elif isinstance(msg, Follow):
            self.on_follow(msg, sender, now, out)
        elif isinstance(msg, QuitView):
            self.on_quit_view(msg, now, out)
        elif isinstance(msg, Status):
            self.on_status(msg, now, out)
        elif isinstance(msg, NewView):
            self.on_new_view(msg, now, out)
        elif isinstance(msg, Blame):
            self.on_blame(msg, now, out)
        elif isinstance(msg, CommitMsg):
            self.on_commit_msg(msg, now, out)
        else:
            self.dropped += 1

    def _on_timer(self, tag, now, out):
        kind = tag[0]
        if kind == "commit":
            self.on_commit_timer(tag[1], tag[2], now, out)
        elif kind == "silence":
            self.check_silence(tag[1], tag[2], now, out)
        elif kind == "newview":
            self.new_leader_start(tag[1], now, out)
        elif kind == "retry_propose":
            _, view, height, cert = tag
            if view == self.view and (view, height) not in self.proposed:
                self.leader_propose(height, cert, now, out)

    def _buffer(self, view, msg, sender):
        queue = self.pending[view]
        if len(queue) < MAX_PENDING_PER_VIEW:
            queue.append((msg, sender))

    # -- helpers ------------------------------------------------------------

    def leader(self, view=None):
        return leader_of(self.view if view is None else view, self.n)

    def _learn(self, ident):
        self.store.setdefault(ident.digest, ident)

    def _verify_cert(self, cert, out):
        if cert in self.verified_certs:
            return True
        out.work["ver"] += len(cert.quorum.signers)
        if cert.verify(self.crypto, self.k):
            self.verified_certs.add(cert)
            return True
        return False

    def _note_cert(self, cert, out):
        self._learn(cert.identifier)
        if cert.rank > self.high_cert.rank:
            self.high_cert = cert
            out.notes.append(("high_cert", cert.rank))

    def _check_leader_msg(self, msg):
        book = self.leader_msgs[msg.view]
        ident = msg.identifier
        h = ident.height
        for hh in (h - 1, h, h + 1):
            other = book.get(hh)
            if other is not None and identifiers_conflict(other.identifier, ident):
                return Equivocation(other, msg)
        book.setdefault(h, msg)
        return None

    # -- steady state -------------------------------------------------------

    def leader_propose(self, height, cert, now, out):
        """Build, encode and disperse block ``height`` on top of ``cert``."""
        if self.leader() != self.id:
            out.notes.append(("not_leader", self.view))
            return
        if (self.view, height) in self.proposed or self.draining:
            return
        batch = self.requests.take(self.batch_size, now)
        if not batch:
            out.timer(self.delta / 4, ("retry_propose", self.view, height, cert))
            return
        self.proposed.add((self.view, height))
        block = self._make_block(height, batch, cert)
        chunks = codec.encode(block.encode(), self.params)
        ident = self._identifier_for(height, [c.data for c in chunks], cert)
        out.work["field"] += codec.encode_work(len(block.encode()), self.params)
        out.work["hash"] += 2 * self.n
        self.decoded[ident.digest] = block
        out.notes.append(("propose", self.view, height, now))
        proposals = self._tailor(ident, [c.data for c in chunks], cert, out)
        self._disperse(proposals, now, out)

    def _make_block(self, height, batch, cert):
        pred = None if cert.identifier == GENESIS else cert.identifier.content_root
        return Block(height, tuple(batch), pred)

    def _identifier_for(self, height, chunk_data, cert):
        root = merkle.root_of(chunk_data)
        pred = None if cert.identifier == GENESIS else cert.identifier.digest
        return IdentifierBlock(height, root, pred)

    def _tailor(self, ident, chunk_data, cert, out):
        props = []
        for r in range(self.n):
            seg = Segment(r, chunk_data[r], ident)
            props.append(
                Proposal.create(self.crypto, self.id, view=self.view, segment=seg, cert=cert, n=self.n)
            )
        out.work["sig"] += self.n
        out.work["hash"] += self.n
        return props

    def _disperse(self, proposals, now, out):
        for p in proposals:
            if p.segment.owner != self.id:
                out.send(p.segment.owner, p)
        own = proposals[self.id]
        self.on_proposal(own, self.id, now, out, trusted=True)

    def _valid_proposal(self, p, out, trusted=False):
        seg = p.segment
        if not 0 <= seg.owner < self.n or not seg.chunk:
            return False
        cert = p.cert
        ident = p.identifier
        if ident.height != cert.identifier.height + 1:
            return False
        expected_pred = None if cert.identifier == GENESIS else cert.identifier.digest
        if ident.predecessor_hash != expected_pred:
            return False
        if not (cert.view == p.view or (p.view == 0 and cert.is_genesis)):
            return False
        if trusted:
            return True
        out.work["ver"] += 1
        out.work["hash"] += 1
        if not p.verify(self.crypto):
            return False
        return self._verify_cert(cert, out)

    def on_proposal(self, p, sender, now, out, trusted=False):
        if p.view < self.view:
            if p.cert in self.verified_certs or self._verify_cert(p.cert, out):
                self._note_cert(p.cert, out)
            return
        if p.view > self.view:
            self._buffer(p.view, p, sender)
            return
        if not self._valid_proposal(p, out, trusted):
            self.dropped += 1
            return
        v, h = p.view, p.height
        self._learn(p.identifier)
        self._note_cert(p.cert, out)
        ev = self._check_leader_msg(p)
        if ev is not None:
            self.raise_evidence(ev, now, out)
            return

        key = (v, h)
        first = key not in self.forwarded_first
        if first:
            self.forwarded_first.add(key)
            out.send(BROADCAST, p)
        if p.segment.owner == self.id and key not in self.forwarded_own:
            self.forwarded_own.add(key)
            if not first:
                out.send(BROADCAST, p)

        self.segments[key][p.identifier.digest].setdefault(p.segment.owner, p)
        self.proposal_senders[key].add(sender)
        if first:
            out.notes.append(("proposal_first", v, h, now))
        self._maybe_arm_commit(p, key, now, out)
        self.try_vote(v, h, p.identifier.digest, now, out)

    def _maybe_arm_commit(self, p, key, now, out):
        cert = p.cert
        if cert.is_genesis:
            return
        tkey = (p.view, cert.identifier.height)
        if tkey in self.armed:
            return
        if self.sluggish and len(self.proposal_senders[key]) < self.f + 1:
            return
        self.armed.add(tkey)
        out.timer(2 * self.delta, ("commit", p.view, cert.identifier.digest))
        out.notes.append(("timer_armed", p.view, cert.identifier.height, now))

    def try_vote(self, view, height, digest, now, out):
        """Decode once f+1 segments agree on an identifier; vote or expose miscoding."""
        key = (view, height)
        if view != self.view or key in self.voted or (key, digest) in self.rejected:
            return
        segs = self.segments[key].get(digest)
        if segs is None or len(segs) < self.k:
            return
        if digest in self.decoded:
            self.cast_vote(view, segs[next(iter(segs))].identifier, now, out)
            return
        props = tuple(segs[o] for o in sorted(segs)[: self.k])
        ident = props[0].identifier
        chunks = [codec.Chunk(p.segment.owner, p.segment.chunk) for p in props]
        chunk_len = len(chunks[0].data)
        try:
            payload = codec.decode(chunks, self.params)
        except codec.CodecError:
            self.raise_evidence(CodingError(props), now, out)
            return
        if tuple(sorted(segs)[: self.k]) != tuple(range(self.k)):
            out.work["field"] += self.k * self.k * chunk_len
        reencoded = codec.encode(payload, self.params)
        out.work["field"] += codec.encode_work(len(payload), self.params)
        out.work["hash"] += 2 * self.n
        if merkle.root_of([c.data for c in reencoded]) != ident.content_root:
            self.raise_evidence(CodingError(props), now, out)
            return
        block = parse_block(payload)
        if block is None or block.height != height:
            self.rejected.add((key, digest))
            out.notes.append(("malformed_block", view, height))
            return
        self.decoded[digest] = block
        self.cast_vote(view, ident, now, out)

    def cast_vote(self, view, ident, now, out):
        self.voted.add((view, ident.height))
        vote = Vote.create(self.crypto, self.id, view=view, identifier=ident, voter=self.id)
        out.work["sig"] += 1
        out.send(BROADCAST, vote)
        self.votes_cast += 1
        out.notes.append(("vote", view, ident.height, now, self.votes_cast))
        self._tally_vote(vote, now, out)

    def on_vote(self, vote, now, out):
        if vote.view < self.view:
            return
        if vote.view > self.view:
            self._buffer(vote.view, vote, vote.voter)
            return
        if not 0 <= vote.voter < self.n:
            return
        out.work["ver"] += 1
        if not vote.verify(self.crypto):
            self.dropped += 1
            return
        self._learn(vote.identifier)
        self._tally_vote(vote, now, out)

    def _tally_vote(self, vote, now, out):
        key = (vote.view, vote.identifier.digest)
        tally = self.votes[key]
        tally.setdefault(vote.voter, vote)
        if len(tally) < self.k or key in self.certs:
            return
        quorum = self.crypto.assemble_quorum([(v, m.sig) for v, m in tally.items()], self.k)
        cert = Certificate(vote.view, vote.identifier, quorum)
        self.certs[key] = cert
        self.verified_certs.add(cert)
        self._note_cert(cert, out)
        out.notes.append(("cert", cert.view, cert.identifier.height, cert.identifier.digest, now))
        self.on_certificate(cert, now, out)

    def on_certificate(self, cert, now, out):
        if self.leader(cert.view) == self.id and cert.view == self.view:
            self.leader_propose(cert.identifier.height + 1, cert, now, out)

    def on_commit_timer(self, view, digest, now, out):
        if view != self.view:
            out.notes.append(("commit_skipped", view, now))
            return
        ident = self.store[digest]
        if not self.sluggish:
            self.commit(ident, now, out)
            return
        if digest in self.commit_sent:
            return
        self.commit_sent.add(digest)
        msg = CommitMsg.create(self.crypto, self.id, view=view, identifier=ident, sender=self.id)
        out.work["sig"] += 1
        out.send(BROADCAST, msg)
        self._tally_commit(msg, now, out)

    def on_commit_msg(self, msg, now, out):
        if not 0 <= msg.sender < self.n:
            return
        out.work["ver"] += 1
        if not msg.verify(self.crypto):
            self.dropped += 1
            return
        self._learn(msg.identifier)
        self._tally_commit(msg, now, out)

    def _tally_commit(self, msg, now, out):
        digest = msg.identifier.digest
        tally = self.commit_msgs[digest]
        tally.setdefault(msg.sender, msg)
        if digest in self.commit_sent and len(tally) >= self.f + 1:
            self.commit(msg.identifier, now, out)

    def commit(self, ident, now, out):
        """Commit ``ident`` and every uncommitted ancestor, oldest first."""
        out.notes.append(("direct_commit", self.view, ident.height, ident.digest))
        chain = []
        cur = ident
        while cur is not None and cur.height > 0:
            have = self.committed.get(cur.height)
            if have is not None:
                if have.digest != cur.digest:
                    out.notes.append(("commit_conflict", cur.height))
                break
            chain.append(cur)
            cur = self.store.get(cur.predecessor_hash) if cur.predecessor_hash else None
        if cur is None and chain and chain[-1].height > 1:
            out.notes.append(("commit_gap", chain[-1].height))
        for ident_h in reversed(chain):
            self.committed[ident_h.height] = ident_h
            out.commits.append((ident_h.height, ident_h))
            out.notes.append(("commit", ident_h.height, ident_h.digest, now))
            self.follow_propose(ident_h, now, out)

    # -- silence ------------------------------------------------------------

    def check_silence(self, view, level, now, out):
        if view != self.view:
            return
        if not self.draining:
            if self.votes_cast < level and level not in self.blamed_levels:
                self.blamed_levels.add(level)
                blame = Blame.create(self.crypto, self.id, view=view, sender=self.id)
                out.work["sig"] += 1
                out.send(BROADCAST, blame)
                out.notes.append(("blame", view, level, now))
                self._tally_blame(blame, now, out)
                if view != self.view:
                    return
        if self.draining:
            return
        deadline = self.view_entry + (3 * (level + 1) + 4) * self.delta
        out.timer(max(deadline - now, 0.0), ("silence", view, level + 1))

    def on_blame(self, blame, now, out):
        if blame.view < self.view:
            return
        if blame.view > self.view:
            self._buffer(blame.view, blame, blame.sender)
            return
        if not 0 <= blame.sender < self.n:
            return
        out.work["ver"] += 1
        if not blame.verify(self.crypto):
            return
        self._tally_blame(blame, now, out)

    def _tally_blame(self, blame, now, out):
        book = self.blames[blame.view]
        book.setdefault(blame.sender, blame)
        if len(book) >= self.f + 1:
            chosen = tuple(book[s] for s in sorted(book)[: self.f + 1])
            self.raise_evidence(Silence(chosen), now, out)

    # -- view change --------------------------------------------------------

    def raise_evidence(self, ev, now, out):
        if ev.view != self.view:
            return
        out.evidence.append(ev)
        out.notes.append(("evidence", type(ev).__name__, ev.view, now))
        quit_msg = QuitView.create(self.crypto, self.id, view=self.view, evidence=ev, sender=self.id)
        out.work["sig"] += 1
        out.send(BROADCAST, quit_msg)
        self._leave_view(now, out)

    def on_quit_view(self, msg, now, out):
        if msg.view < self.view:
            return
        if msg.view > self.view:
            self._buffer(msg.view, msg, msg.sender)
            return
        if not 0 <= msg.sender < self.n or msg.evidence.view != msg.view:
            return
        out.work["ver"] += 1
        if not msg.verify(self.crypto):
            return
        if not verify_evidence(msg.evidence, self.crypto, self.params, self.f):
            out.notes.append(("bad_evidence", msg.view, msg.sender))
            return
        out.send(BROADCAST, msg)
        out.notes.append(("quit_forward", msg.view, now))
        self._leave_view(now, out)

    def _leave_view(self, now, out):
        if self.high_cert.rank > self.lock.rank:
            self.lock = self.high_cert
        out.notes.append(("lock", self.lock.rank, now))
        new_view = self.view + 1
        status = Status.create(self.crypto, self.id, view=new_view, cert=self.lock, sender=self.id)
        out.work["sig"] += 1
        self._enter_view(new_view, now, out)
        if self.leader(new_view) == self.id:
            self.on_status(status, now, out)
        else:
            out.send(self.leader(new_view), status)

    def _enter_view(self, view, now, out):
        self.view = view
        self.view_entry = now
        self.votes_cast = 0
        self.blamed_levels = set()
        out.notes.append(("view", view, now))
        out.timer(7 * self.delta, ("silence", view, 1))
        if view == 0:
            if self.leader(0) == self.id:
                self.leader_propose(1, GENESIS_CERT, now, out)
        elif self.leader(view) == self.id:
            out.timer(2 * self.delta, ("newview", view))
        for stale in [v for v in self.pending if v < view]:
            del self.pending[stale]
        replay = self.pending.pop(view, [])
        for msg, sender in replay:
            if self.view != view:
                self._buffer(view, msg, sender)
                continue
            self._dispatch(msg, sender, now, out)

    def on_status(self, msg, now, out):
        if not 0 <= msg.sender < self.n:
            return
        if msg.sender != self.id:
            out.work["ver"] += 1
            if not msg.verify(self.crypto):
                return
        if self._verify_cert(msg.cert, out):
            self._note_cert(msg.cert, out)

    def new_leader_start(self, view, now, out):
        """After the 2-Delta wait, announce the highest certificate known."""
        if view != self.view or self.leader(view) != self.id:
            return
        nv = NewView.create(self.crypto, self.id, view=view, cert=self.high_cert, n=self.n)
        out.work["sig"] += 1
        out.notes.append(("new_view_sent", view, self.high_cert.rank, now))
        self.on_new_view(nv, now, out, own=True)

    def on_new_view(self, msg, now, out, own=False):
        if msg.view < self.view:
            return
        if msg.view > self.view:
            self._buffer(msg.view, msg, self.leader(msg.view))
            return
        if not own:
            out.work["ver"] += 1
            if not msg.verify(self.crypto) or not self._verify_cert(msg.cert, out):
                self.dropped += 1
                return
        self._learn(msg.cert.identifier)
        self._note_cert(msg.cert, out)
        ev = self._check_leader_msg(msg)
        if ev is not None:
            self.raise_evidence(ev, now, out)
            return
        if msg.view in self.newview_handled:
            return
        if msg.cert.rank < self.lock.rank:
            out.notes.append(("new_view_rejected", msg.view, now))
            return
        self.newview_handled.add(msg.view)
        out.send(BROADCAST, msg)
        out.notes.append(("new_view_arrival", msg.view, now))
        key = (msg.view, msg.cert.identifier.height)
        if key not in self.voted:
            self.cast_vote(msg.view, msg.cert.identifier, now, out)

    # -- follow phase -------------------------------------------------------

    def follow_propose(self, ident, now, out):
        """Re-disperse a committed block we hold; otherwise wait for chunks."""
        h = ident.height
        block = self.decoded.get(ident.digest)
        if block is None:
            for msg, sender in self.follow_buffer.pop(h, []):
                self.on_follow(msg, sender, now, out)
            return
        self._follow_commit(h, block, now, out)
        self.follow_buffer.pop(h, None)
        if h in self.follow_dispersed:
            return
        self.follow_dispersed.add(h)
        chunks = codec.encode(block.encode(), self.params)
        tree = merkle.MerkleTree([c.data for c in chunks])
        out.work["field"] += codec.encode_work(len(block.encode()), self.params)
        out.work["hash"] += 3 * self.n
        for r in range(self.n):
            msg = Follow(Segment(r, self._follow_chunk(chunks[r].data, r), ident), tree.prove(r))
            # our own chunk is self-delivered and therefore forwarded to everyone
            out.send(BROADCAST if r == self.id else r, msg, PRIO_LOW)

    def _follow_chunk(self, data, index):
        return data

    def on_follow(self, msg, sender, now, out):
        h = msg.height
        ident = self.committed.get(h)
        if ident is None:
            buf = self.follow_buffer[h]
            if len(buf) < MAX_FOLLOW_BUFFER * self.n:
                buf.append((msg, sender))
            return
        seg = msg.segment
        if h in self.follow_committed and (seg.owner != self.id or h in self.follow_forwarded):
            return
        if seg.identifier.digest != ident.digest or not 0 <= seg.owner < self.n:
            self.dropped += 1
            return
        out.work["hash"] += len(msg.proof.siblings) + 1
        if not merkle.verify(ident.content_root, seg.owner, seg.chunk, msg.proof):
            self.dropped += 1
            out.notes.append(("follow_rejected", h, sender))
            return
        if seg.owner == self.id and h not in self.follow_forwarded and h not in self.follow_dispersed:
            self.follow_forwarded.add(h)
            out.send(BROADCAST, msg, PRIO_LOW)
        if h in self.follow_committed:
            return
        chunks = self.follow_chunks[h]
        chunks.setdefault(seg.owner, seg.chunk)
        if len(chunks) < self.k:
            return
        picked = [codec.Chunk(i, chunks[i]) for i in sorted(chunks)[: self.k]]
        try:
            payload = codec.decode(picked, self.params)
        except codec.CodecError:
            out.notes.append(("follow_decode_failed", h))
            return
        out.work["field"] += self.k * self.k * len(picked[0].data)
        block = parse_block(payload)
        reencoded = codec.encode(payload, self.params)
        if block is None or merkle.root_of([c.data for c in reencoded]) != ident.content_root:
            out.notes.append(("follow_decode_failed", h))
            return
        self.decoded[ident.digest] = block
        self._follow_commit(h, block, now, out)
        del self.follow_chunks[h]

    def _follow_commit(self, h, block, now, out):
        if h in self.follow_committed:
            return
        self.follow_committed[h] = block
        out.follow_commits.append((h, block))
        out.notes.append(("follow_commit", h, now))
