import pytest

from hamster.adversary import MiscodingLeader
from hamster.chain import GENESIS_CERT, Certificate, vote_digest
from hamster.crypto import CryptoEnv
from hamster.messages import Blame, CodingError, Equivocation, NewView, Proposal, QuitView, Status, Vote
from hamster.node import BROADCAST, HamsterNode
from hamster.workload import RequestPool

DELTA = 1.0


def cluster(n=3, seed=0, pool_seed=0):
    crypto = CryptoEnv(n, seed=seed)
    pool = RequestPool(seed=pool_seed)
    f = (n - 1) // 2
    return crypto, [HamsterNode(i, n, f, crypto, DELTA, pool) for i in range(n)]


def sends_of(out, kind):
    return [(dst, msg) for dst, msg, _ in out.sends if isinstance(msg, kind)]


def notes_of(out, kind):
    return [n for n in out.notes if n[0] == kind]


def start_all(nodes):
    return [node.handle("start", None, 0.0) for node in nodes]


def test_leader_disperses_tailored_segments():
    _, nodes = cluster(5)
    out = start_all(nodes)[0]
    props = sends_of(out, Proposal)
    unicast = {dst: p.segment.owner for dst, p in props if dst is not BROADCAST}
    assert unicast == {1: 1, 2: 2, 3: 3, 4: 4}
    assert [p.segment.owner for dst, p in props if dst is BROADCAST] == [0]
    assert len({p.identifier.digest for _, p in props}) == 1
    assert (7 * DELTA, ("silence", 0, 1)) in out.timers


def test_follower_forwards_first_proposal_once_and_votes_at_f_plus_one():
    _, nodes = cluster(3)
    outs = start_all(nodes)
    to_1 = [p for dst, p in sends_of(outs[0], Proposal) if dst == 1][0]
    own_0 = [p for dst, p in sends_of(outs[0], Proposal) if dst is BROADCAST][0]
    out = nodes[1].handle("message", (to_1, 0), 0.1)
    assert [dst for dst, _ in sends_of(out, Proposal)] == [BROADCAST]
    assert not sends_of(out, Vote)
    again = nodes[1].handle("message", (to_1, 0), 0.2)
    assert not again.sends
    out = nodes[1].handle("message", (own_0, 0), 0.3)
    assert not sends_of(out, Proposal)
    votes = sends_of(out, Vote)
    assert len(votes) == 1 and votes[0][1].identifier == to_1.identifier
    assert notes_of(out, "vote")[0][1:3] == (0, 1)


def test_forged_proposal_dropped():
    crypto, nodes = cluster(3)
    outs = start_all(nodes)
    p = [p for dst, p in sends_of(outs[0], Proposal) if dst == 1][0]
    forged = Proposal.create(crypto, 2, view=0, segment=p.segment, cert=p.cert, n=3)
    out = nodes[1].handle("message", (forged, 2), 0.1)
    assert not out.sends and nodes[1].dropped == 1


def test_equivocation_raises_evidence_and_quits_view():
    crypto = CryptoEnv(3)
    a = HamsterNode(0, 3, 1, crypto, DELTA, RequestPool(seed=1))
    b = HamsterNode(0, 3, 1, crypto, DELTA, RequestPool(seed=2))
    pa = [p for dst, p in sends_of(a.handle("start", None, 0.0), Proposal) if dst == 1][0]
    pb = [p for dst, p in sends_of(b.handle("start", None, 0.0), Proposal) if dst == 2][0]
    assert pa.identifier != pb.identifier
    node = HamsterNode(1, 3, 1, crypto, DELTA, RequestPool())
    node.handle("start", None, 0.0)
    node.handle("message", (pa, 0), 0.1)
    out = node.handle("message", (pb, 2), 0.2)
    assert len(out.evidence) == 1 and isinstance(out.evidence[0], Equivocation)
    assert sends_of(out, QuitView)
    assert node.view == 1
    # node 1 leads view 1, so its status goes to itself rather than the wire
    assert not sends_of(out, Status)
    assert (2 * DELTA, ("newview", 1)) in out.timers


def test_quit_view_with_valid_evidence_is_followed():
    crypto = CryptoEnv(3)
    a = HamsterNode(0, 3, 1, crypto, DELTA, RequestPool(seed=1))
    b = HamsterNode(0, 3, 1, crypto, DELTA, RequestPool(seed=2))
    pa = sends_of(a.handle("start", None, 0.0), Proposal)[0][1]
    pb = sends_of(b.handle("start", None, 0.0), Proposal)[0][1]
    quit_msg = QuitView.create(crypto, 1, view=0, evidence=Equivocation(pa, pb), sender=1)
    node = HamsterNode(2, 3, 1, crypto, DELTA, RequestPool())
    node.handle("start", None, 0.0)
    out = node.handle("message", (quit_msg, 1), 0.5)
    assert node.view == 1
    assert sends_of(out, QuitView)
    # evidence from an earlier view cannot end the current one
    stale = QuitView.create(crypto, 1, view=1, evidence=Equivocation(pa, pb), sender=1)
    out = node.handle("message", (stale, 1), 0.6)
    assert node.view == 1 and not out.sends


def test_quit_view_with_bogus_evidence_is_ignored():
    crypto = CryptoEnv(3)
    a = HamsterNode(0, 3, 1, crypto, DELTA, RequestPool(seed=1))
    pa = sends_of(a.handle("start", None, 0.0), Proposal)[0][1]
    node = HamsterNode(2, 3, 1, crypto, DELTA, RequestPool())
    node.handle("start", None, 0.0)
    bogus = QuitView.create(crypto, 1, view=0, evidence=Equivocation(pa, pa), sender=1)
    out = node.handle("message", (bogus, 1), 0.6)
    assert node.view == 0 and notes_of(out, "bad_evidence")


def test_miscoded_block_yields_coding_error():
    crypto = CryptoEnv(3)
    pool = RequestPool()
    leader = MiscodingLeader(0, 3, 1, crypto, DELTA, pool)
    props = sends_of(leader.handle("start", None, 0.0), Proposal)
    node = HamsterNode(1, 3, 1, crypto, DELTA, pool)
    node.handle("start", None, 0.0)
    by_owner = {p.segment.owner: p for _, p in props}
    node.handle("message", (by_owner[1], 0), 0.1)
    out = node.handle("message", (by_owner[2], 2), 0.2)
    assert len(out.evidence) == 1 and isinstance(out.evidence[0], CodingError)
    assert node.view == 1


def test_silence_blame_schedule():
    _, nodes = cluster(3)
    node = nodes[1]
    node.handle("start", None, 0.0)
    out = node.handle("timer", ("silence", 0, 1), 7.0)
    blames = sends_of(out, Blame)
    assert len(blames) == 1
    assert out.timers == [(pytest.approx(3.0), ("silence", 0, 2))]
    out = node.handle("timer", ("silence", 0, 1), 7.0)
    assert not sends_of(out, Blame)


def test_no_blame_when_votes_keep_up():
    _, nodes = cluster(3)
    outs = start_all(nodes)
    node = nodes[1]
    for dst, p in sends_of(outs[0], Proposal):
        if dst in (1, BROADCAST):
            node.handle("message", (p, 0), 0.1)
    assert node.votes_cast == 1
    out = node.handle("timer", ("silence", 0, 1), 7.0)
    assert not sends_of(out, Blame)


def test_f_plus_one_blames_trigger_view_change():
    crypto, nodes = cluster(3)
    start_all(nodes)
    other = Blame.create(crypto, 2, view=0, sender=2)
    node = nodes[1]
    node.handle("message", (other, 2), 6.0)
    assert node.view == 0
    out = node.handle("timer", ("silence", 0, 1), 7.0)
    assert node.view == 1 and out.evidence


def _cert(crypto, view, ident, signers):
    quorum = crypto.assemble_quorum([(i, crypto.sign(i, vote_digest(ident, view))) for i in signers], len(signers))
    return Certificate(view, ident, quorum)


def test_new_view_below_lock_is_rejected():
    crypto, nodes = cluster(3)
    outs = start_all(nodes)
    ident = sends_of(outs[0], Proposal)[0][1].identifier
    node = nodes[2]
    node.lock = _cert(crypto, 0, ident, [0, 1])
    node.view = 2
    stale = NewView.create(crypto, 2, view=2, cert=GENESIS_CERT, n=3)
    out = node.handle("message", (stale, 2), 20.0)
    assert notes_of(out, "new_view_rejected") and not sends_of(out, Vote)
    fresh = NewView.create(crypto, 2, view=2, cert=node.lock, n=3)
    out = node.handle("message", (fresh, 2), 20.1)
    assert notes_of(out, "new_view_arrival")
    assert [v.identifier for _, v in sends_of(out, Vote)] == [ident]


def test_future_view_messages_are_replayed():
    crypto, nodes = cluster(3)
    start_all(nodes)
    node = nodes[2]
    other = Blame.create(crypto, 0, view=1, sender=0)
    node.handle("message", (other, 0), 1.0)
    assert node.pending[1]
    node._leave_view(2.0, node.handle("control", "noop", 2.0))
    assert node.view == 1 and not node.pending.get(1) and 0 in node.blames[1]


def test_drain_stops_proposals():
    _, nodes = cluster(3)
    nodes[0].handle("control", "drain", 0.0)
    out = nodes[0].handle("start", None, 0.0)
    assert not sends_of(out, Proposal)


def test_rejects_too_many_faults():
    with pytest.raises(ValueError):
        HamsterNode(0, 4, 2, CryptoEnv(4), DELTA, RequestPool())
