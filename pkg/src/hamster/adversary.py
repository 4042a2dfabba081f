"""Byzantine node behaviours and mobile-sluggish fault schedules.

Every strategy subclasses :class:`HamsterNode` and signs only with its own
key.  Malicious strategies never raise evidence themselves (they want to
stay in the view) and hand out corrupted chunks in the follow phase.
"""

from .codec import encode, encode_work
from .crypto import hash_bytes
from .messages import Vote
from .node import BROADCAST, HamsterNode, Output


class AdversaryConfigError(ValueError):
    pass


# -- strategies ----------------------------------------------------------------


class HonestMirror(HamsterNode):
    """Counted as corrupted, behaves exactly like an honest node."""

    honest = False


class VoteWithholder(HamsterNode):
    """Follows the protocol but never votes."""

    honest = False

    def cast_vote(self, view, ident, now, out):
        self.voted.add((view, ident.height))


class CrashNode(HamsterNode):
    """Honest until ``crash_at``, silent afterwards."""

    honest = False

    def __init__(self, *args, crash_at=0.0, **kwargs):
        super().__init__(*args, **kwargs)
        self.crash_at = crash_at

    def handle(self, kind, payload, now):
        if now >= self.crash_at:
            return Output()
        return super().handle(kind, payload, now)


class ByzantineNode(HamsterNode):
    """Base for actively malicious strategies."""

    honest = False

    def __init__(self, *args, allies=(), corrupt_follow=True, **kwargs):
        super().__init__(*args, **kwargs)
        self.allies = frozenset(allies) | {self.id}
        self.corrupt_follow = corrupt_follow

    @property
    def honest_ids(self):
        return [i for i in range(self.n) if i not in self.allies]

    def raise_evidence(self, ev, now, out):
        pass

    def _follow_chunk(self, data, index):
        if not self.corrupt_follow:
            return data
        return bytes(b ^ 0x5A for b in data)


class EquivocatingLeader(ByzantineNode):
    """As leader, proposes two conflicting blocks per height to the two halves
    of the honest nodes.  As a follower, votes for every identifier it sees."""

    def leader_propose(self, height, cert, now, out):
        if self.leader() != self.id or (self.view, height) in self.proposed or self.draining:
            return
        batch = self.requests.take(self.batch_size, now)
        if not batch:
            out.timer(self.delta / 4, ("retry_propose", self.view, height, cert))
            return
        self.proposed.add((self.view, height))
        twin = [hash_bytes(batch[0] + b"fork")] + list(batch[1:])
        variants = []
        for b in (batch, twin):
            block = self._make_block(height, b, cert)
            chunks = [c.data for c in encode(block.encode(), self.params)]
            ident = self._identifier_for(height, chunks, cert)
            self.decoded[ident.digest] = block
            variants.append(self._tailor(ident, chunks, cert, out))
            out.work["field"] += encode_work(len(block.encode()), self.params)
        out.notes.append(("propose", self.view, height, now))
        honest = self.honest_ids
        group_b = set(honest[len(honest) // 2:])
        for r in range(self.n):
            if r != self.id:
                out.send(r, variants[1 if r in group_b else 0][r])
        self.on_proposal(variants[0][self.id], self.id, now, out, trusted=True)

    def on_proposal(self, p, sender, now, out, trusted=False):
        if p.view == self.view and (trusted or p.verify(self.crypto)):
            self._vote_any(p.view, p.identifier, now, out)
        super().on_proposal(p, sender, now, out, trusted)

    def _vote_any(self, view, ident, now, out):
        key = ("any", view, ident.digest)
        if key in self.voted:
            return
        self.voted.add(key)
        vote = Vote.create(self.crypto, self.id, view=view, identifier=ident, voter=self.id)
        out.send(BROADCAST, vote)
        out.notes.append(("vote", view, ident.height, now, self.votes_cast))
        self._tally_vote(vote, now, out)

    def cast_vote(self, view, ident, now, out):
        self._vote_any(view, ident, now, out)


class MiscodingLeader(ByzantineNode):
    """Corrupts the parity chunks and commits to the corrupted vector."""

    def leader_propose(self, height, cert, now, out):
        if self.leader() != self.id or (self.view, height) in self.proposed or self.draining:
            return
        batch = self.requests.take(self.batch_size, now)
        if not batch:
            out.timer(self.delta / 4, ("retry_propose", self.view, height, cert))
            return
        self.proposed.add((self.view, height))
        block = self._make_block(height, batch, cert)
        chunks = [c.data for c in encode(block.encode(), self.params)]
        for i in range(self.k, self.n):
            chunks[i] = bytes(b ^ 0xA5 for b in chunks[i])
        ident = self._identifier_for(height, chunks, cert)
        self.decoded[ident.digest] = block
        out.notes.append(("propose", self.view, height, now))
        self._disperse(self._tailor(ident, chunks, cert, out), now, out)


class SilentLeader(ByzantineNode):
    """Withholds its tailored proposals from a victim set.

    ``victims`` is ``"f_lowest"`` (the f lowest honest ids), ``"all"`` (every
    honest node) or an explicit collection of ids.
    """

    def __init__(self, *args, victims="f_lowest", **kwargs):
        super().__init__(*args, **kwargs)
        honest = self.honest_ids
        if victims == "f_lowest":
            self.victims = frozenset(honest[: self.f])
        elif victims == "all":
            self.victims = frozenset(honest)
        else:
            self.victims = frozenset(victims)

    def _disperse(self, proposals, now, out):
        for p in proposals:
            r = p.segment.owner
            if r != self.id and r not in self.victims:
                out.send(r, p)
        self.on_proposal(proposals[self.id], self.id, now, out, trusted=True)

    def on_proposal(self, p, sender, now, out, trusted=False):
        # never forwards anything to victims either
        sub = Output()
        super().on_proposal(p, sender, now, sub, trusted)
        _merge_filtered(out, sub, self.victims, self.n, self.id)

    def new_leader_start(self, view, now, out):
        sub = Output()
        super().new_leader_start(view, now, sub)
        _merge_filtered(out, sub, self.victims, self.n, self.id)


def _merge_filtered(out, sub, victims, n, me):
    for dst, msg, prio in sub.sends:
        if dst is BROADCAST:
            for r in range(n):
                if r != me and r not in victims:
                    out.send(r, msg, prio)
        elif dst not in victims:
            out.send(dst, msg, prio)
    out.timers.extend(sub.timers)
    out.commits.extend(sub.commits)
    out.follow_commits.extend(sub.follow_commits)
    out.evidence.extend(sub.evidence)
    out.notes.extend(sub.notes)
    for key, val in sub.work.items():
        out.work[key] += val


STRATEGIES = {
    "honest_mirror": HonestMirror,
    "vote_withholder": VoteWithholder,
    "crash": CrashNode,
    "equivocating_leader": EquivocatingLeader,
    "miscoding_leader": MiscodingLeader,
    "silent_leader": SilentLeader,
}

MALICIOUS = {"equivocating_leader", "miscoding_leader", "silent_leader"}


def corrupt(strategy, node_id, n, f, crypto, delta, requests, allies=(), **options):
    """Instantiate ``strategy`` for ``node_id``.  ``allies`` are all corrupted ids."""
    cls = STRATEGIES.get(strategy)
    if cls is None:
        raise AdversaryConfigError(f"unknown strategy {strategy!r}")
    if len(set(allies) | {node_id}) > f:
        raise AdversaryConfigError(f"{len(set(allies) | {node_id})} corrupted nodes exceed f={f}")
    if strategy in MALICIOUS:
        options["allies"] = allies
    return cls(node_id, n, f, crypto, delta, requests, **options)


# -- mobile sluggish schedule --------------------------------------------------


class SluggishSchedule:
    """Per-node sorted sluggish windows ``[start, end)``.

    With ``n`` given, construction fails if at any instant the sluggish count
    plus ``byzantine`` exceeds ``(n - 1) // 2``.
    """

    def __init__(self, windows=None, n=None, byzantine=0):
        self.windows = {}
        for node, spans in (windows or {}).items():
            spans = sorted((float(a), float(b)) for a, b in spans if b > a)
            merged = []
            for a, b in spans:
                if merged and a <= merged[-1][1]:
                    merged[-1] = (merged[-1][0], max(b, merged[-1][1]))
                else:
                    merged.append((a, b))
            if merged:
                self.windows[node] = merged
        if n is not None and self.max_concurrent() + byzantine > (n - 1) // 2:
            raise AdversaryConfigError(
                f"sluggish peak {self.max_concurrent()} plus {byzantine} Byzantine exceeds (n-1)/2 for n={n}"
            )

    @classmethod
    def from_timeline(cls, timeline, end, n=None, byzantine=0):
        """Build from ``[(time, sluggish_set), ...]``; each set holds until the next entry."""
        windows = {}
        points = sorted(timeline, key=lambda e: e[0]) + [(end, frozenset())]
        for (t0, nodes), (t1, _) in zip(points, points[1:]):
            for node in nodes:
                windows.setdefault(node, []).append((t0, t1))
        return cls(windows, n=n, byzantine=byzantine)

    def is_sluggish(self, node, t):
        for a, b in self.windows.get(node, ()):
            if a <= t < b:
                return True
            if a > t:
                break
        return False

    def next_prompt(self, node, t):
        for a, b in self.windows.get(node, ()):
            if a <= t < b:
                return b
        return t

    def both_prompt(self, x, y, t):
        """Earliest instant >= t at which both endpoints are prompt."""
        while True:
            t2 = self.next_prompt(y, self.next_prompt(x, t))
            if t2 == t:
                return t
            t = t2

    def max_concurrent(self):
        points = []
        for spans in self.windows.values():
            for a, b in spans:
                points.append((a, 1))
                points.append((b, -1))
        best = cur = 0
        for _, d in sorted(points):
            cur += d
            best = max(best, cur)
        return best

    def sluggish_at(self, t):
        return {node for node in self.windows if self.is_sluggish(node, t)}

    def last_end(self):
        return max((spans[-1][1] for spans in self.windows.values()), default=0.0)

    def __bool__(self):
        return bool(self.windows)


def sluggish_mask(schedule, time, node):
    if schedule is None or not schedule.is_sluggish(node, time):
        return "prompt"
    return "sluggish"


def random_schedule(rng, nodes, n, byzantine, horizon, mean_window, attempts=40):
    """Random windows over ``nodes``; candidates breaking the bound are rejected."""
    windows = {}
    for _ in range(attempts):
        node = rng.choice(list(nodes))
        start = rng.uniform(0, horizon)
        end = min(horizon, start + rng.expovariate(1.0 / mean_window))
        trial = {k: list(v) for k, v in windows.items()}
        trial.setdefault(node, []).append((start, end))
        try:
            SluggishSchedule(trial, n=n, byzantine=byzantine)
        except AdversaryConfigError:
            continue
        windows = trial
    return SluggishSchedule(windows, n=n, byzantine=byzantine)


__all__ = [
    "AdversaryConfigError",
    "ByzantineNode",
    "CrashNode",
    "EquivocatingLeader",
    "HonestMirror",
    "MiscodingLeader",
    "SilentLeader",
    "SluggishSchedule",
    "STRATEGIES",
    "VoteWithholder",
    "corrupt",
    "random_schedule",
    "sluggish_mask",
]
