"""Deterministic discrete-event network.

Events are processed in ``(time, sequence)`` order.  Each node has one
egress link of bandwidth ``B`` bytes/s shared by all its outgoing messages
(FIFO within a priority class, high before low), followed by a propagation
delay drawn uniformly from ``[0.5 * max_prop, max_prop]``.  Processing an
event keeps the node busy for the computation it reports, priced with the
configured per-operation times.

Sluggish nodes follow the mobile-sluggish rule: a message whose sender or
receiver is sluggish waits at the sender and is re-sent once both are
prompt.
"""

import hashlib
import heapq
import json
import random
from collections import deque
from dataclasses import dataclass

from .adversary import SluggishSchedule
from .node import BROADCAST, PRIO_HIGH

EV_DELIVER = 0
EV_TIMER = 1
EV_EGRESS = 2
EV_CONTROL = 3
EV_TICK = 4
EV_ENQUEUE = 5
EV_EMIT = 6
EV_START = 7


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetParams:
    delta: float = 1.0
    max_prop: float = 0.01
    bandwidth: float = float("inf")  # bytes per second
    t_field: float = 0.0  # per field operation on one byte
    t_hash: float = 0.0
    t_sig: float = 0.0
    t_ver: float = 0.0

    def __post_init__(self):
        if self.delta <= 0 or self.max_prop < 0 or self.bandwidth <= 0:
            raise ConfigError("delta and bandwidth must be positive, max_prop non-negative")
        if self.max_prop > self.delta:
            raise ConfigError("propagation bound exceeds the synchronous bound")

    def transmission(self, size):
        return size / self.bandwidth

    def compute_time(self, work):
        if not work:
            return 0.0
        return (
            work.get("field", 0) * self.t_field
            + work.get("hash", 0) * self.t_hash
            + work.get("sig", 0) * self.t_sig
            + work.get("ver", 0) * self.t_ver
        )


class Network:
    """Runs a set of node state machines under one simulated clock.

    ``observer``, if given, receives ``on_output(node_id, output, now)`` for
    every batch of node outputs and ``on_deliver(...)`` for every delivery.
    """

    def __init__(self, nodes, params, seed=0, sluggish=None, honest=None, observer=None, record=False):
        self.nodes = nodes
        self.n = len(nodes)
        self.params = params
        self.rng = random.Random(seed)
        self.sluggish = sluggish or SluggishSchedule()
        self.honest = set(range(self.n)) if honest is None else set(honest)
        self.observer = observer
        self.now = 0.0
        self._heap = []
        self._seq = 0
        self._egress = [(deque(), deque()) for _ in range(self.n)]
        self._link_busy = [False] * self.n
        self._busy_until = [0.0] * self.n
        self._hash = hashlib.sha256()
        self.records = [] if record else None
        self.events = 0

        self.bytes_sent = [0] * self.n
        self.bytes_recv = [0] * self.n
        self.msgs_sent = [0] * self.n
        self.msgs_recv = [0] * self.n
        self.bytes_by_tag = {}
        self.max_in_flight = 0.0
        self.delta_violations = 0
        self.in_flight_bytes = 0

    # -- scheduling ---------------------------------------------------------

    def _push(self, time, kind, *data):
        heapq.heappush(self._heap, (time, self._seq, kind, data))
        self._seq += 1

    def start(self, at=0.0):
        for i in range(self.n):
            self._push(at, EV_START, i)

    def control(self, at, node, what):
        targets = range(self.n) if node is None else [node]
        for i in targets:
            self._push(at, EV_CONTROL, i, what)

    def every(self, period, callback, start=None):
        """Call ``callback(network)`` periodically; it returns False to stop."""
        self._push(period if start is None else start, EV_TICK, period, callback)

    def inject(self, at, src, dst, msg):
        """Deliver ``msg`` from ``src`` to ``dst`` at ``at`` (tests, scripted runs)."""
        self._push(at, EV_DELIVER, src, dst, msg, at)

    # -- tracing ------------------------------------------------------------

    def _trace(self, kind, node, size=0, extra=""):
        line = f"{self.now:.9f}|{kind}|{node}|{size}|{extra}"
        self._hash.update(line.encode())
        if self.records is not None:
            self.records.append({"time": self.now, "kind": kind, "node": node, "size": size, "detail": extra})

    @property
    def trace_hash(self):
        return self._hash.hexdigest()

    def export_trace(self, path):
        if self.records is None:
            raise ConfigError("network was created without record=True")
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")

    # -- main loop ----------------------------------------------------------

    def run(self, until=float("inf"), max_events=None):
        heap = self._heap
        while heap:
            if heap[0][0] > until:
                self.now = until
                return False
            if max_events is not None and self.events >= max_events:
                return False
            time, _, kind, data = heapq.heappop(heap)
            self.now = time
            self.events += 1
            if kind == EV_DELIVER:
                self._deliver(*data)
            elif kind == EV_EGRESS:
                self._egress_done(*data)
            elif kind == EV_TIMER:
                node, tag = data
                self._run_node(node, "timer", tag)
            elif kind == EV_ENQUEUE:
                self._enqueue(*data)
            elif kind == EV_EMIT:
                self._emit(*data)
            elif kind == EV_START:
                self._run_node(data[0], "start", None)
            elif kind == EV_CONTROL:
                self._run_node(data[0], "control", data[1])
            elif kind == EV_TICK:
                period, callback = data
                if callback(self) is not False:
                    self._push(time + period, EV_TICK, period, callback)
        return True

    def _run_node(self, node, kind, payload, retry_key=None):
        busy = self._busy_until[node]
        if busy > self.now:
            # queued behind the node's current computation
            if kind == "message":
                self._push(busy, EV_DELIVER, payload[1], node, payload[0], None)
            elif kind == "timer":
                self._push(busy, EV_TIMER, node, payload)
            elif kind == "start":
                self._push(busy, EV_START, node)
            else:
                self._push(busy, EV_CONTROL, node, payload)
            return
        out = self.nodes[node].handle(kind, payload, self.now)
        cost = self.params.compute_time(out.work)
        if cost > 0:
            self._busy_until[node] = self.now + cost
            self._push(self.now + cost, EV_EMIT, node, out)
        else:
            self._emit(node, out)

    def _emit(self, node, out):
        if self.observer is not None:
            self.observer.on_output(node, out, self.now)
        for delay, tag in out.timers:
            self._push(self.now + delay, EV_TIMER, node, tag)
            self._trace("timer_set", node, 0, repr(tag[:2]))
        for h, ident in out.commits:
            self._trace("commit", node, h, ident.digest.hex()[:16])
        for h, _ in out.follow_commits:
            self._trace("follow_commit", node, h)
        for dst, msg, prio in out.sends:
            if dst is BROADCAST:
                for j in range(1, self.n):
                    self._enqueue(node, (node + j) % self.n, msg, prio)
            elif dst != node:
                self._enqueue(node, dst, msg, prio)

    def _enqueue(self, src, dst, msg, prio=PRIO_HIGH):
        sl = self.sluggish
        if sl and (sl.is_sluggish(src, self.now) or sl.is_sluggish(dst, self.now)):
            resume = sl.both_prompt(src, dst, self.now)
            self._push(resume, EV_ENQUEUE, src, dst, msg, prio)
            return
        size = msg.wire_size
        self._egress[src][prio].append((dst, msg, size, self.now, prio))
        self.in_flight_bytes += size
        if not self._link_busy[src]:
            self._start_next(src)

    def _start_next(self, src):
        high, low = self._egress[src]
        queue = high if high else low
        if not queue:
            self._link_busy[src] = False
            return
        dst, msg, size, queued_at, prio = queue.popleft()
        self._link_busy[src] = True
        self._push(self.now + self.params.transmission(size), EV_EGRESS, src, dst, msg, size, queued_at, prio)

    def _egress_done(self, src, dst, msg, size, queued_at, prio):
        self.bytes_sent[src] += size
        self.msgs_sent[src] += 1
        self.bytes_by_tag[msg.TAG] = self.bytes_by_tag.get(msg.TAG, 0) + size
        self._trace("send", src, size, f"{dst}:{msg.TAG}")
        prop = self.rng.uniform(0.5 * self.params.max_prop, self.params.max_prop)
        self._push(self.now + prop, EV_DELIVER, src, dst, msg, queued_at, prio)
        self._start_next(src)

    def _deliver(self, src, dst, msg, queued_at, prio=PRIO_HIGH):
        sl = self.sluggish
        if queued_at is not None:
            size = msg.wire_size
            self.in_flight_bytes -= size
            if sl and sl.is_sluggish(dst, self.now):
                resume = sl.both_prompt(src, dst, self.now)
                prop = self.rng.uniform(0.5 * self.params.max_prop, self.params.max_prop)
                self.in_flight_bytes += size
                self._push(resume + prop, EV_DELIVER, src, dst, msg, resume, prio)
                return
            # background (follow) traffic carries no timing obligation
            if prio == PRIO_HIGH and src in self.honest and dst in self.honest:
                flight = self.now - queued_at
                if flight > self.max_in_flight:
                    self.max_in_flight = flight
                if flight > self.params.delta + 1e-12:
                    self.delta_violations += 1
            self.bytes_recv[dst] += size
            self.msgs_recv[dst] += 1
            self._trace("recv", dst, size, f"{src}:{msg.TAG}")
            if self.observer is not None:
                self.observer.on_deliver(src, dst, msg, self.now)
        self._run_node(dst, "message", (msg, src))

    @property
    def idle(self):
        return not self._heap
