"""Scenario configuration, run driver, invariant observer and metrics.

A :class:`ScenarioConfig` fully determines a run.  ``run_scenario`` builds
the nodes, drives the simulator to ``duration`` and then lets the system
settle (bounded by ``settle``) so that late follow-phase traffic completes.
Every run is checked by :class:`InvariantObserver`; ``RunResult.ok`` is
False iff some invariant failed.
"""

import csv
import dataclasses
import io
import json
import math
import os
import random
import statistics
from collections import defaultdict
from dataclasses import dataclass, field

from . import perf
from .adversary import STRATEGIES, SluggishSchedule, corrupt, random_schedule
from .baseline import ShsVote, SyncHotStuffNode
from .chain import content_root
from .codec import CodecParams
from .crypto import CryptoEnv, leader_of
from .messages import Vote
from .node import HamsterNode
from .simnet import NetParams, Network
from .workload import RequestPool

SCHEMA_NAME = "hamster-scenario"
SCHEMA_VERSION = 1

CSV_HEADER = (
    "scenario",
    "n",
    "f",
    "protocol",
    "batch_size",
    "bandwidth_bps",
    "delta_s",
    "throughput_kops",
    "mean_latency_s",
    "bytes_total",
    "bytes_max_node",
)

PROTOCOLS = ("hamster", "sync-hotstuff")

OUTPUT_ENV = "HAMSTER_OUTPUT_DIR"


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    protocol: str = "hamster"
    n: int = 3
    f: int = None  # defaults to (n - 1) // 2
    sluggish_mode: bool = False
    delta: float = 1.0
    max_prop: float = 0.1
    bandwidth: float = None  # bytes/s, None = unlimited
    t_field: float = 0.0
    t_hash: float = 0.0
    t_sig: float = 0.0
    t_ver: float = 0.0
    batch_size: int = 1
    request_size: int = 32
    pool_size: int = None  # None = saturated clients
    resubmit_after: float = None  # defaults to 20 * delta
    duration: float = 20.0
    settle: float = None  # defaults to 60 * delta
    drain: bool = False  # stop proposing at ``duration``
    adversary: list = field(default_factory=list)  # [{"node": i, "strategy": s, ...params}]
    sluggish: dict = None  # {"windows": {node: [[start, end], ...]}}
    sluggish_bound: bool = True
    scheme: str = "hmac"
    seed: int = 0

    def __post_init__(self):
        if self.f is None:
            self.f = (self.n - 1) // 2
        if self.settle is None:
            self.settle = 60 * self.delta
        if self.resubmit_after is None:
            self.resubmit_after = 20 * self.delta
        self.validate()

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ScenarioError(f"protocol must be one of {PROTOCOLS}")
        if self.n < 1 or not 0 <= self.f <= (self.n - 1) // 2:
            raise ScenarioError(f"need 0 <= f <= (n-1)/2, got n={self.n}, f={self.f}")
        if self.batch_size < 1:
            raise ScenarioError("batch_size must be at least 1")
        if self.pool_size is not None and self.pool_size < 1:
            raise ScenarioError("pool_size must be positive")
        if self.duration <= 0 or self.delta <= 0:
            raise ScenarioError("duration and delta must be positive")
        if self.max_prop > self.delta:
            raise ScenarioError("max_prop exceeds delta")
        nodes = [a.get("node") for a in self.adversary]
        if len(set(nodes)) != len(nodes) or not all(isinstance(i, int) and 0 <= i < self.n for i in nodes):
            raise ScenarioError("adversary entries need distinct node ids in range")
        if len(nodes) > self.f:
            raise ScenarioError(f"{len(nodes)} corrupted nodes exceed f={self.f}")
        for a in self.adversary:
            if a.get("strategy") not in STRATEGIES:
                raise ScenarioError(f"unknown strategy {a.get('strategy')!r}")
        if self.protocol == "sync-hotstuff" and (self.adversary or self.sluggish):
            raise ScenarioError("the baseline supports honest, prompt runs only")
        self.schedule()

    @property
    def corrupted(self):
        return sorted(a["node"] for a in self.adversary)

    @property
    def honest_ids(self):
        bad = set(self.corrupted)
        return [i for i in range(self.n) if i not in bad]

    def schedule(self):
        if not self.sluggish:
            return SluggishSchedule()
        windows = {int(k): v for k, v in self.sluggish.get("windows", {}).items()}
        if set(windows) & set(self.corrupted):
            raise ScenarioError("sluggish windows apply to honest nodes only")
        bound = dict(n=self.n, byzantine=len(self.adversary)) if self.sluggish_bound else {}
        try:
            return SluggishSchedule(windows, **bound)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc

    def net_params(self):
        return NetParams(
            delta=self.delta,
            max_prop=self.max_prop,
            bandwidth=float("inf") if self.bandwidth is None else self.bandwidth,
            t_field=self.t_field,
            t_hash=self.t_hash,
            t_sig=self.t_sig,
            t_ver=self.t_ver,
        )

    # -- serialisation ------------------------------------------------------

    def to_dict(self):
        body = dataclasses.asdict(self)
        return {"schema": SCHEMA_NAME, "version": SCHEMA_VERSION, **body}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        schema = data.pop("schema", SCHEMA_NAME)
        version = data.pop("version", SCHEMA_VERSION)
        if schema != SCHEMA_NAME:
            raise ScenarioError(f"not a scenario file (schema {schema!r})")
        if version != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported schema version {version}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# -- observer ------------------------------------------------------------------


class InvariantObserver:
    """Global, full-visibility recorder of every node's outputs."""

    def __init__(self, config, pool):
        self.config = config
        self.pool = pool
        self.n = config.n
        self.f = config.f
        self.honest = set(config.honest_ids)
        self.hamster = config.protocol == "hamster"
        self.idents = {}
        self.commits = defaultdict(dict)  # node -> h -> digest
        self.commit_time = {}  # h -> first honest commit time
        self.first_commit = {}  # h -> digest (first honest)
        self.follow = defaultdict(dict)  # node -> h -> block
        self.follow_count = defaultdict(int)
        self.completed_at = {}  # h -> time f+1 honest follow-commits
        self.vote_book = defaultdict(set)  # (view, digest) -> voters
        self.direct_commit_views = defaultdict(set)  # view -> digests
        self.locks = defaultdict(list)
        self.votes_by_node = defaultdict(lambda: defaultdict(list))  # node -> view -> times
        self.view_entry = defaultdict(dict)  # node -> view -> time
        self.new_view_arrival = defaultdict(dict)
        self.proposals = defaultdict(list)  # (node, view) -> times
        self.blames = []
        self.evidence = []
        self.violations = []
        self.vote_keys = defaultdict(set)
        self.commit_gaps = 0

    def violate(self, kind, detail):
        self.violations.append((kind, detail))

    def on_deliver(self, src, dst, msg, now):
        pass

    def on_output(self, node, out, now):
        honest = node in self.honest
        for dst, msg, _ in out.sends:
            if isinstance(msg, Vote):
                self.idents[msg.identifier.digest] = msg.identifier
                self.vote_book[(msg.view, msg.identifier.digest)].add(msg.voter)
            elif isinstance(msg, ShsVote):
                self.vote_book[(msg.view, msg.ref.digest)].add(msg.voter)
        for ev in out.evidence:
            self.evidence.append((node, type(ev).__name__, ev.view, now))
        for h, ident in out.commits:
            if not honest:
                continue
            self.idents.setdefault(ident.digest, ident)
            mine = self.commits[node]
            if h in mine and mine[h] != ident.digest:
                self.violate("weak_safety", f"node {node} recommitted height {h}")
            mine[h] = ident.digest
            first = self.first_commit.setdefault(h, ident.digest)
            self.commit_time.setdefault(h, now)
            if first != ident.digest:
                self.violate("weak_safety", f"conflicting commits at height {h}")
        for h, block in out.follow_commits:
            if not honest:
                continue
            self.follow[node][h] = block
            self.follow_count[h] += 1
            if self.follow_count[h] == self.f + 1:
                self.completed_at[h] = now
                self.pool.complete(block.batch, now)
        for note in out.notes:
            kind = note[0]
            if kind == "propose":
                self.proposals[(node, note[1])].append(note[3])
            if not honest:
                continue
            if kind == "vote":
                _, view, height, t = note[:4]
                key = (view, height)
                if key in self.vote_keys[node]:
                    self.violate("vote_uniqueness", f"node {node} voted twice at {key}")
                self.vote_keys[node].add(key)
                self.votes_by_node[node][view].append(t)
            elif kind == "view":
                self.view_entry[node][note[1]] = note[2]
            elif kind == "lock":
                hist = self.locks[node]
                if hist and note[1] < hist[-1]:
                    self.violate("lock_monotonicity", f"node {node} lock fell {hist[-1]} -> {note[1]}")
                hist.append(note[1])
            elif kind == "new_view_arrival":
                self.new_view_arrival[node].setdefault(note[1], note[2])
            elif kind == "direct_commit":
                self.direct_commit_views[note[1]].add(note[3])
            elif kind == "blame":
                self.blames.append((node, note[1], note[2], note[3]))
            elif kind == "commit_gap":
                self.commit_gaps += 1

    # -- end-of-run checks ----------------------------------------------------

    def _extends(self, a, b):
        cur = a
        while cur is not None and cur.height > b.height:
            cur = self.idents.get(cur.predecessor_hash) if cur.predecessor_hash else None
        if cur is None:
            return b.height == 0
        return cur.digest == b.digest

    def certificate_conflicts(self):
        """Pairs of same-view certified identifiers that do not extend one another."""
        by_view = defaultdict(list)
        for (view, digest), voters in self.vote_book.items():
            if len(voters) >= self.f + 1 and digest in self.idents:
                by_view[view].append(self.idents[digest])
        conflicts = []
        for view, idents in by_view.items():
            idents.sort(key=lambda i: i.height)
            for i, lo in enumerate(idents):
                for hi in idents[i + 1:]:
                    if not self._extends(hi, lo):
                        conflicts.append((view, lo.height, hi.height))
        return conflicts

    def finish(self, cutoff, net, liveness=False):
        if self.hamster:
            for view, lo, hi in self.certificate_conflicts():
                self.violate("certificate_uniqueness", f"view {view}: heights {lo} and {hi} conflict")
            for node, chain in self.commits.items():
                for h, digest in chain.items():
                    prev = chain.get(h - 1)
                    ident = self.idents[digest]
                    if h > 1 and prev is not None and ident.predecessor_hash != prev:
                        self.violate("commit_ancestry", f"node {node} height {h}")
                    if h > 1 and prev is None:
                        self.violate("commit_ancestry", f"node {node} gap below height {h}")
        self._check_follow(cutoff)
        if net.delta_violations:
            self.violate("delta_respect", f"{net.delta_violations} deliveries exceeded delta")
        if liveness:
            self._check_liveness(net.now)

    def _check_follow(self, cutoff):
        params = CodecParams(self.n, self.f + 1)
        blocks = {}
        for node, book in self.follow.items():
            for h, block in book.items():
                prior = blocks.setdefault(h, block)
                if prior.encode() != block.encode():
                    self.violate("follow_safety", f"different blocks followed at height {h}")
        if self.config.sluggish_mode:
            # a victim that never sees f+1 proposals never commits the
            # identifier, so only agreement is asserted in this mode
            return
        for h, t in self.commit_time.items():
            if t > cutoff:
                continue
            for node in self.honest:
                if h not in self.follow[node]:
                    self.violate("consistent_distributing", f"node {node} never followed height {h}")
            block = blocks.get(h)
            if block is not None and self.hamster:
                if content_root(block, params) != self.idents[self.first_commit[h]].content_root:
                    self.violate("consistent_distributing", f"height {h} block root mismatch")

    def liveness_report(self, end):
        """Per honest node and honest-leader view: vote and new-view deadline checks."""
        delta = self.config.delta
        vote_misses, nv_misses, nv_delays = [], [], []
        for node in self.honest:
            entries = sorted(self.view_entry[node].items())
            for idx, (view, entry) in enumerate(entries):
                if leader_of(view, self.n) not in self.honest:
                    continue
                exit_time = entries[idx + 1][1] if idx + 1 < len(entries) else end
                times = sorted(self.votes_by_node[node][view])
                p = 1
                while entry + (3 * p + 4) * delta <= exit_time:
                    deadline = entry + (3 * p + 4) * delta
                    if sum(1 for t in times if t <= deadline) < p:
                        vote_misses.append((node, view, p))
                        break
                    p += 1
                if view > 0:
                    arrival = self.new_view_arrival[node].get(view)
                    if arrival is None:
                        if exit_time - entry >= 4 * delta:
                            nv_misses.append((node, view, None))
                    else:
                        nv_delays.append(arrival - entry)
                        if arrival - entry > 4 * delta + 1e-9:
                            nv_misses.append((node, view, arrival - entry))
        return vote_misses, nv_misses, nv_delays

    def _check_liveness(self, end):
        vote_misses, nv_misses, _ = self.liveness_report(end)
        for miss in vote_misses:
            self.violate("liveness_votes", f"node {miss[0]} view {miss[1]} short of {miss[2]} votes")
        for miss in nv_misses:
            self.violate("liveness_new_view", f"node {miss[0]} view {miss[1]} new-view delay {miss[2]}")
        for node, view, level, t in self.blames:
            if leader_of(view, self.n) in self.honest:
                self.violate("liveness_blame", f"honest node {node} blamed honest leader in view {view}")

    def follow_complete(self, cutoff):
        for h, t in self.commit_time.items():
            if t <= cutoff and self.follow_count[h] < len(self.honest):
                return False
        return True


# -- running -------------------------------------------------------------------


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: dict
    violations: list
    trace_hash: str
    network: Network = None
    observer: InvariantObserver = None

    @property
    def ok(self):
        return not self.violations

    def csv_row(self):
        return metrics_row(self.config, self.metrics)


def build_nodes(config, pool):
    crypto = CryptoEnv(config.n, seed=config.seed, scheme=config.scheme)
    allies = config.corrupted
    adv = {a["node"]: a for a in config.adversary}
    nodes = []
    for i in range(config.n):
        common = dict(n=config.n, f=config.f, crypto=crypto, delta=config.delta, requests=pool)
        if config.protocol == "sync-hotstuff":
            nodes.append(SyncHotStuffNode(i, batch_size=config.batch_size, **common))
        elif i in adv:
            options = {k: v for k, v in adv[i].items() if k not in ("node", "strategy")}
            nodes.append(
                corrupt(
                    adv[i]["strategy"],
                    i,
                    allies=allies,
                    sluggish=config.sluggish_mode,
                    batch_size=config.batch_size,
                    **common,
                    **options,
                )
            )
        else:
            nodes.append(HamsterNode(i, sluggish=config.sluggish_mode, batch_size=config.batch_size, **common))
    return nodes


def run_scenario(config, record=False, check_liveness=None, trace_path=None):
    pool = RequestPool(config.pool_size, seed=config.seed, resubmit_after=config.resubmit_after)
    nodes = build_nodes(config, pool)
    observer = InvariantObserver(config, pool)
    schedule = config.schedule()
    net = Network(
        nodes,
        config.net_params(),
        seed=config.seed,
        sluggish=schedule,
        honest=config.honest_ids,
        observer=observer,
        record=record or trace_path is not None,
    )
    net.start()
    if config.drain:
        net.control(config.duration, None, "drain")
    net.run(until=config.duration)
    snapshot = _snapshot(net, observer, config)
    end = config.duration + config.settle
    step = max(config.delta, 1e-9)
    t = config.duration
    if config.drain:
        # proposals stop at ``duration``; run until the network goes quiet
        net.run(until=end)
    while t < end and not observer.follow_complete(config.duration):
        t = min(end, t + step)
        net.run(until=t)
    if check_liveness is None:
        check_liveness = not config.adversary and not schedule and config.protocol == "hamster"
    observer.finish(config.duration, net, liveness=check_liveness)
    metrics = _metrics(config, net, observer, pool, snapshot)
    if trace_path is not None:
        net.export_trace(trace_path)
    return RunResult(config, metrics, list(observer.violations), net.trace_hash, net, observer)


def _snapshot(net, observer, config):
    return {
        "bytes_sent": list(net.bytes_sent),
        "bytes_recv": list(net.bytes_recv),
        "completed": dict(observer.completed_at),
        "requests_done": observer.pool.completed_count,
    }


def _steady_rate(times, start, end):
    inside = [t for t in times if start <= t <= end]
    if len(inside) < 2 or inside[-1] == inside[0]:
        return 0.0
    return (len(inside) - 1) / (inside[-1] - inside[0])


def _metrics(config, net, observer, pool, snap):
    duration = config.duration
    sent = net.bytes_sent
    blocks = len(observer.completed_at)
    leader0 = leader_of(0, config.n)
    proposals = sorted(observer.proposals.get((leader0, 0), []))
    warm = 0.2 * duration
    gaps = [b - a for a, b in zip(proposals, proposals[1:]) if a >= warm and b <= duration]
    completion_times = sorted(t for t in snap["completed"].values())
    return {
        "throughput_kops": snap["requests_done"] / duration / 1000.0,
        "mean_latency_s": pool.mean_latency(),
        "bytes_total": sum(sent),
        "bytes_max_node": max(sent) if sent else 0,
        "bytes_mean_node": sum(sent) / len(sent) if sent else 0,
        "blocks_completed": blocks,
        "bytes_per_block": sum(sent) / blocks if blocks else math.inf,
        "round_time_s": statistics.median(gaps) if gaps else math.nan,
        "steady_blocks_per_s": _steady_rate(completion_times, warm, duration),
        "committed_heights": len(observer.commit_time),
        "views": 1 + max((v for e in observer.view_entry.values() for v in e), default=0),
        "evidence": len(observer.evidence),
        "max_in_flight_s": net.max_in_flight,
        "events": net.events,
        "end_time": net.now,
    }


def metrics_row(config, metrics):
    bandwidth_bps = "" if config.bandwidth is None else config.bandwidth * 8
    return {
        "scenario": config.name,
        "n": config.n,
        "f": config.f,
        "protocol": config.protocol,
        "batch_size": config.batch_size,
        "bandwidth_bps": bandwidth_bps,
        "delta_s": config.delta,
        "throughput_kops": f"{metrics['throughput_kops']:.6f}",
        "mean_latency_s": f"{metrics['mean_latency_s']:.6f}",
        "bytes_total": metrics["bytes_total"],
        "bytes_max_node": metrics["bytes_max_node"],
    }


def write_csv(rows, stream):
    writer = csv.DictWriter(stream, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in CSV_HEADER})


def csv_text(rows):
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def output_dir(default="."):
    path = os.environ.get(OUTPUT_ENV, default)
    os.makedirs(path, exist_ok=True)
    return path


# -- sweeps, model comparison, fuzzing -------------------------------------------


def expand_grid(base, grid):
    """Cartesian product of ``grid`` (field -> list of values) over ``base``.

    Varying ``n`` without also listing ``f`` re-derives ``f = (n - 1) // 2``.
    """
    configs = [base]
    for key, values in grid.items():
        extra = {"f": None} if key == "n" and "f" not in grid else {}
        configs = [c.replace(**{key: v}, **extra) for c in configs for v in values]
    for i, c in enumerate(configs):
        c.name = f"{base.name}-{i}"
    return configs if grid else []


def sweep(configs):
    """Run every config; returns ``(rows, failures)``."""
    rows, failures = [], []
    for cfg in configs:
        try:
            result = run_scenario(cfg)
        except Exception as exc:  # reported per row, the sweep continues
            failures.append((cfg.name, repr(exc)))
            continue
        rows.append(result.csv_row())
        if not result.ok:
            failures.append((cfg.name, result.violations[:3]))
    return rows, failures


def block_bytes(config):
    """Encoded block size for ``config``'s batch."""
    return 8 + 4 + config.batch_size * 32 + 33


def perf_params(config, k=None):
    return perf.PerfParams(
        n=config.n,
        k=config.f + 1 if k is None else k,
        m=block_bytes(config),
        c=config.request_size,
        B=float("inf") if config.bandwidth is None else config.bandwidth,
        delta_p=0.75 * config.max_prop,
        t_f=config.t_field,
        t_hash=config.t_hash,
        t_sig=config.t_sig,
        t_ver=config.t_ver,
    )


def compare_model(config):
    """Simulated vs modeled round time for ``config`` (honest run)."""
    result = run_scenario(config)
    p = perf_params(config)
    if config.protocol == "hamster":
        b = perf.t_hamster(p)
    else:
        b = perf.t_sync(p)
    simulated = result.metrics["round_time_s"]
    return {
        "protocol": config.protocol,
        "simulated_round_s": simulated,
        "modeled_round_s": b.exact,
        "modeled_approx_s": b.approx,
        "relative_error": (simulated - b.exact) / b.exact if b.exact else math.nan,
        "terms": b.terms,
        "ok": result.ok,
    }


FUZZ_STRATEGIES = ("equivocating_leader", "miscoding_leader", "silent_leader", "crash", "vote_withholder")


def random_adversary(rng, n, count, duration, delta):
    ids = sorted(rng.sample(range(n), count))
    out = []
    for i in ids:
        strategy = rng.choice(FUZZ_STRATEGIES)
        entry = {"node": i, "strategy": strategy}
        if strategy == "crash":
            entry["crash_at"] = round(rng.uniform(0, duration / 2), 3)
        elif strategy == "silent_leader":
            entry["victims"] = rng.choice(["f_lowest", "all"])
        out.append(entry)
    return out


def fuzz_config(seed, n, sluggish=False, duration=None, delta=1.0):
    """Deterministic randomized scenario for ``seed``."""
    rng = random.Random(seed * 7919 + n)
    f = (n - 1) // 2
    duration = duration if duration is not None else 12 * delta
    max_prop = delta * rng.uniform(0.1, 1.0)
    if sluggish:
        byz = rng.randint(0, f)
        adversary = random_adversary(rng, n, byz, duration, delta)
        honest = [i for i in range(n) if i not in {a["node"] for a in adversary}]
        sched = random_schedule(rng, honest, n, byz, duration, mean_window=3 * delta)
        sluggish_cfg = {"windows": {str(k): [list(w) for w in v] for k, v in sched.windows.items()}}
    else:
        adversary = random_adversary(rng, n, f, duration, delta)
        sluggish_cfg = None
    return ScenarioConfig(
        name=f"fuzz-{'sluggish-' if sluggish else ''}{n}-{seed}",
        n=n,
        f=f,
        sluggish_mode=sluggish,
        delta=delta,
        max_prop=max_prop,
        batch_size=rng.randint(1, 4),
        duration=duration,
        adversary=adversary,
        sluggish=sluggish_cfg,
        seed=seed,
    )


def fuzz(seeds, ns=(3, 5, 9), sluggish=False, on_result=None):
    """Run randomized adversarial scenarios; returns failing (config, violations) pairs."""
    failures = []
    for seed in seeds:
        for n in ns:
            cfg = fuzz_config(seed, n, sluggish=sluggish)
            result = run_scenario(cfg)
            if on_result is not None:
                on_result(result)
            if not result.ok:
                failures.append((cfg, result.violations))
    return failures
