"""Closed-form delay, throughput and latency model for both protocols.

Sizes are in bytes and bandwidth in bytes per second.  Field-operation
counts use ``m * 8 / l`` symbols of ``l`` bits each.  Logarithms are base 2;
a Merkle proof of ``log2(n)`` siblings costs ``proof_unit`` bytes per sibling.
"""

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class PerfParams:
    n: int
    k: int
    m: float  # block size, bytes
    c: float = 32.0  # request size, bytes
    B: float = float("inf")  # bandwidth, bytes/s
    l: int = 8  # field bits
    delta_p: float = 0.0  # mean propagation delay, s
    t_f: float = 0.0
    t_hash: float = 0.0
    t_sig: float = 0.0
    t_ver: float = 0.0
    t_req: float = None  # defaults to delta_p
    t_res: float = None
    proof_unit: float = 32.0

    def __post_init__(self):
        if self.n < 1 or not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got n={self.n}, k={self.k}")
        for name in ("m", "c", "B", "delta_p", "t_f", "t_hash", "t_sig", "t_ver"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.l < 1:
            raise ValueError("field bits must be positive")

    @property
    def symbols(self):
        """Block size measured in field symbols."""
        return self.m * 8 / self.l

    @property
    def tx(self):
        """Seconds to send one block-sized payload to one peer."""
        return 0.0 if math.isinf(self.B) else self.m / self.B

    @property
    def req_time(self):
        return self.delta_p if self.t_req is None else self.t_req

    @property
    def res_time(self):
        return self.delta_p if self.t_res is None else self.t_res


@dataclass(frozen=True)
class Breakdown:
    terms: dict
    exact: float
    approx: float
    notes: tuple = field(default_factory=tuple)


def t_hamster(p):
    """Round time of the Hamster steady state: propose, re-propose, vote."""
    n, k, sym, tx = p.n, p.k, p.symbols, p.tx
    t_prop = (
        (n - k) * sym * p.t_f
        + n * (p.t_sig + p.t_hash)
        + 2 * n * p.t_hash
        + p.delta_p
        + n * tx / k
        + p.t_ver
        + p.t_hash
    )
    t_repr = p.delta_p + 2 * n * tx / k + n * (p.t_hash + p.t_ver)
    t_vote = (
        k * sym * p.t_f
        + (n - k) * sym * p.t_f
        + 2 * n * p.t_hash
        + p.t_sig
        + p.delta_p
        + n * p.t_ver
    )
    approx = (
        3 * p.delta_p
        + 3 * n * tx / k
        + (2 * n - k) * sym * p.t_f
        + n * p.t_sig
        + 2 * n * p.t_ver
        + 6 * n * p.t_hash
    )
    terms = {"propose": t_prop, "repropose": t_repr, "vote": t_vote}
    return Breakdown(terms, t_prop + t_repr + t_vote, approx)


def t_sync(p):
    """Round time of the Sync HotStuff steady state: propose, vote."""
    n, tx = p.n, p.tx
    t_prop = (n / 2) * p.t_hash + p.t_sig + p.delta_p + n * tx + (n / 2) * p.t_hash + p.t_ver
    t_vote = (n / 2) * p.t_hash + p.t_sig + p.delta_p + n * tx + n * p.t_ver
    approx = 2 * p.delta_p + 2 * n * tx + 2 * p.t_sig + (n + 1) * p.t_ver + 1.5 * n * p.t_hash
    return Breakdown({"propose": t_prop, "vote": t_vote}, t_prop + t_vote, approx)


def t_follow(p):
    """Duration of the follow phase for one block."""
    n, k, sym = p.n, p.k, p.symbols
    log_n = math.log2(n) if n > 1 else 0.0
    per_link = 0.0 if math.isinf(p.B) else (p.m / k + log_n * p.proof_unit) / p.B
    t_pp = (
        (n - k) * sym * p.t_f
        + n * p.t_sig
        + 3 * n * p.t_hash
        + p.delta_p
        + n * per_link
        + p.t_ver
        + p.t_hash
    )
    t_pr = log_n * p.t_hash + p.delta_p + n * per_link + p.t_hash + p.t_ver
    # the commonly quoted short form of the commit step drops the
    # verification term; the full cost is what gets summed
    t_fc = n * (p.t_hash + p.t_ver) + (sym / k) * k * k * p.t_f
    t_fc_short = k * sym * p.t_f
    approx = (
        2 * p.delta_p
        + 2 * n * per_link
        + n * sym * p.t_f
        + 4 * n * p.t_hash
        + n * p.t_sig
        + n * p.t_ver
    )
    notes = ()
    if not math.isclose(t_fc, t_fc_short, rel_tol=1e-12, abs_tol=1e-15):
        notes = (f"commit-step cost {t_fc:.6g}s differs from the short form {t_fc_short:.6g}s",)
    terms = {"propose_with_proof": t_pp, "repropose_with_proof": t_pr, "follow_commit": t_fc}
    return Breakdown(terms, t_pp + t_pr + t_fc, approx, notes)


def round_time(protocol, p, exact=True):
    b = t_hamster(p) if protocol == "hamster" else t_sync(p)
    return b.exact if exact else b.approx


def throughput(protocol, p, exact=True, with_follow=False):
    """Requests per second; ``with_follow`` halves Hamster's rate."""
    t = round_time(protocol, p, exact)
    if t <= 0:
        return float("inf")
    rate = p.m / (p.c * t)
    if with_follow and protocol == "hamster":
        rate /= 2
    return rate


def latency(protocol, p, exact=True):
    return round_time(protocol, p, exact) + 2 * p.delta_p + p.req_time + p.res_time


def gain(p, exact=True):
    """Hamster over Sync HotStuff throughput ratio."""
    return round_time("sync-hotstuff", p, exact) / round_time("hamster", p, exact)
