"""Client request source shared by the simulated leaders.

Requests are 32-byte digests.  In saturated mode (``pool_size=None``) every
``take`` mints fresh digests, so leaders are never starved.  With a finite
pool, a request stays outstanding until ``f+1`` nodes follow-commit a block
containing it; the client then replaces it with a new one.  Requests that
were proposed but not committed become eligible again after
``resubmit_after`` seconds, standing in for client retransmission.
"""

from collections import OrderedDict

from .crypto import hash_bytes


class RequestPool:
    def __init__(self, pool_size=None, seed=0, resubmit_after=float("inf")):
        self.pool_size = pool_size
        self.resubmit_after = resubmit_after
        self._prefix = b"req" + int(seed).to_bytes(8, "big", signed=True)
        self._counter = 0
        self.entered = {}  # digest -> entry time
        self._last_taken = OrderedDict()  # digest -> time proposed
        self.completed = {}  # digest -> latency
        self.completed_count = 0
        if pool_size is not None:
            for _ in range(pool_size):
                self._mint(0.0)

    def _mint(self, now):
        digest = hash_bytes(self._prefix + self._counter.to_bytes(8, "big"))
        self._counter += 1
        self.entered[digest] = now
        return digest

    def take(self, count, now):
        if self.pool_size is None:
            batch = [self._mint(now) for _ in range(count)]
            for d in batch:
                self._last_taken[d] = now
            return batch
        batch = []
        for digest in self.entered:
            if len(batch) == count:
                break
            last = self._last_taken.get(digest)
            if last is None or now - last >= self.resubmit_after:
                batch.append(digest)
        for d in batch:
            self._last_taken[d] = now
        return batch

    def complete(self, batch, now):
        """Mark a committed batch as answered; returns the number newly completed."""
        done = 0
        for digest in batch:
            start = self.entered.pop(digest, None)
            if start is None:
                continue
            self._last_taken.pop(digest, None)
            self.completed[digest] = now - start
            self.completed_count += 1
            done += 1
            if self.pool_size is not None:
                self._mint(now)
        return done

    @property
    def outstanding(self):
        return len(self.entered)

    def mean_latency(self):
        if not self.completed:
            return 0.0
        return sum(self.completed.values()) / len(self.completed)
