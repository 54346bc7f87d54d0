"""Pure-Python policy core.

One PolicyCore instance is one worker's cache bookkeeping: residency,
recency, access frequency, and its replica of the cluster-wide reference
counts (rc), effective reference counts (erc) and peer-group state. Blocks
and peer groups are dense integer ids assigned by the caller.

This module must stay in behavioral lockstep with the compiled twin in
``_speedups.pyx``: same eviction choices, same RNG stream, bit-identical
arithmetic. The test suite runs both when the extension is built.
"""

from __future__ import annotations

BACKEND_NAME = "pure"

_MASK64 = (1 << 64) - 1

POLICY_LRU = 0
POLICY_LFU = 1
POLICY_LRC = 2
POLICY_LERC = 3
POLICY_STICKY = 4

TIE_LRU = 0
TIE_RANDOM = 1

_NIL = -1
# Sticky ranks blocks in intact groups after every broken-group block,
# keeping integer keys totally ordered; rc values stay far below this.
_INTACT_OFFSET = 1 << 40


def mix64(x: int) -> int:
    """splitmix64 finalizer; used for seed derivation and the tie-break RNG."""
    x &= _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return x ^ (x >> 31)


class PolicyCore:
    def __init__(
        self,
        sizes,
        capacity,
        policy,
        tie_break,
        seed,
        group_members,
        block_groups,
        rc_init,
        group_effective_init,
    ):
        n = len(sizes)
        self.n_blocks = n
        self.sizes = [float(s) for s in sizes]
        self.capacity = float(capacity)
        self.policy = int(policy)
        self.tie_break = int(tie_break)
        self._rng_state = int(seed) & _MASK64

        self.group_members = [list(g) for g in group_members]
        self.block_groups = [list(v) for v in block_groups]
        n_groups = len(self.group_members)

        self.rc = [int(v) for v in rc_init]
        self.g_effective = [1 if v else 0 for v in group_effective_init]
        self.g_complete = [1] * n_groups
        self.g_retired = [0] * n_groups
        self.erc = [0] * n
        for g in range(n_groups):
            if self.g_effective[g]:
                for m in self.group_members[g]:
                    self.erc[m] += 1

        self.resident = [False] * n
        self.pin_count = [0] * n
        self.freq = [0] * n
        self.used = 0.0
        self.pinned_size = 0.0
        # Recency: doubly linked list over resident ids, head = least recent.
        self._prev = [_NIL] * n
        self._next = [_NIL] * n
        self._head = _NIL
        self._tail = _NIL

    # -- RNG ---------------------------------------------------------------

    def _next_u64(self) -> int:
        self._rng_state = (self._rng_state + 0x9E3779B97F4A7C15) & _MASK64
        return mix64(self._rng_state)

    def _next_below(self, k: int) -> int:
        if k <= 1:
            return 0
        rem = (1 << 64) % k
        r = self._next_u64()
        while r < rem:
            r = self._next_u64()
        return r % k

    # -- recency list ------------------------------------------------------

    def _link_tail(self, b: int) -> None:
        self._prev[b] = self._tail
        self._next[b] = _NIL
        if self._tail != _NIL:
            self._next[self._tail] = b
        else:
            self._head = b
        self._tail = b

    def _unlink(self, b: int) -> None:
        p, nx = self._prev[b], self._next[b]
        if p != _NIL:
            self._next[p] = nx
        else:
            self._head = nx
        if nx != _NIL:
            self._prev[nx] = p
        else:
            self._tail = p
        self._prev[b] = _NIL
        self._next[b] = _NIL

    # -- residency and accesses ---------------------------------------------

    def insert(self, b: int) -> None:
        if self.resident[b]:
            raise ValueError(f"block {b} already resident")
        self.resident[b] = True
        self.used += self.sizes[b]
        self._link_tail(b)

    def access(self, b: int) -> None:
        self.freq[b] += 1
        if self.resident[b]:
            self._unlink(b)
            self._link_tail(b)

    def pin(self, b: int) -> None:
        if not self.resident[b]:
            raise ValueError(f"cannot pin non-resident block {b}")
        if self.pin_count[b] == 0:
            self.pinned_size += self.sizes[b]
        self.pin_count[b] += 1

    def unpin(self, b: int) -> None:
        if self.pin_count[b] <= 0:
            raise ValueError(f"block {b} is not pinned")
        self.pin_count[b] -= 1
        if self.pin_count[b] == 0:
            self.pinned_size -= self.sizes[b]

    def evictable_size(self) -> float:
        return self.used - self.pinned_size

    # -- metadata plane ------------------------------------------------------

    def apply_eviction_metadata(self, b: int):
        """Record that block b left cluster memory; returns flipped group ids.

        Flips every live complete group containing b to incomplete (these are
        the groups the protocol layer must announce). While flipping, groups
        that were effective lose one erc unit at every member: the evicted
        block is materialized and out of memory, so no reference through the
        group can be effective anymore.
        """
        flipped = []
        for g in self.block_groups[b]:
            if self.g_retired[g]:
                continue
            if self.g_complete[g]:
                self.g_complete[g] = 0
                flipped.append(g)
                if self.g_effective[g]:
                    self.g_effective[g] = 0
                    erc = self.erc
                    for m in self.group_members[g]:
                        erc[m] -= 1
        return flipped

    def apply_task_complete(self, g: int) -> None:
        """The group's task materialized its output: drop one reference per member."""
        if self.g_retired[g]:
            raise ValueError(f"group {g} already retired")
        rc = self.rc
        for m in self.group_members[g]:
            rc[m] -= 1
        if self.g_effective[g]:
            erc = self.erc
            for m in self.group_members[g]:
                erc[m] -= 1
        self.g_retired[g] = 1

    # -- victim selection ----------------------------------------------------

    def _has_broken_live_group(self, b: int) -> bool:
        for g in self.block_groups[b]:
            if not self.g_retired[g] and not self.g_effective[g]:
                return True
        return False

    def _key(self, b: int) -> int:
        policy = self.policy
        if policy == POLICY_LFU:
            return self.freq[b]
        if policy == POLICY_LRC:
            return self.rc[b]
        if policy == POLICY_LERC:
            return self.erc[b]
        # sticky: blocks of broken groups first, then least reference count
        key = self.rc[b]
        if not self._has_broken_live_group(b):
            key += _INTACT_OFFSET
        return key

    def _argmin_victim(self) -> int:
        """Next victim by policy key; returns -1 if nothing is evictable.

        Walks the recency list oldest-first, so under the lru-fallback
        tie-break the oldest block among key ties wins; under the random
        tie-break all key ties are collected and one is drawn uniformly.
        """
        b = self._head
        if self.policy == POLICY_LRU:
            while b != _NIL:
                if self.pin_count[b] == 0:
                    return b
                b = self._next[b]
            return _NIL
        best = _NIL
        best_key = 0
        ties = []
        random_tie = self.tie_break == TIE_RANDOM
        while b != _NIL:
            if self.pin_count[b] == 0:
                k = self._key(b)
                if best == _NIL or k < best_key:
                    best = b
                    best_key = k
                    if random_tie:
                        ties = [b]
                elif random_tie and k == best_key:
                    ties.append(b)
            b = self._next[b]
        if best == _NIL:
            return _NIL
        if random_tie and len(ties) > 1:
            return ties[self._next_below(len(ties))]
        return best

    def _evict(self, b: int):
        self.resident[b] = False
        self.used -= self.sizes[b]
        self._unlink(b)
        return self.apply_eviction_metadata(b)

    def choose_and_evict(self, needed: float):
        """Free at least ``needed`` size units; returns (victims, flips) or None.

        Victims are evicted as they are chosen so later picks see updated
        erc/group state. Under the sticky policy every eviction eagerly drags
        the remaining in-memory members of the victim's groups along
        (transitively), which can free more than requested. Returns None when
        the unpinned resident set cannot cover ``needed``; state is untouched
        in that case.
        """
        if needed <= 0.0:
            return [], []
        if needed > self.evictable_size():
            return None
        victims = []
        flips = []
        freed = 0.0
        while freed < needed:
            v = self._argmin_victim()
            if v == _NIL:  # unreachable: evictable_size() was checked
                return None
            victims.append(v)
            flips.append(self._evict(v))
            freed += self.sizes[v]
            if self.policy == POLICY_STICKY:
                qi = len(victims) - 1
                while qi < len(victims):
                    x = victims[qi]
                    qi += 1
                    for g in self.block_groups[x]:
                        if self.g_retired[g]:
                            continue
                        for m in self.group_members[g]:
                            if self.resident[m] and self.pin_count[m] == 0:
                                victims.append(m)
                                flips.append(self._evict(m))
                                freed += self.sizes[m]
        return victims, flips

    # -- snapshots (tests, reporting) -----------------------------------------

    def lru_order(self):
        out = []
        b = self._head
        while b != _NIL:
            out.append(b)
            b = self._next[b]
        return out

    def resident_blocks(self):
        return [b for b in range(self.n_blocks) if self.resident[b]]
