# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled policy core.

Behavioral twin of ``pure.PolicyCore``: same eviction choices, same RNG
stream, bit-identical float arithmetic. Any change here must land in
``pure.py`` too; the test suite cross-checks the two backends.
"""

from libc.stdlib cimport calloc, free, malloc

BACKEND_NAME = "compiled"

cdef int POLICY_LRU = 0
cdef int POLICY_LFU = 1
cdef int POLICY_LRC = 2
cdef int POLICY_LERC = 3
cdef int POLICY_STICKY = 4

cdef int TIE_LRU = 0
cdef int TIE_RANDOM = 1

cdef int _NIL = -1
cdef long long _INTACT_OFFSET = <long long>1 << 40


cdef inline unsigned long long _mix64(unsigned long long x):
    x = (x ^ (x >> 30)) * <unsigned long long>0xBF58476D1CE4E5B9
    x = (x ^ (x >> 27)) * <unsigned long long>0x94D049BB133111EB
    return x ^ (x >> 31)


def mix64(x):
    return _mix64(<unsigned long long>(x & 0xFFFFFFFFFFFFFFFF))


cdef class PolicyCore:
    cdef public int n_blocks
    cdef public double capacity
    cdef public int policy
    cdef public int tie_break
    cdef public double used
    cdef public double pinned_size

    cdef unsigned long long _rng_state

    cdef double* _sizes
    cdef long long* _rc
    cdef long long* _erc
    cdef long long* _freq
    cdef int* _pin
    cdef char* _resident
    cdef int* _prev
    cdef int* _next
    cdef int _head
    cdef int _tail

    cdef int n_groups
    # CSR layouts: members of each group, groups of each block
    cdef int* _gm_off
    cdef int* _gm
    cdef int* _bg_off
    cdef int* _bg
    cdef char* _g_effective
    cdef char* _g_complete
    cdef char* _g_retired

    cdef int* _scratch  # tie collection for the random tie-break

    def __cinit__(
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
        cdef int n = len(sizes)
        cdef int m = len(group_members)
        cdef int i, j, k
        self.n_blocks = n
        self.n_groups = m
        self.capacity = capacity
        self.policy = policy
        self.tie_break = tie_break
        self._rng_state = <unsigned long long>(seed & 0xFFFFFFFFFFFFFFFF)
        self.used = 0.0
        self.pinned_size = 0.0
        self._head = _NIL
        self._tail = _NIL

        self._sizes = <double*>malloc(n * sizeof(double))
        self._rc = <long long*>malloc(n * sizeof(long long))
        self._erc = <long long*>calloc(n if n else 1, sizeof(long long))
        self._freq = <long long*>calloc(n if n else 1, sizeof(long long))
        self._pin = <int*>calloc(n if n else 1, sizeof(int))
        self._resident = <char*>calloc(n if n else 1, sizeof(char))
        self._prev = <int*>malloc(n * sizeof(int))
        self._next = <int*>malloc(n * sizeof(int))
        self._scratch = <int*>malloc((n if n else 1) * sizeof(int))
        for i in range(n):
            self._sizes[i] = <double>sizes[i]
            self._rc[i] = <long long>rc_init[i]
            self._prev[i] = _NIL
            self._next[i] = _NIL

        cdef int total_members = 0
        for g in group_members:
            total_members += len(g)
        self._gm_off = <int*>malloc((m + 1) * sizeof(int))
        self._gm = <int*>malloc((total_members if total_members else 1) * sizeof(int))
        self._g_effective = <char*>calloc(m if m else 1, sizeof(char))
        self._g_complete = <char*>malloc((m if m else 1) * sizeof(char))
        self._g_retired = <char*>calloc(m if m else 1, sizeof(char))
        k = 0
        for i in range(m):
            self._gm_off[i] = k
            for member in group_members[i]:
                self._gm[k] = <int>member
                k += 1
            self._g_complete[i] = 1
            if group_effective_init[i]:
                self._g_effective[i] = 1
                for j in range(self._gm_off[i], k):
                    self._erc[self._gm[j]] += 1
        self._gm_off[m] = k

        cdef int total_bg = 0
        for v in block_groups:
            total_bg += len(v)
        self._bg_off = <int*>malloc((n + 1) * sizeof(int))
        self._bg = <int*>malloc((total_bg if total_bg else 1) * sizeof(int))
        k = 0
        for i in range(n):
            self._bg_off[i] = k
            for gid in block_groups[i]:
                self._bg[k] = <int>gid
                k += 1
        self._bg_off[n] = k

    def __dealloc__(self):
        free(self._sizes)
        free(self._rc)
        free(self._erc)
        free(self._freq)
        free(self._pin)
        free(self._resident)
        free(self._prev)
        free(self._next)
        free(self._scratch)
        free(self._gm_off)
        free(self._gm)
        free(self._bg_off)
        free(self._bg)
        free(self._g_effective)
        free(self._g_complete)
        free(self._g_retired)

    # -- python-visible state views (lists, matching the pure backend) --------

    @property
    def sizes(self):
        return [self._sizes[i] for i in range(self.n_blocks)]

    @property
    def rc(self):
        return [self._rc[i] for i in range(self.n_blocks)]

    @property
    def erc(self):
        return [self._erc[i] for i in range(self.n_blocks)]

    @property
    def freq(self):
        return [self._freq[i] for i in range(self.n_blocks)]

    @property
    def resident(self):
        return [self._resident[i] != 0 for i in range(self.n_blocks)]

    @property
    def pin_count(self):
        return [self._pin[i] for i in range(self.n_blocks)]

    @property
    def g_effective(self):
        return [self._g_effective[g] for g in range(self.n_groups)]

    @property
    def g_complete(self):
        return [self._g_complete[g] for g in range(self.n_groups)]

    @property
    def g_retired(self):
        return [self._g_retired[g] for g in range(self.n_groups)]

    # -- RNG -------------------------------------------------------------------

    cdef unsigned long long _next_u64(self):
        self._rng_state += <unsigned long long>0x9E3779B97F4A7C15
        return _mix64(self._rng_state)

    cdef unsigned long long _next_below(self, unsigned long long k):
        cdef unsigned long long rem, r
        if k <= 1:
            return 0
        rem = (0 - k) % k  # == 2**64 % k on unsigned 64-bit
        r = self._next_u64()
        while r < rem:
            r = self._next_u64()
        return r % k

    # -- recency list ------------------------------------------------------------

    cdef void _link_tail(self, int b):
        self._prev[b] = self._tail
        self._next[b] = _NIL
        if self._tail != _NIL:
            self._next[self._tail] = b
        else:
            self._head = b
        self._tail = b

    cdef void _unlink(self, int b):
        cdef int p = self._prev[b]
        cdef int nx = self._next[b]
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

    # -- residency and accesses ----------------------------------------------------

    def insert(self, int b):
        if self._resident[b]:
            raise ValueError(f"block {b} already resident")
        self._resident[b] = 1
        self.used += self._sizes[b]
        self._link_tail(b)

    def access(self, int b):
        self._freq[b] += 1
        if self._resident[b]:
            self._unlink(b)
            self._link_tail(b)

    def pin(self, int b):
        if not self._resident[b]:
            raise ValueError(f"cannot pin non-resident block {b}")
        if self._pin[b] == 0:
            self.pinned_size += self._sizes[b]
        self._pin[b] += 1

    def unpin(self, int b):
        if self._pin[b] <= 0:
            raise ValueError(f"block {b} is not pinned")
        self._pin[b] -= 1
        if self._pin[b] == 0:
            self.pinned_size -= self._sizes[b]

    def evictable_size(self):
        return self.used - self.pinned_size

    # -- metadata plane ---------------------------------------------------------------

    cdef list _apply_eviction_metadata(self, int b):
        cdef list flipped = []
        cdef int gi, g, j
        for gi in range(self._bg_off[b], self._bg_off[b + 1]):
            g = self._bg[gi]
            if self._g_retired[g]:
                continue
            if self._g_complete[g]:
                self._g_complete[g] = 0
                flipped.append(g)
                if self._g_effective[g]:
                    self._g_effective[g] = 0
                    for j in range(self._gm_off[g], self._gm_off[g + 1]):
                        self._erc[self._gm[j]] -= 1
        return flipped

    def apply_eviction_metadata(self, int b):
        return self._apply_eviction_metadata(b)

    def apply_task_complete(self, int g):
        cdef int j
        if self._g_retired[g]:
            raise ValueError(f"group {g} already retired")
        for j in range(self._gm_off[g], self._gm_off[g + 1]):
            self._rc[self._gm[j]] -= 1
        if self._g_effective[g]:
            for j in range(self._gm_off[g], self._gm_off[g + 1]):
                self._erc[self._gm[j]] -= 1
        self._g_retired[g] = 1

    # -- victim selection ------------------------------------------------------------

    cdef bint _has_broken_live_group(self, int b):
        cdef int gi, g
        for gi in range(self._bg_off[b], self._bg_off[b + 1]):
            g = self._bg[gi]
            if not self._g_retired[g] and not self._g_effective[g]:
                return True
        return False

    cdef long long _key(self, int b):
        cdef long long key
        if self.policy == POLICY_LFU:
            return self._freq[b]
        if self.policy == POLICY_LRC:
            return self._rc[b]
        if self.policy == POLICY_LERC:
            return self._erc[b]
        key = self._rc[b]
        if not self._has_broken_live_group(b):
            key += _INTACT_OFFSET
        return key

    cdef int _argmin_victim(self):
        cdef int b = self._head
        cdef int best = _NIL
        cdef long long best_key = 0
        cdef long long k
        cdef int n_ties = 0
        cdef bint random_tie = self.tie_break == TIE_RANDOM
        if self.policy == POLICY_LRU:
            while b != _NIL:
                if self._pin[b] == 0:
                    return b
                b = self._next[b]
            return _NIL
        while b != _NIL:
            if self._pin[b] == 0:
                k = self._key(b)
                if best == _NIL or k < best_key:
                    best = b
                    best_key = k
                    if random_tie:
                        self._scratch[0] = b
                        n_ties = 1
                elif random_tie and k == best_key:
                    self._scratch[n_ties] = b
                    n_ties += 1
            b = self._next[b]
        if best == _NIL:
            return _NIL
        if random_tie and n_ties > 1:
            return self._scratch[<int>self._next_below(<unsigned long long>n_ties)]
        return best

    cdef list _evict(self, int b):
        self._resident[b] = 0
        self.used -= self._sizes[b]
        self._unlink(b)
        return self._apply_eviction_metadata(b)

    def choose_and_evict(self, double needed):
        cdef list victims = []
        cdef list flips = []
        cdef double freed = 0.0
        cdef int v, qi, x, gi, g, j, m
        if needed <= 0.0:
            return [], []
        if needed > self.used - self.pinned_size:
            return None
        while freed < needed:
            v = self._argmin_victim()
            if v == _NIL:
                return None
            victims.append(v)
            flips.append(self._evict(v))
            freed += self._sizes[v]
            if self.policy == POLICY_STICKY:
                qi = len(victims) - 1
                while qi < len(victims):
                    x = victims[qi]
                    qi += 1
                    for gi in range(self._bg_off[x], self._bg_off[x + 1]):
                        g = self._bg[gi]
                        if self._g_retired[g]:
                            continue
                        for j in range(self._gm_off[g], self._gm_off[g + 1]):
                            m = self._gm[j]
                            if self._resident[m] and self._pin[m] == 0:
                                victims.append(m)
                                flips.append(self._evict(m))
                                freed += self._sizes[m]
        return victims, flips

    # -- snapshots ---------------------------------------------------------------------

    def lru_order(self):
        cdef list out = []
        cdef int b = self._head
        while b != _NIL:
            out.append(b)
            b = self._next[b]
        return out

    def resident_blocks(self):
        cdef list out = []
        cdef int b
        for b in range(self.n_blocks):
            if self._resident[b]:
                out.append(b)
        return out
