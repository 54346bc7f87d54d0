"""Pluggable cache-eviction policies over a bounded memory store.

Five policies share one bookkeeping engine and differ only in the eviction
key:

* ``lru``    — oldest access first.
* ``lfu``    — least read count first.
* ``lrc``    — least reference count first (pending consumers with
  unmaterialized outputs).
* ``lerc``   — least *effective* reference count first. A task's reference to
  a block is effective only while every already-materialized input of that
  task is memory-resident, so erc counts the downstream tasks that caching
  the block can actually speed up.
* ``sticky`` — strawman: blocks whose peer group has any materialized member
  out of memory are evicted first, and evicting a block eagerly drags the
  in-memory remainder of its groups out with it.

Key ties are broken by LRU order (default) or uniformly at random with a
seeded generator. A peer group flips from complete to incomplete at most
once, when the first of its materialized members leaves memory; that flip is
what the protocol layer broadcasts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import _core
from .dag import BlockRef, JobDag, PeerGroup, TaskSpec, peer_groups, validate_dag
from .errors import (
    DoubleComplete,
    InsufficientCapacity,
    InvalidWorkload,
    UnknownBlock,
    UnknownTask,
)

POLICIES = ("lru", "lfu", "lrc", "lerc", "sticky")
TIE_BREAKS = ("lru-fallback", "random")

_POLICY_CODES = {name: i for i, name in enumerate(POLICIES)}
_TIE_CODES = {"lru-fallback": 0, "random": 1}

LABEL_COMPLETE = "complete"
LABEL_INCOMPLETE = "incomplete"


@dataclass(frozen=True)
class CacheState:
    """Snapshot of a cache: capacity, resident blocks with sizes, used space."""

    capacity: float
    resident: Mapping[BlockRef, float]
    used: float


@dataclass(frozen=True)
class PolicyState:
    """Snapshot of policy bookkeeping, keyed by value types for inspection."""

    recency: Tuple[BlockRef, ...]  # least recently used first
    frequency: Mapping[BlockRef, int]
    rc: Mapping[BlockRef, int]
    erc: Mapping[BlockRef, int]
    group_labels: Mapping[PeerGroup, str]


@dataclass(frozen=True)
class EvictionDecision:
    """Outcome of one space request: victims in eviction order, space freed."""

    victims: Tuple[BlockRef, ...]
    freed: float


@dataclass(frozen=True)
class GroupNotice:
    """A peer group just turned incomplete because ``block`` left memory."""

    group: PeerGroup
    block: BlockRef


class BlockIndex:
    """Dense integer interning of the blocks, tasks and peer groups of a workload.

    Shared, read-only lookup structure: every worker cache and the simulator
    address blocks by the ids assigned here.
    """

    def __init__(self, jobs: Sequence[JobDag], validate: bool = True):
        jobs = list(jobs)
        seen_jobs = set()
        for job in jobs:
            if job.job_id in seen_jobs:
                raise InvalidWorkload(f"duplicate job id {job.job_id!r}")
            seen_jobs.add(job.job_id)
            if validate:
                validate_dag(job)
        self.jobs: Tuple[JobDag, ...] = tuple(jobs)

        self.blocks: List[BlockRef] = []
        self.id_of: Dict[BlockRef, int] = {}
        self.sizes: List[float] = []
        for job in jobs:
            for ref in job.blocks():
                if ref in self.id_of:
                    raise InvalidWorkload(
                        f"block {ref.label()} appears in more than one job"
                    )
                self.id_of[ref] = len(self.blocks)
                self.blocks.append(ref)
                self.sizes.append(float(job.sizes[ref]))

        self.groups: List[PeerGroup] = []
        self.group_task: List[TaskSpec] = []
        self.group_job: List[JobDag] = []
        self.gid_of: Dict[Tuple[str, str], int] = {}
        self.group_members: List[List[int]] = []
        self.block_groups: List[List[int]] = [[] for _ in self.blocks]
        for job in jobs:
            for task, group in zip(job.tasks, peer_groups(job)):
                gid = len(self.groups)
                self.groups.append(group)
                self.group_task.append(task)
                self.group_job.append(job)
                self.gid_of[group.key()] = gid
                members = [self.id_of[ref] for ref in task.inputs]
                self.group_members.append(members)
                for b in members:
                    self.block_groups[b].append(gid)

        self.source_ids = frozenset(
            self.id_of[ref] for job in jobs for ref in job.source_blocks
        )

    def __len__(self) -> int:
        return len(self.blocks)

    def require(self, ref: BlockRef) -> int:
        bid = self.id_of.get(ref)
        if bid is None:
            raise UnknownBlock(f"block {ref.label()} is not part of any loaded job")
        return bid

    def initial_reference_counts(self) -> List[int]:
        """rc before anything runs: every task output is still unmaterialized."""
        rc = [0] * len(self.blocks)
        for members in self.group_members:
            for b in members:
                rc[b] += 1
        return rc

    def initial_group_effective(
        self, materialized: Iterable[int], memory_resident: Iterable[int]
    ) -> List[int]:
        """Effectiveness per group: all materialized members are in memory."""
        mat = set(materialized)
        mem = set(memory_resident)
        out = []
        for members in self.group_members:
            out.append(int(all(b not in mat or b in mem for b in members)))
        return out


class WorkerCache:
    """One worker's bounded cache plus its view of the shared policy metadata.

    In a cluster run each worker owns a WorkerCache; reference counts and
    group state are replicas kept in sync by the simulated protocol. A single
    instance doubles as the whole cache for single-node scenarios.
    """

    def __init__(
        self,
        index: BlockIndex,
        capacity: float,
        policy: str = "lerc",
        tie_break: str = "lru-fallback",
        seed: int = 0,
        *,
        memory: Sequence[BlockRef] = (),
        disk: Sequence[BlockRef] = (),
        rc_init: Optional[Sequence[int]] = None,
        group_effective_init: Optional[Sequence[int]] = None,
        backend: Optional[str] = None,
    ):
        if policy not in _POLICY_CODES:
            raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
        if tie_break not in _TIE_CODES:
            raise ValueError(
                f"unknown tie-break {tie_break!r}; expected one of {TIE_BREAKS}"
            )
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.index = index
        self.policy = policy
        self.tie_break = tie_break
        self.seed = seed

        mem_ids = [index.require(ref) for ref in memory]
        disk_ids = [index.require(ref) for ref in disk]
        if rc_init is None:
            rc_init = index.initial_reference_counts()
        if group_effective_init is None:
            group_effective_init = index.initial_group_effective(
                set(mem_ids) | set(disk_ids), mem_ids
            )

        core_mod = _core.get_core(backend)
        self.backend = core_mod.BACKEND_NAME
        self._core = core_mod.PolicyCore(
            index.sizes,
            capacity,
            _POLICY_CODES[policy],
            _TIE_CODES[tie_break],
            seed,
            index.group_members,
            index.block_groups,
            rc_init,
            group_effective_init,
        )
        # Blocks this cache has ever seen materialized (here or on disk);
        # accesses to anything else are programming errors.
        self._materialized = [False] * len(index)
        for b in disk_ids:
            self._materialized[b] = True
        placed = 0.0
        for b in mem_ids:
            self._materialized[b] = True
            placed += index.sizes[b]
        if placed > capacity:
            raise InvalidWorkload(
                f"initial residency {placed} exceeds capacity {capacity}"
            )
        for b in mem_ids:
            self._core.insert(b)

    # -- basic accessors -----------------------------------------------------

    @property
    def capacity(self) -> float:
        return self._core.capacity

    @property
    def used(self) -> float:
        return self._core.used

    def is_resident(self, ref: BlockRef) -> bool:
        return self._core.resident[self.index.require(ref)]

    def resident_blocks(self) -> Tuple[BlockRef, ...]:
        return tuple(self.index.blocks[b] for b in self._core.resident_blocks())

    def rc(self, ref: BlockRef) -> int:
        return self._core.rc[self.index.require(ref)]

    def erc(self, ref: BlockRef) -> int:
        return self._core.erc[self.index.require(ref)]

    def frequency(self, ref: BlockRef) -> int:
        return self._core.freq[self.index.require(ref)]

    def group_label(self, group: PeerGroup) -> str:
        gid = self.index.gid_of[group.key()]
        return LABEL_COMPLETE if self._core.g_complete[gid] else LABEL_INCOMPLETE

    def cache_state(self) -> CacheState:
        core = self._core
        resident = {
            self.index.blocks[b]: self.index.sizes[b] for b in core.resident_blocks()
        }
        return CacheState(capacity=core.capacity, resident=resident, used=core.used)

    def policy_state(self) -> PolicyState:
        core = self._core
        blocks = self.index.blocks
        return PolicyState(
            recency=tuple(blocks[b] for b in core.lru_order()),
            frequency={blocks[b]: f for b, f in enumerate(core.freq) if f},
            rc={blocks[b]: v for b, v in enumerate(core.rc)},
            erc={blocks[b]: v for b, v in enumerate(core.erc)},
            group_labels={
                self.index.groups[g]: (
                    LABEL_COMPLETE if core.g_complete[g] else LABEL_INCOMPLETE
                )
                for g in range(len(self.index.groups))
                if not core.g_retired[g]
            },
        )

    # -- pinning (reads in flight are not evictable) ---------------------------

    def pin(self, ref: BlockRef) -> None:
        self._core.pin(self.index.require(ref))

    def unpin(self, ref: BlockRef) -> None:
        self._core.unpin(self.index.require(ref))

    # -- spec operations -------------------------------------------------------

    def on_access(self, ref: BlockRef, now: float = 0.0) -> None:
        """A task read ``ref``: update recency and frequency; rc/erc untouched."""
        b = self.index.require(ref)
        if not self._materialized[b]:
            raise UnknownBlock(
                f"block {ref.label()} accessed before it was materialized"
            )
        self._core.access(b)

    def choose_victims(
        self, needed: float
    ) -> Tuple[EvictionDecision, List[GroupNotice]]:
        """Evict by the policy key until at least ``needed`` space is free.

        Evictions are applied as they are chosen (later picks see the updated
        erc and group state). Returns the decision plus one notice per peer
        group that turned incomplete; the protocol layer turns notices into
        messages. Raises InsufficientCapacity when the unpinned resident set
        cannot cover the request.
        """
        if needed > self._core.capacity:
            raise InsufficientCapacity(
                f"requested {needed} exceeds capacity {self._core.capacity}"
            )
        picked = self._core.choose_and_evict(needed)
        if picked is None:
            raise InsufficientCapacity(
                f"cannot free {needed}: only {self._core.evictable_size()} evictable"
            )
        victims, flips = picked
        blocks = self.index.blocks
        groups = self.index.groups
        notices = []
        freed = 0.0
        for v, flipped in zip(victims, flips):
            freed += self.index.sizes[v]
            for g in flipped:
                notices.append(GroupNotice(group=groups[g], block=blocks[v]))
        decision = EvictionDecision(
            victims=tuple(blocks[v] for v in victims), freed=freed
        )
        return decision, notices

    def insert(self, ref: BlockRef) -> Tuple[EvictionDecision, List[GroupNotice]]:
        """Materialize ``ref`` into this cache, evicting for room if necessary.

        The incoming block is not an eviction candidate for its own
        insertion. Raises InsufficientCapacity when the block is larger than
        what can possibly be freed.
        """
        b = self.index.require(ref)
        size = self.index.sizes[b]
        if size > self._core.capacity:
            raise InsufficientCapacity(
                f"block {ref.label()} ({size}) exceeds capacity {self._core.capacity}"
            )
        needed = size - (self._core.capacity - self._core.used)
        decision, notices = self.choose_victims(needed)
        self._core.insert(b)
        self._materialized[b] = True
        return decision, notices

    def on_block_evicted(self, ref: BlockRef) -> List[GroupNotice]:
        """Propagate an eviction's group effects without touching residency.

        Used for evictions that happened on another worker (delivered by
        broadcast): flips this replica's matching complete groups and adjusts
        erc. Evictions chosen locally by choose_victims are already applied.
        """
        b = self.index.require(ref)
        if self._core.resident[b]:
            raise UnknownBlock(
                f"block {ref.label()} is resident here; evict it via choose_victims"
            )
        flipped = self._core.apply_eviction_metadata(b)
        groups = self.index.groups
        return [GroupNotice(group=groups[g], block=ref) for g in flipped]

    def on_task_complete(self, task: TaskSpec) -> None:
        """The task's output materialized: release one reference per input.

        Effective references are released only if the group still counted
        (an incomplete group already stopped counting). The group is retired
        and never inspected again.
        """
        gid = self.index.gid_of.get((task.output.job_id, task.task_id))
        if gid is None:
            raise UnknownTask(f"task {task.task_id!r} is not part of any loaded job")
        if self._core.g_retired[gid]:
            raise DoubleComplete(f"task {task.task_id!r} completed twice")
        self._core.apply_task_complete(gid)

    def complete_group(self, gid: int) -> None:
        """Id-level variant of on_task_complete for the simulator's hot path."""
        if self._core.g_retired[gid]:
            raise DoubleComplete(
                f"task {self.index.group_task[gid].task_id!r} completed twice"
            )
        self._core.apply_task_complete(gid)


def effective_reference_count_oracle(
    dag: JobDag,
    materialized: Iterable[BlockRef],
    resident: Iterable[BlockRef],
) -> Dict[BlockRef, int]:
    """Recompute every block's effective reference count from scratch.

    For each block b, counts the tasks t with b among t's inputs whose output
    is unmaterialized and whose materialized inputs are all memory-resident.
    Deliberately a plain triple loop over the DAG: this is the test oracle
    the incremental bookkeeping is checked against.
    """
    mat = set(materialized)
    mem = set(resident)
    if not mem <= mat:
        raise InvalidWorkload("memory-resident blocks must be materialized")
    counts = {ref: 0 for ref in dag.blocks()}
    for task in dag.tasks:
        if task.output in mat:
            continue
        if all(ref not in mat or ref in mem for ref in task.inputs):
            for ref in task.inputs:
                counts[ref] += 1
    return counts
