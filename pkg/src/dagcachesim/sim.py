"""Discrete-event cluster simulator.

Workers hold bounded memory caches over a shared disk tier; a driver
schedules tasks once all of their inputs are materialized and a slot is
free. Task reads are all-or-nothing: a task reads its whole input at memory
speed when every input block is memory-resident at task start, and at disk
speed otherwise, which is exactly the condition under which a cache hit is
*effective*. Outputs materialize into the running worker's cache, evicting
per the configured policy; evictions flow through the driver/worker
protocol so every replica of the reference-count state stays in sync.

Determinism: one event loop per run, events ordered by (time, kind
priority, sequence number). Identical (workload, config, policy, seed)
yields an identical report.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from . import protocol
from ._core import derive_seed
from .dag import (
    TIER_DISK,
    TIER_MEMORY,
    TIER_NONE,
    BlockRef,
    JobDag,
    TaskSpec,
    reference_counts,
)
from .errors import InvalidWorkload, SimError
from .policy import (
    BlockIndex,
    WorkerCache,
    effective_reference_count_oracle,
)
from .protocol import DriverState, Message, MessageLog
from .workloads import Workload

# tiers as ints on the hot path
_NONE, _DISK, _MEM = 0, 1, 2

# Event kind priorities at equal timestamps. Finishes free slots and update
# reference counts first, standalone insertions next, protocol deliveries
# before any new task observes the state, scheduling last.
_PRI_FINISH = 0
_PRI_INSERT = 1
_PRI_MESSAGE = 2
_PRI_SCHEDULE = 3


@dataclass(frozen=True)
class ClusterConfig:
    """Cluster shape and cost model for one simulation run."""

    workers: int = 1
    slots_per_worker: int = 1
    cache_capacity_per_worker: float = 0.0
    mem_read_cost: float = 1.0
    disk_read_cost: float = 10.0
    broadcast_latency: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidWorkload("workers must be >= 1")
        if self.slots_per_worker < 1:
            raise InvalidWorkload("slots_per_worker must be >= 1")
        if self.cache_capacity_per_worker < 0:
            raise InvalidWorkload("cache capacity must be >= 0")
        if not (self.disk_read_cost > self.mem_read_cost > 0):
            raise InvalidWorkload(
                "need disk_read_cost > mem_read_cost > 0, got "
                f"disk={self.disk_read_cost} mem={self.mem_read_cost}"
            )
        if self.broadcast_latency < 0:
            raise InvalidWorkload("broadcast_latency must be >= 0")


@dataclass(frozen=True)
class AccessRecord:
    """One block read by one task, classified at task start."""

    task_id: str
    block: BlockRef
    hit: bool
    effective: bool


@dataclass(frozen=True)
class EvictionRecord:
    time: float
    worker: int
    block: BlockRef


def classify_access(
    task: TaskSpec,
    block: BlockRef,
    memory_resident: Iterable[BlockRef],
    materialized: Optional[Iterable[BlockRef]] = None,
) -> AccessRecord:
    """Classify one read: hit if the block is in memory, effective if the
    task's materialized peers all are. ``materialized=None`` means every
    input is known materialized (the task-start case)."""
    mem = set(memory_resident)
    hit = block in mem
    if materialized is None:
        peers = task.inputs
    else:
        mat = set(materialized)
        peers = tuple(ref for ref in task.inputs if ref in mat)
    effective = hit and all(ref in mem for ref in peers)
    return AccessRecord(task_id=task.task_id, block=block, hit=hit, effective=effective)


@dataclass
class SimReport:
    """Everything one run produced, including the message and eviction logs."""

    workload: str
    policy: str
    tie_break: str
    seed: int
    workers: int
    capacity_per_worker: float
    makespan: float = 0.0
    total_task_time: float = 0.0
    accesses: int = 0
    hits: int = 0
    effective_hits: int = 0
    evictions: int = 0
    broadcasts: int = 0  # logical broadcast rounds (one per accepted report)
    reports: int = 0
    profile_messages: int = 0
    erc_update_messages: int = 0
    message_log: MessageLog = field(default_factory=MessageLog)
    access_records: List[AccessRecord] = field(default_factory=list)
    eviction_log: List[EvictionRecord] = field(default_factory=list)

    @property
    def hit_ratio(self) -> float:
        return self.hits / self.accesses if self.accesses else 0.0

    @property
    def effective_hit_ratio(self) -> float:
        return self.effective_hits / self.accesses if self.accesses else 0.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "workload": self.workload,
            "policy": self.policy,
            "tie_break": self.tie_break,
            "seed": self.seed,
            "workers": self.workers,
            "capacity_per_worker": self.capacity_per_worker,
            "makespan": self.makespan,
            "total_task_time": self.total_task_time,
            "accesses": self.accesses,
            "hits": self.hits,
            "effective_hits": self.effective_hits,
            "hit_ratio": self.hit_ratio,
            "effective_hit_ratio": self.effective_hit_ratio,
            "evictions": self.evictions,
            "broadcasts": self.broadcasts,
            "reports": self.reports,
            "profile_messages": self.profile_messages,
            "erc_update_messages": self.erc_update_messages,
        }

    def to_text(self) -> str:
        d = self.to_dict()
        width = max(len(k) for k in d)
        return "\n".join(f"{k:<{width}}  {d[k]}" for k in d)


def _as_workload(workload: Union[Workload, JobDag, Sequence[JobDag]]) -> Workload:
    if isinstance(workload, Workload):
        return workload
    if isinstance(workload, JobDag):
        return Workload(name=workload.job_id, jobs=(workload,))
    return Workload(name="adhoc", jobs=tuple(workload))


class _Cluster:
    def __init__(
        self,
        workload: Workload,
        config: ClusterConfig,
        policy: str,
        tie_break: str,
        backend: Optional[str],
        record_accesses: bool,
        oracle_check: bool,
    ):
        if oracle_check and config.broadcast_latency > 0:
            raise InvalidWorkload(
                "oracle_check requires zero broadcast latency (replicas must be "
                "synchronous to compare after every event)"
            )
        self.workload = workload
        self.config = config
        self.index = BlockIndex(workload.jobs)
        self.record_accesses = record_accesses
        self.oracle_check = oracle_check

        n = len(self.index)
        self.tier = [_NONE] * n
        self.home = [0] * n

        # resolve placements, building each worker's initial residency in order
        mem_by_worker: List[List[BlockRef]] = [[] for _ in range(config.workers)]
        disk_refs: List[BlockRef] = []
        mem_ids: List[int] = []
        mat_ids: Set[int] = set()
        for p in workload.placements:
            bid = self.index.require(p.block)
            if bid not in self.index.source_ids:
                raise InvalidWorkload(
                    f"placement for {p.block.label()}: only source blocks may be placed"
                )
            if self.tier[bid] != _NONE:
                raise InvalidWorkload(f"duplicate placement for {p.block.label()}")
            w = self._resolve_worker(p.worker, p.block)
            self.home[bid] = w
            mat_ids.add(bid)
            if p.tier == TIER_MEMORY:
                self.tier[bid] = _MEM
                mem_by_worker[w].append(p.block)
                mem_ids.append(bid)
            else:
                self.tier[bid] = _DISK
                disk_refs.append(p.block)

        rc_init = self.index.initial_reference_counts()
        eff_init = self.index.initial_group_effective(mat_ids, mem_ids)
        self.workers: List[WorkerCache] = [
            WorkerCache(
                self.index,
                config.cache_capacity_per_worker,
                policy,
                tie_break,
                seed=derive_seed(config.seed, w),
                memory=mem_by_worker[w],
                rc_init=rc_init,
                group_effective_init=eff_init,
                backend=backend,
            )
            for w in range(config.workers)
        ]
        for cache in self.workers:
            for bid in mat_ids:
                cache._materialized[bid] = True
        self.driver = DriverState(self.index)

        self.report = SimReport(
            workload=workload.name,
            policy=policy,
            tie_break=tie_break,
            seed=config.seed,
            workers=config.workers,
            capacity_per_worker=config.cache_capacity_per_worker,
        )

        # profile rounds: the driver announces each job's groups to every worker
        worker_ids = range(config.workers)
        for job in workload.jobs:
            msgs = protocol.broadcast_peer_profile(0.0, job, worker_ids)
            self.report.message_log.extend(msgs)
            self.report.profile_messages += len(msgs)

        # scheduling state
        self.pending_inputs = [0] * len(self.index.groups)
        for gid, members in enumerate(self.index.group_members):
            self.pending_inputs[gid] = sum(
                1 for b in members if self.tier[b] == _NONE
            )
        self.completed = [False] * len(self.index.groups)
        self.done_count = 0
        self.free_slots = [config.slots_per_worker] * config.workers
        self.total_free = config.slots_per_worker * config.workers
        self.ready: deque[int] = deque()
        self._enqueue_initial_ready()

        # event queue
        self._heap: List[tuple] = []
        self._seq = 0
        self._pass_pending = False
        self.now = 0.0
        for ev in workload.inserts:
            bid = self.index.require(ev.block)
            if bid not in self.index.source_ids:
                raise InvalidWorkload(
                    f"insert event for {ev.block.label()}: only source blocks"
                )
            w = self._resolve_worker(ev.worker, ev.block)
            self._push(ev.time, _PRI_INSERT, ("insert", bid, w))
        self._request_pass(0.0)

        if self.oracle_check:
            self._prev_complete = [list(c._core.g_complete) for c in self.workers]
            self._check_invariants()

    # -- plumbing -----------------------------------------------------------

    def _resolve_worker(self, worker: Optional[int], block: BlockRef) -> int:
        if worker is None:
            return block.partition % self.config.workers
        if not 0 <= worker < self.config.workers:
            raise InvalidWorkload(
                f"worker {worker} out of range for {self.config.workers} workers"
            )
        return worker

    def _push(self, time: float, priority: int, payload: tuple) -> None:
        heapq.heappush(self._heap, (time, priority, self._seq, payload))
        self._seq += 1

    def _request_pass(self, time: float) -> None:
        if not self._pass_pending:
            self._pass_pending = True
            self._push(time, _PRI_SCHEDULE, ("schedule",))

    def _enqueue_initial_ready(self) -> None:
        # Round-robin across jobs by task position: tenants submitting in
        # parallel interleave rather than queueing job after job.
        per_job: List[List[int]] = []
        for job in self.workload.jobs:
            gids = [
                self.index.gid_of[(job.job_id, t.task_id)]
                for t in job.tasks
                if self.pending_inputs[self.index.gid_of[(job.job_id, t.task_id)]] == 0
            ]
            per_job.append(gids)
        pos = 0
        while any(pos < len(g) for g in per_job):
            for gids in per_job:
                if pos < len(gids):
                    self.ready.append(gids[pos])
            pos += 1

    # -- materialization and messaging ----------------------------------------

    def _deliver_eviction_round(self, victim_bid: int, flipped_gids: List[int], src: int) -> None:
        """One evicted block that flipped complete groups at its worker."""
        ref = self.index.blocks[victim_bid]
        groups = [self.index.groups[g] for g in flipped_gids]
        worker_ids = range(self.config.workers)
        reports, broadcasts = protocol.report_and_broadcast_eviction(
            self.now, src, ref, groups, worker_ids
        )
        self.report.message_log.extend(reports)
        self.report.reports += len(reports)
        lat = self.config.broadcast_latency
        if lat == 0.0:
            self._driver_handle_report(victim_bid, flipped_gids, src, broadcasts)
        else:
            self._push(
                self.now + lat,
                _PRI_MESSAGE,
                ("report", victim_bid, flipped_gids, src, broadcasts),
            )

    def _driver_handle_report(
        self, victim_bid: int, flipped_gids: List[int], src: int, broadcasts: List[Message]
    ) -> None:
        # The driver is authoritative: a group some earlier report already
        # flipped is not announced again, so each group costs at most one
        # broadcast round for the whole run.
        fresh = [
            g
            for g in flipped_gids
            if not self.driver.retired[g] and self.driver.labels[g] == "complete"
        ]
        self.driver.on_eviction_report(flipped_gids)
        if not fresh:
            return
        self.report.broadcasts += 1
        self.report.message_log.extend(broadcasts)
        lat = self.config.broadcast_latency
        for msg in broadcasts:
            dst = int(msg.dst.split(":")[1])
            if lat == 0.0:
                self.workers[dst].on_block_evicted(self.index.blocks[victim_bid])
            else:
                self._push(
                    msg.time + lat, _PRI_MESSAGE, ("broadcast", victim_bid, dst)
                )

    def _materialize_into_memory(self, bid: int, worker: int) -> None:
        if self.tier[bid] != _NONE:
            raise InvalidWorkload(
                f"block {self.index.blocks[bid].label()} materialized twice"
            )
        ref = self.index.blocks[bid]
        decision, notices = self.workers[worker].insert(ref)
        for victim_ref in decision.victims:
            vid = self.index.id_of[victim_ref]
            self.tier[vid] = _DISK
            self.report.evictions += 1
            self.report.eviction_log.append(
                EvictionRecord(time=self.now, worker=worker, block=victim_ref)
            )
        flips_by_victim: Dict[BlockRef, List[int]] = {}
        for notice in notices:
            gid = self.index.gid_of[notice.group.key()]
            flips_by_victim.setdefault(notice.block, []).append(gid)
        for victim_ref in decision.victims:
            flipped = flips_by_victim.get(victim_ref)
            if flipped:
                self._deliver_eviction_round(
                    self.index.id_of[victim_ref], flipped, worker
                )
        self.tier[bid] = _MEM
        self.home[bid] = worker
        for cache in self.workers:
            cache._materialized[bid] = True
        self._on_materialized(bid)

    def _on_materialized(self, bid: int) -> None:
        for gid in self.index.block_groups[bid]:
            self.pending_inputs[gid] -= 1
            if self.pending_inputs[gid] == 0 and not self.completed[gid]:
                self.ready.append(gid)
        if self.ready and self.total_free > 0:
            self._request_pass(self.now)

    # -- event handlers --------------------------------------------------------

    def _dispatch(self) -> None:
        self._pass_pending = False
        while self.ready and self.total_free > 0:
            gid = self.ready.popleft()
            task = self.index.group_task[gid]
            members = self.index.group_members[gid]
            worker = self._pick_worker(members)
            self.free_slots[worker] -= 1
            self.total_free -= 1

            gate = all(self.tier[b] == _MEM for b in members)
            total_in = 0.0
            pinned: List[Tuple[int, int]] = []
            for b in members:
                ref = self.index.blocks[b]
                total_in += self.index.sizes[b]
                hit = self.tier[b] == _MEM
                self.workers[self.home[b]].on_access(ref, self.now)
                if hit:
                    self.workers[self.home[b]].pin(ref)
                    pinned.append((self.home[b], b))
                self.report.accesses += 1
                if hit:
                    self.report.hits += 1
                    if gate:
                        self.report.effective_hits += 1
                if self.record_accesses:
                    self.report.access_records.append(
                        AccessRecord(
                            task_id=task.task_id,
                            block=ref,
                            hit=hit,
                            effective=hit and gate,
                        )
                    )
            cost = (
                self.config.mem_read_cost if gate else self.config.disk_read_cost
            )
            duration = task.compute_cost + total_in * cost
            self.report.total_task_time += duration
            self._push(self.now + duration, _PRI_FINISH, ("finish", gid, worker, pinned))

    def _pick_worker(self, members: Sequence[int]) -> int:
        best, best_bytes = -1, -1.0
        for w in range(self.config.workers):
            if self.free_slots[w] <= 0:
                continue
            local = sum(
                self.index.sizes[b]
                for b in members
                if self.tier[b] == _MEM and self.home[b] == w
            )
            if local > best_bytes:
                best, best_bytes = w, local
        return best

    def _finish(self, gid: int, worker: int, pinned: List[Tuple[int, int]]) -> None:
        for w, b in pinned:
            self.workers[w].unpin(self.index.blocks[b])
        self.completed[gid] = True
        self.done_count += 1
        self.report.makespan = max(self.report.makespan, self.now)

        task = self.index.group_task[gid]
        job = self.index.group_job[gid]
        self.driver.on_task_complete(gid)
        worker_ids = range(self.config.workers)
        msgs = protocol.erc_update_messages(self.now, job.job_id, task.task_id, worker_ids)
        self.report.message_log.extend(msgs)
        self.report.erc_update_messages += len(msgs)
        lat = self.config.broadcast_latency
        for msg in msgs:
            dst = int(msg.dst.split(":")[1])
            if lat == 0.0:
                self.workers[dst].complete_group(gid)
            else:
                self._push(msg.time + lat, _PRI_MESSAGE, ("complete", gid, dst))

        self._materialize_into_memory(self.index.id_of[task.output], worker)
        self.free_slots[worker] += 1
        self.total_free += 1
        if self.ready:
            self._request_pass(self.now)

    # -- main loop ---------------------------------------------------------------

    def run(self) -> SimReport:
        while self._heap:
            time, _pri, _seq, payload = heapq.heappop(self._heap)
            self.now = time
            kind = payload[0]
            if kind == "finish":
                self._finish(payload[1], payload[2], payload[3])
            elif kind == "insert":
                self._materialize_into_memory(payload[1], payload[2])
            elif kind == "report":
                self._driver_handle_report(
                    payload[1], payload[2], payload[3], payload[4]
                )
            elif kind == "broadcast":
                self.workers[payload[2]].on_block_evicted(
                    self.index.blocks[payload[1]]
                )
            elif kind == "complete":
                self.workers[payload[2]].complete_group(payload[1])
            elif kind == "schedule":
                self._dispatch()
            else:  # pragma: no cover
                raise SimError(f"unknown event kind {kind!r}")
            if self.oracle_check:
                self._check_invariants()
        if self.done_count != len(self.index.groups):
            raise SimError(
                f"deadlock: {self.done_count}/{len(self.index.groups)} tasks "
                "completed but the event queue is empty"
            )
        return self.report

    # -- invariants (oracle_check mode) --------------------------------------------

    def _check_invariants(self) -> None:
        blocks = self.index.blocks
        mat = {blocks[b] for b in range(len(blocks)) if self.tier[b] != _NONE}
        mem = {blocks[b] for b in range(len(blocks)) if self.tier[b] == _MEM}
        w0 = self.workers[0]
        for job in self.workload.jobs:
            job_blocks = set(job.blocks())
            rc_exp = reference_counts(job, mat & job_blocks)
            erc_exp = effective_reference_count_oracle(
                job, mat & job_blocks, mem & job_blocks
            )
            for ref in job_blocks:
                bid = self.index.id_of[ref]
                rc_inc = w0._core.rc[bid]
                erc_inc = w0._core.erc[bid]
                if rc_inc != rc_exp[ref]:
                    raise SimError(
                        f"rc mismatch for {ref.label()} at t={self.now}: "
                        f"incremental {rc_inc}, oracle {rc_exp[ref]}"
                    )
                if erc_inc != erc_exp[ref]:
                    raise SimError(
                        f"erc mismatch for {ref.label()} at t={self.now}: "
                        f"incremental {erc_inc}, oracle {erc_exp[ref]}"
                    )
                if not 0 <= erc_inc <= rc_inc:
                    raise SimError(
                        f"erc bounds violated for {ref.label()}: "
                        f"erc={erc_inc}, rc={rc_inc}"
                    )
                if self.driver.rc[bid] != rc_exp[ref]:
                    raise SimError(f"driver rc mismatch for {ref.label()}")
        core0 = w0._core
        for w, cache in enumerate(self.workers[1:], start=1):
            core = cache._core
            if (
                core.rc != core0.rc
                or core.erc != core0.erc
                or core.g_complete != core0.g_complete
                or core.g_retired != core0.g_retired
            ):
                raise SimError(f"replica divergence between worker 0 and worker {w}")
        for w, cache in enumerate(self.workers):
            for g, was in enumerate(self._prev_complete[w]):
                if not was and cache._core.g_complete[g]:
                    raise SimError(f"group {g} flipped back to complete on worker {w}")
            self._prev_complete[w] = list(cache._core.g_complete)


def run(
    workload: Union[Workload, JobDag, Sequence[JobDag]],
    config: ClusterConfig,
    policy: str,
    tie_break: str = "lru-fallback",
    *,
    backend: Optional[str] = None,
    record_accesses: bool = True,
    oracle_check: bool = False,
) -> SimReport:
    """Simulate one workload under one policy and return the report."""
    cluster = _Cluster(
        _as_workload(workload),
        config,
        policy,
        tie_break,
        backend,
        record_accesses,
        oracle_check,
    )
    return cluster.run()


@dataclass(frozen=True)
class StaircasePoint:
    cached_blocks: int
    total_task_time: float
    hit_ratio: float


def staircase_experiment(
    partitions: int = 10,
    block_size: float = 1.0,
    policy: str = "lru",
    config: Optional[ClusterConfig] = None,
    backend: Optional[str] = None,
) -> List[StaircasePoint]:
    """Re-run a zip job with 0..2n cached source blocks, one more per round.

    Blocks are cached in the order A_0, B_0, A_1, B_1, ...; the remaining
    sources sit on disk. The cache is sized so nothing is ever evicted: each
    point isolates the effect of the initially cached set. Total task time
    only drops when a round completes a peer pair, while the hit ratio grows
    by one access per round.
    """
    from .workloads import Placement, gen_zip, zip_caching_order

    dag = gen_zip(partitions, block_size)
    order = zip_caching_order(dag)
    capacity = sum(dag.sizes.values())
    if config is None:
        config = ClusterConfig(workers=1, slots_per_worker=1)
    config = replace(config, cache_capacity_per_worker=capacity)
    points = []
    for m in range(2 * partitions + 1):
        placements = tuple(
            Placement(ref, TIER_MEMORY if i < m else TIER_DISK)
            for i, ref in enumerate(order)
        )
        wl = Workload(name=f"staircase-{m}", jobs=(dag,), placements=placements)
        rep = run(wl, config, policy, backend=backend, record_accesses=False)
        points.append(
            StaircasePoint(
                cached_blocks=m,
                total_task_time=rep.total_task_time,
                hit_ratio=rep.hit_ratio,
            )
        )
    return points
