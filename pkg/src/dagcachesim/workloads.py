"""Built-in workload generators.

Four families: the two-task coalesce scenario with a cache-displacing insert,
the n-partition zip job (two source datasets combined pairwise), the
multi-tenant variant with interleaved load phases, and seeded random DAGs for
property tests. All generators are pure functions of their parameters.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .dag import TIER_DISK, TIER_MEMORY, TIER_NONE, BlockRef, JobDag, TaskSpec, validate_dag
from .errors import InvalidWorkload


@dataclass(frozen=True)
class Placement:
    """Initial location of a source block. ``worker=None`` means the default
    home (partition modulo worker count)."""

    block: BlockRef
    tier: str
    worker: Optional[int] = None

    def __post_init__(self):
        if self.tier not in (TIER_MEMORY, TIER_DISK):
            raise InvalidWorkload(
                f"placement tier must be memory or disk, got {self.tier!r}"
            )


@dataclass(frozen=True)
class InsertEvent:
    """A source block materializing straight into a worker's memory at ``time``."""

    time: float
    block: BlockRef
    worker: Optional[int] = None


@dataclass(frozen=True)
class Workload:
    """One runnable scenario: jobs, initial placements, timed insertions."""

    name: str
    jobs: Tuple[JobDag, ...]
    placements: Tuple[Placement, ...] = ()
    inserts: Tuple[InsertEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        object.__setattr__(self, "placements", tuple(self.placements))
        object.__setattr__(self, "inserts", tuple(self.inserts))


def _compute_cost(input_sizes: Sequence[float]) -> float:
    # Default calibration: computing takes as long as a memory read of the
    # task's whole input.
    return float(sum(input_sizes))


def gen_fig1() -> Workload:
    """Two coalesce tasks over four unit blocks, three of them cached.

    Blocks a, b, c start in a 3-unit memory cache, block d sits materialized
    on disk, and block e (unit size, no consumers) is inserted at time 0,
    forcing one eviction before either task runs. Task t1 coalesces {a, b},
    task t2 coalesces {c, d}. Evicting c is the only choice that costs no
    task its speedup.
    """
    job = "fig1"

    def blk(rdd: str) -> BlockRef:
        return BlockRef(job, rdd, 0)

    a, b, c, d, e = (blk(r) for r in "abcde")
    x, y = blk("x"), blk("y")
    tasks = (
        TaskSpec("t1", (a, b), x, compute_cost=_compute_cost([1.0, 1.0])),
        TaskSpec("t2", (c, d), y, compute_cost=_compute_cost([1.0, 1.0])),
    )
    sizes = {a: 1.0, b: 1.0, c: 1.0, d: 1.0, e: 1.0, x: 2.0, y: 2.0}
    dag = JobDag(job, tasks, frozenset({a, b, c, d, e}), sizes)
    validate_dag(dag)
    return Workload(
        name="fig1",
        jobs=(dag,),
        placements=(
            Placement(a, TIER_MEMORY, 0),
            Placement(b, TIER_MEMORY, 0),
            Placement(c, TIER_MEMORY, 0),
            Placement(d, TIER_DISK, 0),
        ),
        inserts=(InsertEvent(0.0, e, 0),),
    )


FIG1_CACHE_CAPACITY = 3.0


def gen_zip(
    partitions: int = 10, block_size: float = 1.0, job_id: str = "zip"
) -> JobDag:
    """A zip job: sources A_i and B_i combined pairwise into C_i."""
    if partitions < 1:
        raise InvalidWorkload("partitions must be >= 1")
    if block_size <= 0:
        raise InvalidWorkload("block_size must be > 0")
    sizes: Dict[BlockRef, float] = {}
    tasks = []
    sources = set()
    for i in range(partitions):
        a = BlockRef(job_id, "A", i)
        b = BlockRef(job_id, "B", i)
        c = BlockRef(job_id, "C", i)
        sources.update((a, b))
        sizes[a] = block_size
        sizes[b] = block_size
        sizes[c] = 2.0 * block_size
        tasks.append(
            TaskSpec(
                f"zip_{i}",
                (a, b),
                c,
                compute_cost=_compute_cost([block_size, block_size]),
            )
        )
    dag = JobDag(job_id, tuple(tasks), frozenset(sources), sizes)
    validate_dag(dag)
    return dag


def zip_caching_order(dag: JobDag) -> List[BlockRef]:
    """The staircase caching order A_0, B_0, A_1, B_1, ..."""
    order = []
    for task in dag.tasks:
        order.extend(task.inputs)  # inputs sort as (A_i, B_i)
    return order


def gen_multi_tenant(
    tenants: int = 10, partitions: int = 20, file_size: float = 40.0
) -> List[JobDag]:
    """Independent zip jobs on disjoint blocks, one per tenant.

    Each tenant zips two datasets of ``file_size`` size units, split into
    ``partitions`` blocks apiece, so per-job input is 2 x file_size. Defaults
    are desk scale: 10 tenants x 2 x 40 units = 800 units of input.
    """
    if tenants < 1 or partitions < 1:
        raise InvalidWorkload("tenants and partitions must be >= 1")
    block_size = file_size / partitions
    jobs = [
        gen_zip(partitions, block_size, job_id=f"tenant{j:02d}")
        for j in range(tenants)
    ]
    seen = set()
    for job in jobs:
        for ref in job.blocks():
            if ref in seen:
                raise InvalidWorkload(f"tenant jobs share block {ref.label()}")
            seen.add(ref)
    return jobs


def multi_tenant_workload(
    tenants: int = 10,
    partitions: int = 20,
    file_size: float = 40.0,
    workers: Optional[int] = None,
) -> Workload:
    """The tenant jobs plus their interleaved load phase.

    All tenants load their first dataset in parallel (round-robin across
    tenants, partition by partition), then all load their second, so every
    A block enters the cache before any B block. The zip tasks only become
    runnable once both of their inputs have materialized, i.e. after the
    load sequence.

    With ``workers`` given, each tenant's files are striped across workers at
    a per-tenant offset (worker = (tenant + partition) mod workers), the way
    a distributed store spreads independent files; peers stay co-located.
    Without it, placement falls back to the run-time default (partition mod
    worker count), which stacks every tenant's same-numbered partition on one
    machine.
    """
    jobs = gen_multi_tenant(tenants, partitions, file_size)
    inserts = []
    for rdd in ("A", "B"):
        for p in range(partitions):
            for j, job in enumerate(jobs):
                w = (j + p) % workers if workers is not None else None
                inserts.append(InsertEvent(0.0, BlockRef(job.job_id, rdd, p), w))
    return Workload(
        name=f"multitenant-{tenants}x{partitions}",
        jobs=tuple(jobs),
        inserts=tuple(inserts),
    )


def gen_random_dag(
    seed: int,
    max_tasks: int = 10,
    max_fanin: int = 3,
    job_id: Optional[str] = None,
) -> JobDag:
    """A random valid DAG, built in topological order so acyclicity is free."""
    if max_tasks < 1 or max_fanin < 1:
        raise InvalidWorkload("bounds must be >= 1")
    rng = random.Random(seed)
    job = job_id if job_id is not None else f"rand{seed}"
    n_tasks = rng.randint(1, max_tasks)
    n_sources = rng.randint(1, max(2, max_fanin))

    sizes: Dict[BlockRef, float] = {}
    sources = []
    for i in range(n_sources):
        ref = BlockRef(job, "S", i)
        sources.append(ref)
        sizes[ref] = float(rng.randint(1, 4))
    available = list(sources)
    tasks = []
    for t in range(n_tasks):
        fanin = rng.randint(1, min(max_fanin, len(available)))
        inputs = rng.sample(available, fanin)
        output = BlockRef(job, "T", t)
        sizes[output] = float(rng.randint(1, 4))
        tasks.append(
            TaskSpec(
                f"task{t}",
                tuple(inputs),
                output,
                compute_cost=float(rng.randint(0, 3)),
            )
        )
        available.append(output)
    dag = JobDag(job, tuple(tasks), frozenset(sources), sizes)
    validate_dag(dag)
    return dag


@dataclass(frozen=True)
class RandomScenario:
    """A fuzzing scenario: workload plus the cluster shape to run it on."""

    workload: Workload
    workers: int
    slots_per_worker: int
    capacity_per_worker: float
    policy: str
    tie_break: str


def gen_random_scenario(seed: int, max_tasks: int = 30, max_fanin: int = 3) -> RandomScenario:
    """Random workload + config for oracle-equivalence fuzzing.

    Every source either starts placed (memory or disk) or is fed by a timed
    insert event, so the job always runs to completion. The capacity is
    chosen large enough that pinned reads can never wedge an insertion, but
    usually small enough to force evictions.
    """
    rng = random.Random(seed ^ 0xA5A5A5A5)
    dag = gen_random_dag(seed, max_tasks=max_tasks, max_fanin=max_fanin)
    workers = rng.randint(1, 3)
    slots = rng.randint(1, 2)

    placements = []
    inserts = []
    mem_total = {w: 0.0 for w in range(workers)}
    total = sum(dag.sizes.values())
    footprint = max(
        sum(dag.sizes[r] for r in t.inputs) + dag.sizes[t.output] for t in dag.tasks
    )
    capacity = max(footprint * (workers * slots + 1), total * rng.uniform(0.3, 0.9))

    for ref in sorted(dag.source_blocks):
        choice = rng.random()
        worker = rng.randrange(workers)
        if choice < 0.4 and mem_total[worker] + dag.sizes[ref] <= capacity:
            placements.append(Placement(ref, TIER_MEMORY, worker))
            mem_total[worker] += dag.sizes[ref]
        elif choice < 0.7:
            placements.append(Placement(ref, TIER_DISK, worker))
        else:
            inserts.append(InsertEvent(round(rng.uniform(0.0, 3.0), 3), ref, worker))

    workload = Workload(
        name=f"fuzz{seed}",
        jobs=(dag,),
        placements=tuple(placements),
        inserts=tuple(inserts),
    )
    from .policy import POLICIES, TIE_BREAKS  # local import to avoid a cycle

    return RandomScenario(
        workload=workload,
        workers=workers,
        slots_per_worker=slots,
        capacity_per_worker=capacity,
        policy=rng.choice(POLICIES),
        tie_break=rng.choice(TIE_BREAKS),
    )
