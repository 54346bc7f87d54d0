"""DAG model for data-parallel jobs: blocks, tasks, peer groups.

A job is a directed acyclic graph whose leaves are *source blocks* and whose
internal nodes are *tasks*; each task consumes a set of input blocks and
produces exactly one output block. The inputs of a task are *peers* of each
other with respect to that task. Everything downstream (reference counts,
peer groups, eviction keys) is derived from this structure.

All types here are immutable value objects, safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, Mapping, Tuple

from .errors import (
    CyclicDependency,
    DagValidationError,
    DanglingBlock,
    DuplicateProducer,
)

# Storage tiers for a materialized block.
TIER_MEMORY = "memory"
TIER_DISK = "disk"
TIER_NONE = "none"
TIERS = (TIER_MEMORY, TIER_DISK, TIER_NONE)


@dataclass(frozen=True, order=True)
class BlockRef:
    """Identity of one partition of one dataset of one job.

    Equality and ordering are structural over the (job, rdd, partition)
    triple; the triple is globally unique within a workload.
    """

    job_id: str
    rdd_id: str
    partition: int

    def __post_init__(self):
        if self.partition < 0:
            raise ValueError(f"partition must be >= 0, got {self.partition}")

    def label(self) -> str:
        return f"{self.job_id}/{self.rdd_id}:{self.partition}"


@dataclass(frozen=True)
class BlockMeta:
    """Size, materialization state and storage tier of a block."""

    ref: BlockRef
    size: float
    materialized: bool
    tier: str = TIER_NONE

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"block size must be > 0, got {self.size}")
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}")
        if self.tier in (TIER_MEMORY, TIER_DISK) and not self.materialized:
            raise ValueError("a block on a storage tier must be materialized")
        if self.tier == TIER_NONE and self.materialized:
            raise ValueError("a materialized block must live on a storage tier")


@dataclass(frozen=True)
class TaskSpec:
    """One task: reads its peer set of input blocks, writes one output block.

    ``inputs`` is a set; it is stored as a sorted tuple so that iteration
    order (and hence simulated read order) is deterministic.
    """

    task_id: str
    inputs: Tuple[BlockRef, ...]
    output: BlockRef
    compute_cost: float = 0.0

    def __post_init__(self):
        inputs = tuple(sorted(set(self.inputs)))
        if not inputs:
            raise ValueError(f"task {self.task_id!r} has no inputs")
        if self.compute_cost < 0:
            raise ValueError("compute_cost must be >= 0")
        object.__setattr__(self, "inputs", inputs)


@dataclass(frozen=True)
class JobDag:
    """A job: tasks plus the source blocks they ultimately read.

    ``sizes`` maps every block of the job (sources and task outputs) to its
    abstract size in size units. Generators decide sizes; the model does not
    assume unit blocks.
    """

    job_id: str
    tasks: Tuple[TaskSpec, ...]
    source_blocks: FrozenSet[BlockRef]
    sizes: Mapping[BlockRef, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "source_blocks", frozenset(self.source_blocks))
        object.__setattr__(self, "sizes", dict(self.sizes))

    def blocks(self) -> Iterator[BlockRef]:
        """All blocks of the job: sources first, then outputs, deterministic."""
        seen = set()
        for ref in sorted(self.source_blocks):
            seen.add(ref)
            yield ref
        for task in self.tasks:
            if task.output not in seen:
                seen.add(task.output)
                yield task.output

    def producers(self) -> Dict[BlockRef, TaskSpec]:
        """Map from output block to the task producing it (first wins)."""
        out: Dict[BlockRef, TaskSpec] = {}
        for task in self.tasks:
            out.setdefault(task.output, task)
        return out


@dataclass(frozen=True)
class PeerGroup:
    """The peer set of one task: its input blocks, labeled as a unit.

    The complete/incomplete label itself is runtime state and lives in the
    policy and protocol layers; the group value is immutable.
    """

    job_id: str
    task_id: str
    members: FrozenSet[BlockRef]

    def key(self) -> Tuple[str, str]:
        return (self.job_id, self.task_id)


def validate_dag(dag: JobDag) -> None:
    """Check all JobDag invariants; raise a DagValidationError subclass if broken.

    Raises CyclicDependency, DanglingBlock or DuplicateProducer for the
    structural violations, and DagValidationError for bookkeeping problems
    (duplicate task ids, missing or non-positive sizes).
    """
    task_ids = [t.task_id for t in dag.tasks]
    if len(set(task_ids)) != len(task_ids):
        dupes = sorted({t for t in task_ids if task_ids.count(t) > 1})
        raise DagValidationError(f"job {dag.job_id!r}: duplicate task ids {dupes}")

    producer: Dict[BlockRef, str] = {}
    for task in dag.tasks:
        if task.output in producer:
            raise DuplicateProducer(
                f"job {dag.job_id!r}: block {task.output.label()} produced by both "
                f"task {producer[task.output]!r} and task {task.task_id!r}"
            )
        if task.output in dag.source_blocks:
            raise DuplicateProducer(
                f"job {dag.job_id!r}: block {task.output.label()} is a source and "
                f"also produced by task {task.task_id!r}"
            )
        producer[task.output] = task.task_id

    for task in dag.tasks:
        if task.output in task.inputs:
            raise CyclicDependency(
                f"job {dag.job_id!r}: task {task.task_id!r} consumes its own output"
            )
        for ref in task.inputs:
            if ref not in dag.source_blocks and ref not in producer:
                raise DanglingBlock(
                    f"job {dag.job_id!r}: task {task.task_id!r} reads "
                    f"{ref.label()}, which no task produces and which is not a source"
                )

    _check_acyclic(dag, producer)

    for ref in dag.blocks():
        size = dag.sizes.get(ref)
        if size is None:
            raise DagValidationError(
                f"job {dag.job_id!r}: no size for block {ref.label()}"
            )
        if size <= 0:
            raise DagValidationError(
                f"job {dag.job_id!r}: block {ref.label()} has size {size}"
            )


def _check_acyclic(dag: JobDag, producer: Dict[BlockRef, str]) -> None:
    # Kahn's algorithm over the task graph induced by the producer relation.
    by_id = {t.task_id: t for t in dag.tasks}
    indeg = {t.task_id: 0 for t in dag.tasks}
    consumers: Dict[str, list] = {t.task_id: [] for t in dag.tasks}
    for task in dag.tasks:
        for ref in task.inputs:
            upstream = producer.get(ref)
            if upstream is not None:
                indeg[task.task_id] += 1
                consumers[upstream].append(task.task_id)
    frontier = [tid for tid in indeg if indeg[tid] == 0]
    done = 0
    while frontier:
        tid = frontier.pop()
        done += 1
        for downstream in consumers[tid]:
            indeg[downstream] -= 1
            if indeg[downstream] == 0:
                frontier.append(downstream)
    if done != len(by_id):
        stuck = sorted(tid for tid, d in indeg.items() if d > 0)
        raise CyclicDependency(
            f"job {dag.job_id!r}: cyclic dependency among tasks {stuck}"
        )


def reference_counts(
    dag: JobDag, materialized: Iterable[BlockRef] = ()
) -> Dict[BlockRef, int]:
    """Reference count of every block: pending consumers with unmaterialized outputs.

    For each block b, counts the tasks t with b in t.inputs whose output is
    not in ``materialized``. A block consumed by k such tasks contributes k,
    one reference per consuming task.
    """
    done = set(materialized)
    counts = {ref: 0 for ref in dag.blocks()}
    for task in dag.tasks:
        if task.output in done:
            continue
        for ref in task.inputs:
            counts[ref] += 1
    return counts


def peer_groups(dag: JobDag) -> Tuple[PeerGroup, ...]:
    """One peer group per task, in task order; members are the task's inputs."""
    return tuple(
        PeerGroup(dag.job_id, task.task_id, frozenset(task.inputs))
        for task in dag.tasks
    )
