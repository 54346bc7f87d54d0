"""Workload file format: parse and dump, lossless round-trip.

Line-oriented, one statement per line, ``#`` starts a comment. Blocks are
written ``RDD:PARTITION`` and are scoped to the enclosing job.

::

    workload NAME                 # optional, first statement only
    job JOB_ID                    # opens a job section
    source RDD:P size=F [tier=memory|disk] [worker=N]
    task TASK_ID inputs=RDD:P[,RDD:P...] output=RDD:P output_size=F cost=F
    insert TIME JOB_ID RDD:P [worker=N]

``source`` declares a source block. Without ``tier`` the block starts
unmaterialized; ``tier=memory`` or ``tier=disk`` pre-places it. ``worker``
pins the placement (default: partition modulo worker count at run time).
``task`` declares one task; ``output_size`` defaults to the sum of the input
sizes. ``insert`` (after the job sections) materializes an unplaced source
block straight into a worker's memory at the given simulated time.
"""

from __future__ import annotations

from typing import Dict, List, Optional, TextIO, Tuple, Union

from .dag import TIER_DISK, TIER_MEMORY, BlockRef, JobDag, TaskSpec, validate_dag
from .errors import DagValidationError, ParseError
from .workloads import InsertEvent, Placement, Workload


def _fmt_num(x: float) -> str:
    return f"{x:g}" if x == int(x) else repr(x)


def dump_workload(workload: Workload) -> str:
    """Render a workload in the file format; parse_workload inverts this."""
    lines = [f"workload {workload.name}"]
    placement_by_block: Dict[BlockRef, Placement] = {
        p.block: p for p in workload.placements
    }
    for job in workload.jobs:
        lines.append(f"job {job.job_id}")
        for ref in sorted(job.source_blocks):
            parts = [
                f"  source {ref.rdd_id}:{ref.partition}",
                f"size={_fmt_num(job.sizes[ref])}",
            ]
            placed = placement_by_block.get(ref)
            if placed is not None:
                parts.append(f"tier={placed.tier}")
                if placed.worker is not None:
                    parts.append(f"worker={placed.worker}")
            lines.append(" ".join(parts))
        for task in job.tasks:
            inputs = ",".join(f"{r.rdd_id}:{r.partition}" for r in task.inputs)
            out = task.output
            lines.append(
                f"  task {task.task_id} inputs={inputs} "
                f"output={out.rdd_id}:{out.partition} "
                f"output_size={_fmt_num(job.sizes[out])} "
                f"cost={_fmt_num(task.compute_cost)}"
            )
    for ev in workload.inserts:
        parts = [
            f"insert {_fmt_num(ev.time)} {ev.block.job_id} "
            f"{ev.block.rdd_id}:{ev.block.partition}"
        ]
        if ev.worker is not None:
            parts.append(f"worker={ev.worker}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def _parse_block(token: str, job_id: str, lineno: int) -> BlockRef:
    rdd, sep, part = token.partition(":")
    if not sep or not rdd:
        raise ParseError(f"expected RDD:PARTITION, got {token!r}", lineno)
    try:
        partition = int(part)
    except ValueError:
        raise ParseError(f"partition must be an integer, got {part!r}", lineno)
    try:
        return BlockRef(job_id, rdd, partition)
    except ValueError as exc:
        raise ParseError(str(exc), lineno)


def _parse_attrs(tokens: List[str], lineno: int, allowed: Tuple[str, ...]) -> Dict[str, str]:
    attrs: Dict[str, str] = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep:
            raise ParseError(f"expected KEY=VALUE, got {token!r}", lineno)
        if key not in allowed:
            raise ParseError(f"unknown attribute {key!r}", lineno)
        if key in attrs:
            raise ParseError(f"duplicate attribute {key!r}", lineno)
        attrs[key] = value
    return attrs


def _parse_float(value: str, key: str, lineno: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"{key} must be a number, got {value!r}", lineno)


def _parse_int(value: str, key: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{key} must be an integer, got {value!r}", lineno)


class _JobBuilder:
    def __init__(self, job_id: str, lineno: int):
        self.job_id = job_id
        self.lineno = lineno
        self.sources: List[BlockRef] = []
        self.sources_placed: List[Placement] = []
        self.sizes: Dict[BlockRef, float] = {}
        self.tasks: List[TaskSpec] = []
        self.task_lines: Dict[str, int] = {}
        self.output_sizes: Dict[BlockRef, Optional[float]] = {}

    def finish(self) -> JobDag:
        sizes = dict(self.sizes)
        for task in self.tasks:
            explicit = self.output_sizes[task.output]
            if explicit is not None:
                sizes[task.output] = explicit
            else:
                missing = [r for r in task.inputs if r not in sizes]
                if missing:
                    raise ParseError(
                        f"job {self.job_id!r}: cannot default output_size of task "
                        f"{task.task_id!r}; input {missing[0].label()} has no size",
                        self.task_lines[task.task_id],
                    )
                sizes[task.output] = sum(sizes[r] for r in task.inputs)
        return JobDag(self.job_id, tuple(self.tasks), frozenset(self.sources), sizes)


def parse_workload(text: Union[str, TextIO]) -> Workload:
    """Parse the file format; raises ParseError with the offending line number.

    Structural DAG problems (cycles, dangling inputs, duplicate producers)
    are raised as the corresponding DagValidationError after parsing, with
    job and task ids in the message.
    """
    if not isinstance(text, str):
        text = text.read()

    name = "workload"
    jobs: List[_JobBuilder] = []
    current: Optional[_JobBuilder] = None
    raw_inserts: List[Tuple[float, str, str, Optional[int], int]] = []
    seen_statement = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        keyword = tokens[0]

        if keyword == "workload":
            if seen_statement:
                raise ParseError("'workload' must be the first statement", lineno)
            if len(tokens) != 2:
                raise ParseError("usage: workload NAME", lineno)
            name = tokens[1]
        elif keyword == "job":
            if len(tokens) != 2:
                raise ParseError("usage: job JOB_ID", lineno)
            if any(b.job_id == tokens[1] for b in jobs):
                raise ParseError(f"duplicate job id {tokens[1]!r}", lineno)
            current = _JobBuilder(tokens[1], lineno)
            jobs.append(current)
        elif keyword == "source":
            if current is None:
                raise ParseError("'source' outside of a job section", lineno)
            if len(tokens) < 2:
                raise ParseError("usage: source RDD:P size=F [tier=..] [worker=N]", lineno)
            ref = _parse_block(tokens[1], current.job_id, lineno)
            attrs = _parse_attrs(tokens[2:], lineno, ("size", "tier", "worker"))
            if "size" not in attrs:
                raise ParseError("source needs a size attribute", lineno)
            if ref in current.sizes:
                raise ParseError(f"duplicate source {ref.label()}", lineno)
            size = _parse_float(attrs["size"], "size", lineno)
            if size <= 0:
                raise ParseError(f"size must be > 0, got {size}", lineno)
            current.sources.append(ref)
            current.sizes[ref] = size
            tier = attrs.get("tier")
            if tier is not None:
                if tier not in (TIER_MEMORY, TIER_DISK):
                    raise ParseError(
                        f"tier must be memory or disk, got {tier!r}", lineno
                    )
                worker = (
                    _parse_int(attrs["worker"], "worker", lineno)
                    if "worker" in attrs
                    else None
                )
                current.sources_placed.append(Placement(ref, tier, worker))
            elif "worker" in attrs:
                raise ParseError("worker is only valid together with tier", lineno)
        elif keyword == "task":
            if current is None:
                raise ParseError("'task' outside of a job section", lineno)
            if len(tokens) < 3:
                raise ParseError(
                    "usage: task ID inputs=... output=... [output_size=F] [cost=F]",
                    lineno,
                )
            task_id = tokens[1]
            attrs = _parse_attrs(
                tokens[2:], lineno, ("inputs", "output", "output_size", "cost")
            )
            for required in ("inputs", "output"):
                if required not in attrs:
                    raise ParseError(f"task needs an {required} attribute", lineno)
            inputs = tuple(
                _parse_block(tok, current.job_id, lineno)
                for tok in attrs["inputs"].split(",")
                if tok
            )
            if not inputs:
                raise ParseError("task needs at least one input", lineno)
            output = _parse_block(attrs["output"], current.job_id, lineno)
            cost = _parse_float(attrs.get("cost", "0"), "cost", lineno)
            out_size = (
                _parse_float(attrs["output_size"], "output_size", lineno)
                if "output_size" in attrs
                else None
            )
            if task_id in current.task_lines:
                raise ParseError(f"duplicate task id {task_id!r}", lineno)
            try:
                task = TaskSpec(task_id, inputs, output, compute_cost=cost)
            except ValueError as exc:
                raise ParseError(str(exc), lineno)
            current.tasks.append(task)
            current.task_lines[task_id] = lineno
            current.output_sizes[output] = out_size
        elif keyword == "insert":
            if len(tokens) < 4:
                raise ParseError("usage: insert TIME JOB_ID RDD:P [worker=N]", lineno)
            time = _parse_float(tokens[1], "time", lineno)
            attrs = _parse_attrs(tokens[4:], lineno, ("worker",))
            worker = (
                _parse_int(attrs["worker"], "worker", lineno)
                if "worker" in attrs
                else None
            )
            raw_inserts.append((time, tokens[2], tokens[3], worker, lineno))
        else:
            raise ParseError(f"unknown statement {keyword!r}", lineno)
        seen_statement = True

    built = []
    placements: List[Placement] = []
    for builder in jobs:
        dag = builder.finish()
        try:
            validate_dag(dag)
        except DagValidationError as exc:
            raise type(exc)(f"{exc} (job starts at line {builder.lineno})")
        built.append(dag)
        placements.extend(builder.sources_placed)

    by_id = {dag.job_id: dag for dag in built}
    inserts = []
    for time, job_id, token, worker, lineno in raw_inserts:
        job = by_id.get(job_id)
        if job is None:
            raise ParseError(f"insert references unknown job {job_id!r}", lineno)
        ref = _parse_block(token, job_id, lineno)
        if ref not in job.source_blocks:
            raise ParseError(
                f"insert references {ref.label()}, which is not a source block",
                lineno,
            )
        if any(p.block == ref for p in placements):
            raise ParseError(
                f"insert references {ref.label()}, which is already placed", lineno
            )
        inserts.append(InsertEvent(time, ref, worker))

    return Workload(
        name=name,
        jobs=tuple(built),
        placements=tuple(placements),
        inserts=tuple(inserts),
    )
