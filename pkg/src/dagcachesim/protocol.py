"""Simulated driver/worker coordination messages.

The driver distributes each job's peer-group profile to every worker. When a
worker evicts a block belonging to at least one locally complete peer group,
it sends one eviction report to the driver, which fans the eviction out to
every other worker; receiving workers flip their matching complete groups and
adjust effective reference counts. A group that is already incomplete
triggers nothing, so each group costs at most one broadcast round for its
entire lifetime. Completion-driven reference-count updates travel as
``erc_update`` messages from the driver to all workers.

Messages are value records; delivery timing is owned by the simulator's event
loop (zero latency delivers synchronously).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Sequence, Tuple

from .dag import BlockRef, JobDag, PeerGroup, peer_groups

KIND_PEER_PROFILE = "peer_profile_broadcast"
KIND_EVICTION_REPORT = "eviction_report"
KIND_EVICTION_BROADCAST = "eviction_broadcast"
KIND_ERC_UPDATE = "erc_update"

DRIVER = "driver"


def worker_name(worker: int) -> str:
    return f"worker:{worker}"


@dataclass(frozen=True)
class Message:
    time: float
    kind: str
    src: str
    dst: str
    payload: Dict[str, object]

    def to_record(self) -> Dict[str, object]:
        rec = {"time": self.time, "kind": self.kind, "src": self.src, "dst": self.dst}
        rec.update(self.payload)
        return rec


@dataclass
class MessageLog:
    """Append-only log of every message sent during a run."""

    records: List[Message] = field(default_factory=list)

    def append(self, message: Message) -> None:
        self.records.append(message)

    def extend(self, messages: Sequence[Message]) -> None:
        self.records.extend(messages)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Message]:
        return iter(self.records)

    def count(self, kind: str) -> int:
        return sum(1 for m in self.records if m.kind == kind)

    def broadcast_rounds_per_group(self) -> Dict[Tuple[str, str], int]:
        """How many eviction rounds each peer group triggered (report-side)."""
        rounds: Dict[Tuple[str, str], int] = {}
        for m in self.records:
            if m.kind != KIND_EVICTION_REPORT:
                continue
            for job_id, task_id in m.payload.get("groups", ()):  # type: ignore[union-attr]
                key = (job_id, task_id)
                rounds[key] = rounds.get(key, 0) + 1
        return rounds

    def to_text(self) -> str:
        """One JSON record per line: time, kind, src, dst, payload summary."""
        return "\n".join(json.dumps(m.to_record(), sort_keys=True) for m in self.records)


def broadcast_peer_profile(
    now: float, job: JobDag, workers: Sequence[int]
) -> List[Message]:
    """Profile messages announcing a submitted job's peer groups to every worker."""
    groups = [[g.job_id, g.task_id] for g in peer_groups(job)]
    return [
        Message(
            time=now,
            kind=KIND_PEER_PROFILE,
            src=DRIVER,
            dst=worker_name(w),
            payload={"job": job.job_id, "groups": groups, "group_count": len(groups)},
        )
        for w in workers
    ]


def report_and_broadcast_eviction(
    now: float,
    src_worker: int,
    block: BlockRef,
    flipped_groups: Sequence[PeerGroup],
    workers: Sequence[int],
) -> Tuple[List[Message], List[Message]]:
    """Messages for one eviction that flipped complete groups at the source.

    Returns ``(reports, broadcasts)``: one report to the driver and one
    broadcast per other worker. Callers must only invoke this when
    ``flipped_groups`` is non-empty; an eviction touching no complete group
    is silent.
    """
    groups = [[g.job_id, g.task_id] for g in flipped_groups]
    payload = {"block": block.label(), "groups": groups}
    reports = [
        Message(
            time=now,
            kind=KIND_EVICTION_REPORT,
            src=worker_name(src_worker),
            dst=DRIVER,
            payload=payload,
        )
    ]
    broadcasts = [
        Message(
            time=now,
            kind=KIND_EVICTION_BROADCAST,
            src=DRIVER,
            dst=worker_name(w),
            payload=payload,
        )
        for w in workers
        if w != src_worker
    ]
    return reports, broadcasts


def erc_update_messages(
    now: float, job_id: str, task_id: str, workers: Sequence[int]
) -> List[Message]:
    """Reference-count updates pushed to every worker when a task completes."""
    payload = {"job": job_id, "task": task_id}
    return [
        Message(
            time=now,
            kind=KIND_ERC_UPDATE,
            src=DRIVER,
            dst=worker_name(w),
            payload=payload,
        )
        for w in workers
    ]


class DriverState:
    """The driver's authoritative group labels and reference counts."""

    def __init__(self, index) -> None:
        self.index = index
        self.rc = list(index.initial_reference_counts())
        self.labels = ["complete"] * len(index.groups)
        self.retired = [False] * len(index.groups)

    def on_eviction_report(self, group_ids: Sequence[int]) -> None:
        for g in group_ids:
            if not self.retired[g]:
                self.labels[g] = "incomplete"

    def on_task_complete(self, gid: int) -> None:
        for b in self.index.group_members[gid]:
            self.rc[b] -= 1
        self.retired[gid] = True

    def live_labels(self) -> Dict[Tuple[str, str], str]:
        return {
            self.index.groups[g].key(): self.labels[g]
            for g in range(len(self.index.groups))
            if not self.retired[g]
        }
