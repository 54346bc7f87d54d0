"""Command-line front end: single runs, sweeps, and the built-in recipes.

Exit codes: 0 success, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from ._core import available_backends, derive_seed
from .dag import TIER_MEMORY
from .errors import DagCacheSimError, DagValidationError, InvalidWorkload, ParseError
from .policy import POLICIES, TIE_BREAKS
from .sim import ClusterConfig, SimReport, run, staircase_experiment
from .workload_io import dump_workload, parse_workload
from .workloads import (
    Workload,
    gen_fig1,
    FIG1_CACHE_CAPACITY,
    gen_random_dag,
    gen_zip,
    multi_tenant_workload,
)

CSV_COLUMNS = (
    "workload",
    "policy",
    "capacity",
    "rep",
    "seed",
    "makespan",
    "hit_ratio",
    "effective_hit_ratio",
    "broadcasts",
    "reports",
    "evictions",
)

MULTITENANT_CAPACITY_FRACTIONS = (0.33, 0.50, 0.66, 0.83)


@dataclass(frozen=True)
class ExperimentPlan:
    """A sweep: every (policy, capacity, repetition) cell of one workload."""

    workload: Workload
    policies: Tuple[str, ...]
    capacities: Tuple[float, ...]
    repetitions: int
    seed_base: int
    tie_break: str
    workers: int
    slots_per_worker: int
    mem_read_cost: float
    disk_read_cost: float
    broadcast_latency: float = 0.0
    backend: Optional[str] = None

    def __post_init__(self):
        if not self.policies or not self.capacities or self.repetitions < 1:
            raise InvalidWorkload("plan needs >= 1 policy, capacity and repetition")

    def cells(self):
        idx = 0
        for policy in self.policies:
            for capacity in self.capacities:
                for rep in range(self.repetitions):
                    yield idx, policy, capacity, rep
                    idx += 1


def row_from_report(report: SimReport, rep: int) -> Dict[str, object]:
    return {
        "workload": report.workload,
        "policy": report.policy,
        "capacity": report.capacity_per_worker,
        "rep": rep,
        "seed": report.seed,
        "makespan": report.makespan,
        "hit_ratio": report.hit_ratio,
        "effective_hit_ratio": report.effective_hit_ratio,
        "broadcasts": report.broadcasts,
        "reports": report.reports,
        "evictions": report.evictions,
    }


def run_plan(plan: ExperimentPlan) -> Tuple[List[Dict[str, object]], List[SimReport]]:
    """Run every cell; row order follows cell index, seeds derive per cell."""
    rows = []
    reports = []
    for idx, policy, capacity, rep in plan.cells():
        config = ClusterConfig(
            workers=plan.workers,
            slots_per_worker=plan.slots_per_worker,
            cache_capacity_per_worker=capacity,
            mem_read_cost=plan.mem_read_cost,
            disk_read_cost=plan.disk_read_cost,
            broadcast_latency=plan.broadcast_latency,
            seed=derive_seed(plan.seed_base, idx),
        )
        report = run(
            plan.workload,
            config,
            policy,
            plan.tie_break,
            backend=plan.backend,
            record_accesses=False,
        )
        rows.append(row_from_report(report, rep))
        reports.append(report)
    return rows, reports


def rows_to_csv(rows: Sequence[Dict[str, object]], columns: Sequence[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def summarize(rows: Sequence[Dict[str, object]]) -> List[Dict[str, object]]:
    """Mean/min/max per (policy, capacity) for the headline metrics."""
    cells: Dict[Tuple[str, float], List[Dict[str, object]]] = {}
    for row in rows:
        cells.setdefault((row["policy"], row["capacity"]), []).append(row)
    out = []
    for (policy, capacity), group in cells.items():
        entry: Dict[str, object] = {"policy": policy, "capacity": capacity, "n": len(group)}
        for metric in ("makespan", "hit_ratio", "effective_hit_ratio"):
            values = [float(r[metric]) for r in group]
            entry[f"{metric}_mean"] = sum(values) / len(values)
            entry[f"{metric}_min"] = min(values)
            entry[f"{metric}_max"] = max(values)
        out.append(entry)
    return out


def _summary_table(summary: List[Dict[str, object]]) -> str:
    header = (
        f"{'policy':<8}{'capacity':>10}{'n':>4}"
        f"{'makespan(mean/min/max)':>30}{'hit%':>8}{'eff%':>8}"
    )
    lines = [header]
    for e in summary:
        span = f"{e['makespan_mean']:.1f}/{e['makespan_min']:.1f}/{e['makespan_max']:.1f}"
        lines.append(
            f"{e['policy']:<8}{e['capacity']:>10.1f}{e['n']:>4}{span:>30}"
            f"{100 * e['hit_ratio_mean']:>8.1f}{100 * e['effective_hit_ratio_mean']:>8.1f}"
        )
    return "\n".join(lines)


def _write_out(text: str, path: Optional[str]) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _emit_rows(rows, fmt: str, out: Optional[str]) -> None:
    if fmt == "csv":
        _write_out(rows_to_csv(rows), out)
    else:
        _write_out(json.dumps(rows, indent=2), out)


def _write_messages(reports: Sequence[SimReport], path: Optional[str]) -> None:
    if not path:
        return
    text = "\n".join(r.message_log.to_text() for r in reports if len(r.message_log))
    _write_out(text, path)


def _load_workload(path: str) -> Workload:
    with open(path) as fh:
        return parse_workload(fh.read())


def _float_list(text: str) -> List[float]:
    return [float(tok) for tok in text.split(",") if tok]


def _policy_list(text: str) -> List[str]:
    policies = [tok.strip() for tok in text.split(",") if tok.strip()]
    for p in policies:
        if p not in POLICIES:
            raise argparse.ArgumentTypeError(
                f"unknown policy {p!r}; choose from {', '.join(POLICIES)}"
            )
    return policies


def _add_cluster_args(p: argparse.ArgumentParser, workers: int, slots: int) -> None:
    p.add_argument("--workers", type=int, default=workers)
    p.add_argument("--slots", type=int, default=slots, help="task slots per worker")
    p.add_argument("--mem-cost", type=float, default=1.0, help="read cost per size unit from memory")
    p.add_argument("--disk-cost", type=float, default=10.0, help="read cost per size unit from disk")
    p.add_argument("--latency", type=float, default=0.0, help="broadcast latency")
    p.add_argument("--backend", choices=("auto",) + available_backends(), default="auto")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--messages-out", default=None, help="write the message log (JSON lines)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dagcachesim",
        description="Cache-eviction policy simulator for DAG-structured data-parallel jobs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a workload file across policies/capacities")
    p.add_argument("--workload", required=True, help="workload file")
    p.add_argument("--policy", type=_policy_list, default=list(POLICIES), help="comma-separated policies")
    p.add_argument("--capacity", type=_float_list, required=True, help="comma-separated per-worker capacities")
    p.add_argument("--tie-break", choices=TIE_BREAKS, default="lru-fallback")
    p.add_argument("--seed", type=int, default=0, help="seed base; each cell derives its own")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--summary", action="store_true", help="print a mean/min/max table to stderr")
    _add_cluster_args(p, workers=1, slots=1)
    _add_output_args(p)

    p = sub.add_parser("fig1", help="two-coalesce-tasks recipe: one row per seed, victim column")
    p.add_argument("--policy", type=_policy_list, default=["lerc"])
    p.add_argument("--tie-break", choices=TIE_BREAKS, default="lru-fallback")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--backend", choices=("auto",) + available_backends(), default="auto")
    _add_output_args(p)

    p = sub.add_parser("staircase", help="zip job with 0..2n cached blocks, one run per point")
    p.add_argument("--partitions", type=int, default=10)
    p.add_argument("--block-size", type=float, default=1.0)
    p.add_argument("--policy", choices=POLICIES, default="lru")
    p.add_argument("--backend", choices=("auto",) + available_backends(), default="auto")
    _add_output_args(p)

    p = sub.add_parser("multitenant", help="parallel zip tenants with a capacity sweep")
    p.add_argument("--tenants", type=int, default=10)
    p.add_argument("--partitions", type=int, default=20)
    p.add_argument("--file-size", type=float, default=40.0)
    p.add_argument("--policy", type=_policy_list, default=["lru", "lrc", "lerc"])
    p.add_argument(
        "--capacity-fraction",
        type=_float_list,
        default=list(MULTITENANT_CAPACITY_FRACTIONS),
        help="cluster cache size as a fraction of total input",
    )
    p.add_argument("--tie-break", choices=TIE_BREAKS, default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--summary", action="store_true")
    _add_cluster_args(p, workers=5, slots=2)
    _add_output_args(p)

    p = sub.add_parser("validate", help="parse and validate a workload file")
    p.add_argument("workload", help="workload file")

    p = sub.add_parser("dump", help="generate a built-in workload and print it")
    p.add_argument("--kind", choices=("fig1", "zip", "multitenant", "random"), required=True)
    p.add_argument("--partitions", type=int, default=10)
    p.add_argument("--block-size", type=float, default=1.0)
    p.add_argument("--tenants", type=int, default=10)
    p.add_argument("--file-size", type=float, default=40.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-tasks", type=int, default=10)
    p.add_argument("--max-fanin", type=int, default=3)
    p.add_argument("--out", default=None)

    return parser


def cmd_run(args) -> int:
    plan = ExperimentPlan(
        workload=_load_workload(args.workload),
        policies=tuple(args.policy),
        capacities=tuple(args.capacity),
        repetitions=args.reps,
        seed_base=args.seed,
        tie_break=args.tie_break,
        workers=args.workers,
        slots_per_worker=args.slots,
        mem_read_cost=args.mem_cost,
        disk_read_cost=args.disk_cost,
        broadcast_latency=args.latency,
        backend=None if args.backend == "auto" else args.backend,
    )
    rows, reports = run_plan(plan)
    _emit_rows(rows, args.format, args.out)
    _write_messages(reports, args.messages_out)
    if args.summary:
        print(_summary_table(summarize(rows)), file=sys.stderr)
    return 0


def fig1_config(seed: int = 0) -> ClusterConfig:
    return ClusterConfig(
        workers=1,
        slots_per_worker=2,
        cache_capacity_per_worker=FIG1_CACHE_CAPACITY,
        seed=seed,
    )


def cmd_fig1(args) -> int:
    workload = gen_fig1()
    rows = []
    reports = []
    backend = None if args.backend == "auto" else args.backend
    for policy in args.policy:
        for rep in range(args.reps):
            seed = derive_seed(args.seed, rep)
            report = run(
                workload, fig1_config(seed), policy, args.tie_break, backend=backend
            )
            row = row_from_report(report, rep)
            row["victim"] = (
                report.eviction_log[0].block.rdd_id if report.eviction_log else ""
            )
            rows.append(row)
            reports.append(report)
    _emit_rows(rows, args.format, args.out)
    _write_messages(reports, args.messages_out)
    return 0


def cmd_staircase(args) -> int:
    backend = None if args.backend == "auto" else args.backend
    points = staircase_experiment(
        partitions=args.partitions,
        block_size=args.block_size,
        policy=args.policy,
        backend=backend,
    )
    rows = [
        {
            "cached_blocks": pt.cached_blocks,
            "total_task_time": pt.total_task_time,
            "hit_ratio": pt.hit_ratio,
        }
        for pt in points
    ]
    if args.format == "csv":
        _write_out(
            rows_to_csv(rows, columns=("cached_blocks", "total_task_time", "hit_ratio")),
            args.out,
        )
    else:
        _write_out(json.dumps(rows, indent=2), args.out)
    if args.messages_out:
        _write_out("", args.messages_out)
    return 0


def multitenant_plan(args) -> ExperimentPlan:
    workload = multi_tenant_workload(
        args.tenants, args.partitions, args.file_size, workers=args.workers
    )
    total_input = args.tenants * 2.0 * args.file_size
    capacities = tuple(
        frac * total_input / args.workers for frac in args.capacity_fraction
    )
    return ExperimentPlan(
        workload=workload,
        policies=tuple(args.policy),
        capacities=capacities,
        repetitions=args.reps,
        seed_base=args.seed,
        tie_break=args.tie_break,
        workers=args.workers,
        slots_per_worker=args.slots,
        mem_read_cost=args.mem_cost,
        disk_read_cost=args.disk_cost,
        broadcast_latency=args.latency,
        backend=None if args.backend == "auto" else args.backend,
    )


def cmd_multitenant(args) -> int:
    rows, reports = run_plan(multitenant_plan(args))
    _emit_rows(rows, args.format, args.out)
    _write_messages(reports, args.messages_out)
    if args.summary:
        print(_summary_table(summarize(rows)), file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    try:
        workload = _load_workload(args.workload)
    except (ParseError, DagValidationError, InvalidWorkload) as exc:
        print(f"{args.workload}: {exc}", file=sys.stderr)
        return 1
    jobs = len(workload.jobs)
    tasks = sum(len(j.tasks) for j in workload.jobs)
    print(f"{args.workload}: ok ({jobs} jobs, {tasks} tasks)")
    return 0


def cmd_dump(args) -> int:
    if args.kind == "fig1":
        workload = gen_fig1()
    elif args.kind == "zip":
        dag = gen_zip(args.partitions, args.block_size)
        workload = Workload(name="zip", jobs=(dag,))
    elif args.kind == "multitenant":
        workload = multi_tenant_workload(args.tenants, args.partitions, args.file_size)
    else:
        dag = gen_random_dag(args.seed, args.max_tasks, args.max_fanin)
        workload = Workload(name=f"random-{args.seed}", jobs=(dag,))
    _write_out(dump_workload(workload), args.out)
    return 0


_COMMANDS = {
    "run": cmd_run,
    "fig1": cmd_fig1,
    "staircase": cmd_staircase,
    "multitenant": cmd_multitenant,
    "validate": cmd_validate,
    "dump": cmd_dump,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ParseError, DagValidationError, InvalidWorkload) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DagCacheSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
