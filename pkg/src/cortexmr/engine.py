"""A small deterministic MapReduce runtime.

Jobs run inside one process on a bounded thread pool. Map inputs are split
into contiguous chunks by input order, every emitted value is serialized on
its way through the shuffle, keys are routed to ``key % num_reduce_tasks``,
and reduce groups see their values in (map task, emission index) order,
optionally re-sorted by a job-supplied canonical key. Output never depends on
thread scheduling, partition counts (given an order-insensitive reducer or a
canonical value order), or injected task failures.
"""
from __future__ import annotations

import ast
import enum
import json
import logging
import os
from collections.abc import Callable, Container, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from . import network, rng

log = logging.getLogger(__name__)

MAX_KILL_PROBABILITY = 0.9


class JobFailed(RuntimeError):
    """A task raised, or exhausted its retries. ``task`` names it, e.g. ``"map-3"``."""

    def __init__(self, message: str, task: str | None = None, iteration: int | None = None):
        super().__init__(message)
        self.task = task
        self.iteration = iteration


class TaskKilled(Exception):
    """Injected failure of one task attempt."""


class Codec(Protocol):
    def encode(self, value: Any) -> str: ...

    def decode(self, payload: str) -> Any: ...


class ReprCodec:
    """Literal-based text codec; floats survive via their shortest repr."""

    def encode(self, value):
        return repr(value)

    def decode(self, payload):
        return ast.literal_eval(payload)


@dataclass(frozen=True)
class FaultPolicy:
    kill_probability: float = 0.0
    max_retries: int = 1
    fault_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.kill_probability <= MAX_KILL_PROBABILITY:
            raise ValueError(
                f"kill_probability must be in [0, {MAX_KILL_PROBABILITY}], "
                f"got {self.kill_probability}")
        if self.max_retries < 1:
            raise ValueError(f"max_retries must be >= 1, got {self.max_retries}")


NO_FAULTS = FaultPolicy()


@dataclass(frozen=True)
class JobSpec:
    """Description of one map/reduce job.

    ``mapper(key, value, ctx)`` emits through ``ctx.emit`` (and optionally
    ``ctx.side`` for side-channel records committed only on success);
    ``combiner(key, values) -> values`` runs per map task and key;
    ``reducer(key, values)`` returns an iterable of output pairs.
    ``value_order`` sorts each reduce group (stably) before the reducer sees it.
    """

    mapper: Callable[[Any, Any, "TaskContext"], None]
    reducer: Callable[[int, list], Iterable[tuple[int, Any]]]
    combiner: Callable[[int, list], list] | None = None
    num_map_tasks: int = 1
    num_reduce_tasks: int = 1
    fault_policy: FaultPolicy = NO_FAULTS
    value_order: Callable[[Any], Any] | None = None
    codec: Codec = field(default_factory=ReprCodec)
    job_id: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.num_map_tasks < 1 or self.num_reduce_tasks < 1:
            raise ValueError("num_map_tasks and num_reduce_tasks must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


class Status(enum.Enum):
    SUCCEEDED = "succeeded"
    KILLED_INJECTED = "killed_injected"


@dataclass
class TaskOutcome:
    task_id: str
    attempts: int
    status: Status
    records_in: int = 0
    records_out: int = 0


@dataclass
class JobResult:
    outputs: list[tuple[int, Any]]
    side_outputs: list[Any]
    outcomes: list[TaskOutcome]
    metrics: dict[str, Any]


class TaskContext:
    def __init__(self):
        self.emitted: list[tuple[int, Any]] = []
        self.side_records: list[Any] = []

    def emit(self, key: int, value: Any) -> None:
        self.emitted.append((key, value))

    def emit_many(self, pairs: Iterable[tuple[int, Any]]) -> None:
        self.emitted.extend(pairs)

    def side(self, record: Any) -> None:
        self.side_records.append(record)


def split_inputs(inputs: list, num_tasks: int) -> list[list]:
    """Contiguous splits by input order; the first ``len % num_tasks`` get one extra."""
    base, extra = divmod(len(inputs), num_tasks)
    splits, start = [], 0
    for t in range(num_tasks):
        stop = start + base + (1 if t < extra else 0)
        splits.append(inputs[start:stop])
        start = stop
    return splits


def partition(key: int, num_reduce_tasks: int) -> int:
    if type(key) is not int and not isinstance(key, int):
        raise TypeError(f"keys must be integers, got {type(key).__name__}")
    return key % num_reduce_tasks


_PHASES = {"map": 0, "reduce": 1}


def _kill_point(policy: FaultPolicy, job_id: int, phase: str, task: int,
                attempt: int, n_items: int) -> int | None:
    """Index of the input item at which this attempt dies, or None if it survives."""
    if policy.kill_probability <= 0.0:
        return None
    # draw slots: attempt * 4 + phase * 2 + {0: kill decision, 1: kill point}
    slot = attempt * 4 + _PHASES[phase] * 2
    u = rng.uniform(policy.fault_seed, rng.Stream.FAULT, task, job_id, slot)
    if u >= policy.kill_probability:
        return None
    where = rng.uniform(policy.fault_seed, rng.Stream.FAULT, task, job_id, slot + 1)
    return int(where * (n_items + 1))


def _with_retries(spec: JobSpec, phase: str, task: int, n_items: int,
                  body: Callable[[int | None], Any]) -> tuple[Any, TaskOutcome]:
    policy = spec.fault_policy
    task_id = f"{phase}-{task}"
    for attempt in range(policy.max_retries + 1):
        kill_at = _kill_point(policy, spec.job_id, phase, task, attempt, n_items)
        try:
            result = body(kill_at)
        except TaskKilled:
            log.debug("job %d: %s attempt %d killed", spec.job_id, task_id, attempt)
            continue
        except Exception as exc:
            raise JobFailed(f"{task_id} raised {type(exc).__name__}: {exc}", task=task_id) from exc
        return result, TaskOutcome(task_id, attempt + 1, Status.SUCCEEDED, n_items)
    raise JobFailed(
        f"{task_id} killed on all {policy.max_retries + 1} attempts "
        f"(max_retries={policy.max_retries})", task=task_id)


def _combine(spec: JobSpec, emitted: list[tuple[int, Any]]) -> list[tuple[int, Any]]:
    groups: dict[int, list] = {}
    for key, value in emitted:
        groups.setdefault(key, []).append(value)
    return [(key, v) for key, values in groups.items() for v in spec.combiner(key, values)]


def _map_task(spec: JobSpec, task: int, split: list):
    def body(kill_at):
        ctx = TaskContext()
        for i, (key, value) in enumerate(split):
            if i == kill_at:
                raise TaskKilled
            spec.mapper(key, value, ctx)
        if kill_at == len(split):
            raise TaskKilled
        pairs = _combine(spec, ctx.emitted) if spec.combiner else ctx.emitted
        n_reduce = spec.num_reduce_tasks
        buckets: list[list[tuple[int, str]]] = [[] for _ in range(n_reduce)]
        encode = spec.codec.encode
        for key, value in pairs:
            buckets[partition(key, n_reduce)].append((key, encode(value)))
        return buckets, ctx.side_records, len(ctx.emitted), len(pairs)

    (buckets, side, n_emitted, n_out), outcome = _with_retries(spec, "map", task, len(split), body)
    outcome.records_out = n_out
    return buckets, side, n_emitted, outcome


def _reduce_task(spec: JobSpec, task: int, entries: list[tuple[int, str]]):
    def body(kill_at):
        groups: dict[int, list] = {}
        decode = spec.codec.decode
        for key, payload in entries:
            group = groups.get(key)
            if group is None:
                group = groups[key] = []
            group.append(decode(payload))
        out = []
        for i, key in enumerate(sorted(groups)):
            if i == kill_at:
                raise TaskKilled
            values = groups[key]
            if spec.value_order is not None:
                values.sort(key=spec.value_order)
            out.extend(spec.reducer(key, values))
        if kill_at is not None and kill_at >= len(groups):
            raise TaskKilled
        return out, len(groups)

    # kill points range over groups; the count is known only after decoding
    n_groups = len({key for key, _ in entries})
    (out, _), outcome = _with_retries(spec, "reduce", task, n_groups, body)
    outcome.records_in = len(entries)
    outcome.records_out = len(out)
    return out, outcome


def _pool_map(workers: int, fn, args: list):
    if workers == 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ThreadPoolExecutor(max_workers=min(workers, len(args))) as pool:
        return list(pool.map(lambda a: fn(*a), args))


def execute_job(inputs: list[tuple[int, Any]], spec: JobSpec) -> JobResult:
    splits = split_inputs(list(inputs), spec.num_map_tasks)
    map_results = _pool_map(spec.workers, lambda t, s: _map_task(spec, t, s),
                            list(enumerate(splits)))

    # Concatenating per-task buckets in task order yields (map task, emission) order.
    shuffled: list[list[tuple[int, str]]] = [[] for _ in range(spec.num_reduce_tasks)]
    side_outputs, outcomes = [], []
    n_emitted = 0
    for buckets, side, emitted, outcome in map_results:
        for r, bucket in enumerate(buckets):
            shuffled[r].extend(bucket)
        side_outputs.extend(side)
        outcomes.append(outcome)
        n_emitted += emitted

    reduce_results = _pool_map(spec.workers, lambda r, e: _reduce_task(spec, r, e),
                               list(enumerate(shuffled)))
    outputs = []
    for out, outcome in reduce_results:
        outputs.extend(out)
        outcomes.append(outcome)
    outputs.sort(key=lambda kv: kv[0])

    attempts = sum(o.attempts for o in outcomes)
    metrics = {
        "job_id": spec.job_id,
        "map_tasks": spec.num_map_tasks,
        "reduce_tasks": spec.num_reduce_tasks,
        "tasks_run": len(outcomes),
        "task_attempts": attempts,
        "retries": attempts - len(outcomes),
        "map_input_records": len(inputs),
        "map_output_records": n_emitted,
        "shuffled_records": sum(len(e) for e in shuffled),
        "bytes_shuffled": sum(len(p) for e in shuffled for _, p in e),
        "reduce_groups": sum(len({k for k, _ in e}) for e in shuffled),
        "reduce_output_records": len(outputs),
    }
    return JobResult(outputs, side_outputs, outcomes, metrics)


def run_job(inputs: list[tuple[int, Any]], spec: JobSpec) -> list[tuple[int, Any]]:
    return execute_job(inputs, spec).outputs


# -- job chaining --------------------------------------------------------------

RoundHook = Callable[[int, JobResult, network.Snapshot], None]


def run_chained(initial_snapshot, job_factory: Callable[[network.Snapshot], JobSpec],
                num_iterations: int, run_dir=None, *, in_memory: bool = False,
                retain: bool | Container[int] = True,
                on_round: RoundHook | None = None,
                metrics_path=None) -> Path:
    """Run ``num_iterations`` jobs, each turning snapshot k into snapshot k+1.

    Snapshots land in ``run_dir`` as ``iter_<k>.snap`` and each iteration
    reads its input back from disk. ``in_memory`` skips the intermediate
    files. ``retain`` keeps every snapshot (True), only the input and final
    ones (False), or those whose iteration is in the given container (plus
    input and final). Returns the path of the final snapshot.
    """
    if num_iterations < 0:
        raise ValueError(f"num_iterations must be >= 0, got {num_iterations}")
    initial_path = Path(initial_snapshot)
    run_dir = Path(run_dir) if run_dir is not None else initial_path.parent
    run_dir.mkdir(parents=True, exist_ok=True)
    snap = network.read_snapshot(initial_path)
    start = snap.iter
    path = initial_path

    def keep(k):
        if retain is True:
            return True
        if retain is False:
            return False
        return k in retain

    for i in range(num_iterations):
        k = snap.iter
        spec = job_factory(snap)
        try:
            result = execute_job([(r.id, r) for r in snap.records], spec)
        except JobFailed as exc:
            exc.iteration = k
            exc.args = (f"iteration {k}: {exc.args[0]}",)
            raise
        snap = _next_snapshot(snap, result.outputs)
        last = i == num_iterations - 1
        if not in_memory or last:
            new_path = network.write_snapshot(network.snapshot_path(run_dir, snap.iter), snap)
            if path != initial_path and not keep(k):
                os.remove(path)
            path = new_path
            if not in_memory:
                snap = network.read_snapshot(path)
        if metrics_path is not None:
            with open(metrics_path, "a") as fh:
                fh.write(json.dumps(result.metrics, sort_keys=True) + "\n")
        if on_round is not None:
            on_round(k, result, snap)
    log.info("chained %d iterations from iter %d", num_iterations, start)
    return path


def _next_snapshot(snap: network.Snapshot, outputs) -> network.Snapshot:
    records = tuple(rec for _, rec in outputs)
    if [r.id for r in records] != list(range(snap.n)):
        raise JobFailed(f"job output does not cover neuron ids 0..{snap.n - 1} exactly once")
    iters = {r.iter for r in records}
    if iters != {snap.iter + 1} and records:
        raise JobFailed(f"job output iterations {sorted(iters)} != {snap.iter + 1}")
    return network.Snapshot(snap.n_exc, snap.n_inh, snap.iter + 1, snap.seed, records)
