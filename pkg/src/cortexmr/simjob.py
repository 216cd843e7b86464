"""The network simulation as a chain of MapReduce jobs, one per millisecond.

The mapper integrates a neuron, and if it fires sends a charge to every
neuron with a nonzero outgoing weight (inhibitory weights included), then
passes its own record on. The reducer for neuron m picks out m's record
and accumulates the incoming charges into its ``sum``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

from . import engine, network, neuron, rng
from .network import NeuronRecord

SPIKE_LOG = "spikes.csv"
METRICS_LOG = "metrics.jsonl"
THALAMIC_SCALE = {network.Kind.EXCITATORY: 5.0, network.Kind.INHIBITORY: 2.0}
COMBINED_SOURCE = -1


class IntegrityError(ValueError):
    pass


class Charge(NamedTuple):
    amount: float
    source: int


MessageValue = NeuronRecord | Charge


def thalamic_input(record: NeuronRecord, seed: int) -> float:
    u = rng.uniform(seed, rng.Stream.THALAMIC, record.id, record.iter, 0)
    return THALAMIC_SCALE[record.kind] * u


def advance(record: NeuronRecord, seed: int) -> tuple[NeuronRecord, bool]:
    """Integrate one millisecond; returns the post-reset record and whether it fired."""
    current = thalamic_input(record, seed)
    current = current + record.sum
    state = neuron.step(record.state, record.params, current,
                        neuron_id=record.id, iter=record.iter)
    spiked = neuron.fired(state)
    if spiked:
        state = neuron.reset(state, record.params)
    return replace(record, state=state, sum=0.0, iter=record.iter + 1), spiked


def charges_from(record: NeuronRecord) -> list[tuple[int, Charge]]:
    return [(m, Charge(w, record.id)) for m, w in enumerate(record.out_weights) if w != 0.0]


def map_neuron(neuron_id: int, record: NeuronRecord, seed: int,
               iter: int) -> list[tuple[int, MessageValue]]:
    if record.iter != iter:
        raise ValueError(f"record {neuron_id} is at iter {record.iter}, job expects {iter}")
    updated, spiked = advance(record, seed)
    emissions = charges_from(record) if spiked else []
    emissions.append((neuron_id, updated))
    return emissions


def _accumulate(charges) -> float:
    # explicit left-to-right loop: builtin sum() may compensate on newer Pythons
    total = 0.0
    for c in sorted(charges, key=lambda c: c.source):
        total += c.amount
    return total


def combine_charges(key: int, values: list[MessageValue]) -> list[MessageValue]:
    records = [v for v in values if isinstance(v, NeuronRecord)]
    charges = [v for v in values if isinstance(v, Charge)]
    if not charges:
        return records
    return records + [Charge(_accumulate(charges), COMBINED_SOURCE)]


def reduce_neuron(key: int, values: list[MessageValue]) -> NeuronRecord:
    records = [v for v in values if isinstance(v, NeuronRecord)]
    if len(records) != 1:
        raise IntegrityError(f"reduce group {key} holds {len(records)} neuron records, expected 1")
    charges = [v for v in values if isinstance(v, Charge)]
    return replace(records[0], sum=_accumulate(charges))


def canonical_order(value: MessageValue):
    if isinstance(value, NeuronRecord):
        return (0, value.id)
    return (1, value.source)


class MessageCodec:
    """Shuffle payloads, using the snapshot record line for neuron records."""

    def encode(self, value):
        if type(value) is Charge:
            return "C\t%r\t%d" % value
        return "R\t" + network.render_record(value)

    def decode(self, payload):
        if payload[0] == "C":
            _, amount, source = payload.split("\t")
            return Charge(float(amount), int(source))
        if payload[0] == "R":
            return network.parse_record(payload[2:])
        raise ValueError(f"unknown message tag in {payload[:16]!r}")


@dataclass(frozen=True)
class EngineOptions:
    num_map_tasks: int = 4
    num_reduce_tasks: int = 4
    combiner: bool = False
    fault_policy: engine.FaultPolicy = engine.NO_FAULTS
    workers: int = 1
    in_memory: bool = False


def neuron_mapper(seed: int, iter: int):
    """Engine mapper for round ``iter``; spikes go to the side channel as (iter+1, id)."""

    def mapper(key, record, ctx):
        if record.iter != iter:
            raise ValueError(f"record {key} is at iter {record.iter}, job expects {iter}")
        updated, spiked = advance(record, seed)
        if spiked:
            ctx.emit_many(charges_from(record))
            ctx.side((iter + 1, key))
        ctx.emit(key, updated)

    return mapper


def neuron_reducer(key, values):
    return [(key, reduce_neuron(key, values))]


def make_job(snap: network.Snapshot, options: EngineOptions = EngineOptions()) -> engine.JobSpec:
    return engine.JobSpec(
        mapper=neuron_mapper(snap.seed, snap.iter),
        reducer=neuron_reducer,
        combiner=combine_charges if options.combiner else None,
        num_map_tasks=options.num_map_tasks,
        num_reduce_tasks=options.num_reduce_tasks,
        fault_policy=options.fault_policy,
        value_order=canonical_order,
        codec=MessageCodec(),
        job_id=snap.iter,
        workers=options.workers,
    )


# -- spike log -----------------------------------------------------------------

def append_spikes(path, events) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(("iter", "neuron_id"))
        writer.writerows(sorted(events))


def read_spikes(path) -> list[tuple[int, int]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["iter", "neuron_id"]:
            raise ValueError(f"{path}: not a spike log (header {header!r})")
        return [(int(it), int(nid)) for it, nid in reader]


# -- drivers -------------------------------------------------------------------

def run(initial_snapshot, num_ms: int, run_dir, options: EngineOptions = EngineOptions(),
        *, retain=True, on_round=None) -> Path:
    """Chain ``num_ms`` rounds from a snapshot file, logging spikes and metrics."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    spike_log = run_dir / SPIKE_LOG
    if not spike_log.exists():
        append_spikes(spike_log, [])

    def hook(k, result, snap):
        append_spikes(spike_log, result.side_outputs)
        if on_round is not None:
            on_round(k, result, snap)

    return engine.run_chained(
        initial_snapshot, lambda snap: make_job(snap, options), num_ms, run_dir,
        in_memory=options.in_memory, retain=retain, on_round=hook,
        metrics_path=run_dir / METRICS_LOG)


def run_round(snapshot_path, run_dir, options: EngineOptions = EngineOptions()):
    """One millisecond: returns (path of snapshot k+1, spike events of the round)."""
    events = []
    path = run(snapshot_path, 1, run_dir, options,
               on_round=lambda k, result, snap: events.extend(sorted(result.side_outputs)))
    return path, events


def simulate(spec: network.PopulationSpec, num_ms: int, run_dir,
             options: EngineOptions = EngineOptions(), *, retain=True, on_round=None) -> Path:
    """Build the population, write ``iter_0.snap`` and run ``num_ms`` rounds."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    start = network.write_snapshot(network.snapshot_path(run_dir, 0),
                                   network.initial_snapshot(spec))
    return run(start, num_ms, run_dir, options, retain=retain, on_round=on_round)
