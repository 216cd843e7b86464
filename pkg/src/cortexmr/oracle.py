"""Sequential reference simulator.

One loop over milliseconds with the whole population held in numpy arrays.
It shares only population construction and the random streams with the
MapReduce path, and must agree with it bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import network, rng
from .network import NeuronRecord, Snapshot
from .neuron import DIVERGENCE_BOUND, THRESHOLD, NeuronState, SimulationDiverged


@dataclass
class OracleResult:
    snapshot: Snapshot
    spikes: list[tuple[int, int]]
    traces: dict[int, dict[str, list[float]]] = field(default_factory=dict)

    def trace(self, neuron_id: int, variable: str) -> list[float]:
        """Post-reset samples, one per simulated millisecond."""
        if variable not in ("v", "u"):
            raise ValueError(f"variable must be 'v' or 'u', got {variable!r}")
        try:
            return self.traces[neuron_id][variable]
        except KeyError:
            raise KeyError(f"neuron {neuron_id} was not traced") from None


class _Population:
    def __init__(self, snap: Snapshot):
        recs = snap.records
        self.template = recs
        self.seed = snap.seed
        self.n_exc, self.n_inh = snap.n_exc, snap.n_inh
        self.iter = snap.iter
        self.ids = np.arange(snap.n, dtype=np.uint64)
        self.a = np.array([r.params.a for r in recs])
        self.b = np.array([r.params.b for r in recs])
        self.c = np.array([r.params.c for r in recs])
        self.d = np.array([r.params.d for r in recs])
        self.v = np.array([r.state.v for r in recs])
        self.u = np.array([r.state.u for r in recs])
        self.sums = np.array([r.sum for r in recs])
        self.scale = np.where(np.arange(snap.n) < snap.n_exc, 5.0, 2.0)
        self.weights = network.weight_matrix(recs)

    def step(self) -> np.ndarray:
        v, u = self.v, self.u
        current = self.scale * rng.uniform_array(self.seed, rng.Stream.THALAMIC, self.ids, self.iter, 0)
        current = current + self.sums
        v = v + 0.5 * (0.04 * v * v + 5.0 * v + 140.0 - u + current)
        v = v + 0.5 * (0.04 * v * v + 5.0 * v + 140.0 - u + current)
        u = u + self.a * (self.b * v - u)
        bad = ~(np.isfinite(v) & np.isfinite(u)) | (np.abs(v) > DIVERGENCE_BOUND)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise SimulationDiverged(i, self.iter, float(v[i]), float(u[i]))
        fired = np.flatnonzero(v >= THRESHOLD)
        sums = np.zeros_like(self.sums)
        for j in fired:  # ascending source id
            sums = sums + self.weights[j]
        v[fired] = self.c[fired]
        u[fired] = u[fired] + self.d[fired]
        self.v, self.u, self.sums = v, u, sums
        self.iter += 1
        return fired

    def snapshot(self) -> Snapshot:
        v, u, s = self.v.tolist(), self.u.tolist(), self.sums.tolist()
        records = tuple(
            NeuronRecord(r.id, r.kind, r.params, NeuronState(v[i], u[i]), r.out_weights,
                         s[i], self.iter)
            for i, r in enumerate(self.template))
        return Snapshot(self.n_exc, self.n_inh, self.iter, self.seed, records)


def resume(snap: Snapshot, num_ms: int, *, trace_ids=(), on_step=None) -> OracleResult:
    """Continue a simulation from ``snap``; ``on_step(snapshot)`` sees every new state."""
    if num_ms < 0:
        raise ValueError(f"num_ms must be >= 0, got {num_ms}")
    pop = _Population(snap)
    for i in trace_ids:
        if not 0 <= i < snap.n:
            raise IndexError(f"trace id {i} outside [0, {snap.n})")
    traces = {i: {"v": [], "u": []} for i in trace_ids}
    spikes = []
    for _ in range(num_ms):
        fired = pop.step()
        spikes.extend((pop.iter, int(j)) for j in fired)
        for i, tr in traces.items():
            tr["v"].append(float(pop.v[i]))
            tr["u"].append(float(pop.u[i]))
        if on_step is not None:
            on_step(pop.snapshot())
    return OracleResult(pop.snapshot(), spikes, traces)


def simulate(spec: network.PopulationSpec, num_ms: int, *, trace_ids=(), on_step=None) -> OracleResult:
    return resume(network.initial_snapshot(spec), num_ms, trace_ids=trace_ids, on_step=on_step)
