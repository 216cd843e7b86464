"""Single-neuron dynamics: two half-step Euler updates of v, then u, then reset."""
from __future__ import annotations

import math
from dataclasses import dataclass

THRESHOLD = 30.0
# Finite but absurd potentials; ordinary post-crossing overshoot stays in the low thousands.
DIVERGENCE_BOUND = 1e6


class SimulationDiverged(ArithmeticError):
    def __init__(self, neuron_id, iter, v, u):
        super().__init__(f"neuron {neuron_id} diverged at iteration {iter}: v={v!r}, u={u!r}")
        self.neuron_id = neuron_id
        self.iter = iter


@dataclass(frozen=True)
class NeuronParams:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c < THRESHOLD and self.d >= 0):
            raise ValueError(f"invalid neuron parameters {self}")


@dataclass(frozen=True)
class NeuronState:
    v: float
    u: float


def dv(v: float, u: float, current: float) -> float:
    return 0.04 * v * v + 5.0 * v + 140.0 - u + current


def step(state: NeuronState, params: NeuronParams, current: float,
         *, neuron_id: int | None = None, iter: int | None = None) -> NeuronState:
    """Advance one millisecond. Threshold handling is left to the caller.

    ``neuron_id`` and ``iter`` only label a :class:`SimulationDiverged` error.
    """
    v, u = state.v, state.u
    v = v + 0.5 * dv(v, u, current)
    v = v + 0.5 * dv(v, u, current)
    u = u + params.a * (params.b * v - u)
    if not (math.isfinite(v) and math.isfinite(u)) or abs(v) > DIVERGENCE_BOUND:
        raise SimulationDiverged(neuron_id, iter, v, u)
    return NeuronState(v, u)


def fired(state: NeuronState) -> bool:
    return state.v >= THRESHOLD


def reset(state: NeuronState, params: NeuronParams) -> NeuronState:
    if not fired(state):
        raise ValueError(f"reset called on a neuron below threshold (v={state.v!r})")
    return NeuronState(params.c, state.u + params.d)
