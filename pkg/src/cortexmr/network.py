"""Population construction and the line-oriented snapshot format.

A snapshot is UTF-8 text. The first line is a tab-separated header::

    snapshot  v1  N=<n>  n_exc=<k>  n_inh=<m>  iter=<t>  seed=<s>

followed by one record per neuron, sorted by id, with tab-separated fields::

    id  kind(E|I)  a  b  c  d  v  u  sum  iter  w_0,w_1,...,w_{N-1}

Floats use ``repr``, the shortest decimal string that parses back to the same
binary64 value, so render/parse is the identity on every field.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .neuron import NeuronParams, NeuronState

FORMAT_TAG = "snapshot"
FORMAT_VERSION = "v1"
_RECORD_FIELDS = 11


class Kind(enum.Enum):
    EXCITATORY = "E"
    INHIBITORY = "I"


class SnapshotError(ValueError):
    pass


class SnapshotParseError(SnapshotError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class SnapshotIntegrityError(SnapshotError):
    pass


@dataclass(frozen=True)
class NeuronRecord:
    """Full per-neuron payload carried through every MapReduce round.

    ``out_weights[m]`` is the charge delivered to neuron ``m`` when this
    neuron fires.
    """

    id: int
    kind: Kind
    params: NeuronParams
    state: NeuronState
    out_weights: tuple[float, ...]
    sum: float = 0.0
    iter: int = 0

    @property
    def excitatory(self) -> bool:
        return self.kind is Kind.EXCITATORY


@dataclass(frozen=True)
class PopulationSpec:
    n_exc: int = 800
    n_inh: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_exc < 0 or self.n_inh < 0 or self.n_exc + self.n_inh < 1:
            raise ValueError(f"need n_exc, n_inh >= 0 and at least one neuron, got {self}")
        if not 0 <= self.seed <= rng.MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def n(self) -> int:
        return self.n_exc + self.n_inh


@dataclass(frozen=True)
class Snapshot:
    n_exc: int
    n_inh: int
    iter: int
    seed: int
    records: tuple[NeuronRecord, ...] = field(repr=False)

    @property
    def n(self) -> int:
        return self.n_exc + self.n_inh

    @property
    def spec(self) -> PopulationSpec:
        return PopulationSpec(self.n_exc, self.n_inh, self.seed)


def neuron_params(kind: Kind, r: float) -> NeuronParams:
    if kind is Kind.EXCITATORY:
        r2 = r * r
        return NeuronParams(0.02, 0.2, -65.0 + 15.0 * r2, 8.0 - 6.0 * r2)
    return NeuronParams(0.02 + 0.08 * r, 0.25 - 0.05 * r, -65.0, 2.0)


def kind_of(spec: PopulationSpec, neuron_id: int) -> Kind:
    return Kind.EXCITATORY if neuron_id < spec.n_exc else Kind.INHIBITORY


def build_weights(spec: PopulationSpec, neuron_id: int) -> tuple[float, ...]:
    """Dense outgoing weights of one neuron: 0.5*U excitatory, -1.0*U inhibitory."""
    if not 0 <= neuron_id < spec.n:
        raise IndexError(f"neuron id {neuron_id} outside [0, {spec.n})")
    scale = 0.5 if kind_of(spec, neuron_id) is Kind.EXCITATORY else -1.0
    u = rng.uniform_array(spec.seed, rng.Stream.BUILD, neuron_id, 0,
                          np.arange(1, spec.n + 1, dtype=np.uint64))
    return tuple((scale * u).tolist())


def build_population(spec: PopulationSpec) -> list[NeuronRecord]:
    records = []
    for i in range(spec.n):
        kind = kind_of(spec, i)
        r = rng.uniform(spec.seed, rng.Stream.BUILD, i, 0, 0)
        params = neuron_params(kind, r)
        state = NeuronState(-65.0, params.b * -65.0)
        records.append(NeuronRecord(i, kind, params, state, build_weights(spec, i)))
    return records


def initial_snapshot(spec: PopulationSpec) -> Snapshot:
    return Snapshot(spec.n_exc, spec.n_inh, 0, spec.seed, tuple(build_population(spec)))


def weight_matrix(records) -> np.ndarray:
    """Row j holds the outgoing weights of neuron j (the transpose of S)."""
    return np.array([r.out_weights for r in records], dtype=np.float64)


# -- text codec --------------------------------------------------------------

# Weights never change during a run, so the same row is rendered and parsed
# every round; caching keeps a 1000-neuron snapshot cheap to move.
# Rows parsed from the cache below are shared objects, so rendering is keyed
# by identity; the entry pins the tuple so its id cannot be reused.
_RENDER_CACHE: dict[int, tuple[tuple[float, ...], str]] = {}
_RENDER_CACHE_MAX = 8192


def _render_weights(weights: tuple[float, ...]) -> str:
    hit = _RENDER_CACHE.get(id(weights))
    if hit is not None and hit[0] is weights:
        return hit[1]
    text = ",".join(map(repr, map(float, weights)))
    if len(_RENDER_CACHE) >= _RENDER_CACHE_MAX:
        _RENDER_CACHE.clear()
    _RENDER_CACHE[id(weights)] = (weights, text)
    return text


# Keyed by neuron id; a hit needs only a string comparison, not a 20 kB hash.
_PARSE_CACHE: dict[int, tuple[str, Kind, tuple[float, ...]]] = {}


def _parse_weights(text: str, kind: Kind, neuron_id: int) -> tuple[float, ...]:
    hit = _PARSE_CACHE.get(neuron_id)
    if hit is not None and hit[1] is kind and hit[0] == text:
        return hit[2]
    weights = tuple(map(float, text.split(",")))
    if kind is Kind.EXCITATORY:
        ok = all(w >= 0.0 for w in weights)
    else:
        ok = all(w <= 0.0 for w in weights)
    if not ok:
        raise ValueError(f"{kind.name.lower()} neuron has weights of the wrong sign")
    _PARSE_CACHE[neuron_id] = (text, kind, weights)
    return weights


def render_record(rec: NeuronRecord) -> str:
    p, s = rec.params, rec.state
    # float() first: numpy scalars would otherwise render as "np.float64(...)"
    return "\t".join((
        str(rec.id), rec.kind.value,
        *(repr(float(x)) for x in (p.a, p.b, p.c, p.d, s.v, s.u, rec.sum)),
        str(rec.iter),
        _render_weights(rec.out_weights),
    ))


def parse_record(line: str) -> NeuronRecord:
    # maxsplit: the trailing weights field is never scanned for tabs
    parts = line.split("\t", _RECORD_FIELDS - 1)
    if len(parts) != _RECORD_FIELDS:
        raise ValueError(f"expected {_RECORD_FIELDS} fields, got {len(parts)}")
    neuron_id = int(parts[0])
    kind = Kind(parts[1])
    a, b, c, d, v, u, total = map(float, parts[2:9])
    return NeuronRecord(
        id=neuron_id,
        kind=kind,
        params=NeuronParams(a, b, c, d),
        state=NeuronState(v, u),
        out_weights=_parse_weights(parts[10], kind, neuron_id),
        sum=total,
        iter=int(parts[9]),
    )


def render_header(snap: Snapshot) -> str:
    return "\t".join((FORMAT_TAG, FORMAT_VERSION, f"N={snap.n}", f"n_exc={snap.n_exc}",
                      f"n_inh={snap.n_inh}", f"iter={snap.iter}", f"seed={snap.seed}"))


def render_snapshot(snap: Snapshot) -> bytes:
    lines = [render_header(snap)]
    lines.extend(render_record(r) for r in snap.records)
    lines.append("")
    return "\n".join(lines).encode("utf-8")


def _parse_header(line: str) -> dict[str, int]:
    parts = line.split("\t")
    if parts[:2] != [FORMAT_TAG, FORMAT_VERSION]:
        raise SnapshotParseError(1, f"not a {FORMAT_TAG} {FORMAT_VERSION} header")
    fields = {}
    for part in parts[2:]:
        name, sep, value = part.partition("=")
        if not sep:
            raise SnapshotParseError(1, f"malformed header field {part!r}")
        try:
            fields[name] = int(value)
        except ValueError:
            raise SnapshotParseError(1, f"non-integer header field {part!r}") from None
    missing = {"N", "n_exc", "n_inh", "iter", "seed"} - fields.keys()
    if missing:
        raise SnapshotParseError(1, f"header missing {sorted(missing)}")
    return fields


def parse_snapshot(data: bytes | str) -> Snapshot:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise SnapshotIntegrityError("empty snapshot")
    header = _parse_header(lines[0])
    n = header["N"]
    if n != header["n_exc"] + header["n_inh"]:
        raise SnapshotIntegrityError(f"header N={n} != n_exc + n_inh")
    if len(lines) - 1 != n:
        raise SnapshotIntegrityError(f"header declares {n} records, found {len(lines) - 1}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = parse_record(line)
        except (ValueError, KeyError) as exc:
            raise SnapshotParseError(lineno, str(exc)) from None
        expected_id = lineno - 2
        if rec.id != expected_id:
            raise SnapshotParseError(lineno, f"expected record id {expected_id}, got {rec.id}")
        if len(rec.out_weights) != n:
            raise SnapshotParseError(lineno, f"{len(rec.out_weights)} weights for N={n}")
        if rec.iter != header["iter"]:
            raise SnapshotIntegrityError(
                f"line {lineno}: record iter {rec.iter} != header iter {header['iter']}")
        if rec.kind is not (Kind.EXCITATORY if rec.id < header["n_exc"] else Kind.INHIBITORY):
            raise SnapshotParseError(lineno, f"neuron {rec.id} has the wrong kind")
        records.append(rec)
    return Snapshot(header["n_exc"], header["n_inh"], header["iter"], header["seed"],
                    tuple(records))


# -- files -------------------------------------------------------------------

def snapshot_path(run_dir, k: int) -> Path:
    return Path(run_dir) / f"iter_{k}.snap"


def write_snapshot(path, snap: Snapshot) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(render_snapshot(snap))
    os.replace(tmp, path)
    return path


def read_snapshot(path) -> Snapshot:
    return parse_snapshot(Path(path).read_bytes())
