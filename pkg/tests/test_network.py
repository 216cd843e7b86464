import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cortexmr import network, rng
from cortexmr.network import Kind, NeuronRecord, PopulationSpec
from cortexmr.neuron import NeuronParams, NeuronState


def test_excitatory_params_at_endpoints():
    assert network.neuron_params(Kind.EXCITATORY, 0.0) == NeuronParams(0.02, 0.2, -65.0, 8.0)
    p = network.neuron_params(Kind.EXCITATORY, 1.0)
    assert (p.c, p.d) == (-50.0, 2.0)


def test_inhibitory_params_at_endpoints():
    assert network.neuron_params(Kind.INHIBITORY, 0.0) == NeuronParams(0.02, 0.25, -65.0, 2.0)
    p = network.neuron_params(Kind.INHIBITORY, 1.0)
    assert (p.a, p.b) == pytest.approx((0.10, 0.20), abs=1e-15)


def test_population_layout(small_spec):
    recs = network.build_population(small_spec)
    assert [r.id for r in recs] == list(range(10))
    assert [r.kind for r in recs] == [Kind.EXCITATORY] * 8 + [Kind.INHIBITORY] * 2
    for r in recs:
        draw = rng.uniform(small_spec.seed, rng.Stream.BUILD, r.id, 0, 0)
        assert r.params == network.neuron_params(r.kind, draw)
        assert r.state == NeuronState(-65.0, r.params.b * -65.0)
        assert (r.sum, r.iter) == (0.0, 0)
        assert len(r.out_weights) == small_spec.n


def test_weights_use_documented_keys(small_spec):
    w = network.build_weights(small_spec, 9)
    for m in range(small_spec.n):
        assert w[m] == -1.0 * rng.uniform(small_spec.seed, rng.Stream.BUILD, 9, 0, m + 1)
    w0 = network.build_weights(small_spec, 0)
    assert w0[3] == 0.5 * rng.uniform(small_spec.seed, rng.Stream.BUILD, 0, 0, 4)


def test_build_is_pure(small_spec):
    assert network.build_population(small_spec) == network.build_population(small_spec)


def test_weight_ranges_and_mean():
    spec = PopulationSpec(800, 200, 42)
    w = np.array([network.build_weights(spec, i) for i in range(spec.n)])
    exc, inh = w[:800], w[800:]
    assert exc.min() >= 0.0 and exc.max() < 0.5
    assert inh.max() <= 0.0 and inh.min() > -1.0
    assert abs(exc.mean() - 0.25) < 0.005
    assert np.count_nonzero(w) == w.size


def test_build_weights_rejects_bad_id(small_spec):
    with pytest.raises(IndexError):
        network.build_weights(small_spec, 10)


@pytest.mark.parametrize("n_exc, n_inh", [(0, 0), (-1, 5)])
def test_population_spec_invariants(n_exc, n_inh):
    with pytest.raises(ValueError):
        PopulationSpec(n_exc, n_inh, 0)


def _bits(x):
    return struct.pack("<d", x)


def _assert_bit_identical(a, b):
    assert a.n_exc == b.n_exc and a.iter == b.iter and a.seed == b.seed
    for ra, rb in zip(a.records, b.records, strict=True):
        assert (ra.id, ra.kind, ra.iter) == (rb.id, rb.kind, rb.iter)
        for x, y in zip((ra.params.a, ra.params.b, ra.params.c, ra.params.d,
                         ra.state.v, ra.state.u, ra.sum),
                        (rb.params.a, rb.params.b, rb.params.c, rb.params.d,
                         rb.state.v, rb.state.u, rb.sum)):
            assert _bits(x) == _bits(y)
        assert b"".join(map(_bits, ra.out_weights)) == b"".join(map(_bits, rb.out_weights))


def test_snapshot_round_trip(small_spec):
    snap = network.initial_snapshot(small_spec)
    _assert_bit_identical(network.parse_snapshot(network.render_snapshot(snap)), snap)


def test_snapshot_file_round_trip(tmp_path, small_spec):
    snap = network.initial_snapshot(small_spec)
    path = network.write_snapshot(network.snapshot_path(tmp_path, 0), snap)
    assert path.name == "iter_0.snap"
    assert network.read_snapshot(path) == snap


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(finite, finite, finite)
def test_state_floats_round_trip(v, u, total):
    spec = PopulationSpec(1, 0, 3)
    rec = network.build_population(spec)[0]
    rec = NeuronRecord(rec.id, rec.kind, rec.params, NeuronState(v, u), rec.out_weights, total, 0)
    back = network.parse_record(network.render_record(rec))
    assert _bits(back.state.v) == _bits(v)
    assert _bits(back.state.u) == _bits(u)
    assert _bits(back.sum) == _bits(total)


def test_specific_value_round_trips():
    assert float(repr(-67.805)) == -67.805


def test_truncated_snapshot_is_integrity_error(small_spec):
    data = network.render_snapshot(network.initial_snapshot(small_spec))
    lines = data.split(b"\n")
    with pytest.raises(network.SnapshotIntegrityError):
        network.parse_snapshot(b"\n".join(lines[:-3]) + b"\n")


def test_malformed_record_reports_line(small_spec):
    text = network.render_snapshot(network.initial_snapshot(small_spec)).decode()
    lines = text.split("\n")
    lines[4] = lines[4].replace("\t", " ", 1)
    with pytest.raises(network.SnapshotParseError) as info:
        network.parse_snapshot("\n".join(lines))
    assert info.value.lineno == 5


def test_bad_header(small_spec):
    with pytest.raises(network.SnapshotParseError):
        network.parse_snapshot(b"nonsense\n")
    with pytest.raises(network.SnapshotIntegrityError):
        network.parse_snapshot(b"")


def test_wrong_sign_weights_rejected(small_spec):
    snap = network.initial_snapshot(small_spec)
    rec = snap.records[0]
    bad = NeuronRecord(rec.id, rec.kind, rec.params, rec.state,
                       (-0.5,) + rec.out_weights[1:], rec.sum, rec.iter)
    with pytest.raises(ValueError):
        network.parse_record(network.render_record(bad))


def test_s_matrix_orientation():
    spec = PopulationSpec(4, 1, 11)
    recs = network.build_population(spec)
    w = network.weight_matrix(recs)
    # s_ij: charge to i when j fires == out_weights[i] of j
    s = w.T
    for i in range(5):
        for j in range(5):
            assert s[i, j] == recs[j].out_weights[i]
    assert not math.isnan(s.sum())


def test_numpy_scalars_render_as_plain_floats():
    rec = NeuronRecord(0, Kind.EXCITATORY, NeuronParams(np.float64(0.02), 0.2, -65.0, 8.0),
                       NeuronState(np.float64(-65.5), -13.0), (np.float64(0.25),))
    line = network.render_record(rec)
    assert "np." not in line
    assert network.parse_record(line).params.a == 0.02
