import collections
import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from cortexmr import engine, network, simjob
from cortexmr.engine import FaultPolicy, JobFailed, JobSpec


def word_key(word):
    return int.from_bytes(word.encode(), "big")


def count_mapper(key, text, ctx):
    for word in text.split():
        ctx.emit(word_key(word), 1)


def count_reducer(key, values):
    total = 0
    for v in values:
        total += v
    return [(key, total)]


def identity_mapper(key, value, ctx):
    ctx.emit(key, value)


def identity_reducer(key, values):
    return [(key, v) for v in values]


def float_sum_reducer(key, values):
    total = 0.0
    for v in values:
        total += v
    return [(key, total)]


def test_word_count():
    out = engine.run_job([(1, "a"), (2, "a"), (3, "b")],
                         JobSpec(count_mapper, count_reducer, num_map_tasks=2, num_reduce_tasks=2))
    assert dict(out) == {word_key("a"): 2, word_key("b"): 1}


def test_word_count_with_combiner_matches():
    text = [(i, " ".join(random.Random(i).choice("abcde") for _ in range(20))) for i in range(30)]
    plain = engine.run_job(text, JobSpec(count_mapper, count_reducer, num_map_tasks=3))
    combined = engine.run_job(text, JobSpec(
        count_mapper, count_reducer, num_map_tasks=3, num_reduce_tasks=2,
        combiner=lambda key, values: [sum(values)]))
    assert plain == combined


def test_identity_job_preserves_multiset():
    pairs = [(random.Random(0).randrange(10) + i % 3, f"v{i}") for i in range(50)]
    out = engine.run_job(pairs, JobSpec(identity_mapper, identity_reducer,
                                        num_map_tasks=4, num_reduce_tasks=3))
    assert collections.Counter(out) == collections.Counter(pairs)
    assert [k for k, _ in out] == sorted(k for k, _ in pairs)


def _summation_inputs():
    r = random.Random(2024)
    return [(i, (i % 5, r.uniform(-1e3, 1e3))) for i in range(100)]


def _sum_mapper(key, value, ctx):
    group, x = value
    ctx.emit(group, x)


def test_summation_is_partition_invariant_with_canonical_order():
    inputs = _summation_inputs()
    # oracle: per group, values summed left to right in ascending value order
    expected = {}
    for g in range(5):
        total = 0.0
        for x in sorted(x for _, (grp, x) in inputs if grp == g):
            total += x
        expected[g] = total
    for m, r in [(1, 1), (3, 4), (8, 4), (2, 1)]:
        out = engine.run_job(inputs, JobSpec(_sum_mapper, float_sum_reducer, num_map_tasks=m,
                                             num_reduce_tasks=r, value_order=lambda x: x))
        assert dict(out) == expected


def test_reduce_values_arrive_in_map_task_emission_order():
    seen = {}

    def reducer(key, values):
        seen[key] = list(values)
        return []

    inputs = [(i, (0, float(i))) for i in range(10)]
    engine.run_job(inputs, JobSpec(_sum_mapper, reducer, num_map_tasks=3))
    assert seen[0] == [float(i) for i in range(10)]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.floats(-1e6, 1e6)), max_size=60),
       st.sampled_from([1, 2, 4, 8]), st.sampled_from([1, 2, 4, 8]))
def test_partition_invariance_property(values, m, r):
    inputs = [(i, v) for i, v in enumerate(values)]
    spec = dict(mapper=_sum_mapper, reducer=float_sum_reducer, value_order=lambda x: x)
    reference = engine.run_job(inputs, JobSpec(**spec))
    assert engine.run_job(inputs, JobSpec(**spec, num_map_tasks=m, num_reduce_tasks=r)) == reference


def test_split_inputs_is_contiguous_and_total():
    items = list(range(11))
    splits = engine.split_inputs(items, 4)
    assert [len(s) for s in splits] == [3, 3, 3, 2]
    assert list(itertools.chain(*splits)) == items
    assert engine.split_inputs([1], 3) == [[1], [], []]


def test_partition_rule():
    assert engine.partition(13, 4) == 1
    with pytest.raises(TypeError):
        engine.partition("a", 4)


def test_shuffle_totality_metrics():
    inputs = [(i, "x y z") for i in range(7)]
    result = engine.execute_job(inputs, JobSpec(count_mapper, count_reducer,
                                                num_map_tasks=3, num_reduce_tasks=2))
    m = result.metrics
    assert m["map_output_records"] == 21 == m["shuffled_records"]
    assert sum(o.records_in for o in result.outcomes if o.task_id.startswith("reduce")) == 21
    assert m["reduce_groups"] == 3
    assert all(o.status is engine.Status.SUCCEEDED for o in result.outcomes)


def test_thread_pool_matches_single_thread():
    inputs = _summation_inputs()
    kw = dict(mapper=_sum_mapper, reducer=float_sum_reducer, num_map_tasks=8,
              num_reduce_tasks=4, value_order=lambda x: x)
    assert engine.run_job(inputs, JobSpec(**kw, workers=4)) == engine.run_job(inputs, JobSpec(**kw))


# -- faults ---------------------------------------------------------------------

def _side_mapper(key, value, ctx):
    group, x = value
    ctx.emit(group, x)
    ctx.side(key)


def _fault_job(policy, **kw):
    return JobSpec(_side_mapper, float_sum_reducer, num_map_tasks=4, num_reduce_tasks=3,
                   value_order=lambda x: x, fault_policy=policy, **kw)


def test_zero_kill_probability_is_a_no_op():
    inputs = _summation_inputs()
    clean = engine.execute_job(inputs, _fault_job(engine.NO_FAULTS))
    noop = engine.execute_job(inputs, _fault_job(FaultPolicy(0.0, 5, 99)))
    assert noop.outputs == clean.outputs
    assert noop.metrics["retries"] == 0


@pytest.mark.parametrize("fault_seed", [1, 2, 3])
def test_faulted_run_matches_clean_run(fault_seed):
    inputs = _summation_inputs()
    clean = engine.execute_job(inputs, _fault_job(engine.NO_FAULTS))
    faulty = engine.execute_job(inputs, _fault_job(FaultPolicy(0.5, 20, fault_seed)))
    assert faulty.outputs == clean.outputs
    assert faulty.side_outputs == clean.side_outputs  # partial side output discarded
    assert faulty.metrics["retries"] > 0


def test_killed_attempts_are_actually_replayed():
    calls = collections.Counter()

    def mapper(key, value, ctx):
        calls[key] += 1
        ctx.emit(key % 3, 1)

    inputs = [(i, None) for i in range(40)]
    spec = JobSpec(mapper, count_reducer, num_map_tasks=4, num_reduce_tasks=2,
                   fault_policy=FaultPolicy(0.5, 20, 5))
    result = engine.execute_job(inputs, spec)
    assert dict(result.outputs) == {0: 14, 1: 13, 2: 13}
    assert sum(calls.values()) > 40


def test_retries_exhausted_fail_the_job():
    with pytest.raises(JobFailed) as info:
        engine.run_job(_summation_inputs(), _fault_job(FaultPolicy(0.9, 1, 4)))
    assert info.value.task is not None and "-" in info.value.task


def test_mapper_error_names_task():
    def boom(key, value, ctx):
        if key == 7:
            raise RuntimeError("bad record")
        ctx.emit(key, value)

    with pytest.raises(JobFailed) as info:
        engine.run_job([(i, i) for i in range(10)], JobSpec(boom, identity_reducer, num_map_tasks=2))
    assert info.value.task == "map-1"
    assert isinstance(info.value.__cause__, RuntimeError)


@pytest.mark.parametrize("kwargs", [dict(kill_probability=0.95), dict(kill_probability=-0.1),
                                    dict(max_retries=0)])
def test_fault_policy_validation(kwargs):
    with pytest.raises(ValueError):
        FaultPolicy(**kwargs)


def test_job_spec_validation():
    with pytest.raises(ValueError):
        JobSpec(identity_mapper, identity_reducer, num_map_tasks=0)


def test_repr_codec_round_trips_floats():
    codec = engine.ReprCodec()
    for x in (0.1, -67.805, 1e-310, (1, 2.5)):
        assert codec.decode(codec.encode(x)) == x


# -- chaining -------------------------------------------------------------------

@pytest.fixture
def start(tmp_path, small_spec):
    return network.write_snapshot(network.snapshot_path(tmp_path, 0),
                                  network.initial_snapshot(small_spec))


def _factory(snap):
    return simjob.make_job(snap, simjob.EngineOptions(2, 2))


def test_zero_iterations_is_identity(start):
    assert engine.run_chained(start, _factory, 0) == start


def test_each_iteration_advances_iter(start, tmp_path):
    final = engine.run_chained(start, _factory, 3)
    snap = network.read_snapshot(final)
    assert final.name == "iter_3.snap" and snap.iter == 3
    assert {r.iter for r in snap.records} == {3}
    assert {p.name for p in tmp_path.glob("iter_*.snap")} == {f"iter_{k}.snap" for k in range(4)}


def test_restart_equivalence(start, tmp_path):
    direct = engine.run_chained(start, _factory, 12, tmp_path / "direct")
    mid = engine.run_chained(start, _factory, 5, tmp_path / "split")
    resumed = engine.run_chained(mid, _factory, 7, tmp_path / "resumed")
    assert resumed.read_bytes() == direct.read_bytes()


def test_retain_false_keeps_only_ends(start, tmp_path):
    out = tmp_path / "lean"
    engine.run_chained(start, _factory, 4, out, retain=False)
    assert sorted(p.name for p in out.glob("*.snap")) == ["iter_4.snap"]
    engine.run_chained(start, _factory, 4, tmp_path / "some", retain={2})
    assert sorted(p.name for p in (tmp_path / "some").glob("*.snap")) == ["iter_2.snap",
                                                                          "iter_4.snap"]


def test_in_memory_matches_file_chaining(start, tmp_path):
    files = engine.run_chained(start, _factory, 6, tmp_path / "files")
    mem = engine.run_chained(start, _factory, 6, tmp_path / "mem", in_memory=True)
    assert mem.read_bytes() == files.read_bytes()
    assert [p.name for p in (tmp_path / "mem").glob("*.snap")] == ["iter_6.snap"]


def test_metrics_report_per_job(start, tmp_path):
    import json
    path = tmp_path / "m.jsonl"
    engine.run_chained(start, _factory, 3, tmp_path / "m", metrics_path=path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["job_id"] for r in rows] == [0, 1, 2]
    assert all(r["bytes_shuffled"] > 0 for r in rows)


def test_chain_failure_carries_iteration(start, tmp_path):
    def factory(snap):
        opts = simjob.EngineOptions(4, 4, fault_policy=FaultPolicy(0.9, 1, 3))
        return simjob.make_job(snap, opts)

    with pytest.raises(JobFailed) as info:
        engine.run_chained(start, factory, 5, tmp_path / "f")
    assert info.value.iteration is not None
    assert f"iteration {info.value.iteration}" in str(info.value)


def test_negative_iterations_rejected(start):
    with pytest.raises(ValueError):
        engine.run_chained(start, _factory, -1)
