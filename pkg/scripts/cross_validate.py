"""Run the MapReduce path and the oracle side by side and compare every iteration.

    python scripts/cross_validate.py --exc 800 --inh 200 --ms 500 --seed 42
"""
import argparse
import hashlib
import tempfile
import time
from pathlib import Path

from cortexmr import network, oracle, simjob


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--exc", type=int, default=800)
    p.add_argument("--inh", type=int, default=200)
    p.add_argument("--ms", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--partitions", type=int, default=4)
    p.add_argument("--reduce-tasks", type=int, default=4)
    args = p.parse_args()
    spec = network.PopulationSpec(args.exc, args.inh, args.seed)

    t0 = time.perf_counter()
    want = []
    ref = oracle.simulate(spec, args.ms,
                          on_step=lambda s: want.append(hashlib.sha256(network.render_snapshot(s)).digest()))
    t1 = time.perf_counter()
    got = []
    with tempfile.TemporaryDirectory() as tmp:
        run_dir = Path(tmp)
        simjob.simulate(
            spec, args.ms, run_dir, simjob.EngineOptions(args.partitions, args.reduce_tasks),
            retain=False,
            on_round=lambda k, r, s: got.append(hashlib.sha256(network.render_snapshot(s)).digest()))
        spikes = simjob.read_spikes(run_dir / simjob.SPIKE_LOG)
    t2 = time.perf_counter()

    first = next((k + 1 for k, (a, b) in enumerate(zip(want, got)) if a != b), None)
    print(f"oracle {t1 - t0:.1f}s, engine {t2 - t1:.1f}s, spikes {len(ref.spikes)}")
    print(f"snapshots identical: {first is None} (first mismatch: {first})")
    print(f"spike logs identical: {spikes == ref.spikes}")


if __name__ == "__main__":
    main()
