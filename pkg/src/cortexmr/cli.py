"""Command-line driver: ``cortexmr run | compare | analyze``."""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import shutil
import sys
from pathlib import Path

from . import __version__, analysis, engine, network, oracle, simjob
from .neuron import SimulationDiverged

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_MISMATCH = 0, 1, 2, 3
MANIFEST = "manifest.json"
METRICS = "metrics.json"

log = logging.getLogger("cortexmr")

# flags only meaningful for the MapReduce path
_ENGINE_FLAGS = ("partitions", "reduce_tasks", "combiner", "kill_prob", "max_retries",
                 "fault_seed", "workers", "in_memory")
_RUN_DEFAULTS = dict(mode="engine", exc=800, inh=200, ms=500, seed=42, partitions=4,
                     reduce_tasks=None, combiner="off", kill_prob=0.0, max_retries=3,
                     fault_seed=0, workers=1, in_memory=False, trace="1", keep="all")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _trace_ids(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--trace expects comma-separated ids, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cortexmr", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate the network on the engine or the oracle")
    # defaults are None so explicitly given engine flags can be rejected in oracle mode
    run.add_argument("--mode", choices=("engine", "oracle"))
    run.add_argument("--exc", type=int, help="excitatory neurons (800)")
    run.add_argument("--inh", type=int, help="inhibitory neurons (200)")
    run.add_argument("--ms", type=int, help="milliseconds to simulate (500)")
    run.add_argument("--seed", type=int, help="population and input seed (42)")
    run.add_argument("--partitions", type=int, help="map tasks per job (4)")
    run.add_argument("--reduce-tasks", type=int, help="reduce tasks per job (= partitions)")
    run.add_argument("--combiner", choices=("on", "off"))
    run.add_argument("--kill-prob", type=float, help="injected kill probability per task attempt")
    run.add_argument("--max-retries", type=int)
    run.add_argument("--fault-seed", type=int)
    run.add_argument("--workers", type=int, help="worker threads (1 = single-threaded)")
    run.add_argument("--in-memory", action="store_const", const=True,
                     help="skip intermediate snapshot files")
    run.add_argument("--trace", help="comma-separated neuron ids to trace (1)")
    run.add_argument("--keep", choices=("all", "final"),
                     help="retain every snapshot or only the first and last (all)")
    run.add_argument("--out", default="runs", help="parent directory for run directories")
    run.add_argument("--name", help="run directory name (default: timestamped)")
    run.add_argument("--manifest", type=Path, help="repeat the run recorded in a manifest")

    cmp_ = sub.add_parser("compare", help="check two run directories for bit-identity")
    cmp_.add_argument("dir_a", type=Path)
    cmp_.add_argument("dir_b", type=Path)

    ana = sub.add_parser("analyze", help="raster, traces and rate spectrum of a run")
    ana.add_argument("run_dir", type=Path)
    ana.add_argument("--out", type=Path, help="output directory (RUN_DIR/analysis)")
    return p


# -- run -----------------------------------------------------------------------

def resolve_run_args(ns: argparse.Namespace) -> dict:
    """Merge manifest, explicit flags and defaults; raise UsageError on bad combinations."""
    given = {k: getattr(ns, k) for k in _RUN_DEFAULTS if getattr(ns, k) is not None}
    base = dict(_RUN_DEFAULTS)
    if ns.manifest is not None:
        try:
            base.update(json.loads(ns.manifest.read_text())["args"])
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read manifest {ns.manifest}: {exc}") from None
    args = {**base, **given}
    if args["mode"] == "oracle":
        bad = [f"--{k.replace('_', '-')}" for k in _ENGINE_FLAGS if k in given]
        if bad:
            raise UsageError(f"{', '.join(bad)} only apply to --mode engine")
    if args["reduce_tasks"] is None:
        args["reduce_tasks"] = args["partitions"]
    if args["exc"] < 0 or args["inh"] < 0 or args["exc"] + args["inh"] < 1:
        raise UsageError("--exc and --inh must be >= 0 with at least one neuron")
    if args["ms"] < 0:
        raise UsageError("--ms must be >= 0")
    if not 0 <= args["seed"] < 2 ** 64 or not 0 <= args["fault_seed"] < 2 ** 64:
        raise UsageError("seeds must be 64-bit unsigned integers")
    if args["partitions"] < 1 or args["reduce_tasks"] < 1 or args["workers"] < 1:
        raise UsageError("--partitions, --reduce-tasks and --workers must be >= 1")
    if not 0.0 <= args["kill_prob"] <= engine.MAX_KILL_PROBABILITY:
        raise UsageError(f"--kill-prob must be in [0, {engine.MAX_KILL_PROBABILITY}]")
    if args["max_retries"] < 1:
        raise UsageError("--max-retries must be >= 1")
    try:
        ids = _trace_ids(args["trace"])
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from None
    n = args["exc"] + args["inh"]
    if any(not 0 <= i < n for i in ids):
        raise UsageError(f"--trace ids must lie in [0, {n})")
    return args


def _write_trace(run_dir: Path, neuron_id: int, variable: str, samples, start_iter=1) -> None:
    with open(run_dir / f"trace_{variable}_{neuron_id}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iter", "value"))
        w.writerows((start_iter + i, repr(x)) for i, x in enumerate(samples))


def execute_run(args: dict, run_dir: Path) -> Path:
    spec = network.PopulationSpec(args["exc"], args["inh"], args["seed"])
    trace_ids = _trace_ids(args["trace"])
    keep_all = args["keep"] == "all"
    run_dir.mkdir(parents=True, exist_ok=False)
    manifest = {
        "version": __version__,
        "created": dt.datetime.now(dt.timezone.utc).isoformat(),
        "args": args,
    }
    (run_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    traces = {i: {"v": [], "u": []} for i in trace_ids}

    if args["mode"] == "engine":
        options = simjob.EngineOptions(
            num_map_tasks=args["partitions"], num_reduce_tasks=args["reduce_tasks"],
            combiner=args["combiner"] == "on",
            fault_policy=engine.FaultPolicy(args["kill_prob"], args["max_retries"],
                                            args["fault_seed"]),
            workers=args["workers"], in_memory=args["in_memory"])
        totals = {"jobs": 0, "task_attempts": 0, "retries": 0, "bytes_shuffled": 0,
                  "shuffled_records": 0}

        def on_round(k, result, snap):
            for key in totals:
                totals[key] += 1 if key == "jobs" else result.metrics[key]
            for i, tr in traces.items():
                tr["v"].append(snap.records[i].state.v)
                tr["u"].append(snap.records[i].state.u)

        simjob.simulate(spec, args["ms"], run_dir, options, retain=keep_all, on_round=on_round)
        metrics = {"mode": "engine", **totals}
    else:
        network.write_snapshot(network.snapshot_path(run_dir, 0), network.initial_snapshot(spec))
        previous = [None]

        def on_step(snap):
            path = network.write_snapshot(network.snapshot_path(run_dir, snap.iter), snap)
            if not keep_all and previous[0] is not None:
                previous[0].unlink()
            previous[0] = path

        result = oracle.simulate(spec, args["ms"], trace_ids=trace_ids, on_step=on_step)
        simjob.append_spikes(run_dir / simjob.SPIKE_LOG, result.spikes)
        traces = result.traces
        metrics = {"mode": "oracle", "jobs": 0}

    metrics["spikes"] = len(simjob.read_spikes(run_dir / simjob.SPIKE_LOG))
    (run_dir / METRICS).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    for i, tr in traces.items():
        _write_trace(run_dir, i, "v", tr["v"])
        _write_trace(run_dir, i, "u", tr["u"])
    return run_dir


def cmd_run(ns) -> int:
    try:
        args = resolve_run_args(ns)
    except UsageError as exc:
        print(f"cortexmr run: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    name = ns.name or (f"{dt.datetime.now().strftime('%Y%m%d-%H%M%S-%f')}"
                       f"-{args['mode']}-seed{args['seed']}")
    run_dir = Path(ns.out) / name
    if run_dir.exists():
        print(f"cortexmr run: error: {run_dir} already exists", file=sys.stderr)
        return EXIT_USAGE
    try:
        execute_run(args, run_dir)
    except (engine.JobFailed, SimulationDiverged, network.SnapshotError, OSError) as exc:
        print(f"cortexmr run: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(run_dir)
    return EXIT_OK


# -- compare -------------------------------------------------------------------

_FIELDS = ("a", "b", "c", "d", "v", "u", "sum", "iter")


def _field_values(rec: network.NeuronRecord):
    p, s = rec.params, rec.state
    return dict(zip(_FIELDS, (p.a, p.b, p.c, p.d, s.v, s.u, rec.sum, rec.iter)))


def _snapshot_diff(a: network.Snapshot, b: network.Snapshot) -> str:
    for name in ("n_exc", "n_inh", "iter", "seed"):
        if getattr(a, name) != getattr(b, name):
            return f"header {name}: {getattr(a, name)!r} != {getattr(b, name)!r}"
    for ra, rb in zip(a.records, b.records):
        fa, fb = _field_values(ra), _field_values(rb)
        for name in _FIELDS:
            if repr(fa[name]) != repr(fb[name]):
                return f"neuron {ra.id} field {name}: {fa[name]!r} != {fb[name]!r}"
        for m, (wa, wb) in enumerate(zip(ra.out_weights, rb.out_weights)):
            if repr(wa) != repr(wb):
                return f"neuron {ra.id} field out_weights[{m}]: {wa!r} != {wb!r}"
    return "byte-level difference (formatting)"


def _snapshots(run_dir: Path) -> dict[int, Path]:
    out = {}
    for p in run_dir.glob("iter_*.snap"):
        try:
            out[int(p.stem.split("_", 1)[1])] = p
        except ValueError:
            continue
    return out


def compare_runs(dir_a: Path, dir_b: Path) -> tuple[bool, list[str]]:
    for d in (dir_a, dir_b):
        if not (d / simjob.SPIKE_LOG).exists() or not _snapshots(d):
            raise FileNotFoundError(f"{d} is not a complete run directory")
    snaps_a, snaps_b = _snapshots(dir_a), _snapshots(dir_b)
    report = []
    if snaps_a.keys() != snaps_b.keys():
        only_a = sorted(snaps_a.keys() - snaps_b.keys())
        only_b = sorted(snaps_b.keys() - snaps_a.keys())
        report.append(f"snapshot sets differ: only in A {only_a[:5]}, only in B {only_b[:5]}")
    for k in sorted(snaps_a.keys() & snaps_b.keys()):
        da, db = snaps_a[k].read_bytes(), snaps_b[k].read_bytes()
        if da != db:
            detail = _snapshot_diff(network.parse_snapshot(da), network.parse_snapshot(db))
            report.append(f"first divergence at iteration {k}: {detail}")
            break
    spikes_a = (dir_a / simjob.SPIKE_LOG).read_bytes().splitlines()
    spikes_b = (dir_b / simjob.SPIKE_LOG).read_bytes().splitlines()
    if spikes_a != spikes_b:
        for i, (la, lb) in enumerate(zip(spikes_a, spikes_b)):
            if la != lb:
                report.append(f"spike logs differ at line {i + 1}: {la.decode()} != {lb.decode()}")
                break
        else:
            report.append(f"spike logs differ in length: {len(spikes_a)} vs {len(spikes_b)} lines")
    if not report:
        report.append(f"bit-identical: {len(snaps_a)} snapshots and {len(spikes_a) - 1} spikes")
        return True, report
    return False, report


def cmd_compare(ns) -> int:
    try:
        same, report = compare_runs(ns.dir_a, ns.dir_b)
    except (OSError, network.SnapshotError) as exc:
        print(f"cortexmr compare: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print("\n".join(report))
    return EXIT_OK if same else EXIT_MISMATCH


# -- analyze -------------------------------------------------------------------

def analyze_run(run_dir: Path, out_dir: Path | None = None) -> dict:
    spike_log = run_dir / simjob.SPIKE_LOG
    if not spike_log.exists():
        raise FileNotFoundError(f"no spike log in {run_dir}")
    spikes = simjob.read_spikes(spike_log)
    manifest_path = run_dir / MANIFEST
    if manifest_path.exists():
        args = json.loads(manifest_path.read_text())["args"]
        num_ms, n = args["ms"], args["exc"] + args["inh"]
    else:
        snaps = _snapshots(run_dir)
        last = network.read_snapshot(snaps[max(snaps)])
        num_ms, n = last.iter, last.n
    out_dir = out_dir or run_dir / "analysis"
    out_dir.mkdir(parents=True, exist_ok=True)

    rate = analysis.population_rate(spikes, num_ms)
    freqs, mags = analysis.rate_spectrum(rate)
    with open(out_dir / "raster.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iter", "neuron_id"))
        w.writerows(spikes)
    with open(out_dir / "rate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iter", "spikes"))
        w.writerows((i + 1, int(c)) for i, c in enumerate(rate))
    with open(out_dir / "spectrum.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("freq_hz", "magnitude"))
        w.writerows((repr(float(f)), repr(float(m))) for f, m in zip(freqs, mags))
    for trace in sorted(run_dir.glob("trace_*.csv")):
        shutil.copyfile(trace, out_dir / trace.name)
    summary = analysis.summarize(spikes, num_ms, n)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_analyze(ns) -> int:
    try:
        summary = analyze_run(ns.run_dir, ns.out)
    except (OSError, ValueError) as exc:
        print(f"cortexmr analyze: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    peak = summary["peak_hz"]
    print(f"spikes: {summary['n_spikes']}  mean rate: {summary['mean_rate_hz']:.2f} Hz  "
          f"peak 1-30 Hz: {'none' if peak is None else f'{peak:g} Hz'}")
    return EXIT_OK


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return {"run": cmd_run, "compare": cmd_compare, "analyze": cmd_analyze}[ns.command](ns)


if __name__ == "__main__":
    sys.exit(main())
