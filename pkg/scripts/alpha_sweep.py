"""Dominant 1-30 Hz population-rate peak and mean firing rate across seeds (oracle path)."""
import argparse

from cortexmr import analysis, network, oracle


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--ms", type=int, default=500)
    p.add_argument("--exc", type=int, default=800)
    p.add_argument("--inh", type=int, default=200)
    args = p.parse_args()
    hits = 0
    seeds = [int(s) for s in args.seeds.split(",")]
    for seed in seeds:
        spec = network.PopulationSpec(args.exc, args.inh, seed)
        res = oracle.simulate(spec, args.ms)
        s = analysis.summarize(res.spikes, args.ms, spec.n)
        in_band = s["peak_hz"] is not None and 3.0 <= s["peak_hz"] <= 15.0
        hits += in_band
        peak = "none" if s["peak_hz"] is None else f"{s['peak_hz']:.2f}"
        print(f"seed {seed:>4}: peak {peak} Hz, rate {s['mean_rate_hz']:.1f} Hz"
              f"{'' if in_band else '  (outside 3-15 Hz)'}")
    print(f"{hits}/{len(seeds)} seeds peak inside [3, 15] Hz")


if __name__ == "__main__":
    main()
