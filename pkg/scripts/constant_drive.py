"""Inter-spike intervals of one neuron under constant input, per the half-step update."""
import argparse

import numpy as np

from cortexmr.network import Kind, neuron_params
from cortexmr.neuron import NeuronState, fired, reset, step


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--current", type=float, default=10.0)
    p.add_argument("--ms", type=int, default=3000)
    p.add_argument("--r", type=float, default=0.0, help="excitatory heterogeneity draw")
    args = p.parse_args()
    params = neuron_params(Kind.EXCITATORY, args.r)
    s, times = NeuronState(-65.0, params.b * -65.0), []
    for t in range(1, args.ms + 1):
        s = step(s, params, args.current)
        if fired(s):
            times.append(t)
            s = reset(s, params)
    isi = np.diff(times)
    print(f"{len(times)} spikes; first ISIs {isi[:10].tolist()}")
    print(f"last 20 ISIs {isi[-20:].tolist()}")
    values, counts = np.unique(isi[10:], return_counts=True)
    print("post-transient ISI histogram:", dict(zip(values.tolist(), counts.tolist())))


if __name__ == "__main__":
    main()
