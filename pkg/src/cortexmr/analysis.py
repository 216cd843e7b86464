"""Population-rate spectrum and summary statistics of a spike log."""
from __future__ import annotations

import numpy as np

SAMPLE_RATE_HZ = 1000.0  # one bin per simulated millisecond
ALPHA_SEARCH_BAND = (1.0, 30.0)


def population_rate(spikes, num_ms: int) -> np.ndarray:
    """Spike count per 1-ms bin; events are (iter, neuron_id) with iter in 1..num_ms."""
    rate = np.zeros(num_ms, dtype=np.int64)
    for it, _ in spikes:
        if not 1 <= it <= num_ms:
            raise ValueError(f"spike at iter {it} outside 1..{num_ms}")
        rate[it - 1] += 1
    return rate


def rate_spectrum(rate, sample_rate_hz: float = SAMPLE_RATE_HZ):
    """DFT magnitude of the mean-removed rate, no window. Returns (freqs_hz, magnitude)."""
    rate = np.asarray(rate, dtype=np.float64)
    if rate.size == 0:
        return np.zeros(0), np.zeros(0)
    mags = np.abs(np.fft.rfft(rate - rate.mean()))
    freqs = np.fft.rfftfreq(rate.size, d=1.0 / sample_rate_hz)
    return freqs, mags


def peak_frequency(freqs, mags, band=ALPHA_SEARCH_BAND, rel_tol: float = 1e-9):
    """Frequency of the largest magnitude inside ``band`` (inclusive), or None.

    Near-ties go to the lowest frequency, so a pure comb reports its fundamental.
    """
    freqs, mags = np.asarray(freqs), np.asarray(mags)
    inside = (freqs >= band[0]) & (freqs <= band[1])
    if not inside.any():
        return None
    f, m = freqs[inside], mags[inside]
    top = m.max()
    if top <= 1e-12:
        return None
    return float(f[np.flatnonzero(m >= top * (1.0 - rel_tol))[0]])


def summarize(spikes, num_ms: int, n_neurons: int) -> dict:
    rate = population_rate(spikes, num_ms)
    freqs, mags = rate_spectrum(rate)
    seconds = num_ms / SAMPLE_RATE_HZ
    return {
        "num_ms": num_ms,
        "n_neurons": n_neurons,
        "n_spikes": int(rate.sum()),
        "mean_rate_hz": float(rate.sum() / n_neurons / seconds) if num_ms else 0.0,
        "peak_hz": peak_frequency(freqs, mags),
        "peak_band_hz": list(ALPHA_SEARCH_BAND),
    }
