"""Walk a simulated homodyne chain and inspect every recorded stage.

Prints the spread, the strongest spectral line and the fraction of
autocorrelation lags outside the white-noise band for each stage of both
scenarios.  A pickup tone aliased into the demodulated stage shows up as a
prominent line that the low-pass stage removes.
"""

import math

import numpy as np

from rngprobe import entropy, homodyne


def summarise(stream, first_lag):
    r, band = entropy.autocorrelation(stream.values, 200)
    outside = float(np.mean(np.abs(r[first_lag:]) > 3 * band))
    _, power = entropy.psd(stream.values, 1024)
    return stream.values.std(), entropy.peak_prominence_db(power), outside


if __name__ == "__main__":
    cfg = homodyne.ChainConfig(n_samples=200_000)
    for scenario in ("classical", "quantum_classical"):
        print(f"-- {scenario}")
        for stage, stream in homodyne.run_chain(cfg, scenario).items():
            first = math.ceil(cfg.lpf_taps / cfg.oversample) if stage.startswith("lpf") else 1
            sd, peak, outside = summarise(stream, first)
            print(f"{stage:7s} sd {sd:7.2f} LSB  peak {peak:5.1f} dB  "
                  f"lags outside band {100 * outside:4.1f}%")
