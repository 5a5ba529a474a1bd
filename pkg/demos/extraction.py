"""Certify and extract randomness from the simulated difference stage.

The classical-only run gives the electronic noise level, the full run the
measured level.  Their ratio fixes the conditional min-entropy and hence how
many bits the Toeplitz hash may keep per sample.  The hashed bytes are then
checked with a short statistical battery.
"""

from rngprobe import entropy, homodyne, pipeline, sts

if __name__ == "__main__":
    cfg = homodyne.ChainConfig(n_samples=400_000)
    quantum = homodyne.run_chain(cfg, "quantum_classical", stages=("diff",))["diff"]
    classical = homodyne.run_chain(cfg, "classical", stages=("diff",))["diff"]
    sd_m, sd_e = float(quantum.values.std()), float(classical.values.std())
    doc, hashed = pipeline.extract(quantum, sd_m, sd_e, seed=7)
    print(f"sd_m {sd_m:.2f} LSB, sd_e {sd_e:.2f} LSB, SNR {doc['snr_db']:.1f} dB")
    print(f"conditional min-entropy {doc['h_min_cond']:.3f} bits of {doc['bits_per_sample']}")
    print(f"extraction ratio {doc['extraction_ratio']:.3f}, {len(hashed)} output bytes")
    p_g = entropy.guessing_probability(entropy.histogram(hashed))
    print(f"hashed P_g {p_g:.5f} (ideal {1 / 256:.5f})")
    result = sts.run_battery(hashed, 10, 100_000)
    print(f"battery: {result.total_passed}/{len(result.per_test)} tests passed")
