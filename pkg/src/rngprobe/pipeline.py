"""End-to-end commands as library functions.

Each function does the work of one CLI subcommand, writes its artifacts and
returns the report document.  The CLI only parses arguments and maps
exceptions to exit codes.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import dataprep, entropy, extractor, homodyne, lcg, rcnn, report, sts
from . import tensor as T
from .stream import Scenario, encode_stream, load_stream, store_stream

TOOL = "rngprobe"
SCENARIOS = (Scenario.classical, Scenario.quantum_classical)


def _header_digest(data):
    end = data.find(b"\n\n") + 2
    return report.sha256_hex(data[:end])


def stream_info(stream, file=None):
    data = encode_stream(stream)
    return {
        "file": os.path.basename(str(file)) if file is not None else "",
        "stage": stream.stage.value,
        "scenario": stream.scenario.value,
        "bit_depth": stream.bit_depth,
        "signed": stream.signed,
        "count": len(stream),
        "seed_provenance": stream.seed_provenance,
        "header_sha256": _header_digest(data),
    }


def _base(kind):
    return {"kind": kind, "schema_version": report.SCHEMA_VERSION,
            "tool": TOOL, "tool_version": __version__}


# ---------------------------------------------------------------------------
# simulate


def simulate(cfg, out_dir, scenarios=SCENARIOS, chunk=1 << 16):
    """Write ``<scenario>_<stage>.rns`` for every stage and scenario plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for scenario in scenarios:
        streams = homodyne.run_chain(cfg, scenario, chunk=chunk)
        for stage, stream in streams.items():
            name = homodyne.stream_filename(scenario, stage)
            data = encode_stream(stream)
            with open(out_dir / name, "wb") as fh:
                fh.write(data)
            files.append({
                "file": name,
                "scenario": Scenario(scenario).value,
                "stage": stage,
                "label": homodyne.STAGE_LABELS[stage],
                "count": len(stream),
                "clipped": int(stream.meta.get("clipped", 0)),
                "header_sha256": _header_digest(data),
                "sha256": report.sha256_hex(data),
            })
    manifest = dict(_base("manifest"), config=cfg.to_dict(), seed=cfg.seed, files=files)
    report.write_report(manifest, out_dir / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# lcg


def generate_lcg(a, c, m, seed, count, out_path):
    stream = lcg.emit_bytes(lcg.LcgParams(a=a, c=c, m=m, seed=seed), count)
    store_stream(stream, out_path)
    return stream


# ---------------------------------------------------------------------------
# attack


def _diagnostics(stream, max_lag=1000, segment=1024):
    values = stream.values
    lag = min(max_lag, len(values) - 1)
    r, band = entropy.autocorrelation(values, lag)
    seg = min(segment, 1 << int(math.floor(math.log2(len(values)))))
    freqs, power = entropy.psd(values, seg)
    tail = np.abs(r[1:])
    return r, band, freqs, power, {
        "autocorr_band": band,
        "autocorr_max_lag": lag,
        "autocorr_fraction_outside_3band": float(np.mean(tail > 3 * band)) if lag else 0.0,
        "autocorr_max_abs": float(tail.max()) if lag else 0.0,
        "psd_segment": seg,
        "psd_peak_db": entropy.peak_prominence_db(power),
    }


def attack(stream, out_dir=None, window=100, stride=3, train_size=500_000, test_size=20_000,
           test_sets=5, train_cfg=None, model_seed=0, spec_overrides=None,
           battery=None, stream_file=None, log=None):
    """Train the predictor on one stream and compare P_ML against P_g.

    Sizes count stream samples, split as one training block followed by
    ``test_sets`` test blocks.  P_g is the guessing probability of the
    training split histogram.  With ``out_dir`` the report, CSV series,
    checkpoint and training history are written there.

    ``battery`` optionally holds ``(n_sequences, seq_len)`` for an 8-bit stream.
    """
    train_cfg = train_cfg or rcnn.TrainConfig()
    splits = dataprep.prepare(stream, window, stride, train_size, test_size, test_sets)
    spec = rcnn.default_spec(window, splits.train.n, **(spec_overrides or {}))
    spec.validate()
    model = rcnn.build_model(spec, seed=model_seed)
    start = time.time()
    model = rcnn.train(model, splits.train, train_cfg)
    dist = entropy.histogram(splits.train_values)
    p_g = entropy.guessing_probability(dist)
    result = rcnn.evaluate(model, splits.tests, p_g)
    best = min(model.history, key=lambda rec: rec["val_loss"])
    r, band, freqs, power, diag = _diagnostics(stream)

    cfg_echo = {k: v for k, v in asdict(train_cfg).items() if k != "verbose"}
    doc = dict(_base("attack"))
    doc.update({
        "stream": stream_info(stream, stream_file),
        "seeds": {"stream": stream.seed_provenance, "model": model_seed, "train": train_cfg.seed},
        "config": {
            "window": window, "stride": stride, "train_size": train_size,
            "test_size": test_size, "test_sets": test_sets,
            "train": cfg_echo, "model": rcnn.spec_to_dict(spec),
        },
        "dataset": {
            "alphabet_size": splits.train.n,
            "train_windows": len(splits.train),
            "windows_per_set": result.windows_per_set,
            "unseen_test_labels": int(sum(int((t.labels < 0).sum()) for t in splits.tests)),
        },
        "training": {
            "epochs_run": len(model.history),
            "best_epoch": best["epoch"],
            "best_val_loss": best["val_loss"],
            "best_val_acc": best["val_acc"],
            "parameter_count": rcnn.parameter_count(spec),
        },
        "evaluation": {
            "per_testset_accuracy": [float(a) for a in result.per_testset_accuracy],
            "p_ml_mean": result.p_ml_mean,
            "p_ml_sd": result.p_ml_sd,
            "p_g": result.p_g,
            "binomial_sd": result.binomial_sd,
            "sigma": result.sigma(),
            "advantage_sigma": result.advantage_sigma,
            "within_3_sigma": result.within(3.0),
        },
        "entropy": {
            "p_g": p_g,
            "min_entropy_bits": entropy.min_entropy(p_g),
            "source": "training split histogram",
        },
        "diagnostics": diag,
        "battery": None,
        "artifacts": [],
    })
    if battery is not None:
        doc["battery"] = sts.run_battery(stream, *battery).to_dict()

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        entropy.histogram_csv(out / "histogram.csv", dist)
        entropy.autocorrelation_csv(out / "autocorrelation.csv", r, band)
        entropy.psd_csv(out / "psd.csv", freqs, power)
        with open(out / "checkpoint.params", "wb") as fh:
            T.save_params(model.params, fh)
        _write_history(out / "history.json", model.history, start)
        doc["artifacts"] = ["report.json", "histogram.csv", "autocorrelation.csv", "psd.csv",
                            "checkpoint.params", "history.json"]
        report.write_report(doc, out / "report.json")
    else:
        report.validate(doc)
    if log is not None:
        log(f"P_ML {result.p_ml_mean:.5f} +- {result.sigma():.5f}, P_g {p_g:.5f}, "
            f"advantage {result.advantage_sigma:.2f} sigma")
    return doc, model, result


def _write_history(path, history, start):
    # wall-clock fields live here, never in the report, so reports stay reproducible
    rows, t = [], start
    for rec in history:
        t += rec["seconds"]
        rows.append({
            "epoch": rec["epoch"], "train_loss": rec["train_loss"], "train_acc": rec["train_acc"],
            "val_loss": rec["val_loss"], "val_acc": rec["val_acc"],
            "seconds": rec["seconds"],
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t)),
        })
    with open(path, "w") as fh:
        json.dump({"history": rows}, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# battery


def battery(stream, n_sequences=100, seq_len=100_000, alpha=0.01, out_path=None,
            stream_file=None):
    result = sts.run_battery(stream, n_sequences, seq_len, alpha=alpha)
    doc = dict(_base("sts"), stream=stream_info(stream, stream_file), battery=result.to_dict())
    if out_path is not None:
        report.write_report(doc, out_path)
    else:
        report.validate(doc)
    return doc


# ---------------------------------------------------------------------------
# extraction


def extract(stream, sd_m, sd_e, seed, out_path=None, in_block_bits=extractor.DEFAULT_IN_BLOCK,
            safety=0.5, stream_file=None):
    """Hash ``stream`` at the rate set by its conditional min-entropy.

    ``sd_m`` and ``sd_e`` are in units of the stream's least significant bit,
    so the ADC model is ``bit_depth`` bits with one code per unit.
    """
    if sd_e <= 0 or sd_m <= sd_e:
        raise ValueError(
            f"refusing to extract: measured SD {sd_m} does not exceed electronic SD {sd_e}, "
            "so no quantum entropy is certified")
    bits = stream.bit_depth
    h = entropy.conditional_min_entropy(sd_m, sd_e, bits=bits, fullscale=(1 << (bits - 1)) - 1)
    cfg = extractor.make_config(h, bits, seed, in_block_bits=in_block_bits, safety=safety)
    hashed = extractor.extract_stream(stream, cfg, h_min_cond=h)
    if out_path is not None:
        store_stream(hashed, out_path)
    doc = dict(_base("extract"))
    doc.update({
        "stream": stream_info(stream, stream_file),
        "output": stream_info(hashed, out_path),
        "sd_m": float(sd_m), "sd_e": float(sd_e),
        "snr_db": entropy.snr_db(sd_m, sd_e),
        "h_min_cond": h,
        "bits_per_sample": bits,
        "extraction_ratio": extractor.extraction_ratio(h, bits, safety),
        "block_ratio": cfg.ratio,
        "in_block_bits": cfg.in_block_bits,
        "out_block_bits": cfg.out_block_bits,
        "safety_factor": cfg.safety_factor,
        "toeplitz_seed": cfg.seed_hex(),
        "seed": seed if isinstance(seed, int) else None,
        "hashing": "toeplitz",
    })
    report.validate(doc)
    return doc, hashed


def load(path):
    return load_stream(path)
