"""Report documents: JSON schemas, validation and deterministic serialisation.

Every report is validated before it is written; unknown fields are
rejected.  Reports carry no timestamps or timings, so rerunning a command
with the same inputs and seeds reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math

import jsonschema

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_STR = {"type": "string"}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}


def _obj(props, required=None, extra=False):
    return {
        "type": "object",
        "properties": props,
        "required": list(props) if required is None else required,
        "additionalProperties": extra,
    }


STREAM_INFO = _obj({
    "file": _STR,
    "stage": _STR,
    "scenario": _STR,
    "bit_depth": _INT,
    "signed": {"type": "boolean"},
    "count": _INT,
    "seed_provenance": _INT,
    "header_sha256": _STR,
})

BATTERY = _obj({
    "n_sequences": _INT,
    "seq_len": _INT,
    "alpha": _NUM,
    "proportion_band": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
    "uniformity_threshold": _NUM,
    "params": {"type": "object"},
    "tests": {"type": "array", "items": _obj({
        "test": _STR, "uniformity_P": _PROB, "proportion": _PROB,
        "result": {"enum": ["success", "failure"]},
    })},
    "total_passed": _INT,
    "total_tests": _INT,
})

ATTACK_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rngprobe attack report",
    **_obj({
        "kind": {"const": "attack"},
        "schema_version": {"const": SCHEMA_VERSION},
        "tool": _STR,
        "tool_version": _STR,
        "stream": STREAM_INFO,
        "seeds": _obj({"stream": _INT, "model": _INT, "train": _INT}),
        "config": _obj({
            "window": _INT, "stride": _INT, "train_size": _INT, "test_size": _INT,
            "test_sets": _INT,
            "train": {"type": "object"},
            "model": {"type": "object"},
        }),
        "dataset": _obj({
            "alphabet_size": _INT, "train_windows": _INT, "windows_per_set": _INT,
            "unseen_test_labels": _INT,
        }),
        "training": _obj({
            "epochs_run": _INT, "best_epoch": _INT, "best_val_loss": _NUM,
            "best_val_acc": _PROB, "parameter_count": _INT,
        }),
        "evaluation": _obj({
            "per_testset_accuracy": {"type": "array", "items": _PROB, "minItems": 1},
            "p_ml_mean": _PROB, "p_ml_sd": _NUM, "p_g": _PROB, "binomial_sd": _NUM,
            "sigma": _NUM, "advantage_sigma": _NUM, "within_3_sigma": {"type": "boolean"},
        }),
        "entropy": _obj({
            "p_g": _PROB, "min_entropy_bits": _NUM, "source": _STR,
        }),
        "diagnostics": _obj({
            "autocorr_band": _NUM, "autocorr_max_lag": _INT,
            "autocorr_fraction_outside_3band": _PROB, "autocorr_max_abs": _NUM,
            "psd_segment": _INT, "psd_peak_db": _NUM,
        }),
        "battery": {"oneOf": [{"type": "null"}, BATTERY]},
        "artifacts": {"type": "array", "items": _STR},
    }),
}

STS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rngprobe battery report",
    **_obj({
        "kind": {"const": "sts"},
        "schema_version": {"const": SCHEMA_VERSION},
        "tool": _STR,
        "tool_version": _STR,
        "stream": STREAM_INFO,
        "battery": BATTERY,
    }),
}

EXTRACT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rngprobe extraction report",
    **_obj({
        "kind": {"const": "extract"},
        "schema_version": {"const": SCHEMA_VERSION},
        "tool": _STR,
        "tool_version": _STR,
        "stream": STREAM_INFO,
        "output": STREAM_INFO,
        "sd_m": _NUM,
        "sd_e": _NUM,
        "snr_db": _NUM,
        "h_min_cond": _NUM,
        "bits_per_sample": _INT,
        "extraction_ratio": _NUM,
        "block_ratio": _NUM,
        "in_block_bits": _INT,
        "out_block_bits": _INT,
        "safety_factor": _NUM,
        "toeplitz_seed": _STR,
        "seed": {"type": ["integer", "null"]},
        "hashing": _STR,
    }),
}

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rngprobe simulation manifest",
    **_obj({
        "kind": {"const": "manifest"},
        "schema_version": {"const": SCHEMA_VERSION},
        "tool": _STR,
        "tool_version": _STR,
        "config": {"type": "object"},
        "seed": _INT,
        "files": {"type": "array", "items": _obj({
            "file": _STR, "scenario": _STR, "stage": _STR, "label": _STR,
            "count": _INT, "clipped": _INT, "header_sha256": _STR, "sha256": _STR,
        })},
    }),
}

SCHEMAS = {
    "attack": ATTACK_SCHEMA,
    "sts": STS_SCHEMA,
    "extract": EXTRACT_SCHEMA,
    "manifest": MANIFEST_SCHEMA,
}


class ReportError(ValueError):
    pass


def _check_finite(node, path="$"):
    if isinstance(node, float) and not math.isfinite(node):
        raise ReportError(f"non-finite number at {path}")
    if isinstance(node, dict):
        for k, v in node.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(node, (list, tuple)):
        for i, v in enumerate(node):
            _check_finite(v, f"{path}[{i}]")


def validate(report, kind=None):
    """Raise ReportError unless ``report`` matches its schema and is all finite."""
    kind = kind or report.get("kind")
    if kind not in SCHEMAS:
        raise ReportError(f"unknown report kind {kind!r}")
    try:
        jsonschema.validate(report, SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ReportError(f"{kind} report invalid at {where}: {exc.message}") from None
    _check_finite(report)
    return report


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(report, path):
    validate(report)
    text = dumps(report)
    with open(path, "w") as fh:
        fh.write(text)
    return text


def read_report(path):
    with open(path) as fh:
        return validate(json.load(fh))


def sha256_hex(data):
    return hashlib.sha256(data).hexdigest()
