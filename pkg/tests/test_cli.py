import copy
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from rngprobe import cli, entropy, extractor, pipeline, report
from rngprobe.homodyne import ChainConfig, STAGES, save_config
from rngprobe.stream import load_stream


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def sha256_file(path):
    return report.sha256_hex(path.read_bytes())


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    cfg = root / "chain.json"
    save_config(ChainConfig(n_samples=20_000, seed=7), cfg)
    for name in ("a", "b"):
        assert run_cli("simulate", "--config", cfg, "--out", root / name) == 0
    return root


# ---------------------------------------------------------------------------
# simulate


def test_simulate_writes_sixteen_streams(simulated):
    files = sorted(p.name for p in (simulated / "a").glob("*.rns"))
    assert len(files) == 16
    expected = {f"{sc}_{st}.rns" for sc in ("classical", "quantum_classical") for st in STAGES}
    assert set(files) == expected


def test_simulate_rerun_is_byte_identical(simulated):
    for p in (simulated / "a").iterdir():
        assert p.read_bytes() == (simulated / "b" / p.name).read_bytes(), p.name


def test_manifest_lists_every_file_with_digests(simulated):
    manifest = report.read_report(simulated / "a" / "manifest.json")
    assert manifest["seed"] == 7 and manifest["config"]["n_samples"] == 20_000
    assert len(manifest["files"]) == 16
    for entry in manifest["files"]:
        path = simulated / "a" / entry["file"]
        data = path.read_bytes()
        assert entry["sha256"] == report.sha256_hex(data)
        assert entry["header_sha256"] == report.sha256_hex(data[:data.index(b"\n\n") + 2])
        s = load_stream(path)
        assert s.stage.value == entry["stage"] and s.scenario.value == entry["scenario"]


def test_simulate_overrides(tmp_path):
    assert run_cli("simulate", "--n-samples", 3000, "--seed", "0x10",
                   "--scenario", "classical", "--out", tmp_path) == 0
    manifest = report.read_report(tmp_path / "manifest.json")
    assert manifest["seed"] == 16 and len(manifest["files"]) == 8


# ---------------------------------------------------------------------------
# lcg and sts


@pytest.fixture(scope="module")
def lcg16(tmp_path_factory):
    path = tmp_path_factory.mktemp("lcg") / "m16.rns"
    assert run_cli("lcg", "--log2m", 16, "--count", 300_000, "--out", path) == 0
    return path


def test_lcg_command(lcg16):
    s = load_stream(lcg16)
    assert len(s) == 300_000 and s.bit_depth == 8 and not s.signed


def test_sts_on_short_period_lcg_fails(lcg16, tmp_path):
    out = tmp_path / "sts.json"
    assert run_cli("sts", lcg16, "--n-sequences", 20, "--seq-len", 100_000, "--out", out) == 0
    doc = report.read_report(out)
    b = doc["battery"]
    assert b["total_tests"] == 8 and b["total_passed"] < 8
    assert {row["test"] for row in b["tests"]} == set(
        ["frequency", "block_frequency", "runs", "longest_run", "cumulative_sums", "fft",
         "serial", "approximate_entropy"])
    assert run_cli("sts", lcg16, "--n-sequences", 20, "--seq-len", 100_000,
                   "--out", tmp_path / "again.json") == 0
    assert out.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_sts_insufficient_bits(lcg16, tmp_path):
    assert run_cli("sts", lcg16, "--n-sequences", 100, "--seq-len", 100_000,
                   "--out", tmp_path / "x.json") == cli.EXIT_CONTRACT


# ---------------------------------------------------------------------------
# attack


ATTACK_ARGS = ("-N", 10, "-S", 1, "--train-size", 40_000, "--test-size", 4_000,
               "--test-sets", 5, "--max-epochs", 3, "--batch-size", 256, "--seed", 3,
               "--model-seed", 4)


@pytest.fixture(scope="module")
def attacked(tmp_path_factory):
    root = tmp_path_factory.mktemp("attack")
    stream = root / "m10.rns"
    assert run_cli("lcg", "--log2m", 10, "--count", 70_000, "--out", stream) == 0
    for name in ("one", "two"):
        assert run_cli("attack", stream, "--out", root / name, *ATTACK_ARGS) == 0
    return root


def test_attack_artifacts(attacked):
    names = {p.name for p in (attacked / "one").iterdir()}
    assert names == {"report.json", "histogram.csv", "autocorrelation.csv", "psd.csv",
                     "checkpoint.params", "history.json"}


def test_attack_report_echoes_seeds_and_config(attacked):
    doc = report.read_report(attacked / "one" / "report.json")
    assert doc["seeds"] == {"stream": 1, "model": 4, "train": 3}
    assert doc["config"]["window"] == 10 and doc["config"]["stride"] == 1
    assert doc["config"]["train"]["max_epochs"] == 3
    assert doc["stream"]["file"] == "m10.rns" and doc["stream"]["bit_depth"] == 8
    assert doc["evaluation"]["p_g"] == doc["entropy"]["p_g"]
    assert doc["tool_version"]


def test_short_period_lcg_is_predictable(attacked):
    ev = report.read_report(attacked / "one" / "report.json")["evaluation"]
    assert ev["advantage_sigma"] > 2


def test_attack_rerun_is_byte_identical(attacked):
    for name in ("report.json", "checkpoint.params", "histogram.csv", "psd.csv",
                 "autocorrelation.csv"):
        assert sha256_file(attacked / "one" / name) == sha256_file(attacked / "two" / name)


def test_attack_history_has_timestamps(attacked):
    hist = json.loads((attacked / "one" / "history.json").read_text())["history"]
    assert len(hist) >= 1 and "timestamp" in hist[0]


def test_attack_insufficient_data(attacked, tmp_path):
    code = run_cli("attack", attacked / "m10.rns", "--out", tmp_path, "-N", 10,
                   "--train-size", 60_000, "--test-size", 10_000)
    assert code == cli.EXIT_CONTRACT


def test_attack_stage_tag_checked(attacked, tmp_path, capsys):
    code = run_cli("attack", attacked / "m10.rns", "--out", tmp_path, "--stage", "diff",
                   *ATTACK_ARGS)
    assert code == cli.EXIT_CONTRACT
    assert "does not match" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# extract


@pytest.fixture(scope="module")
def quantum_diff(simulated):
    return simulated / "a" / "quantum_classical_diff.rns"


def test_extract_header_and_ratio(quantum_diff, tmp_path):
    out, rep = tmp_path / "h.rns", tmp_path / "extract.json"
    assert run_cli("extract", quantum_diff, "--sd-m", 20.5, "--sd-e", 6.2, "--seed", 9,
                   "--out", out, "--report", rep) == 0
    hashed = load_stream(out)
    doc = report.read_report(rep)
    h = entropy.conditional_min_entropy(20.5, 6.2, bits=13, fullscale=4095)
    assert doc["h_min_cond"] == h
    assert doc["extraction_ratio"] == extractor.extraction_ratio(h, 13, 0.5)
    assert float(hashed.meta["extraction_ratio"]) == doc["extraction_ratio"]
    assert hashed.meta["toeplitz_seed"] == doc["toeplitz_seed"]
    assert doc["hashing"] == "toeplitz"


def test_extract_deterministic_and_seed_hex(quantum_diff, tmp_path):
    a, b = tmp_path / "a.rns", tmp_path / "b.rns"
    assert run_cli("extract", quantum_diff, "--sd-m", 20.5, "--sd-e", 6.2, "--seed", 9,
                   "--out", a) == 0
    seed_hex = load_stream(a).meta["toeplitz_seed"]
    assert run_cli("extract", quantum_diff, "--sd-m", 20.5, "--sd-e", 6.2,
                   "--seed-hex", seed_hex, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_extract_refuses_without_quantum_excess(quantum_diff, tmp_path, capsys):
    code = run_cli("extract", quantum_diff, "--sd-m", 5, "--sd-e", 6, "--seed", 1,
                   "--out", tmp_path / "x.rns")
    assert code == cli.EXIT_CONTRACT
    assert "refusing to extract" in capsys.readouterr().err
    assert not (tmp_path / "x.rns").exists()


# ---------------------------------------------------------------------------
# reports and exit codes


def sts_doc():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 256, 20 * 1000 // 8 * 8).astype(np.int64)
    from rngprobe.stream import SampleStream
    return pipeline.battery(SampleStream(values=bits, bit_depth=8, signed=False), 10, 1000)


def test_schema_rejects_unknown_fields():
    doc = sts_doc()
    report.validate(doc)
    bad = copy.deepcopy(doc)
    bad["extra"] = 1
    with pytest.raises(report.ReportError):
        report.validate(bad)
    bad = copy.deepcopy(doc)
    bad["battery"]["tests"][0]["note"] = "x"
    with pytest.raises(report.ReportError):
        report.validate(bad)


def test_schema_rejects_non_finite_numbers():
    bad = sts_doc()
    bad["battery"]["alpha"] = math.nan
    with pytest.raises(report.ReportError):
        report.validate(bad)


def test_report_serialisation_is_canonical(tmp_path):
    doc = sts_doc()
    report.write_report(doc, tmp_path / "r.json")
    text = (tmp_path / "r.json").read_text()
    assert text == report.dumps(doc)
    assert report.read_report(tmp_path / "r.json") == json.loads(text)


@pytest.mark.parametrize("kind", ["attack", "sts", "extract", "manifest"])
def test_schema_command(kind, capsys):
    assert run_cli("schema", kind) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["additionalProperties"] is False


def test_missing_stream_is_io_error(tmp_path):
    assert run_cli("sts", tmp_path / "absent.rns", "--out", tmp_path / "r.json") == cli.EXIT_IO


def test_bad_config_is_contract_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_samples": 100, "oversample": 1}))
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_CONTRACT
    cfg.write_text(json.dumps({"n_samples": 100, "volume": 11}))
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_CONTRACT


def test_corrupt_stream_is_contract_error(tmp_path):
    bad = tmp_path / "bad.rns"
    bad.write_bytes(b"format_version: 1\ncount: 5\n\n")
    assert run_cli("sts", bad, "--out", tmp_path / "r.json") == cli.EXIT_CONTRACT


def test_console_entry_point_and_thread_variable(tmp_path):
    env = dict(os.environ, RNGPROBE_THREADS="1")
    env.pop("OMP_NUM_THREADS", None)
    res = subprocess.run([sys.executable, "-m", "rngprobe", "lcg", "--log2m", "12",
                          "--count", "100", "--out", str(tmp_path / "s.rns")],
                         env=env, capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["count"] == 100
    res = subprocess.run([sys.executable, "-c",
                          "import os; from rngprobe import cli; cli._apply_threads(); "
                          "print(os.environ['OMP_NUM_THREADS'])"],
                         env=env, capture_output=True, text=True)
    assert res.stdout.strip() == "1"
