"""CLI entry points: run / audit / sweep exit codes and artifacts."""

import json
import struct

import pytest

from paleomag.cli import main


def run_cli(*argv):
    return main(list(argv))


def run_short_trm(out_dir):
    """A fast, audit-clean 0D run used by several tests."""
    return run_cli(
        "run", "--config", "trm", "--out", str(out_dir),
        "--set", "duration=1.0", "--set", "experiment=null",
        "--set", "output_every=20",
    )


class TestRun:
    def test_builtin_run_success(self, tmp_path):
        out = tmp_path / "run"
        assert run_short_trm(out) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["accepted"] is True
        assert manifest["audit_pass"] is True
        assert manifest["failure"] is None
        assert manifest["steps"] == 100
        assert len(manifest["config_hash"]) == 64
        assert manifest["version"]
        assert (out / "series.csv").exists()

    def test_experiment_report_written(self, tmp_path):
        out = tmp_path / "vrm"
        code = run_cli("run", "--config", "vrm", "--out", str(out),
                       "--set", "duration=0.5")
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        report = manifest["experiment_report"]
        assert report["drift_rate_measured"] == pytest.approx(
            report["drift_rate_oracle"], rel=0.01
        )
        assert (out / "experiment" / "report.json").exists()

    def test_malformed_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "out"
        assert run_cli("run", "--config", str(bad), "--out", str(out)) == 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert "JSON" in manifest["failure"]

    def test_unknown_builtin(self, tmp_path):
        assert run_cli("run", "--config", "nope", "--out", str(tmp_path / "o")) == 2

    def test_negative_j_ext(self, tmp_path):
        code = run_cli(
            "run", "--config", "trm", "--out", str(tmp_path / "o"),
            "--set", 'j_ext_schedule={"kind":"const","value":-1.0}',
        )
        assert code == 2
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert "nonnegative" in manifest["failure"]

    def test_bad_set_syntax(self, tmp_path):
        assert run_cli("run", "--config", "trm", "--out", str(tmp_path / "o"),
                       "--set", "duration") == 2


class TestAudit:
    def test_reaudit_fresh_run(self, tmp_path):
        out = tmp_path / "run"
        assert run_short_trm(out) == 0
        assert run_cli("audit", str(out)) == 0

    def test_empty_dir(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run_cli("audit", str(empty)) == 2

    def test_corrupt_snapshot(self, tmp_path):
        out = tmp_path / "run"
        assert run_short_trm(out) == 0
        pair = sorted((out / "snapshots").glob("pair_*_b.bin"))[0]
        pair.write_bytes(b"XXXXXXXX" + pair.read_bytes()[8:])
        assert run_cli("audit", str(out)) == 2

    def test_tampered_energy(self, tmp_path):
        out = tmp_path / "run"
        assert run_short_trm(out) == 0
        pair = sorted((out / "snapshots").glob("pair_*_b.bin"))[0]
        blob = bytearray(pair.read_bytes())
        (hlen,) = struct.unpack("<Q", bytes(blob[8:16]))
        # payload field order: v(2) Ee(4) Ep(4) m(2) ...; bump m_x hard
        off = 16 + hlen + 8 * (2 + 4 + 4)
        blob[off:off + 8] = struct.pack("<d", 0.75)
        pair.write_bytes(bytes(blob))
        assert run_cli("audit", str(out)) == 3


class TestSweep:
    def test_sweep_summary(self, tmp_path):
        out = tmp_path / "sweep"
        code = run_cli(
            "sweep", "--config", "vrm", "--param", "duration",
            "--values", "0.1,0.2", "--out", str(out),
            "--set", "experiment=null",
        )
        assert code == 0
        lines = (out / "summary.csv").read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("index,duration,status")
        assert (out / "run_000" / "series.csv").exists()
        assert (out / "run_001" / "series.csv").exists()

    def test_sweep_bad_value(self, tmp_path):
        code = run_cli(
            "sweep", "--config", "vrm", "--param", "duration",
            "--values", "-1.0", "--out", str(tmp_path / "s"),
        )
        assert code == 2

    def test_sweep_no_values(self, tmp_path):
        assert run_cli("sweep", "--config", "vrm", "--param", "duration",
                       "--values", "", "--out", str(tmp_path / "s")) == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("--version")
    assert exc.value.code == 0
    import paleomag
    assert paleomag.__version__ in capsys.readouterr().out
