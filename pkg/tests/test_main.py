"""
End-to-end tests for the command-line entry point
"""

import csv
import json

import pytest

import src.main as cli
from src.core.artifacts import RunArtifacts
from src.protocol.session import run_session

SHORT = "n_symbols = 20000\ndt_switch_s = 5e-5\n"


def _config(tmp_path, text: str):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


def _run(tmp_path, command: str, text: str, *extra: str) -> int:
    out = tmp_path / "out"
    return cli.main([command, "--config", _config(tmp_path, text), "--out", str(out), *extra])


class TestExitCodes:
    def test_config_error(self, tmp_path):
        assert _run(tmp_path, "boundary", "eta = 1.5\n") == cli.EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        code = cli.main(["boundary", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path)])
        assert code == cli.EXIT_CONFIG

    def test_undecodable_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_bytes(b"eta = 0.8\n\x80\x81\n")
        assert cli.main(["boundary", "--config", str(path), "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_infeasible_boundary(self, tmp_path):
        assert _run(tmp_path, "boundary", "eta = 0.01\ndelta = 1.0\n") == cli.EXIT_INFEASIBLE

    def test_unexpected_failure(self, tmp_path, monkeypatch):
        def boom(self):
            raise RuntimeError("disk on fire")

        monkeypatch.setattr(cli.QKDDesk, "cmd_boundary", boom)
        assert _run(tmp_path, "boundary", "seed = 1\n") == cli.EXIT_FAILURE

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            cli.main(["teleport"])


@pytest.mark.integration
class TestCommands:
    def test_lossless_boundary_is_zero(self, tmp_path):
        assert _run(tmp_path, "boundary", "eta = 1\ndelta = 0\n") == cli.EXIT_OK
        with open(tmp_path / "out" / "boundary.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["y_A", "y_B_threshold_collective", "y_B_threshold_individual"]
        assert len(rows) == 61
        assert all(r[1] == "0" and r[2] == "0" for r in rows[1:])

        manifest = RunArtifacts.load_manifest(tmp_path / "out")
        assert manifest["command"] == "boundary"
        assert manifest["config"]["eta"] == 1.0

    def test_simulate(self, tmp_path):
        assert _run(tmp_path, "simulate", SHORT + "seed = 4\n") == cli.EXIT_OK
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["symbols"] == 20_000
        assert 0 < summary["kept"] < summary["sifted"]
        assert summary["squeezing_db"] < 0
        with open(tmp_path / "out" / "points.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert len(rows) == summary["sifted"] + 1

    def test_distill_writes_matching_keys(self, tmp_path):
        assert _run(tmp_path, "distill", SHORT + "seed = 5\neta = 1\ndelta = 0\n") == cli.EXIT_OK
        out = tmp_path / "out"
        alice = (out / "alice_key.hex").read_text()
        assert alice == (out / "bob_key.hex").read_text()
        assert int(alice.split(":")[0]) > 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final_bits"] == int(alice.split(":")[0])
        assert [r["stage"] for r in summary["stages"]["rows"]] == ["raw", "post-selected", "reconciled", "final"]
        assert (out / "transcript.bin").stat().st_size == summary["bytes"]

    def test_seed_override(self, tmp_path):
        assert _run(tmp_path, "distill", SHORT + "seed = 5\neta = 1\ndelta = 0\n", "--seed", "6") == cli.EXIT_OK
        manifest = RunArtifacts.load_manifest(tmp_path / "out")
        assert manifest["config"]["seed"] == 6

    def test_empty_key_is_infeasible(self, tmp_path):
        text = SHORT + "eta = 0.4\ndelta = 0.11\npostselect = false\n"
        assert _run(tmp_path, "distill", text) == cli.EXIT_INFEASIBLE

    def test_aborted_session(self, tmp_path, monkeypatch):
        def flip_first(bits):
            bits[0] ^= 1
            return bits

        monkeypatch.setattr(cli, "run_session", lambda config: run_session(config, after_reconcile=flip_first))
        code = _run(tmp_path, "distill", SHORT + "seed = 5\neta = 1\ndelta = 0\n")
        assert code == cli.EXIT_ABORTED
        assert (tmp_path / "out" / "transcript.bin").exists()

    def test_report_prints_table(self, tmp_path, capsys):
        assert _run(tmp_path, "report", SHORT + "seed = 5\neta = 1\ndelta = 0\n") == cli.EXIT_OK
        printed = capsys.readouterr().out
        assert "post-selected" in printed
        assert "eta=1.0" in printed
