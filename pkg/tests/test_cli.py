"""Command-line surface and the JSON config layer."""

import csv
import json

import pytest

from smolin_qss import cli
from smolin_qss.config import DEFAULTS, load_config, resolve, save_config
from smolin_qss.errors import ConfigError

SMALL = ["--copies", "4", "--check-rate", "1.0", "--trials", "20"]


@pytest.fixture(autouse=True)
def isolated_config(monkeypatch, tmp_path):
    path = tmp_path / "home" / "config.json"
    monkeypatch.setenv("QSS_CONFIG", str(path))
    return path


def run_cli(capsys, *argv):
    cli.main(list(argv))
    return capsys.readouterr()


class TestConfig:
    def test_missing_default_file_is_empty(self):
        assert load_config() == {}

    def test_save_then_load(self, isolated_config):
        save_config({**DEFAULTS, "copies": 12, "unrelated": 1})
        assert json.loads(isolated_config.read_text())["copies"] == 12
        loaded = load_config()
        assert loaded["copies"] == 12
        assert "unrelated" not in loaded

    def test_explicit_file_must_exist(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"copies": 8, "colour": "red"}')
        with pytest.raises(ConfigError, match="colour"):
            load_config(path)

    def test_non_object_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_precedence(self):
        merged = resolve({"copies": 16, "trials": None}, {"copies": 8, "trials": 50, "seed": 3})
        assert merged["copies"] == 16
        assert merged["trials"] == 50
        assert merged["seed"] == 3
        assert merged["check_rate"] == DEFAULTS["check_rate"]


class TestMain:
    def test_no_command_prints_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == 1
        assert "Usage: qss" in capsys.readouterr().out

    def test_verify_states(self, capsys):
        out = run_cli(capsys, "verify-states").out
        assert "FAIL" not in out
        assert "checks passed" in out

    def test_dump_state(self, capsys):
        out = run_cli(capsys, "dump-state", "smolin4").out
        lines = out.splitlines()
        assert lines[0] == "dim=16"
        assert len(lines) == 17

    def test_run_writes_csv(self, capsys, tmp_path):
        path = tmp_path / "r.csv"
        out = run_cli(capsys, "run", *SMALL, "--strategy", "same-observable", "-m", "1", "--out", str(path)).out
        assert "same-observable" in out
        with path.open() as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 1
        assert rows[0]["m"] == "1"
        assert rows[0]["trials"] == "20"

    def test_bell_attack_on_original(self, capsys, tmp_path):
        path = tmp_path / "r.json"
        run_cli(
            capsys, "run", "--variant", "original", "--strategy", "bell-intercept", "--cheaters", "bob",
            "--copies", "6", "--observable-policy", "Z", "--trials", "10",
            "--format", "json", "--out", str(path),
        )
        (record,) = json.loads(path.read_text())
        assert record["cheater_accuracy"] == 1.0
        assert record["m"] == 6

    def test_infeasible_strategy_is_reported(self, capsys):
        out = run_cli(capsys, "run", *SMALL, "--strategy", "bell-intercept", "--cheaters", "bob").out
        assert "cannot run under the secure variant" in out

    def test_config_file_supplies_settings(self, capsys, tmp_path):
        config = tmp_path / "c.json"
        config.write_text('{"copies": 5, "trials": 7, "check_rate": 1.0}')
        path = tmp_path / "r.csv"
        run_cli(capsys, "run", "--config", str(config), "--trials", "9", "--out", str(path))
        with path.open() as f:
            (row,) = list(csv.DictReader(f))
        assert row["n"] == "5"
        assert row["trials"] == "9"

    def test_save_config(self, capsys, isolated_config):
        run_cli(capsys, "run", *SMALL, "--seed", "4", "--save-config")
        saved = json.loads(isolated_config.read_text())
        assert saved["seed"] == 4
        assert saved["copies"] == 4

    def test_invalid_setting_reports_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--copies", "1", "--trials", "5"])
        assert exc.value.code == 1
        assert capsys.readouterr().err.startswith("Error:")

    def test_bad_config_file_reports_error(self, capsys, tmp_path):
        config = tmp_path / "c.json"
        config.write_text('{"speed": 3}')
        with pytest.raises(SystemExit):
            cli.main(["run", "--config", str(config)])
        assert "speed" in capsys.readouterr().err

    def test_sweep(self, capsys):
        out = run_cli(capsys, "sweep", *SMALL, "--strategy", "same-observable", "--attacked", "0,1").out
        assert "log(escape rate) per attacked copy" in out

    def test_transcript_json_lines(self, capsys):
        out = run_cli(capsys, "transcript", "--copies", "3", "--seed", "1").out
        records = [json.loads(line) for line in out.splitlines()]
        assert records[0]["tag"] == "QubitSend"
        assert records[1]["tag"] == "Ack"
        assert any(r["tag"] == "CheckRequest" for r in records)

    def test_transcript_to_file(self, capsys, tmp_path):
        path = tmp_path / "log.jsonl"
        out = run_cli(capsys, "transcript", "--copies", "3", "--out", str(path)).out
        assert "Wrote" in out
        assert path.read_text().count("\n") > 9
