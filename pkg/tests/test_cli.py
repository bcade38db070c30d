"""CLI behavior: exit codes, machine-parsable errors, run artifacts."""

import hashlib
import json

from click.testing import CliRunner

from zbgw.cli import main

DEVELCO_QR = "|X|675F67DE359BF9FEB4DF847042AF032824B5|"
BOSCH_QR = "X4CAE140FAD7E94FC70E7E8162985D165"


class TestParseQr:
    def test_develco_string_exits_zero(self):
        result = CliRunner().invoke(main, ["parse-qr", DEVELCO_QR])
        assert result.exit_code == 0
        record = json.loads(result.output)
        assert record["kind"] == "install_code"
        assert record["code_hex"] == "675f67de359bf9feb4df847042af0328"

    def test_prehashed_prints_derived_key(self):
        result = CliRunner().invoke(main, ["parse-qr", BOSCH_QR])
        assert result.exit_code == 0
        record = json.loads(result.output)
        assert record["link_key_hex"] == "4cae140fad7e94fc70e7e8162985d165"

    def test_empty_input_exits_one_with_error_line(self):
        result = CliRunner().invoke(main, ["parse-qr", ""])
        assert result.exit_code == 1
        error = json.loads(result.output)
        assert error["error"] == "EmptyInput"


class TestSimulate:
    def test_writes_report_and_artifacts(self, tmp_path):
        out = tmp_path / "run1"
        result = CliRunner().invoke(
            main,
            ["simulate", "--scenario", "office", "--hours", "1", "--seed", "1", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        report_path = out / "report.json"
        assert str(report_path) in result.output
        report = json.loads(report_path.read_text())
        assert report["joined_devices"] == 10
        assert (out / "metrics.ndjson").exists()
        assert (out / "events.ndjson").exists()

    def test_identical_seeds_identical_report_checksums(self, tmp_path):
        digests = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = CliRunner().invoke(
                main,
                ["simulate", "--scenario", "office", "--hours", "2", "--seed", "7", "--out", str(out)],
            )
            assert result.exit_code == 0, result.output
            digests.append(hashlib.sha256((out / "report.json").read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_unknown_scenario_fails_cleanly(self, tmp_path):
        result = CliRunner().invoke(
            main, ["simulate", "--scenario", "atlantis", "--hours", "1"]
        )
        assert result.exit_code == 1
        assert "error" in json.loads(result.output)

    def test_zero_hours_fails(self, tmp_path):
        result = CliRunner().invoke(
            main,
            ["simulate", "--scenario", "office", "--hours", "0", "--out", str(tmp_path / "z")],
        )
        assert result.exit_code == 1


class TestMetricsExport:
    def test_csv_from_simulated_store(self, tmp_path):
        out = tmp_path / "run"
        CliRunner().invoke(
            main,
            ["simulate", "--scenario", "office", "--hours", "1", "--seed", "2", "--out", str(out)],
        )
        result = CliRunner().invoke(
            main,
            ["metrics", "--store", str(out / "metrics.ndjson"), "--series", "mqtt.messages", "--csv"],
        )
        assert result.exit_code == 0
        lines = result.output.strip().splitlines()
        assert lines[0] == "t,value"
        assert len(lines) > 1

    def test_unknown_series_fails(self, tmp_path):
        out = tmp_path / "run"
        CliRunner().invoke(
            main,
            ["simulate", "--scenario", "office", "--hours", "1", "--seed", "2", "--out", str(out)],
        )
        result = CliRunner().invoke(
            main,
            ["metrics", "--store", str(out / "metrics.ndjson"), "--series", "nope"],
        )
        assert result.exit_code == 1
        assert json.loads(result.output)["error"] == "UnknownSeries"
