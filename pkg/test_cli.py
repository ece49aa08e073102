"""
Tests for the command-line driver
"""

import json

import pytest
from openpyxl import load_workbook

from two_level_pir.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main

GOLDEN_FLAGS = ["--n", "4", "--t1", "2", "--k1", "2", "--t2", "1", "--k2", "4"]
THREE_SERVER_FLAGS = ["--n", "3", "--t1", "2", "--k1", "2", "--t2", "1", "--k2", "3"]


@pytest.fixture
def run(tmp_path, capsys):
    """Invoke main() with a private log file and return (exit code, stdout)."""
    log_file = str(tmp_path / "pir.log")

    def invoke(*argv):
        code = main(list(argv) + ["--log-file", log_file])
        return code, capsys.readouterr().out

    return invoke


def test_rates_json_for_three_server_system(run):
    code, out = run("rates", *THREE_SERVER_FLAGS, "--format", "json")
    data = json.loads(out)
    assert code == EXIT_OK
    assert data["r_upper"] == "9/17"
    assert data["tightened_upper_bound"] == "11/21"
    assert data["best"] == "NB"


def test_rates_text_shows_tie(run):
    code, out = run("rates", *GOLDEN_FLAGS)
    assert code == EXIT_OK
    assert "16/29" in out
    assert "best scheme       tie" in out


def test_rates_csv_header(run):
    code, out = run("rates", *GOLDEN_FLAGS, "--format", "csv")
    header, row = out.strip().splitlines()
    assert code == EXIT_OK
    assert header.split(",")[:10] == ["N", "T1", "K1", "T2", "K2", "r_ns", "r_nb", "r_upper", "r_naive", "best"]
    assert row.startswith("4,2,2,1,4,16/29,16/29,32/53,8/15,tie")


def test_invalid_system_is_usage_error(run):
    code, _ = run("rates", "--n", "4", "--t1", "1", "--k1", "2", "--t2", "2", "--k2", "4")
    assert code == EXIT_USAGE


def test_missing_flag_is_usage_error(run):
    code, _ = run("rates", "--n", "4")
    assert code == EXIT_USAGE


def test_params_json_with_checks(run):
    code, out = run("params", *GOLDEN_FLAGS, "--format", "json", "--check")
    data = json.loads(out)
    assert code == EXIT_OK
    assert list(data) == ["params", "M", "L", "reduction", "d", "classes", "group_properties"]
    assert (data["M"], data["L"], data["reduction"]) == (6, 64, 4)
    assert data["group_properties"]["passed"] is True


def test_params_without_reduction(run):
    code, out = run("params", *GOLDEN_FLAGS, "--format", "json", "--no-reduce")
    assert code == EXIT_OK
    assert json.loads(out)["L"] == 256


def test_retrieve_text(run):
    code, out = run("retrieve", "--scheme", "ns", *GOLDEN_FLAGS, "--target", "1", "--seed", "42")
    assert code == EXIT_OK
    assert "downloaded 116 symbols, rate 16/29, recovery OK" in out
    assert "📊 Traffic: 237856 bytes up, 1216 bytes down" in out


def test_retrieve_auto_reports_tie(run):
    code, out = run("retrieve", *GOLDEN_FLAGS, "--target", "3", "--seed", "1")
    assert code == EXIT_OK
    assert "Auto-selected NS (rates coincide)" in out


def test_retrieve_json_over_tcp(run):
    code, out = run("retrieve", "--scheme", "nb", *THREE_SERVER_FLAGS, "--target", "2", "--seed", "5",
                    "--transport", "tcp", "--format", "json")
    data = json.loads(out)
    assert code == EXIT_OK
    assert data["downloaded"] == 54
    assert data["rate"] == "1/2"
    assert data["transport"] == "tcp"


def test_retrieve_target_out_of_range(run):
    code, _ = run("retrieve", "--scheme", "ns", *GOLDEN_FLAGS, "--target", "5")
    assert code == EXIT_USAGE


def test_retrieve_nb_without_low_messages_fails(run):
    code, _ = run("retrieve", "--scheme", "nb", "--n", "4", "--t1", "2", "--k1", "2", "--t2", "2", "--k2", "2",
                  "--target", "1")
    assert code == EXIT_FAILED


def test_retrieve_records_history(run, tmp_path):
    db = str(tmp_path / "history.db")
    assert run("retrieve", "--scheme", "ns", *GOLDEN_FLAGS, "--target", "2", "--seed", "3", "--db", db)[0] == EXIT_OK
    assert run("retrieve", "--scheme", "nb", *GOLDEN_FLAGS, "--target", "4", "--seed", "3", "--db", db)[0] == EXIT_OK

    code, out = run("history", "--db", db, "--format", "json")
    records = json.loads(out)
    assert code == EXIT_OK
    assert [r["scheme"] for r in records] == ["NB", "NS"]
    assert all(r["downloaded"] == 116 for r in records)


def test_audit_passes_for_ns(run):
    code, out = run("audit", "--scheme", "ns", *GOLDEN_FLAGS, "--protected", "high", "--trials", "1")
    assert code == EXIT_OK
    assert "PASS" in out


def test_audit_low_level_json(run):
    code, out = run("audit", "--scheme", "nb", *GOLDEN_FLAGS, "--protected", "low", "--trials", "1",
                    "--format", "json")
    data = json.loads(out)
    assert code == EXIT_OK
    assert data["verdict"] == "certified"
    assert data["level"] == 1
    assert data["protected_set"] == [1, 2, 3, 4]


def test_audit_broken_plan_fails(run):
    code, out = run("audit", *GOLDEN_FLAGS, "--broken", "--trials", "1", "--format", "json")
    data = json.loads(out)
    assert code == EXIT_FAILED
    assert data["verdict"] == "leak"
    assert data["counterexample"] is not None


def test_audit_rejects_bad_protected_list(run):
    code, _ = run("audit", "--scheme", "ns", *GOLDEN_FLAGS, "--protected", "one,two")
    assert code == EXIT_USAGE


def test_sweep_preset_to_csv(run, tmp_path):
    out_file = tmp_path / "k1_gap.csv"
    code, out = run("sweep", "--preset", "k1-gap", "--out", str(out_file))
    lines = out_file.read_text().strip().splitlines()
    assert code == EXIT_OK
    assert "8 sweep points" in out
    assert lines[0].startswith("N,T1,K1,T2,K2,r_ns")
    assert len(lines) == 9


def test_sweep_preset_to_excel(run, tmp_path):
    out_file = tmp_path / "crossover.xlsx"
    code, _ = run("sweep", "--preset", "t1-crossover", "--out", str(out_file))
    workbook = load_workbook(out_file)
    assert code == EXIT_OK
    assert workbook.sheetnames == ["Summary", "Sweep"]
    assert workbook["Sweep"].max_row == 10
    assert workbook["Summary"]["A2"].value == "Points"
    assert workbook["Summary"]["B2"].value == 9


def test_sweep_custom_range_to_stdout(run):
    code, out = run("sweep", "--vary", "T1", "--values", "2..4", "--n", "6", "--k1", "2", "--t2", "1", "--k2", "4")
    assert code == EXIT_OK
    assert len(out.strip().splitlines()) == 4


def test_sweep_empty_range_is_usage_error(run):
    code, _ = run("sweep", "--vary", "K1", "--values", "5..3", "--n", "10", "--t1", "6", "--t2", "2",
                  "--k2-offset", "4")
    assert code == EXIT_USAGE


def test_sweep_without_range_is_usage_error(run):
    code, _ = run("sweep", "--vary", "K1")
    assert code == EXIT_USAGE
