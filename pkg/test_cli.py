import csv
import json

import pytest

from poissonbalance.api import commands
from poissonbalance.main import main
from poissonbalance.models.models import VerifySuite
from poissonbalance.utils.poisson_core import expected_max
from poissonbalance.verification.oracle_harness import REPORT_COLUMNS, peak_battery
from poissonbalance.verification.suites import SuiteResult, bound_rows, pmf_rows, structure_rows


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture
def quick_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"compare_trials": 2000, "mc_streams": 2, "workers": 1}), encoding="utf-8")
    return str(path)


def test_solve_brute_force(write_instance_file, capsys):
    path = write_instance_file(2, [1.0, 1.0, 1.0, 1.0])
    assert main(["solve", "--input", path, "--epsilon", "0.5", "--algorithm", "brute"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert sorted(doc["loads"]) == [2.0, 2.0]
    assert doc["expected_max"] == pytest.approx(expected_max([2.0, 2.0]))
    assert doc["algorithm"] == "brute"


def test_solve_greedy_to_file(write_instance_file, tmp_path):
    path = write_instance_file(2, [3, 3, 2, 2, 2])
    out = tmp_path / "assignment.json"
    assert main(["solve", "--input", path, "--epsilon", "0.1", "--algorithm", "greedy",
                 "--output", str(out)]) == 0
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert doc["assignment"] == [0, 1, 0, 1, 0]
    assert doc["loads"] == [7.0, 5.0]


def test_solve_ptas_default(write_instance_file, capsys):
    path = write_instance_file(3, [1.0, 2.0, 0.5, 0.5])
    assert main(["solve", "--input", path, "--epsilon", "0.5"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["algorithm"] == "ptas"
    assert len(doc["assignment"]) == 4


def test_exit_codes(write_instance_file, tmp_path, capsys):
    missing = str(tmp_path / "missing.json")
    assert main(["solve", "--input", missing, "--epsilon", "0.5"]) == 1

    path = write_instance_file(2, [1.0, 2.0])
    assert main(["solve", "--input", path, "--epsilon", "1.5"]) == 2

    wide = write_instance_file(5, [1.0] * 6, name="wide.json")
    assert main(["solve", "--input", wide, "--epsilon", "0.5", "--algorithm", "brute"]) == 2
    assert "error:" in capsys.readouterr().err

    with pytest.raises(SystemExit):
        main(["solve", "--input", path, "--epsilon", "0.5", "--algorithm", "simplex"])


def test_unknown_config_key_is_a_parse_error(write_instance_file, tmp_path):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"tail_tolerance": 1e-6}), encoding="utf-8")
    path = write_instance_file(2, [1.0, 2.0])
    assert main(["--config", str(config), "solve", "--input", path, "--epsilon", "0.5"]) == 1


def test_config_from_environment(write_instance_file, tmp_path, monkeypatch):
    config = tmp_path / "env.json"
    config.write_text(json.dumps({"log_base": "3"}), encoding="utf-8")
    monkeypatch.setenv("PB_CONFIG", str(config))
    path = write_instance_file(2, [1.0, 2.0])
    assert main(["solve", "--input", path, "--epsilon", "0.5"]) == 1


def test_compare_table_and_csv(write_instance_file, quick_config, tmp_path, capsys):
    path = write_instance_file(2, [3.0, 3.0, 2.0, 2.0, 2.0])
    csv_path = tmp_path / "compare.csv"
    assert main(["--config", quick_config, "compare", "--input", path, "--epsilon", "0.5",
                 "--seed", "3", "--csv", str(csv_path)]) == 0
    table = capsys.readouterr().out
    for name in ("ptas", "greedy", "det-mean", "brute"):
        assert name in table
    rows = _read_csv(csv_path)
    assert [row["algorithm"] for row in rows] == ["ptas", "greedy", "det-mean", "brute"]
    best = float(rows[-1]["expected_max"])
    assert float(rows[0]["expected_max"]) <= 1.5 * best + 1e-9
    assert all(float(row["expected_max"]) >= best - 1e-9 for row in rows)


def test_compare_skips_brute_force_past_the_guard(write_instance_file, quick_config, capsys):
    path = write_instance_file(6, [1.0] * 8)
    assert main(["--config", quick_config, "compare", "--input", path, "--epsilon", "0.5"]) == 0
    assert "brute" not in capsys.readouterr().out


def _fake_suite(rows):
    def run_suite(suite):
        return SuiteResult(suite=suite, rows=rows)

    return run_suite


def test_verify_writes_the_report(monkeypatch, tmp_path):
    monkeypatch.setattr(commands, "run_suite", _fake_suite(peak_battery(count=3)))
    out = tmp_path / "report.csv"
    assert main(["verify", "--suite", "lemmas", "--out", str(out)]) == 0
    rows = _read_csv(out)
    assert len(rows) == 3
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert {row["pass"] for row in rows} == {"true"}


def test_verify_fails_on_an_asserted_row(monkeypatch, capsys):
    bad = peak_battery(count=1)[0].model_copy(update={"passed": False})
    monkeypatch.setattr(commands, "run_suite", _fake_suite([bad]))
    assert main(["verify", "--suite", "identities"]) == 2
    assert "false" in capsys.readouterr().out


def test_cheap_identity_rows_pass():
    result = SuiteResult(suite=VerifySuite.IDENTITIES, rows=pmf_rows() + bound_rows() + structure_rows())
    assert result.rows
    assert not result.failed


def test_appendix_battery_passes(tmp_path):
    out = tmp_path / "appendix.csv"
    assert main(["verify", "--suite", "appendix", "--out", str(out)]) == 0
    rows = _read_csv(out)
    trend = [row for row in rows if row["lemma"] == "small_rate.trend"]
    assert len(trend) == 3
    assert {row["pass"] for row in trend} == {"true"}
    assert any(row["lemma"] == "small_rate" for row in rows)
