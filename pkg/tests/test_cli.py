"""
Tests for the pirlab command line.
"""

import io
import json

import pandas as pd
import pytest

from pirlab.cli import EXIT_FAILURE, EXIT_OK, EXIT_REFUSED, EXIT_USAGE, main, rate_table
from pirlab.scheme import normalize_table, parse_table


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


class TestCapacityCommand:
    @pytest.mark.parametrize(
        "K,N,expected",
        [("2", "2", "2/3 (≈ 0.666667)"), ("1", "9", "1/1 (≈ 1.000000)"), ("3", "3", "9/13 (≈ 0.692308)")],
    )
    def test_prints_exact_and_decimal(self, capsys, K, N, expected):
        code, out = run_cli(capsys, "capacity", K, N)
        assert code == EXIT_OK
        assert out.strip() == expected

    def test_zero_is_a_usage_error(self, capsys):
        code, out = run_cli(capsys, "capacity", "0", "2")
        assert code == EXIT_USAGE
        assert out == ""


class TestPlanCommand:
    def test_two_by_two_matches_golden(self, capsys, golden_table):
        code, out = run_cli(capsys, "plan", "2", "2", "1", "--symbolic")
        assert code == EXIT_OK
        assert len(out.strip().splitlines()) == 4
        assert normalize_table(parse_table(out)).equals(normalize_table(parse_table(golden_table(2, 2))))

    def test_single_message(self, capsys):
        _, out = run_cli(capsys, "plan", "1", "2", "1", "--symbolic")
        assert [line.split() for line in out.strip().splitlines()] == [["DB1", "DB2"], ["a1", "a2"]]

    def test_three_by_three_shape(self, capsys):
        _, out = run_cli(capsys, "plan", "3", "3", "1")
        assert parse_table(out).shape == (13, 3)

    def test_seeded_plan_shows_bit_references(self, capsys):
        code, out = run_cli(capsys, "plan", "2", "2", "2", "--seed", "3")
        assert code == EXIT_OK
        table = parse_table(out)
        assert table.shape == (3, 2)
        assert all(cell.startswith("W") for cell in table.to_numpy().ravel())

    def test_size_cap(self, capsys, restore_settings):
        restore_settings.max_kn = 3
        code, _ = run_cli(capsys, "plan", "4", "2", "1")
        assert code == EXIT_USAGE

    def test_desired_out_of_range(self, capsys):
        code, _ = run_cli(capsys, "plan", "2", "2", "3")
        assert code == EXIT_USAGE

    def test_writes_output_file(self, capsys, tmp_path):
        target = tmp_path / "plan.txt"
        code, out = run_cli(capsys, "plan", "2", "3", "1", "--output", str(target))
        assert code == EXIT_OK
        assert out == ""
        assert parse_table(target.read_text()).shape == (4, 3)


class TestRunCommand:
    def test_capacity_scheme(self, capsys):
        code, out = run_cli(capsys, "run", "--scheme", "capacity", "-K", "2", "-N", "2", "--desired", "1", "--seed", "7")
        assert code == EXIT_OK
        assert "rate 2/3 (capacity 2/3)" in out
        assert "decode OK" in out

    def test_f5_aligned(self, capsys):
        code, out = run_cli(capsys, "run", "--scheme", "f5-aligned", "--desired", "2", "--seed", "1")
        assert code == EXIT_OK
        assert "rate 1/2" in out
        assert "decode OK" in out

    def test_single_message_single_database(self, capsys):
        code, out = run_cli(capsys, "run", "--scheme", "capacity", "-K", "1", "-N", "1")
        assert code == EXIT_OK
        assert "rate 1/1" in out

    def test_long_message_is_chunked(self, capsys):
        code, out = run_cli(
            capsys, "run", "-K", "2", "-N", "2", "--length", "10", "--seed", "2", "--format", "json"
        )
        assert code == EXIT_OK
        (summary,) = json.loads(out)
        assert summary["message_bits"] == 10
        assert summary["chunks"] == 3
        assert summary["rate"] == "2/3"
        assert summary["bits_down"] == 18
        assert summary["decode_ok"] is True

    def test_all_desired_indices(self, capsys):
        code, out = run_cli(capsys, "run", "--scheme", "xor", "-K", "4", "-N", "2", "--desired", "all", "--format", "json")
        assert code == EXIT_OK
        summaries = json.loads(out)
        assert [s["desired"] for s in summaries] == [1, 2, 3, 4]
        assert {s["rate"] for s in summaries} == {"1/2"}

    def test_output_is_deterministic(self, capsys):
        args = ("run", "-K", "3", "-N", "2", "--desired", "3", "--seed", "11")
        assert run_cli(capsys, *args) == run_cli(capsys, *args)

    @pytest.mark.parametrize(
        "args",
        [
            ("run", "--scheme", "grouped22", "-K", "3", "-N", "2"),
            ("run", "-K", "2", "-N", "2", "--desired", "3"),
            ("run", "--scheme", "f5-aligned", "--length", "4"),
        ],
    )
    def test_usage_errors(self, capsys, args):
        code, _ = run_cli(capsys, *args)
        assert code == EXIT_USAGE

    def test_scheme_help_lists_descriptions(self, capsys):
        with pytest.raises(SystemExit) as exit_info:
            main(["run", "--help"])
        assert exit_info.value.code == 0
        help_text = " ".join(capsys.readouterr().out.split())
        assert "mask vector scheme" in help_text
        assert "two possible queries per database" in help_text


class TestVerifyCommand:
    def test_grouped_scheme_passes(self, capsys):
        code, out = run_cli(capsys, "verify", "--scheme", "grouped22", "--privacy", "exhaustive", "--correctness")
        assert code == EXIT_OK
        assert "privacy (exhaustive): pass" in out
        assert "correctness: pass" in out
        assert out.strip().endswith("verdict: PASS")

    def test_desired_only_fixture_fails_with_witness(self, capsys):
        code, out = run_cli(capsys, "verify", "--scheme", "broken-nomask", "--privacy", "structural")
        assert code == EXIT_FAILURE
        assert "witness: DB1; desired 1 vs 2; signature {2}" in out

    def test_capacity_structural_and_correctness(self, capsys):
        code, out = run_cli(
            capsys, "verify", "--scheme", "capacity", "-K", "4", "-N", "3",
            "--privacy", "structural", "--correctness", "--trials", "50",
        )
        assert code == EXIT_OK
        assert "correctness: pass (200 retrievals, 0 failures)" in out

    def test_exhaustive_refusal(self, capsys):
        code, _ = run_cli(capsys, "verify", "--scheme", "capacity", "-K", "2", "-N", "3", "--privacy", "exhaustive")
        assert code == EXIT_REFUSED

    def test_exhaustive_refusal_at_the_size_cap(self, capsys):
        code, out = run_cli(capsys, "verify", "--scheme", "capacity", "-K", "7", "-N", "7", "--privacy", "exhaustive")
        assert code == EXIT_REFUSED
        assert out == ""

    def test_json_report_file(self, capsys, tmp_path):
        target = tmp_path / "report.json"
        code, _ = run_cli(
            capsys, "verify", "--scheme", "asym22", "--privacy", "exhaustive", "--output", str(target)
        )
        assert code == EXIT_OK
        report = json.loads(target.read_text())
        assert report["passed"] is True
        assert report["privacy"]["mode"] == "exhaustive"
        assert report["privacy"]["tv_distance"] == "0/1"
        assert report["rate"]["achieved"] == "2/3"


class TestTableCommand:
    def test_csv_rows(self, capsys):
        code, out = run_cli(capsys, "table", "--kmax", "2", "--nmax", "4", "--format", "csv")
        assert code == EXIT_OK
        table = pd.read_csv(io.StringIO(out))
        assert list(table.columns) == [
            "K", "N", "achieved_num", "achieved_den", "capacity_num", "capacity_den", "bound",
        ]
        rows = {(r.K, r.N): r for r in table.itertuples()}
        assert (rows[(2, 2)].achieved_num, rows[(2, 2)].achieved_den, rows[(2, 2)].bound) == (2, 3, "1/2")
        assert (rows[(1, 4)].achieved_num, rows[(1, 4)].capacity_den, rows[(1, 4)].bound) == (1, 1, "3/4")

    def test_achieved_equals_capacity_everywhere(self):
        table = rate_table(5, 5)
        assert len(table) == 25
        assert (table.achieved_num == table.capacity_num).all()
        assert (table.achieved_den == table.capacity_den).all()

    def test_text_format(self, capsys):
        code, out = run_cli(capsys, "table", "--kmax", "1", "--nmax", "2")
        assert code == EXIT_OK
        assert out.splitlines()[0].split()[:2] == ["K", "N"]
