"""Command-line interface: exit codes, report formats, determinism."""

from pathlib import Path

import pytest

from vmasim import cli
from vmasim.elf_fixtures import build_elf
from vmasim.engine import Policy, run_trace
from vmasim.workload import gen_list_append, parse_trace

from conftest import parse_structured

FIXDIR = Path(__file__).parent / "fixtures"


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def gen_trace_file(tmp_path, capsys, rows=6, name="t.trace", extra=()):
    path = tmp_path / name
    code, out, err = run_cli(
        capsys, "gen-workload", "--rows", str(rows), "--out", str(path), *extra
    )
    assert code == cli.EXIT_OK, err
    return path


# --- gen-workload ---------------------------------------------------------------


class TestGenWorkload:
    def test_minimal_trace_is_header_plus_four_events(self, capsys):
        code, out, err = run_cli(capsys, "gen-workload", "--rows", "1")
        assert code == 0
        lines = [l for l in out.splitlines() if l and not l.startswith("#")]
        assert len(lines) == 5
        assert lines[0].startswith("H ")
        assert [l[0] for l in lines[1:]] == ["M", "F", "M", "F"]

    def test_zero_rows_rejected(self, capsys):
        code, out, err = run_cli(capsys, "gen-workload", "--rows", "0")
        assert code == cli.EXIT_INPUT_ERROR
        assert err.startswith("error:")

    def test_deterministic_output(self, tmp_path, capsys):
        a = gen_trace_file(tmp_path, capsys, rows=25, name="a.trace")
        b = gen_trace_file(tmp_path, capsys, rows=25, name="b.trace")
        assert a.read_bytes() == b.read_bytes()

    def test_output_parses_and_matches_api(self, tmp_path, capsys):
        path = gen_trace_file(tmp_path, capsys, rows=9, extra=("--row-pages", "2"))
        trace = parse_trace(path.read_text())
        direct = gen_list_append(9, 2)
        assert trace == direct


# --- simulate --------------------------------------------------------------------


class TestSimulate:
    def test_policies_reach_known_vma_counts(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=6)
        code, out, _ = run_cli(
            capsys, "simulate", str(trace_path), "--policy", "legacy"
        )
        assert code == 0
        legacy = parse_structured(out)
        # one host VMA per row plus the spine
        assert legacy["summary"]["final_host_vmas"] == "7"

        code, out, _ = run_cli(capsys, "simulate", str(trace_path), "--policy", "fixed")
        assert code == 0
        fixed = parse_structured(out)
        # fully coalesced arena plus the spine
        assert fixed["summary"]["final_host_vmas"] == "2"

    def test_structured_report_shape(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=4)
        code, out, _ = run_cli(capsys, "simulate", str(trace_path), "--policy", "fixed")
        report = parse_structured(out)
        assert report["meta"]["command"] == "simulate"
        assert report["meta"]["policy"] == "fixed"
        assert report["meta"]["trace"] == str(trace_path)
        assert report["meta"]["page_size"] == "4096"
        n_events = len(parse_trace(trace_path.read_text()).events)
        assert report["summary"]["events_applied"] == str(n_events)
        assert len(report["series"]) == n_events
        assert report["series_columns"] == [
            "seq",
            "host_vmas",
            "sentry_vmas",
            "allocated_bytes",
        ]
        assert report["summary"]["halted"] == "false"
        assert report["summary"]["breaches"] == "0"

    def test_report_matches_library_run(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=11)
        trace = parse_trace(trace_path.read_text())
        for name, policy in (("legacy", Policy.legacy()), ("fixed", Policy.fixed())):
            direct = run_trace(trace, policy)
            _, out, _ = run_cli(capsys, "simulate", str(trace_path), "--policy", name)
            report = parse_structured(out)
            assert report["summary"]["final_host_vmas"] == str(direct.final_host_vmas)
            assert report["summary"]["peak_host_vmas"] == str(direct.peak_host_vmas)
            assert report["summary"]["faults"] == str(direct.fault_count)
            assert report["summary"]["allocated_bytes"] == str(direct.allocated_bytes)

    def test_csv_format(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=3)
        code, out, _ = run_cli(
            capsys,
            "simulate",
            str(trace_path),
            "--policy",
            "fixed",
            "--format",
            "csv",
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "# command=simulate"
        assert cli.SERIES_HEADER in lines
        data = lines[lines.index(cli.SERIES_HEADER) + 1 :]
        assert data
        for row in data:
            cells = row.split(",")
            assert len(cells) == 4
            assert all(c.isdigit() for c in cells)

    def test_out_file_and_silent_stdout(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=3)
        out_path = tmp_path / "report.txt"
        code, out, _ = run_cli(
            capsys,
            "simulate",
            str(trace_path),
            "--policy",
            "fixed",
            "--out",
            str(out_path),
        )
        assert code == 0
        assert out == ""
        assert out_path.read_text().startswith("meta\n")

    def test_missing_trace_file(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "simulate", str(tmp_path / "nope.trace"), "--policy", "fixed"
        )
        assert code == cli.EXIT_INPUT_ERROR
        assert err.startswith("error:")

    def test_malformed_trace(self, tmp_path, capsys):
        bad = tmp_path / "bad.trace"
        bad.write_text("M seq=1 size=4096 dir=down prot=rw\n")
        code, _, err = run_cli(capsys, "simulate", str(bad), "--policy", "fixed")
        assert code == cli.EXIT_INPUT_ERROR
        assert err.startswith("error:")

    def test_page_size_conflict(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=3)
        code, _, err = run_cli(
            capsys,
            "simulate",
            str(trace_path),
            "--policy",
            "fixed",
            "--page-size",
            "8192",
        )
        assert code == cli.EXIT_INPUT_ERROR
        assert "page_size" in err

    def test_limit_breach_exit_code(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=6)
        code, out, _ = run_cli(
            capsys,
            "simulate",
            str(trace_path),
            "--policy",
            "legacy",
            "--max-map-count",
            "3",
        )
        assert code == cli.EXIT_LIMIT_BREACH
        report = parse_structured(out)
        assert report["summary"]["halted"] == "true"
        assert report["summary"]["breaches"] == "1"
        (breach,) = report["summary"]["breach"]
        assert "limit=3" in breach


# --- compare ---------------------------------------------------------------------


class TestCompare:
    def test_matches_individual_simulations(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=8)
        trace = parse_trace(trace_path.read_text())
        legacy = run_trace(trace, Policy.legacy())
        fixed = run_trace(trace, Policy.fixed())
        code, out, _ = run_cli(capsys, "compare", str(trace_path))
        assert code == 0
        report = parse_structured(out)
        s = report["summary"]
        assert s["final_host_vmas_legacy"] == str(legacy.final_host_vmas)
        assert s["final_host_vmas_fixed"] == str(fixed.final_host_vmas)
        assert s["peak_host_vmas_legacy"] == str(legacy.peak_host_vmas)
        assert s["peak_host_vmas_fixed"] == str(fixed.peak_host_vmas)
        assert s["faults_legacy"] == str(legacy.fault_count)
        assert s["faults_fixed"] == str(fixed.fault_count)
        want = f"{legacy.final_host_vmas / fixed.final_host_vmas:.2f}"
        assert s["ratio"] == want
        assert s["zero_activity"] == "false"

    def test_series_columns_interleave_policies(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=4)
        _, out, _ = run_cli(capsys, "compare", str(trace_path))
        report = parse_structured(out)
        assert report["series_columns"] == cli.COMPARE_SERIES_HEADER.split(",")
        n_events = len(parse_trace(trace_path.read_text()).events)
        assert len(report["series"]) == n_events
        last = report["series"][-1]
        assert last["host_vmas_legacy"] == "5"
        assert last["host_vmas_fixed"] == "2"

    def test_breach_on_either_side_exits_three(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=10)
        code, out, _ = run_cli(
            capsys, "compare", str(trace_path), "--max-map-count", "4"
        )
        assert code == cli.EXIT_LIMIT_BREACH
        report = parse_structured(out)
        assert report["summary"]["halted_legacy"] == "true"
        assert report["summary"]["halted_fixed"] == "false"
        # the fixed run outlives the halted legacy run; short rows pad with blanks
        lengths = {len(row) for row in report["series"]}
        assert lengths == {7}
        assert report["series"][-1]["host_vmas_legacy"] == ""

    def test_byte_deterministic(self, tmp_path, capsys):
        trace_path = gen_trace_file(tmp_path, capsys, rows=7)
        out_a = tmp_path / "a.txt"
        out_b = tmp_path / "b.txt"
        for out_path in (out_a, out_b):
            code, _, _ = run_cli(
                capsys,
                "compare",
                str(trace_path),
                "--format",
                "csv",
                "--out",
                str(out_path),
            )
            assert code == 0
        assert out_a.read_bytes() == out_b.read_bytes()


# --- elf-check -------------------------------------------------------------------


class TestElfCheck:
    def test_tail_fixture_flags_corruption(self, capsys):
        code, out, _ = run_cli(
            capsys, "elf-check", str(FIXDIR / "dynamic_in_tail.elf")
        )
        assert code == cli.EXIT_CORRUPTION
        lines = out.splitlines()
        assert "  LOAD,0x0,0x10000,0x200,0x300,rw,0x1000" in lines
        assert "  DYNAMIC,0x400,0x10400,0x80,0x80,r,0x8" in lines
        assert "dynamic_placement=in-aligned-extension" in lines
        assert "verdict_linux=intact" in lines
        assert "verdict_legacy=corrupted first_diff=0" in lines

    def test_linux_mode_alone_is_clean(self, capsys):
        code, out, _ = run_cli(
            capsys,
            "elf-check",
            str(FIXDIR / "dynamic_in_tail.elf"),
            "--mode",
            "linux",
        )
        assert code == cli.EXIT_OK
        assert "verdict_linux=intact" in out
        assert "verdict_legacy" not in out

    def test_inside_load_fixture_clean_in_both_modes(self, capsys):
        code, out, _ = run_cli(
            capsys, "elf-check", str(FIXDIR / "dynamic_inside_load.elf")
        )
        assert code == cli.EXIT_OK
        assert "dynamic_placement=inside-load" in out
        assert "verdict_linux=intact" in out
        assert "verdict_legacy=intact" in out

    def test_no_dynamic_segment(self, tmp_path, capsys):
        path = tmp_path / "plain.elf"
        path.write_bytes(
            build_elf([(1, 4, 0x0, 0x10000, 0x100, 0x100, 0x1000)], file_size=0x200)
        )
        code, out, _ = run_cli(capsys, "elf-check", str(path))
        assert code == cli.EXIT_OK
        assert "dynamic_placement=none" in out

    def test_not_an_elf(self, tmp_path, capsys):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"definitely not elf")
        code, _, err = run_cli(capsys, "elf-check", str(path))
        assert code == cli.EXIT_INPUT_ERROR
        assert err.startswith("error:")

    def test_out_file(self, tmp_path, capsys):
        out_path = tmp_path / "elf.txt"
        code, out, _ = run_cli(
            capsys,
            "elf-check",
            str(FIXDIR / "dynamic_inside_load.elf"),
            "--out",
            str(out_path),
        )
        assert code == 0
        assert out == ""
        assert "verdict_linux=intact" in out_path.read_text()


# --- argument handling ------------------------------------------------------------


def test_unknown_command_exits_via_argparse(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
    assert "invalid choice" in capsys.readouterr().err
