from __future__ import annotations

import csv
import io
import json
import logging
import signal
import threading

import pytest

from foel import cli
from foel.errors import SolverConvergenceError


def _run(capsys, *argv: str) -> tuple[int, str]:
    code = cli.main(list(argv))
    return code, capsys.readouterr().out


def test_spectrum_json_lists_labeled_levels(capsys):
    code, out = _run(capsys, "spectrum", "--n", "4", "--k", "2")
    document = json.loads(out)

    assert code == cli.EXIT_OK
    assert document["convention"] == "2H"
    assert [(round(level["energy"], 9), level["s"]) for level in document["levels"]] == [
        (0.0, 2.0),
        (2.0, 0.0),
        (2.0, 1.0),
        (4.0, 1.0),
        (6.0, 0.0),
    ]


def test_spectrum_csv_has_one_row_per_momentum(capsys):
    code, out = _run(capsys, "spectrum", "--n", "4", "--k", "1", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))

    assert code == cli.EXIT_OK
    assert [row["j"] for row in rows] == ["0", "1", "3", "2"]


def test_foel_reports_c6_violation(capsys):
    code, out = _run(capsys, "foel", "--n", "6")
    result = json.loads(out)["results"][0]

    assert code == cli.EXIT_OK
    assert result["holds"] is False
    assert [(v["lower"], v["upper"]) for v in result["violations"]] == [(2, 3)]
    assert result["e0_h"][1] == pytest.approx(0.5)


def test_foel_range_writes_csv_file(tmp_path, capsys):
    target = tmp_path / "out" / "e0.csv"
    code, out = _run(
        capsys, "foel", "--n-range", "4", "6", "--step", "2", "--format", "csv", "--out", str(target)
    )
    rows = list(csv.DictReader(target.read_text(encoding="utf-8").splitlines()))

    assert code == cli.EXIT_OK
    assert out == ""
    assert [(row["N"], row["k"]) for row in rows] == [
        ("4", "0"), ("4", "1"), ("4", "2"), ("6", "0"), ("6", "1"), ("6", "2"), ("6", "3"),
    ]


def test_sutherland_includes_projection(capsys):
    code, out = _run(capsys, "sutherland", "--n", "6")
    document = json.loads(out)

    assert code == cli.EXIT_OK
    assert document["all_equal"] is True
    assert document["lowest_band_monotone"] is False
    assert len(document["rows"]) == 4


def test_sutherland_rejects_chains(capsys):
    code, _ = _run(capsys, "sutherland", "--n", "6", "--geometry", "chain")
    assert code == cli.EXIT_INPUT


def test_tl_verify_passes_for_c4(capsys):
    code, out = _run(capsys, "tl-verify", "--n", "4", "--k", "1")
    document = json.loads(out)

    assert code == cli.EXIT_OK
    assert document["passed"] is True
    assert document["kernel_dimension"] == 1


def test_tl_verify_needs_k(capsys):
    code, _ = _run(capsys, "tl-verify", "--n", "4")
    assert code == cli.EXIT_INPUT


def test_bethe_single_magnon_with_ed_check(capsys):
    code, out = _run(
        capsys, "bethe", "--k", "1", "--n-start", "12", "--n-target", "8", "--ed-check"
    )
    document = json.loads(out)

    assert code == cli.EXIT_OK
    assert document["completed"] is True
    integers = [entry for entry in document["chain"] if "energy" in entry]
    assert [entry["n"] for entry in integers] == [12.0, 11.0, 10.0, 9.0, 8.0]
    for entry in integers:
        assert entry["energy"] == pytest.approx(entry["dispersion"], abs=1e-9)
        assert entry["ed_deviation"] < 1e-9


def test_bethe_ed_check_above_the_dense_threshold(monkeypatch, capsys):
    def no_dense(*args, **kwargs):
        raise AssertionError("dense solve above the threshold")

    monkeypatch.setattr("foel.bethe.full_spectrum", no_dense)
    code, out = _run(
        capsys,
        "bethe", "--k", "1", "--n-start", "40", "--n-target", "39",
        "--ed-check", "--dense-threshold", "10", "--lanczos-pad", "4",
    )
    document = json.loads(out)

    assert code == cli.EXIT_OK
    integers = [entry for entry in document["chain"] if "energy" in entry]
    assert [entry["n"] for entry in integers] == [40.0, 39.0]
    assert all(entry["ed_deviation"] < 1e-8 for entry in integers)


def test_bethe_unmatched_energies_are_left_empty(monkeypatch, capsys, caplog):
    monkeypatch.setattr(cli, "ed_match", lambda state, **kwargs: None)
    code, out = _run(
        capsys, "bethe", "--k", "1", "--n-start", "12", "--n-target", "9", "--ed-check"
    )
    integers = [entry for entry in json.loads(out)["chain"] if "energy" in entry]

    assert code == cli.EXIT_OK
    assert all(entry["ed_energy"] is None and entry["ed_deviation"] is None for entry in integers)
    warnings = [r for r in caplog.records if r.levelname == "WARNING" and "No ED level" in r.message]
    assert len(warnings) == 1


def test_lanczos_iteration_limit_reaches_the_table(monkeypatch, capsys):
    real_e0_table = cli.e0_table
    seen = {}

    def recording(*args, **kwargs):
        seen.update(kwargs)
        return real_e0_table(*args, **kwargs)

    monkeypatch.setattr(cli, "e0_table", recording)
    code, _ = _run(capsys, "foel", "--n", "6", "--method", "lanczos", "--max-lanczos-iter", "700")

    assert code == cli.EXIT_OK
    assert seen["max_iter"] == 700
    assert seen["method"] == "lanczos"


def test_invalid_lanczos_settings_exit_with_input_code(capsys):
    code, _ = _run(capsys, "foel", "--n", "6", "--max-lanczos-iter", "0")
    assert code == cli.EXIT_INPUT


def test_curve_csv(capsys):
    code, out = _run(capsys, "curve", "--samples", "5", "--format", "csv")
    lines = out.splitlines()

    assert code == cli.EXIT_OK
    assert lines[0] == "a,d,eps_sutherland,eps_dhar_shastry"
    assert len(lines) == 6


def test_capacity_error_exits_with_input_code(capsys):
    code, _ = _run(capsys, "foel", "--n", "40")
    assert code == cli.EXIT_INPUT


def test_solver_error_exits_with_solver_code(monkeypatch, capsys, caplog):
    def fail(*args, **kwargs):
        raise SolverConvergenceError("stuck")

    monkeypatch.setattr(cli, "e0_table", fail)
    code, _ = _run(capsys, "foel", "--n", "6")

    assert code == cli.EXIT_SOLVER
    assert "stuck" in caplog.text


def test_interrupt_exits_with_130(monkeypatch, capsys):
    def interrupted(config, args):
        raise KeyboardInterrupt

    monkeypatch.setitem(cli.COMMANDS, "curve", interrupted)
    code, _ = _run(capsys, "curve")
    assert code == cli.EXIT_INTERRUPTED


def test_console_interrupt_handlers_are_restored():
    before = signal.getsignal(signal.SIGINT)
    with cli._handle_console_interrupts():
        assert signal.getsignal(signal.SIGINT) is not before
    assert signal.getsignal(signal.SIGINT) is before


def test_console_interrupt_stops_the_run_and_logs_the_signal(caplog):
    with cli._handle_console_interrupts():
        handler = signal.getsignal(signal.SIGINT)
        with caplog.at_level(logging.WARNING, logger="foel.cli"):
            with pytest.raises(cli._ConsoleInterrupt):
                handler(signal.SIGINT, None)
    assert "Received SIGINT" in caplog.text


def test_console_interrupts_are_left_alone_off_the_main_thread():
    before = signal.getsignal(signal.SIGINT)
    seen = []

    def worker():
        with cli._handle_console_interrupts():
            seen.append(signal.getsignal(signal.SIGINT))

    thread = threading.Thread(target=worker)
    thread.start()
    thread.join()
    assert seen == [before]


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])
