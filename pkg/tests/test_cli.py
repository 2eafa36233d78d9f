import pytest
from click.testing import CliRunner

from swapsim.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME, main
from swapsim.pipeline import ResultsReport


@pytest.fixture
def runner():
    return CliRunner()


def _write_config(path, **kw):
    lines = {"mode": "local", "analysis": "witness", "duration_s": "40.0", "block_seconds": "20.0",
             "two_fold_rate_hz": "60000.0", "bootstrap_resamples": "20"}
    lines.update(kw)
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return str(path)


def test_selftest(runner):
    res = runner.invoke(main, ["selftest"])
    assert res.exit_code == 0, res.output
    assert res.output.count("PASS") == 6


def test_selftest_failure_exit_code(runner, monkeypatch):
    import swapsim.selftest as s

    monkeypatch.setattr(s, "run_checks", lambda seed: [("broken", False, "forced")])
    res = runner.invoke(main, ["selftest"])
    assert res.exit_code == EXIT_CHECK and "FAIL" in res.output


def test_print_config(runner):
    res = runner.invoke(main, ["run", "--mode", "local", "--print-config"])
    assert res.exit_code == 0
    assert "two_fold_rate_hz = 15000.0" in res.output


def test_run_writes_report(runner, tmp_path):
    cfg = _write_config(tmp_path / "s.cfg")
    out = tmp_path / "r.txt"
    res = runner.invoke(main, ["run", "--config", cfg, "--seed", "3", "--out", str(out)])
    assert res.exit_code == 0, res.output
    summary = ResultsReport.parse_summary(out.read_text())
    assert summary["seed"] == "3" and summary["mode"] == "local"


def test_run_export_and_analyze(runner, tmp_path):
    cfg = _write_config(tmp_path / "s.cfg")
    tags = tmp_path / "tags"
    first = runner.invoke(main, ["run", "--config", cfg, "--export-tags", str(tags)])
    assert first.exit_code == 0
    second = runner.invoke(main, ["analyze", "--config", cfg, str(tags / "lapalma.swtg"), str(tags / "tenerife.swtg")])
    assert second.exit_code == 0, second.output
    a = ResultsReport.parse_summary(first.output)
    b = ResultsReport.parse_summary(second.output)
    assert a["swap_events"] == b["swap_events"] and a["singlet_W"] == b["singlet_W"]


def test_sweep_command(runner):
    res = runner.invoke(main, ["sweep", "--delta-l", "0,0.2", "--rates", "15000"])
    assert res.exit_code == 0
    assert len(res.output.strip().splitlines()) == 3


def test_sweep_bad_numbers(runner):
    res = runner.invoke(main, ["sweep", "--rates", "fast"])
    assert res.exit_code == EXIT_CONFIG


def test_invalid_config_exit_code(runner, tmp_path):
    cfg = _write_config(tmp_path / "bad.cfg", duration_s="41.0", warp="1")
    res = runner.invoke(main, ["run", "--config", cfg])
    assert res.exit_code == EXIT_CONFIG
    assert "unknown key" in res.output


def test_corrupt_tag_file_exit_code(runner, tmp_path):
    bad = tmp_path / "x.swtg"
    bad.write_bytes(b"JUNKJUNKJUNKJUNK")
    res = runner.invoke(main, ["analyze", "--mode", "local", str(bad), str(bad)])
    assert res.exit_code == EXIT_RUNTIME
    assert "magic" in res.output
