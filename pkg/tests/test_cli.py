import json

import pytest

from fade10g import __version__
from fade10g.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, UsageError, main, parse_range


def test_parse_range():
    assert parse_range("0.05") == [0.05]
    assert parse_range("0:0.1:0.05") == [0.0, 0.05, 0.1]
    for bad in ("a:b:c", "0:1", "0.2:0.1:0.05", "0:2:1"):
        with pytest.raises(UsageError):
            parse_range(bad)


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_run_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml")]) == EXIT_USAGE
    assert "file not found" in capsys.readouterr().err


def test_run_unknown_key(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[source]\ntotal_packets = 1\nspeed = 3\n")
    assert main(["run", str(path)]) == EXIT_USAGE
    assert "source.speed: unknown key" in capsys.readouterr().err


def test_run_writes_outputs(tmp_path, scenarios_dir, capsys):
    trace, stats, plot = tmp_path / "t.trace", tmp_path / "s.json", tmp_path / "d.png"
    code = main(
        ["run", str(scenarios_dir / "lossless.toml"), "--trace", str(trace), "--json", str(stats), "--plot", str(plot)]
    )
    assert code == EXIT_OK
    assert "goodput_fraction" in capsys.readouterr().out
    assert trace.read_text().startswith("# time\tlink")
    assert json.loads(stats.read_text())["stream_intact"] is True
    assert plot.read_bytes()[:4] == b"\x89PNG"


def test_run_deadlock_is_a_failure(tmp_path, capsys):
    path = tmp_path / "dead.toml"
    path.write_text("[source]\ntotal_packets = 2\n[channel]\nloss_probability = 1.0\n")
    assert main(["run", str(path), "--quiet"]) == EXIT_FAILURE
    assert "no pending events" in capsys.readouterr().err


def test_fig4_check_and_plot(tmp_path, capsys):
    plot = tmp_path / "fig4.png"
    assert main(["fig4", "--check", "--plot", str(plot)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "retransmitted: packet 2 x1, packet 4 x1; spurious: 0" in out
    assert plot.exists()
    assert main(["fig4", "--no-suppression", "--check"]) == EXIT_OK
    assert "packet 2 x2" in capsys.readouterr().out


def test_sweep(tmp_path, capsys):
    out_json, plot = tmp_path / "sweep.json", tmp_path / "sweep.png"
    code = main(["sweep", "--loss", "0:0.1:0.05", "--packets", "200", "--json", str(out_json), "--plot", str(plot)])
    assert code == EXIT_OK
    rows = json.loads(out_json.read_text())
    assert [r["loss"] for r in rows] == [0.0, 0.05, 0.1]
    assert all(r["intact"] for r in rows)
    assert rows[0]["goodput_fraction"] > rows[-1]["goodput_fraction"]
    assert plot.exists()
    assert len(capsys.readouterr().out.splitlines()) == 4


def test_sweep_bad_range(capsys):
    assert main(["sweep", "--loss", "1:0:0.1"]) == EXIT_USAGE


def test_selftest_subset(capsys):
    assert main(["selftest", "--criteria", "7"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("[PASS] 7.")
    assert "1/1 criteria passed" in out


def test_selftest_rejects_unknown_criterion(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["selftest", "--criteria", "12"])
    assert exc.value.code == EXIT_USAGE
