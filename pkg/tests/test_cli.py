import argparse
import json
import subprocess
import sys

import pytest

import mtomgcs.sweep as sweep
from mtomgcs.channel import LinkModel, write_link_config
from mtomgcs.cli import EXIT_DOMAIN, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, code_rate, main
from mtomgcs.constellation import read_constellation

QUICK_OPT = ["--m", "4", "--symbols-per-epoch", "2000", "--max-epochs", "2"]


def run(*argv):
    return main([str(a) for a in argv])


def test_optimize_writes_constellation_and_replays(tmp_path, capsys):
    out = tmp_path / "c.const"
    trace = tmp_path / "trace.csv"
    code = run("optimize", *QUICK_OPT, "--nd", 1, "--awgn-snr", 12, "--seed", 7, "--out", out, "--trace", trace)
    assert code == EXIT_OK
    c = read_constellation(out)
    assert c.m == 4 and abs(c.power - 1) < 1e-9
    assert trace.read_text().startswith("epoch,train_objective")
    manifest = json.loads((tmp_path / "c.const.manifest.json").read_text())
    assert manifest["subcommand"] == "optimize" and manifest["seeds"]["seed"] == 7
    assert set(manifest["outputs"]) == {str(out), str(trace)}
    first = out.read_bytes()
    # rerunning the same command gives the same bytes
    run("optimize", *QUICK_OPT, "--nd", 1, "--awgn-snr", 12, "--seed", 7, "--out", out, "--trace", trace)
    assert out.read_bytes() == first
    capsys.readouterr()
    assert run("replay", tmp_path / "c.const.manifest.json") == EXIT_OK
    assert "0 mismatches" in capsys.readouterr().out


def test_replay_detects_tampering(tmp_path):
    out = tmp_path / "plan.csv"
    assert run("plan", "--K", 750, "--N", 1000, "--m", 8, "--target-eta", 5.0, "--out", out) == EXIT_OK
    manifest = tmp_path / "plan.csv.manifest.json"
    data = json.loads(manifest.read_text())
    data["outputs"][str(out)] = "0" * 64
    manifest.write_text(json.dumps(data))
    assert run("replay", manifest) == EXIT_DOMAIN


@pytest.mark.parametrize(
    "argv",
    [
        ["plan", "--K", 54000, "--N", 64800, "--m", 8, "--target-eta", 5.0, "--out", "{d}/p.csv"],
        ["evaluate", "--m", 4, "--awgn-snr", 9, "--symbols", 5000, "--seed", 2, "--out", "{d}/e.csv"],
        ["pas", "--m", 6, "--H", 5.0, "--R", 0.75, "--awgn-snr", 14, "--symbols", 3000, "--out", "{d}/pas.const"],
        ["grid", "--noise", 0.2, "--seed", 1, "--out", "{d}/g.csv"],
        ["sweep", "--kind", "awgn", "--schemes", "BRGC", "--m", 6, "--nd-max", 1, "--nd-step", 1,
         "--snr-min", 12, "--snr-max", 14, "--out-dir", "{d}/sw"],
    ],
    ids=["plan", "evaluate", "pas", "grid", "sweep"],
)
def test_every_subcommand_replays(tmp_path, argv):
    argv = [str(a).replace("{d}", str(tmp_path)) for a in argv]
    assert main(argv) == EXIT_OK
    manifests = list(tmp_path.rglob("*.manifest.json"))
    assert len(manifests) == 1
    m = json.loads(manifests[0].read_text())
    assert m["outputs"] and all(len(v) == 64 for v in m["outputs"].values())
    assert main(["replay", str(manifests[0])]) == EXIT_OK


def test_plan_prints_dummy_count(capsys):
    assert run("plan", "--K", 54000, "--N", 64800, "--m", 8, "--target-eta", 5.0) == EXIT_OK
    assert "N_D=21600" in capsys.readouterr().out
    assert run("plan", "--K", 54000, "--N", 64800, "--m", 8, "--N-D", 38880) == EXIT_OK
    assert "eta_exact=25/6" in capsys.readouterr().out


def test_pas_net_rate(capsys):
    # 0.8333 is read as the code rate 5/6
    for rate in ("0.8333", "5/6"):
        assert run("pas", "--m", 8, "--H", 6.4, "--R", rate) == EXIT_OK
        assert "net_rate=5.067" in capsys.readouterr().out
    assert run("pas", "--m", 8, "--H", 6.4, "--R", "0.83") == EXIT_OK
    assert "net_rate=5.04" in capsys.readouterr().out


@pytest.mark.parametrize("text,value", [("3/4", 0.75), ("0.75", 0.75), ("0.8333", 5 / 6), ("0.9", 0.9), ("0.123", 0.123)])
def test_code_rate_parsing(text, value):
    assert code_rate(text) == pytest.approx(value, abs=1e-15)


@pytest.mark.parametrize("text", ["0", "1.5", "x", "1/0"])
def test_code_rate_rejects(text):
    with pytest.raises(argparse.ArgumentTypeError):
        code_rate(text)


def test_fit_subcommand(tmp_path, capsys):
    grid = tmp_path / "grid.csv"
    assert run("grid", "--out", grid) == EXIT_OK
    link = tmp_path / "fitted.ini"
    assert run("fit", "--grid", grid, "--seed", 1, "--out", tmp_path / "fit.txt", "--link-out", link) == EXIT_OK
    text = (tmp_path / "fit.txt").read_text()
    err = float(next(line for line in text.splitlines() if line.startswith("max_abs_error")).split("=")[1])
    assert err < 0.05
    assert run("evaluate", "--m", 4, "--link", link, "--symbols", 2000) == EXIT_OK


def test_usage_errors(tmp_path, capsys):
    assert run("optimize", "--m", 8, "--nd", 7, "--awgn-snr", 15, "--out", tmp_path / "c.const") == EXIT_USAGE
    assert run("frobnicate") == EXIT_USAGE
    assert run("plan", "--K", 1, "--N", 2, "--m", 2, "--bogus", 1) == EXIT_USAGE
    assert run("plan", "--K", 54000, "--N", 64800, "--m", 8) == EXIT_USAGE
    assert run("evaluate", "--constellation", tmp_path / "missing.const") == EXIT_USAGE
    assert run("evaluate", "--m", 4, "--awgn-snr", 10, "--link", "x.ini") == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_domain_errors(tmp_path):
    assert run("plan", "--K", 54000, "--N", 64800, "--m", 8, "--target-eta", 7.5) == EXIT_DOMAIN
    assert run("pas", "--m", 8, "--H", 1.0, "--R", 0.75) == EXIT_DOMAIN


def test_optimize_divergence_exit_code(tmp_path):
    code = run("optimize", *QUICK_OPT, "--nd", 0, "--awgn-snr", 10, "--lr", "inf", "--out", tmp_path / "c.const")
    assert code == EXIT_DOMAIN


def test_sweep_partial_failure(tmp_path, monkeypatch):
    real = sweep.scheme_air

    def flaky(scheme, channel, *a, **kw):
        if channel.snr_db == 12.6:
            raise RuntimeError("cell failure")
        return real(scheme, channel, *a, **kw)

    monkeypatch.setattr(sweep, "scheme_air", flaky)
    code = run("sweep", "--kind", "awgn", "--schemes", "BRGC", "--m", 6, "--nd-max", 0, "--snr-min", 12,
               "--snr-max", 13.2, "--out-dir", tmp_path / "sw")
    assert code == EXIT_PARTIAL
    rows = (tmp_path / "sw" / "fig5_top.csv").read_text().splitlines()
    assert len(rows) == 1 + 3 and any("failed: cell failure" in r for r in rows)


def test_config_dir_env(tmp_path, monkeypatch, capsys):
    write_link_config(LinkModel().with_spans(3), tmp_path / "short.ini")
    monkeypatch.setenv("MTOMGCS_CONFIG_DIR", str(tmp_path))
    assert run("evaluate", "--m", 4, "--link", "short.ini", "--symbols", 2000) == EXIT_OK
    assert "link_3x100km" not in capsys.readouterr().err


def test_help_lists_flags():
    out = subprocess.run([sys.executable, "-m", "mtomgcs", "optimize", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for flag in ("--nd", "--awgn-snr", "--link", "--seed", "--out", "--trace", "--optimize-power", "--restarts"):
        assert flag in out.stdout
