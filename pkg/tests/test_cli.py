import json
import os
import subprocess
import sys
import time

import pytest

from pisces.cli import build_parser, logfmt, main

from conftest import ALICE


def _pisces(*args, env=None, check=True):
    proc = subprocess.run([sys.executable, "-m", "pisces.cli", *args], capture_output=True, text=True,
                          env=env, timeout=120)
    if check and proc.returncode != 0:
        raise AssertionError(proc.stdout + proc.stderr)
    return proc


def _fields(line):
    out = {}
    for part in line.split()[1:]:
        k, _, v = part.partition("=")
        out[k] = v
    return out


@pytest.fixture
def daemon(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({k: ALICE[k] for k in ("assets", "prices", "au", "seed")}))
    proc = subprocess.Popen([sys.executable, "-m", "pisces.cli", "--port", "0", "serve", "--state",
                             str(tmp_path / "state"), "--config", str(config), "--admin", "--no-fsync"],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    assert line.startswith("ok cmd=serve event=listening"), line + proc.stderr.read()
    env = dict(os.environ, PISCES_PORT=_fields(line)["port"], PISCES_WALLET=str(tmp_path / "alice.json"))
    yield env
    proc.terminate()
    assert proc.wait(timeout=10) == 0


def test_alice_via_cli(daemon):
    last = lambda p: _fields(p.stdout.strip().splitlines()[-1])  # noqa: E731
    assert last(_pisces("join", env=daemon))["wallet"].endswith("alice.json")
    assert last(_pisces("deposit", "USD", "100000", env=daemon))["balance"] == "100000"
    assert last(_pisces("exchange", "USD", "80000", "BTC", env=daemon))["received"] == "50"
    assert last(_pisces("admin", "publish", env=daemon))["epoch"] == "1"
    assert last(_pisces("withdraw", "BTC", "30", "btc:alice", env=daemon))["receipt"] == "true"
    out = last(_pisces("file", "2026", env=daemon))
    assert (out["cp1"], out["cp2"], out["verified"]) == ("48000", "60000", "true")

    bal = _pisces("balance", env=daemon).stdout.splitlines()
    assert bal[-1].startswith("ok cmd=balance registered=true cp1=0 cp2=0")
    assert sum(line.startswith("record ") for line in bal) == 2
    prices = _pisces("prices", env=daemon).stdout.splitlines()
    assert prices[:2] == ["price epoch=1 asset=USD index=0 price=1", "price epoch=1 asset=BTC index=1 price=2000"]
    assert last(_pisces("admin", "clock", "60", env=daemon))["now"] == "60"
    assert last(_pisces("admin", "check", env=daemon))["passed"] == "false"


def test_cli_errors(daemon):
    _pisces("join", env=daemon)
    proc = _pisces("exchange", "USD", "5", "BTC", env=daemon, check=False)
    assert proc.returncode == 1
    assert 'code=insufficient_balance message="insufficient balance"' in proc.stdout
    _pisces("deposit", "USD", "2000", env=daemon)
    proc = _pisces("exchange", "USD", "1601", "BTC", env=daemon, check=False)
    assert proc.returncode == 1 and "suggested=1600" in proc.stdout
    proc = _pisces("deposit", "DOGE", "1", env=daemon, check=False)
    assert "code=unknown_asset" in proc.stdout
    proc = _pisces("join", env=daemon, check=False)
    assert "code=already_registered" in proc.stdout


def test_no_wallet_and_no_daemon(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("PISCES_STATE", raising=False)
    assert main(["--wallet", str(tmp_path / "none.json"), "balance"]) == 1
    assert "code=no_wallet" in capsys.readouterr().out
    assert main(["--port", "1", "--timeout", "2", "prices"]) == 1
    assert "code=connection_failed" in capsys.readouterr().out
    assert main(["serve"]) == 2


def test_scenario_command(tmp_path, capsys):
    path = tmp_path / "alice.json"
    path.write_text(json.dumps(ALICE))
    assert main(["scenario", "run", str(path), "--oracle"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[5].startswith("ok cmd=step op=file user=alice cp1=48000 cp2=60000")
    assert lines[-1] == "ok cmd=scenario steps=6 unexpected=0 diffs=0 overdraft=none"


def test_logfmt_quoting():
    assert logfmt("ok", a=1, b="x y", c=True, d="") == 'ok a=1 b="x y" c=true d=""'


def test_parser_rejects_negative_amounts(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["deposit", "USD", "-1"])


def test_bench_command(capsys):
    start = time.perf_counter()
    assert main(["bench", "--n", "2", "--iterations", "2"]) == 0
    out = capsys.readouterr().out.splitlines()
    ops = [_fields(line)["op"] for line in out if line.startswith("bench ")]
    assert ops == ["join", "deposit", "exchange", "withdraw", "file"]
    assert time.perf_counter() - start < 60
