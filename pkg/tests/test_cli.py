import json
import subprocess
import sys
from pathlib import Path

import pytest

from dpagg import cli

SMALL = Path(cli.__file__).parent / "scenarios" / "small.json"


def test_help_lists_options(capsys):
    with pytest.raises(SystemExit):
        cli.main(["run", "--help"])
    out = capsys.readouterr().out
    for opt in ("--config", "--seed", "--pit", "--adversary", "--out", "--check"):
        assert opt in out


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"W": 800}))
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "q: missing required field" in capsys.readouterr().err


def test_unknown_adversary_rejected(capsys):
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(SMALL), "--adversary", "steal-keys"])


def test_run_with_check_and_adversary(tmp_path, capsys):
    out = tmp_path / "o"
    code = cli.main(["run", "--config", str(SMALL), "--seed", "4", "--pit", "off",
                     "--adversary", "corrupt-nonleaf-eval", "--out", str(out), "--check"])
    assert code == 0
    text = capsys.readouterr().out
    assert "round 1: aborted: misbehaviour detected; detections: sum-mismatch" in text
    rep = json.loads((out / "round_1.json").read_text())
    assert rep["info"]["pit"] is False and rep["undetected"] == []
    assert (out / "ledger.csv").read_text().startswith("round,role,bytes_up")


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dpagg.cli", "run", "--config", str(SMALL),
                          "--out", str(tmp_path / "o"), "--check"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "round 2: ok" in res.stdout
