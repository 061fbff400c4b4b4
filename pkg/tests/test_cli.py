import json
import subprocess
import sys

import pytest

from pcmtoggle.cli import EXIT_OK, EXIT_USAGE, main


def test_verify_quick_exits_zero(capsys):
    assert main(["verify", "--quick"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.startswith("PASS") for line in out)


def test_unknown_experiment_is_usage_error(capsys, tmp_path):
    assert main(["run", "flip", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "unknown experiment" in capsys.readouterr().err


def test_bad_arguments_are_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["materials", "print"]) == EXIT_USAGE
    assert main(["sweep", "initialize", "--seeds", "a,b"]) == EXIT_USAGE


@pytest.mark.parametrize("content", ['{"circuit": {"R_L": "x"}}', "{not json", '{"geometry": {"contact_radius": 1e-7}}'])
def test_bad_config_exits_two(tmp_path, capsys, content):
    p = tmp_path / "c.json"
    p.write_text(content)
    assert main(["materials", "dump", "--config", str(p)]) == EXIT_USAGE
    assert "config error" in capsys.readouterr().err


def test_missing_config_exits_two(tmp_path):
    assert main(["geometry", "dump", "--config", str(tmp_path / "none.json")]) == EXIT_USAGE


def test_materials_dump(capsys):
    assert main(["materials", "dump", "--tmin", "300", "--tmax", "900"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("T_K,sigma_c_Sm")
    assert float(lines[1].split(",")[0]) == 300.0 and float(lines[-1].split(",")[0]) == 900.0


def test_geometry_dump(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"geometry": {"domain_half_width": 40e-9}}))
    assert main(["geometry", "dump", "--config", str(p), "--which", "contact"]) == EXIT_OK
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 40 and all(len(r.split(",")) == 40 for r in rows)
    assert {int(v) for r in rows for v in r.split(",")} == set(range(-1, 6))


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pcmtoggle", "verify", "--quick"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
