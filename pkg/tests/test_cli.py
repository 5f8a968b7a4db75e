import json
import subprocess
import sys
from pathlib import Path

import pytest

from gafcells.bounds import ConstraintReport
from gafcells.cli import main
from gafcells.config import SCHEMA
from gafcells.partition import read_partition_records
from gafcells.serialize import loads
from gafcells.sim import LifetimeComparison, SimReport

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def small_cfg(tmp_path, protocol="gaf", extra=""):
    p = tmp_path / f"{protocol}.cfg"
    p.write_text(
        "[field]\nextent = 2, 2\n[scheme]\n"
        f"protocol = {protocol}\nshape = square\nsize = max\nquotient = {0 if protocol == 'gaf' else 3}\nepoch = 10\n"
        "[protocol]\nt_discovery = 1\nt_active = 5\nt_sleep = 1\ndraw_sleeping = 0\ndraw_discovery = 0\nbattery = 5\n"
        "[sim]\nnodes = 80\naudit_interval = 1\n" + extra
    )
    return p


def test_bounds_table_and_json(capsys):
    code, out, _ = cli(capsys, "bounds", "--protocol", "gaf", "--shape", "square")
    assert code == 0 and "req1" in out and "0.2" in out
    code, out, _ = cli(capsys, "bounds", "--protocol", "ehgaf", "--shape", "tetrahedron", "--json")
    rep = loads(out, ConstraintReport)
    assert rep.paper_agreement == "mismatch"
    code, out, _ = cli(capsys, "bounds", "--protocol", "hgaf", "--shape", "square", "--subcell", "0.1", "--csv")
    assert out.splitlines()[0] == "field,value" and "subcell_quotient,7" in out


def test_bounds_unsupported(capsys):
    code, _, err = cli(capsys, "bounds", "--protocol", "hgaf", "--shape", "hexagon")
    assert code == 1 and err.startswith("gafcells: error:")


def test_table(capsys):
    code, out, _ = cli(capsys, "table", "--which", "2", "--paper-values", "--csv")
    assert code == 0
    assert [line.split(",")[2] for line in out.splitlines()[1:]] == ["60.1", "34.7", "30.1", "24.1", "21.8"]
    code, out, _ = cli(capsys, "table", "--which", "1")
    assert "eHGAF-triangle" in out
    with pytest.raises(SystemExit) as exc:
        main(["table", "--which", "3"])
    assert exc.value.code == 2


def test_verify_commands(capsys):
    code, out, _ = cli(capsys, "verify", "--target", "worst-case", "--protocol", "gaf", "--shape", "square",
                       "--samples", "2e4", "--seed", "1", "--json")
    assert code == 0 and json.loads(out)["data"]["target"] == "worst-case"
    code, out, _ = cli(capsys, "verify", "--target", "metrics", "--shape", "square", "--samples", "1e5", "--seed", "1")
    assert code == 0 and "square.circumradius" in out


def test_sample_floor_and_strict_seed(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--samples", "100"])
    assert exc.value.code == 2
    code, _, err = cli(capsys, "--strict-seed", "verify", "--target", "metrics", "--shape", "square")
    assert code == 1 and "--seed" in err


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit):
        main(["simulate", "--help"])
    out = capsys.readouterr().out
    for k in SCHEMA:
        assert k.flag in out
        assert f"[{k.section}] {k.name}" in out


def test_simulate_writes_outputs(tmp_path, capsys):
    cfg = small_cfg(tmp_path)
    out = tmp_path / "out"
    code, text, _ = cli(capsys, "simulate", str(cfg), "--seed", "4", "--out", str(out), "--sim-max-time", "50")
    assert code == 0 and "lifetime" in text
    rep = loads((out / "report.json").read_text(), SimReport)
    assert rep.seed == 4
    lines = (out / "timeseries.csv").read_text().splitlines()
    assert lines[0] == "time,active_count,live_count,req1_worst,req2_worst" and len(lines) == rep.audits + 1

    code, _, _ = cli(capsys, "simulate", str(cfg), "--seeds", "2", "--out", str(out))
    assert (out / "report_1.json").exists() and (out / "timeseries_0.csv").exists()


def test_simulate_seed_sources(tmp_path, capsys, monkeypatch):
    cfg = small_cfg(tmp_path, extra="seed = 7\n")
    code, out, _ = cli(capsys, "simulate", str(cfg), "--out", str(tmp_path), "--json", "--sim-max-time", "5")
    assert loads(out, SimReport).seed == 7
    monkeypatch.setenv("GAFCELLS_SIM_SEED", "8")
    code, out, _ = cli(capsys, "simulate", str(cfg), "--out", str(tmp_path), "--json", "--sim-max-time", "5")
    assert loads(out, SimReport).seed == 8
    code, out, _ = cli(capsys, "simulate", str(cfg), "--out", str(tmp_path), "--json", "--sim-max-time", "5",
                       "--seed", "9")
    assert loads(out, SimReport).seed == 9
    code, _, err = cli(capsys, "--strict-seed", "simulate", str(cfg), "--out", str(tmp_path))
    assert code == 1 and "--seed" in err


def test_simulate_env_and_flag_overrides(tmp_path, capsys, monkeypatch):
    cfg = small_cfg(tmp_path)
    monkeypatch.setenv("GAFCELLS_SIM_NODES", "30")
    code, out, _ = cli(capsys, "simulate", str(cfg), "--out", str(tmp_path), "--json", "--sim-max-time", "20")
    assert code == 0
    rep = loads(out, SimReport)
    assert rep.lifetime_model_estimate == pytest.approx(30 * 5 / rep.nonempty_cells)
    code, out, _ = cli(capsys, "simulate", str(cfg), "--out", str(tmp_path), "--json", "--sim-nodes", "40",
                       "--sim-max-time", "20")
    assert loads(out, SimReport).lifetime_model_estimate == pytest.approx(40 * 5 / loads(out, SimReport).nonempty_cells)


def test_simulate_compare(tmp_path, capsys):
    a, b = small_cfg(tmp_path, "gaf"), small_cfg(tmp_path, "ehgaf")
    out = tmp_path / "cmp"
    code, text, _ = cli(capsys, "simulate", "--compare", f"{a},{b}", "--seeds", "3", "--out", str(out))
    assert code == 0 and "predicted" in text
    cmp = loads((out / "comparison.json").read_text(), LifetimeComparison)
    assert cmp.labels == ["gaf", "ehgaf"] and len(cmp.lifetimes[0]) == 3


def test_simulate_errors(tmp_path, capsys):
    code, _, err = cli(capsys, "simulate", str(tmp_path / "nope.cfg"), "--out", str(tmp_path))
    assert code == 1 and "not found" in err
    code, _, err = cli(capsys, "simulate", "--out", str(tmp_path))
    assert code == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("[sim]\nwho = 1\n")
    code, _, err = cli(capsys, "simulate", str(bad), "--out", str(tmp_path))
    assert code == 1 and "unknown key" in err


@pytest.mark.parametrize("name,cells", [("square_gaf", 25), ("triangle_gaf", 264), ("cube_ehgaf", 27)])
def test_export_partition(tmp_path, capsys, name, cells):
    dest = tmp_path / "cells.txt"
    code, out, _ = cli(capsys, "export-partition", str(CONFIGS / f"{name}.cfg"), "--out", str(dest))
    assert code == 0 and f"wrote {cells} cells" in out
    assert len(read_partition_records(dest.read_text())) == cells


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gafcells", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
