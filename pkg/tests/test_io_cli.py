import json
import struct

import numpy as np
import pytest
from click.testing import CliRunner

from drape import io as dio
from drape.cli import RunConfig, main
from drape.energy import DeformationField, EnergyBreakdown, Grid
from drape.params import CanonicalParams, PhysicalParams, save_params

DESK = PhysicalParams(h=0.005, W=0.5, L=1.0, tau=4.0, w0=0.05)


@pytest.fixture
def desk(tmp_path):
    path = tmp_path / "desk.json"
    save_params(DESK, path)
    return path


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def _field(seed=0):
    g = Grid(7, 5, 2.0)
    rng = np.random.default_rng(seed)
    return DeformationField(g, *(rng.normal(size=g.shape) for _ in range(3)))


def test_field_round_trip(tmp_path):
    f = _field()
    p = CanonicalParams(h=0.005, L=2.0, tau=2.0, w0=0.05)
    path = dio.write_field(f, tmp_path / "f.bin", params=p)
    g = dio.read_field(path)
    assert g.grid == f.grid
    for a, b in zip(f.stacked(), g.stacked()):
        assert np.array_equal(a, b)
    assert dio.read_sidecar(path) == p


def test_field_header_layout(tmp_path):
    f = _field()
    data = dio.write_field(f, tmp_path / "f.bin").read_bytes()
    assert struct.unpack_from("<qqd", data) == (7, 5, 2.0)
    assert len(data) == 24 + 3 * 8 * 35
    ux = np.frombuffer(data, dtype="<f8", count=35, offset=24).reshape(5, 7)
    assert np.array_equal(ux, f.ux)


def test_truncated_file_rejected(tmp_path):
    path = dio.write_field(_field(), tmp_path / "f.bin")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="does not match header"):
        dio.read_field(path)
    path.write_bytes(b"\0" * 5)
    with pytest.raises(ValueError, match="truncated"):
        dio.read_field(path)


def test_breakdown_csv(tmp_path):
    b = EnergyBreakdown(*[float(i) for i in range(8)])
    dio.write_breakdowns_csv([({"plan": "type1"}, b)], tmp_path / "b.csv", extra_columns=("plan",))
    head, row = (tmp_path / "b.csv").read_text().splitlines()
    assert head == "plan," + ",".join(dio.BREAKDOWN_COLUMNS)
    assert row.split(",")[0] == "type1" and [float(v) for v in row.split(",")[1:]] == list(range(8))


def test_run_config_round_trip():
    c = RunConfig("sweep", ranges={"h": [1, 2]}, fixed={"W": 0.5}, options={"jobs": 2}, out="o", seed=4)
    assert RunConfig.from_json(c.to_json()) == c
    with pytest.raises(ValueError):
        RunConfig.from_json('{"command": "x", "colour": 1}')
    with pytest.raises(ValueError):
        RunConfig.from_json("[]")


def test_validate_exit_codes(tmp_path, desk):
    r = run("validate", "--params", desk)
    assert r.exit_code == 0 and r.output.strip() == "ok"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**DESK.to_dict(), "tau": 1.0, "w0": 0.25}))
    r = run("validate", "--params", bad)
    assert r.exit_code == 1
    assert "violation [tauL]" in r.output and "violation [w0_over_W]" in r.output
    assert run("validate", "--params", bad, "--c-w", 0.5).output.count("violation") == 1
    bad.write_text("{not json")
    assert run("validate", "--params", bad).exit_code == 2
    assert run("validate", "--params", tmp_path / "missing.json").exit_code == 2


def test_epsilon_command(tmp_path, desk):
    r = run("epsilon", "--params", desk, "--out", tmp_path / "e")
    assert r.exit_code == 0
    doc = json.loads(r.output)
    assert doc["phase"] in ("Confined", "Released") and doc["eps"] > 0
    assert json.loads((tmp_path / "e" / "epsilon.json").read_text()) == doc
    assert RunConfig.from_json((tmp_path / "e" / "config.json").read_text()).command == "epsilon"


def test_phase_command(tmp_path):
    r = run("phase", "--out", tmp_path / "ph", "--emit-plot-data")
    assert r.exit_code == 0 and "100 points, 0 skipped, 1 phase switch(es)" in r.output
    rows = (tmp_path / "ph" / "phase.csv").read_text().splitlines()[1:]
    for row in rows:
        alpha, _, cls, phase = row.split(",")[:4]
        if float(alpha) < 1.618:
            assert cls == "confined_only" or cls == "ConfinedOnly" or phase == "Confined"
            assert phase == "Confined"
    assert (tmp_path / "ph" / "phase_eps.dat").exists()


def test_sweep_command(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"ranges": {"h": {"min": 0.0005, "max": 0.002, "n": 8}, "tau": [1.0, 4.0]}, "fixed": {"W": 0.5, "L": 1.0, "w0": 0.01}}))
    r = run("sweep", "--config", cfg, "--out", tmp_path / "o", "--emit-plot-data")
    assert r.exit_code == 0 and "8 points, 8 skipped" in r.output
    assert len((tmp_path / "o" / "sweep.csv").read_text().splitlines()) == 9
    assert "tau*L = 1 < 4" in (tmp_path / "o" / "skipped.csv").read_text()
    assert (tmp_path / "o" / "eps_vs_h.dat").exists()
    cfg.write_text("{}")
    assert run("sweep", "--config", cfg, "--out", tmp_path / "o2").exit_code == 2


def test_construct_command(tmp_path, desk):
    out = tmp_path / "c"
    r = run("construct", "--params", desk, "--plan", "type3", "--l", 0.2, "--grid", "161x41", "--out", out)
    assert r.exit_code == 0 and r.output.startswith("type3: measured excess")
    doc = json.loads((out / "construct.json").read_text())
    assert doc["plan"]["kind"] == "type3" and doc["measured_excess"] > 0
    f = dio.read_field(out / "field.bin")
    assert (f.grid.nx, f.grid.ny) == (161, 41)
    r = run("construct", "--params", desk, "--plan", "type2", "--n", 5, "--grid", "161x41", "--out", out)
    assert r.exit_code == 1 and "valid range is" in r.output
    assert run("construct", "--params", desk, "--plan", "type3", "--out", out).exit_code == 2
    assert run("construct", "--params", desk, "--plan", "type1", "--grid", "3x3", "--out", out).exit_code == 2


def test_minimize_command(tmp_path, desk):
    out = tmp_path / "m"
    r = run("minimize", "--params", desk, "--grid", "161x31", "--max-iters", 30, "--init", "bulk_only", "--init", "construction", "--trace", "--out", out)
    assert r.exit_code == 0 and r.output.startswith("sandwich: bulk")
    assert "VIOLATED" not in r.output
    doc = json.loads((out / "report.json").read_text())
    assert [s["label"] for s in doc["starts"]][0] == "bulk_only"
    assert doc["excess_over_eps"] > 0
    for name in ("field.bin", "field.bin.json", "breakdown.csv", "trace.csv", "config.json"):
        assert (out / name).exists()
    cfg = RunConfig.from_json((out / "config.json").read_text())
    assert cfg.options["init"] == ["bulk_only", "construction:best"]
    assert run("minimize", "--params", desk, "--init", "bogus", "--out", out).exit_code == 2


def test_fit_command(tmp_path):
    data = tmp_path / "d.dat"
    x = np.geomspace(1, 10, 5)
    data.write_text("".join(f"{float(a)!r} {float(3 * a**2)!r}\n" for a in x))
    r = run("fit", "--data", data, "--out", tmp_path / "f")
    assert r.exit_code == 0 and abs(json.loads(r.output)["exponent"] - 2) < 1e-12
    data.write_text("1 1\n2 2\n")
    assert run("fit", "--data", data).exit_code == 1
    assert run("fit", "--data", tmp_path / "nope.dat").exit_code == 2
