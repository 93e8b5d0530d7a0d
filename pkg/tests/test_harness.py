import json

import numpy as np
import pytest

from inls.cli import main
from inls.config import from_values
from inls.diagnostics import CSV_COLUMNS, read_series_csv
from inls.groundstate import compute_constants
from inls.harness import (RECORDS_FILE, RunRecord, constants_for, emit_plotdata, exit_code, initial_data,
                          read_records, run_experiment, sweep_amplitude)
from inls.field import gradient_sq_integral


def small_cfg(tmp_path, **kw):
    vals = {"grid.points": 32, "grid.L": 12.0, "evolve.dt": 0.01, "evolve.t_end": 0.5,
            "evolve.stride": 5, "output.dir": str(tmp_path), "output.name": "t"}
    vals.update(kw)
    return from_values(vals)


def test_zero_amplitude_scattering(tmp_path):
    rec = run_experiment(small_cfg(tmp_path, **{"data.amplitude": 0.0}))
    assert rec.verdict_kind == "Scattering" and rec.status == "completed"
    assert exit_code(rec) == 0
    assert rec.threshold["subthreshold"] and rec.threshold["E0"] == 0.0


def test_subthreshold_small_amplitude(tmp_path):
    rec = run_experiment(small_cfg(tmp_path, **{"data.amplitude": 0.3}))
    assert rec.threshold["subthreshold"]
    assert rec.monitors["trapping"]["passed"]
    assert "blowup" not in rec.monitors
    assert rec.constants["c"] == pytest.approx(8 * np.pi / 3, rel=1e-10)


def test_determinism(tmp_path):
    cfg = small_cfg(tmp_path, **{"data.amplitude": 0.5})
    a = run_experiment(cfg)
    first = open(a.csv_path, "rb").read()
    b = run_experiment(small_cfg(tmp_path, **{"data.amplitude": 0.5}))
    assert a.config_hash == b.config_hash and a.csv_path == b.csv_path
    assert open(b.csv_path, "rb").read() == first
    assert a.verdict == b.verdict


def test_record_round_trip(tmp_path):
    rec = run_experiment(small_cfg(tmp_path, **{"data.amplitude": 0.5}))
    back = RunRecord.from_json(rec.to_json())
    assert back == rec
    stored = read_records(tmp_path / RECORDS_FILE)
    assert len(stored) == 1 and stored[0].to_json() == rec.to_json()
    assert back.run_verdict().kind == rec.verdict_kind


def test_failed_record_on_numerical_error(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise FloatingPointError("overflow")
    monkeypatch.setattr("inls.harness.evolve", boom)
    rec = run_experiment(small_cfg(tmp_path, **{"data.amplitude": 0.5}))
    assert rec.status == "failed" and rec.verdict_kind == "Undetermined"
    assert "overflow" in rec.reason and exit_code(rec) == 3
    assert read_records(tmp_path / RECORDS_FILE)[0].status == "failed"


def test_sweep_single_zero(tmp_path):
    s = sweep_amplitude(small_cfg(tmp_path), [0.0])
    assert len(s.records) == 1 and s.records[0].verdict_kind == "Scattering"
    assert s.verdict_bracket is None and s.threshold_bracket is None and s.brackets_agree is None
    assert len(read_records(tmp_path / RECORDS_FILE)) == 1
    assert (tmp_path / "t-sweep.csv").read_text().splitlines()[0] == "A,E0,K0,subthreshold,verdict"


def test_sampled_W_kinetic_scales_quadratically(tmp_path):
    base = small_cfg(tmp_path, **{"data.family": "sampled-W", "grid.points": 64})
    K = [gradient_sq_integral(initial_data(base.replace(**{"data.amplitude": A}))) for A in (0.5, 1.0, 1.5)]
    assert K[0] / K[1] == pytest.approx(0.25, rel=1e-12)
    assert K[2] / K[1] == pytest.approx(2.25, rel=1e-12)


def test_emit_plotdata(tmp_path):
    s = sweep_amplitude(small_cfg(tmp_path), [0.4, 0.0, 0.2])
    paths = emit_plotdata(s.records, tmp_path / "plot", s)
    series = [p for p in paths if p.name != "sweep-phase.dat"]
    assert len(series) == 3
    assert series[0].read_text().splitlines()[0] == "# " + " ".join(CSV_COLUMNS)
    phase = (tmp_path / "plot" / "sweep-phase.dat").read_text().splitlines()
    amps = [float(l.split()[0]) for l in phase[1:]]
    assert amps == sorted(amps) == [0.0, 0.2, 0.4]
    with pytest.raises(ValueError):
        emit_plotdata([], tmp_path / "plot")


def test_constants_cached():
    p = from_values({}).model()
    assert constants_for(p) is constants_for(p) is compute_constants(3, 1.0)
    assert constants_for(from_values({"model.alpha": 3.0, "model.exploratory": True,
                                      "model.b": 0.5}).model()) is None


# -- CLI -----------------------------------------------------------------------------

def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


CLI_CFG = """\
grid.points = {n}
grid.L = 12.0
evolve.dt_control = true
data.amplitude = {A}
evolve.dt = 0.01
evolve.t_end = {T}
evolve.stride = 5
evolve.kinetic_cap = 5.0
data.family = {fam}
"""


def test_cli_groundstate(capsys):
    assert main(["groundstate", "--N", "3", "--b", "1"]) == 0
    out = capsys.readouterr().out
    assert "3" in out and f"{8 * np.pi / 3:.6f}"[:6] in out


def test_cli_groundstate_bad_params(capsys):
    assert main(["groundstate", "--N", "3", "--b", "2.5"]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    assert main(["evolve", "--config", write_cfg(tmp_path, "gridd = 3\n")]) == 2
    assert "gridd" in capsys.readouterr().err


def test_cli_evolve_and_classify(tmp_path, capsys):
    cfg = write_cfg(tmp_path, CLI_CFG.format(n=32, A=0.3, T=0.5, fam="gaussian"))
    out = tmp_path / "out"
    assert main(["evolve", "--config", cfg, "--out", str(out), "--plot", str(tmp_path / "plot")]) == 0
    rec = RunRecord.from_json(capsys.readouterr().out.strip().splitlines()[-1])
    assert rec.verdict_kind == "Scattering"
    assert set(read_series_csv(rec.csv_path)) >= set(CSV_COLUMNS)
    assert any((tmp_path / "plot").iterdir())
    assert main(["classify", "--record", str(out / RECORDS_FILE)]) == 0
    assert json.loads(capsys.readouterr().out)["kind"] == "Scattering"


def test_cli_blowup_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, CLI_CFG.format(n=64, A=2.6, T=2.0, fam="gaussian"))
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path)]) == 4
    rec = RunRecord.from_json(capsys.readouterr().out.strip().splitlines()[-1])
    assert rec.verdict_kind == "BlowUp" and rec.threshold["E0"] < 0


def test_cli_sweep(tmp_path, capsys):
    cfg = write_cfg(tmp_path, CLI_CFG.format(n=32, A=0.0, T=0.3, fam="gaussian"))
    assert main(["sweep", "--config", cfg, "--amplitudes", "0,0.2", "--out", str(tmp_path / "s")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "A,E0,K0,subthreshold,verdict" and len(lines) == 4
    assert main(["sweep", "--config", cfg, "--amplitudes", "x"]) == 2
