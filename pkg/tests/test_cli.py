import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from embedded_jc import cli
from embedded_jc.config import ConfigError, apply_overrides, load_config, set_path
from embedded_jc.spectra import NumericalError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_estimate_silicon(tmp_path):
    code, out = run(["estimate", "--config", str(CONFIGS / "silicon_estimate.json")], tmp_path)
    assert code == 0
    rep = json.loads((out / "estimate.json").read_text())
    assert rep["N_s"] == 100_000_000
    assert rep["g_m"] == pytest.approx(171.6, rel=1e-3)
    assert rep["g_m_order_of_magnitude_consistent"] is True
    assert rep["collective_coupling"] == pytest.approx(rep["g_m"] * 1e4)
    assert 1e-4 < rep["thermal_occupation"] < 1e-2
    # byte-stable
    code, out2 = run(["estimate", "--config", str(CONFIGS / "silicon_estimate.json")], tmp_path, "again")
    assert (out / "estimate.json").read_bytes() == (out2 / "estimate.json").read_bytes()


def test_estimate_errors(tmp_path):
    doc = json.loads((CONFIGS / "silicon_estimate.json").read_text())
    bad = dict(doc, estimate=dict(doc["estimate"], density_cm3=0))
    code, out = run(["estimate", "--config", write_config(tmp_path, bad)], tmp_path)
    assert code == 2 and not out.exists()
    missing = dict(doc, estimate={k: v for k, v in doc["estimate"].items() if k != "V_c"})
    assert run(["estimate", "--config", write_config(tmp_path, missing)], tmp_path)[0] == 2
    dimless = dict(doc, mode="dimensionless")
    assert run(["estimate", "--config", write_config(tmp_path, dimless)], tmp_path)[0] == 2


def test_spectrum_embedded(tmp_path):
    code, out = run(["spectrum", "--config", str(CONFIGS / "embedded_spectrum.json")], tmp_path)
    assert code == 0
    rep = json.loads((out / "embedded.json").read_text())
    assert rep["splitting"] == pytest.approx(math.sqrt(2) * 0.02, rel=1e-2)
    rows = read_csv(out / "spectrum.csv")
    assert rows[0] == {"block": "0", "index": "0", "eigenvalue": "0"}
    assert len(rows) == json.loads((out / "spectrum.json").read_text())["dimension"]


def test_spectrum_pure_jc_matches_ladder(tmp_path):
    code, out = run(["spectrum", "--config", str(CONFIGS / "embedded_spectrum.json"), "--set", "params.g_m=0",
                     "--set", "params.ensembles.0.Delta=-3", "--set", "spectrum.embedded=false"], tmp_path)
    assert code == 0
    rep = json.loads((out / "spectrum.json").read_text())
    assert rep["anharmonicity"] == pytest.approx(rep["jc_reference"]["ladder_step"], abs=1e-12)
    assert rep["manifold_gap"] == pytest.approx(math.sqrt(2) - 1, abs=1e-12)


def test_spectrum_dumps(tmp_path):
    code, out = run(["spectrum", "--config", str(CONFIGS / "embedded_spectrum.json"), "--set", "spectrum.vectors=true",
                     "--set", "spectrum.dump_basis=true", "--set", "spectrum.dump_operator=true"], tmp_path)
    assert code == 0
    from embedded_jc.hamiltonian import SparseOperator

    op = SparseOperator.load((out / "hamiltonian.coo.txt").read_text())
    basis = json.loads((out / "basis.json").read_text())
    assert op.dim == len(basis)
    vec = json.loads((out / "eigenvectors.json").read_text())
    assert np.asarray(vec["re"]).shape == (op.dim, op.dim)


def test_malformed_config_writes_nothing(tmp_path):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    code, out = run(["spectrum", "--config", str(cfg)], tmp_path)
    assert code == 2 and not out.exists()
    code, out = run(["spectrum", "--config", str(CONFIGS / "embedded_spectrum.json"), "--set", "params.unknown=1"], tmp_path)
    assert code == 2 and not out.exists()
    assert run(["spectrum", "--config", str(tmp_path / "missing.json")], tmp_path)[0] == 2
    assert cli.main(["nonsense", "--config", "x"]) == 2


def test_dimension_cap_exit(tmp_path, capsys):
    code, out = run(["spectrum", "--config", str(CONFIGS / "embedded_spectrum.json"), "--set", "truncation.n_max=120",
                     "--set", "truncation.k_max=120", "--set", "truncation.total_excitation_max=null"], tmp_path)
    assert code == 3 and not out.exists()
    assert "total_excitation_max" in capsys.readouterr().err


def test_numerical_failure_exit(tmp_path, monkeypatch):
    def boom(cfg):
        raise NumericalError("residual 1e-3")

    monkeypatch.setitem(cli.COMMANDS, "spectrum", boom)
    code, out = run(["spectrum", "--config", str(CONFIGS / "embedded_spectrum.json")], tmp_path)
    assert code == 4 and not out.exists()


def test_dynamics_rabi(tmp_path):
    code, out = run(["dynamics", "--config", str(CONFIGS / "rabi_dynamics.json")], tmp_path)
    assert code == 0
    rows = read_csv(out / "trajectory.csv")
    t = np.array([float(r["t"]) for r in rows])
    photons = np.array([float(r["photon_number"]) for r in rows])
    np.testing.assert_allclose(photons, np.sin(t) ** 2, atol=1e-12)
    meta = json.loads((out / "trajectory.meta.json").read_text())
    assert meta["version"].startswith("embedded-jc") and meta["kind"] == "unitary"


def test_dynamics_decay_fit(tmp_path):
    code, out = run(["dynamics", "--config", str(CONFIGS / "decay_dynamics.json")], tmp_path)
    assert code == 0
    meta = json.loads((out / "trajectory.meta.json").read_text())
    assert meta["fit"]["rate"] == pytest.approx(0.1, rel=1e-3)


def test_dynamics_populations_and_errors(tmp_path):
    cfg = str(CONFIGS / "rabi_dynamics.json")
    code, out = run(["dynamics", "--config", cfg, "--set", 'dynamics.populations=[{"transmon":0,"photons":1,"k":[0]}]'], tmp_path)
    assert code == 0
    assert "P[a,1,0]" in read_csv(out / "trajectory.csv")[0]
    assert run(["dynamics", "--config", cfg, "--set", "dynamics.t_grid=[]"], tmp_path, "e1")[0] == 2
    assert run(["dynamics", "--config", cfg, "--set", "dynamics.initial.photons=9"], tmp_path, "e2")[0] == 2
    assert run(["dynamics", "--config", cfg, "--set", "dynamics.fit=nope"], tmp_path, "e3")[0] == 2


def test_gate_commands(tmp_path):
    cfg = str(CONFIGS / "sqrt_swap_gate.json")
    code, out = run(["gate", "--config", cfg], tmp_path)
    assert code == 0
    ideal = json.loads((out / "gate.json").read_text())
    assert ideal["average_fidelity"] > 0.99
    assert len(ideal["schedule"]) == 3
    code, out = run(["gate", "--config", cfg, "--set", "params.kappa_c=1e-4", "--set", "params.gamma_JJ=1e-4",
                     "--set", "gate.dissipative=true"], tmp_path, "diss")
    assert code == 0
    assert json.loads((out / "gate.json").read_text())["average_fidelity"] < ideal["average_fidelity"]


def test_gate_needs_two_ensembles(tmp_path):
    doc = json.loads((CONFIGS / "sqrt_swap_gate.json").read_text())
    doc["params"]["ensembles"] = doc["params"]["ensembles"][:1]
    code, out = run(["gate", "--config", write_config(tmp_path, doc)], tmp_path)
    assert code == 2 and not out.exists()


def test_gate_regime_violation(tmp_path):
    code, _ = run(["gate", "--config", str(CONFIGS / "sqrt_swap_gate.json"), "--set", "params.delta=1"], tmp_path)
    assert code == 2


def test_sweep_two_level_crossing(tmp_path):
    code, out = run(["sweep", "--config", str(CONFIGS / "two_level_sweep.json")], tmp_path)
    assert code == 0
    rows = read_csv(out / "sweep.csv")
    flags = [r["two_level_valid"] == "true" for r in rows]
    assert flags == [False, False, False, True, True]
    assert [int(r["point"]) for r in rows] == list(range(5))
    assert all(r["error"] == "" for r in rows)


def test_sweep_one_point_equals_single_command(tmp_path):
    doc = json.loads((CONFIGS / "embedded_spectrum.json").read_text())
    doc["sweep"] = {"command": "embedded", "grid": {"params.g_m": [2e-5]}}
    cfg = write_config(tmp_path, doc)
    assert run(["sweep", "--config", cfg], tmp_path, "sw")[0] == 0
    assert run(["spectrum", "--config", cfg], tmp_path, "sp")[0] == 0
    row = read_csv(tmp_path / "sw" / "sweep.csv")[0]
    single = json.loads((tmp_path / "sp" / "embedded.json").read_text())
    assert float(row["splitting"]) == single["splitting"]


def test_sweep_point_errors_are_recorded(tmp_path):
    doc = json.loads((CONFIGS / "sqrt_swap_gate.json").read_text())
    doc["sweep"] = {"command": "gate", "grid": {"params.delta": [30.0, 1.0]}}
    code, out = run(["sweep", "--config", write_config(tmp_path, doc)], tmp_path)
    assert code == 0
    rows = read_csv(out / "sweep.csv")
    assert float(rows[0]["average_fidelity"]) > 0.99 and rows[0]["error"] == ""
    assert rows[1]["average_fidelity"] == "" and "delta" in rows[1]["error"]


def test_sweep_too_large(tmp_path):
    doc = json.loads((CONFIGS / "two_level_sweep.json").read_text())
    doc["sweep"]["grid"] = {"params.g_m": list(range(1, 1001)), "params.kappa_c": list(range(1, 1001))}
    code, out = run(["sweep", "--config", write_config(tmp_path, doc)], tmp_path)
    assert code == 2 and not out.exists()


def sweep_doc():
    doc = json.loads((CONFIGS / "two_level_sweep.json").read_text())
    doc["sweep"]["grid"] = {
        "params.ensembles.0.N_s": [1e4, 1e5, 1e6, 1e7, 1e8, 1e9],
        "params.kappa_c": [1e5, 1e6, 1e7],
    }
    return doc


def test_sweep_resume_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("EMBEDDED_JC_THREADS", "1")
    cfg = write_config(tmp_path, sweep_doc())
    assert run(["sweep", "--config", cfg], tmp_path, "full")[0] == 0
    out = tmp_path / "part"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out), "--max-points", "7"]) == 0
    assert len(read_csv(out / "sweep.csv")) == 7
    # a stray row written after the last manifest update is discarded on resume
    with open(out / "sweep.csv", "a") as fh:
        fh.write("999,garbage\n")
    assert cli.main(["sweep", "--config", cfg, "--out", str(out), "--resume", "--max-points", "4"]) == 0
    assert cli.main(["sweep", "--config", cfg, "--out", str(out), "--resume"]) == 0
    assert (out / "sweep.csv").read_bytes() == (tmp_path / "full" / "sweep.csv").read_bytes()
    man = json.loads((out / "sweep.manifest.json").read_text())
    assert man["completed"] == man["total"] == 18


def test_sweep_resume_rejects_other_config(tmp_path):
    cfg = write_config(tmp_path, sweep_doc())
    out = tmp_path / "part"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out), "--max-points", "3"]) == 0
    other = sweep_doc()
    other["params"]["g_m"] = 2000.0
    assert cli.main(["sweep", "--config", write_config(tmp_path, other, "b.json"), "--out", str(out), "--resume"]) == 2


def test_sweep_parallel_matches_serial(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, sweep_doc())
    monkeypatch.setenv("EMBEDDED_JC_THREADS", "1")
    assert run(["sweep", "--config", cfg], tmp_path, "serial")[0] == 0
    monkeypatch.setenv("EMBEDDED_JC_THREADS", "3")
    assert run(["sweep", "--config", cfg], tmp_path, "parallel")[0] == 0
    assert (tmp_path / "serial" / "sweep.csv").read_bytes() == (tmp_path / "parallel" / "sweep.csv").read_bytes()


def test_overrides():
    doc = {"params": {"ensembles": [{"N_s": 1, "Delta": 0}]}}
    new = apply_overrides(doc, ["params.ensembles.0.Delta=2.5", "params.g_c=1", "output_dir=abc"])
    assert new["params"]["ensembles"][0]["Delta"] == 2.5 and new["output_dir"] == "abc"
    assert doc["params"]["ensembles"][0]["Delta"] == 0
    with pytest.raises(ConfigError):
        apply_overrides(doc, ["no_equals_sign"])
    with pytest.raises(ConfigError):
        set_path(doc, "params.ensembles.5.Delta", 1)


def test_config_digest_stable():
    a = load_config(CONFIGS / "embedded_spectrum.json")
    b = load_config(CONFIGS / "embedded_spectrum.json")
    assert a.digest() == b.digest()
    assert load_config(CONFIGS / "embedded_spectrum.json", ["seed=3"]).digest() != a.digest()


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "embedded_jc.cli", "estimate", "--config", str(CONFIGS / "silicon_estimate.json"),
         "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert "N_s = 100000000" in res.stdout
