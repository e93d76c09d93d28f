import json

import numpy as np
import pytest

from cherenkov_mub import io
from cherenkov_mub._validation import ValidationError
from cherenkov_mub.cli import main
from cherenkov_mub.pipeline import RunManifest, StageError, run_certify, run_sweep

FAST = """
scenario:
  grid: {N_kx: 21}
binning: {T_x: 10.0}
outputs: [report, densities, kernel]
"""


@pytest.fixture
def fast_config(tmp_path):
    p = tmp_path / "fast.yaml"
    p.write_text(FAST)
    return p


@pytest.fixture
def counts_files(tmp_path):
    io.write_counts_csv(tmp_path / "xx.csv", [[389, 111], [111, 389]])
    (tmp_path / "pp.csv").write_text("# blurred-detector counts\nn_e,n_γ,count\n0,0,421\n0,1,79\n1,0,79\n1,1,421\n")
    return tmp_path / "xx.csv", tmp_path / "pp.csv"


def test_kernel_csv_round_trip(kernel, tmp_path):
    p = tmp_path / "k.csv"
    io.export_kernel_csv(kernel, p, "abc")
    back = io.import_kernel_csv(p)
    assert np.array_equal(back.f, kernel.f)
    assert np.array_equal(back.k_axis, kernel.k_axis)
    assert back.norm == kernel.norm
    assert back.scenario_hash == kernel.scenario_hash


def test_counts_csv(counts_files):
    xx, pp = counts_files
    assert np.array_equal(io.read_counts_csv(xx), [[389, 111], [111, 389]])
    assert np.array_equal(io.read_counts_csv(pp), [[421, 79], [79, 421]])


@pytest.mark.parametrize("text", [
    "a,b,c\n0,0,1\n",
    "n_e,n_gamma,count\n0,0,-1\n",
    "n_e,n_gamma,count\n0,0,1.5\n",
    "n_e,n_gamma,count\n0,x,1\n",
    "",
])
def test_counts_csv_rejects(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ValidationError):
        io.read_counts_csv(p)


def test_counts_csv_label_range(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("n_e,n_g,count\n0,2,1\n")
    with pytest.raises(ValidationError):
        io.read_counts_csv(p, d=2)


def test_report_json_deterministic():
    payload = {"b": np.float64(1.5), "a": [np.int64(2), np.nan, np.inf], "flag": np.bool_(True)}
    s1, s2 = io.dumps_report(payload, "h"), io.dumps_report(dict(reversed(payload.items())), "h")
    assert s1 == s2
    doc = json.loads(s1)
    assert doc["schema_version"] == io.SCHEMA_VERSION
    assert set(doc["constants"]) == {"alpha", "hbar_c_eV_um", "me_c2_eV"}
    assert doc["a"] == [2, "nan", "inf"] and doc["flag"] is True


def test_load_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ValidationError):
        io.load_config(p)
    p.write_text("")
    assert io.load_config(p) == {}
    p.write_text("a: [1,\n")
    with pytest.raises(ValidationError):
        io.load_config(p)


def test_manifest_validation(tmp_path):
    with pytest.raises(ValidationError):
        RunManifest.from_config({"bogus": 1})
    with pytest.raises(ValidationError):
        RunManifest(outputs=("plots",))
    with pytest.raises(ValidationError):
        RunManifest(binning={})
    with pytest.raises(ValidationError):
        RunManifest.from_config({"resolution": {"preset": "blurry"}})
    m1 = RunManifest.from_config({"binning": {"T_x": 10.0}})
    assert m1.digest() == RunManifest().digest()


def test_certify_cli(fast_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["certify", "--config", str(fast_config), "--out", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["summary"]["entangled"]["witness"]
    report = json.loads((out / "report.json").read_text())
    tabs = report["report"]["tables"]
    assert np.allclose(tabs["pp"]["p"], [[0.5, 0], [0, 0.5]], atol=5e-3)
    assert np.allclose(tabs["xp"]["p"], 0.25, atol=5e-3)
    head = (out / "density_xx.csv").read_text().splitlines()
    assert any(h.startswith("# manifest_hash: " + report["manifest_hash"]) for h in head)
    assert (out / "kernel.csv").exists()


def test_certify_byte_identical(fast_config, tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["certify", "--config", str(fast_config), "--out", str(tmp_path / name)]) == 0
    capsys.readouterr()
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_counts_mode_skips_physics(counts_files, capsys):
    xx, pp = counts_files
    assert main(["certify", "--counts", str(xx), str(pp)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["summary"]["witness_sum"] == pytest.approx(1.620)
    assert doc["summary"]["fidelity_bound"] == pytest.approx(0.620, abs=1e-9)
    rep, _ = run_certify(RunManifest(counts={"xx": str(xx), "pp": str(pp)}))
    assert rep.extra["stages"] == ["counts", "criteria"]
    assert rep.negativity is None


def test_counts_in_config_relative_paths(counts_files, tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("counts: {xx: xx.csv, pp: pp.csv}\n")
    assert main(["certify", "--config", str(cfg)]) == 0


def test_exit_code_validation(tmp_path, capsys):
    assert main(["certify", "--config", str(tmp_path / "missing.yaml")]) == 2
    p = tmp_path / "bad.yaml"
    p.write_text("scenario: {L_z: -1}\n")
    assert main(["certify", "--config", str(p)]) == 2
    p.write_text("binning: {T_x: 10}\nextra: 1\n")
    assert main(["certify", "--config", str(p)]) == 2
    assert "error" in capsys.readouterr().err


def test_exit_code_nonconvergence(tmp_path, capsys):
    p = tmp_path / "tight.yaml"
    p.write_text("scenario:\n  grid: {N_kx: 5, n_inner: 17, n_inner_max: 17, inner_rtol: 1.0e-14}\n")
    assert main(["certify", "--config", str(p)]) == 3
    with pytest.raises(StageError) as exc:
        run_certify(RunManifest.from_config(io.load_config(p)))
    assert exc.value.stage == "kernel"


def test_optimize_cli(fast_config, tmp_path, capsys):
    assert main(["optimize", "--config", str(fast_config), "--out", str(tmp_path), "--no-centers"]) == 0
    doc = json.loads(capsys.readouterr().out)
    opt = doc["optimization"]
    assert opt["best_Tx"] * opt["best_Tp"] == pytest.approx(4 * np.pi, abs=1e-12)
    rows = io.read_csv_rows(tmp_path / "optimization_trace.csv")
    assert rows[0] == ["T_x", "T_p", "objective"] and len(rows) > 10


def test_sweep_cli(fast_config, tmp_path, capsys):
    assert main(["sweep", "--config", str(fast_config), "--axis", "T_x", "--values", "5", "10",
                 "--out", str(tmp_path)]) == 0
    rows = io.read_csv_rows(tmp_path / "sweep_T_x.csv")
    assert len(rows) == 3 and float(rows[2][1]) == 10.0
    capsys.readouterr()
    assert main(["sweep", "--config", str(fast_config), "--axis", "T_x"]) == 0
    assert json.loads(capsys.readouterr().out)["rows"] == []
    assert main(["sweep", "--config", str(fast_config), "--axis", "nonsense", "--values", "1"]) == 2
    assert main(["sweep", "--config", str(fast_config), "--axis", "nonsense"]) == 2


def test_sweep_empty_and_window(fast_config):
    m = RunManifest.from_config(io.load_config(fast_config))
    assert run_sweep(m, "T_x", []) == ([], None)
    rows, _ = run_sweep(m, "E_win_lo", [3.0, 3.5])
    # widening the window moves the diagonal mass outward
    assert rows[0][-1] != rows[1][-1]
    with pytest.raises(ValidationError):
        run_sweep(m, "scenario.grid", [1.0])


def test_profile_cli(tmp_path, capsys):
    assert main(["profile", "--kl-window", "6.2", "7.1", "--n-theta", "501", "--out", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["theta_CR_deg"] == pytest.approx(26.77, abs=0.05)
    assert doc["p_out_total"] == pytest.approx(5.65e-5, rel=0.05)
    assert (tmp_path / "emission_profile.csv").exists()


def test_deflect_cli(tmp_path, capsys):
    assert main(["deflect", "--out", str(tmp_path), "--n", "41"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["phi_e_rad"] == pytest.approx(-5.4e-6, abs=0.05e-6)
    rows = io.read_csv_rows(tmp_path / "deflection_density.csv")
    assert rows[0] == ["phi_gamma_rad", "phi_e_rad", "density"] and len(rows) == 41 * 41 + 1
    assert main(["deflect", "--window", "3.75", "3.75", "--out", str(tmp_path)]) == 2
    assert main(["deflect", "--beta", "1.2"]) == 2


def test_robustness_cli(tmp_path, capsys):
    assert main(["robustness", "--sigma-x", "0", "--sigma-p", "0", "--T-x", "5"]) == 0
    assert json.loads(capsys.readouterr().out)["M"] == 2.0
    assert main(["robustness", "--sigma-x", "2", "--sigma-p", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["feasible_interval"] is None
    assert main(["robustness", "--grid", "0.1", "2", "5", "--out", str(tmp_path)]) == 0
    assert len(io.read_csv_rows(tmp_path / "robustness_surface.csv")) == 26
    assert main(["robustness", "--sigma-x", "-1", "--sigma-p", "1"]) == 2
