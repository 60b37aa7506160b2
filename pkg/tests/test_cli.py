import json
import numpy as np
import pytest

from entseq.cli import main
from entseq.noise_model import NoiseConfig
from entseq.optimizer import OptimizerConfig


def small_spec(seed=7, n_list=(2,)):
    return {
        "schema_version": 1,
        "noise": NoiseConfig(seed=seed).to_dict(),
        "optimizer": OptimizerConfig(
            ensemble_size=15, polish_rounds=2, n_kicks=2
        ).to_dict(),
        "N_list": list(n_list),
    }


def write_spec(tmp_path, spec, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(spec))
    return str(path)


def run(args):
    return main(args)


def read_csv_without_walltime(path):
    lines = path.read_text().splitlines()
    return [",".join(line.split(",")[:-1]) for line in lines]


def test_optimize_writes_solution_and_csv(tmp_path, capsys):
    cfg = write_spec(tmp_path, small_spec())
    out = tmp_path / "out"
    assert run(["optimize", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "optimize_summary.csv").exists()
    sol = out / "solution_quasistatic_N002.json"
    assert sol.exists()
    doc = json.loads(sol.read_text())
    assert doc["N"] == 2 and len(doc["angles"]) == 12
    header = (out / "optimize_summary.csv").read_text().splitlines()[0]
    assert header == "N,epsilon_uncorrected,epsilon_optimized,epsilon_pe,iterations,wall_time_s"


def test_optimize_determinism_bytes(tmp_path):
    cfg = write_spec(tmp_path, small_spec())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(["optimize", "--config", cfg, "--out", str(out1)]) == 0
    assert run(["optimize", "--config", cfg, "--out", str(out2)]) == 0
    s1 = (out1 / "solution_quasistatic_N002.json").read_bytes()
    s2 = (out2 / "solution_quasistatic_N002.json").read_bytes()
    assert s1 == s2
    # CSV is byte-identical apart from the wall_time_s column
    assert read_csv_without_walltime(out1 / "optimize_summary.csv") == \
        read_csv_without_walltime(out2 / "optimize_summary.csv")


def test_seed_flag_changes_results(tmp_path):
    cfg = write_spec(tmp_path, small_spec())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(["optimize", "--config", cfg, "--out", str(out1), "--seed", "1"]) == 0
    assert run(["optimize", "--config", cfg, "--out", str(out2), "--seed", "2"]) == 0
    a = json.loads((out1 / "solution_quasistatic_N002.json").read_text())
    b = json.loads((out2 / "solution_quasistatic_N002.json").read_text())
    assert a["angles"] != b["angles"]


@pytest.fixture(scope="module")
def solution_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("solutions")
    cfg = write_spec(tmp, small_spec())
    out = tmp / "out"
    assert run(["optimize", "--config", cfg, "--out", str(out)]) == 0
    return out


def test_evaluate_stored_seeds_reproduce_metrics(solution_dir, tmp_path, capsys):
    sol = solution_dir / "solution_quasistatic_N002.json"
    assert run(["evaluate", "--solution", str(sol), "--stored-seeds"]) == 0
    payload = json.loads(capsys.readouterr().out)
    stored = json.loads(sol.read_text())
    assert payload["epsilon"] == pytest.approx(stored["epsilon"], abs=1e-15)
    assert payload["epsilon_pe"] == pytest.approx(stored["epsilon_pe"], abs=1e-15)


def test_evaluate_zero_noise_override(solution_dir, tmp_path, capsys):
    sol = solution_dir / "solution_quasistatic_N002.json"
    from dataclasses import replace

    override = {
        "schema_version": 1,
        "noise": NoiseConfig(sigma_nonlocal=0.0, seed=3).to_dict(),
        "M": 10,
    }
    cfg = write_spec(tmp_path, override, "override.json")
    assert run(["evaluate", "--solution", str(sol), "--config", cfg]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["epsilon"] == pytest.approx(0.0, abs=1e-12)


def test_evaluate_determinism(solution_dir, capsys):
    sol = solution_dir / "solution_quasistatic_N002.json"
    assert run(["evaluate", "--solution", str(sol), "--seed", "5"]) == 0
    first = capsys.readouterr().out
    assert run(["evaluate", "--solution", str(sol), "--seed", "5"]) == 0
    assert capsys.readouterr().out == first


def test_decompose_cnot_synthetic(tmp_path, capsys):
    # inject a synthetic two-segment solution realizing a CNOT equivalent
    x = np.zeros(12)
    x[10] = np.pi / 2
    doc = {
        "N": 2,
        "angles": x.tolist(),
        "config": {"noise": NoiseConfig().to_dict(),
                   "optimizer": OptimizerConfig().to_dict()},
        "seeds": {"ensemble_seed": 1},
    }
    sol = tmp_path / "cnot.json"
    sol.write_text(json.dumps(doc))
    assert run(["decompose", "--solution", str(sol), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    report = json.loads((tmp_path / "decomposition.json").read_text())
    assert report["pe_fidelity"] == pytest.approx(1.0, abs=1e-9)
    assert report["pe_functional_D"] == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(report["weyl_coordinates"], [np.pi / 2, 0, 0], atol=1e-8)
    assert "F_PE" in out


def test_decompose_identity_solution(tmp_path, capsys):
    doc = {
        "N": 1,
        "angles": [0.0] * 6,
        "config": {"noise": NoiseConfig().to_dict(),
                   "optimizer": OptimizerConfig().to_dict()},
        "seeds": {"ensemble_seed": 1},
    }
    sol = tmp_path / "ident.json"
    sol.write_text(json.dumps(doc))
    assert run(["decompose", "--solution", str(sol), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "decomposition.json").read_text())
    assert report["pe_fidelity"] == pytest.approx(np.cos(np.pi / 8) ** 2, abs=1e-9)
    assert report["pe_functional_D"] == pytest.approx(2.0, abs=1e-9)


def test_contour_csv(solution_dir, tmp_path):
    sol = solution_dir / "solution_quasistatic_N002.json"
    spec = {
        "schema_version": 1,
        "noise": NoiseConfig(seed=7).to_dict(),
        "grid": {"sigma_local": [1e-3, 1e-2, 2], "sigma_nonlocal": [0.05, 0.2, 2], "M": 10},
    }
    cfg = write_spec(tmp_path, spec, "grid.json")
    out = tmp_path / "out"
    assert run(["contour", "--config", cfg, "--solution", str(sol), "--out", str(out)]) == 0
    lines = (out / "contour.csv").read_text().splitlines()
    assert lines[0] == "sigma_local,sigma_nonlocal,epsilon"
    assert len(lines) == 5
    # threaded rerun must give identical bytes
    out2 = tmp_path / "out2"
    assert run(["contour", "--config", cfg, "--solution", str(sol), "--out", str(out2),
                "--threads", "4"]) == 0
    assert (out / "contour.csv").read_bytes() == (out2 / "contour.csv").read_bytes()


def test_optimize_noise_free_steers_to_perfect_entangler(tmp_path, capsys):
    spec = small_spec()
    spec["noise"]["sigma_nonlocal"] = 0.0
    cfg = write_spec(tmp_path, spec, "nofree.json")
    out = tmp_path / "out"
    assert run(["optimize", "--config", cfg, "--out", str(out)]) == 0
    row = (out / "optimize_summary.csv").read_text().splitlines()[1].split(",")
    eps_opt, eps_pe = float(row[2]), float(row[3])
    assert eps_opt == pytest.approx(0.0, abs=1e-10)
    assert eps_pe <= 1e-8
    # the decomposition of that solution reports a perfect entangler
    sol = out / "solution_quasistatic_N002.json"
    assert run(["decompose", "--solution", str(sol), "--out", str(out)]) == 0
    capsys.readouterr()
    report = json.loads((out / "decomposition.json").read_text())
    assert report["pe_fidelity"] == pytest.approx(1.0, abs=1e-8)


def test_contour_monotone_in_nonlocal_sigma(solution_dir, tmp_path):
    sol = solution_dir / "solution_quasistatic_N002.json"
    spec = {
        "schema_version": 1,
        "noise": NoiseConfig(seed=19).to_dict(),
        "grid": {"sigma_local": [1e-4, 1e-4, 1], "sigma_nonlocal": [0.02, 0.3, 3], "M": 60},
    }
    cfg = write_spec(tmp_path, spec, "mono.json")
    out = tmp_path / "mono"
    assert run(["contour", "--config", cfg, "--solution", str(sol), "--out", str(out)]) == 0
    rows = [l.split(",") for l in (out / "contour.csv").read_text().splitlines()[1:]]
    eps = [float(r[2]) for r in rows]
    assert eps[0] < eps[1] < eps[2]


def test_calibrate_command(tmp_path, capsys):
    spec = {
        "schema_version": 1,
        "noise": NoiseConfig(seed=13).to_dict(),
        "N": 4,
        "M": 100,
    }
    cfg = write_spec(tmp_path, spec, "cal.json")
    assert run(["calibrate", "--config", cfg, "--target", "0.1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert abs(payload["achieved_uncorrected_error"] - 0.1) <= 0.005
    assert payload["calibrated_sigma_nonlocal"] > 0.1


def test_config_errors_exit_1(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert run(["optimize", "--config", missing, "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["optimize", "--config", str(bad), "--out", str(tmp_path)]) == 1
    spec = small_spec()
    del spec["N_list"]
    cfg = write_spec(tmp_path, spec, "nolist.json")
    assert run(["optimize", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert run(["evaluate", "--solution", missing]) == 1
