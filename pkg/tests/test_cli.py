import json
import subprocess
import sys

import numpy as np
import pytest

from liehmc import __version__
from liehmc.cli import (EXIT_BLOWUP, EXIT_CONFIG, EXIT_IO, EXIT_K_INVARIANCE, EXIT_OK,
                        ConfigError, load_config, main)

HAAR = {
    "target": {"type": "group", "family": "SO", "n": 3},
    "integrator": {"scheme": "leapfrog", "step_size": 0.5, "n_steps": 3},
    "sampling": {"n_samples": 150, "seed": 5},
}

VMF = {
    "target": {"type": "sphere", "n": 3},
    "potential": {"name": "vmf", "mu": [0.0, 0.0, 1.0], "kappa": 2.0},
    "integrator": {"scheme": "leapfrog", "step_size": 0.4, "n_steps": 4},
    "sampling": {"n_samples": 4000, "burn_in": 50, "seed": 2},
}


def write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, cfg, out="out", *extra):
    return main(["run", "--config", write(tmp_path, cfg), "--output-dir",
                 str(tmp_path / out), "--quiet", *extra])


def records(path):
    lines = path.read_text().splitlines()
    return json.loads(lines[0]), [json.loads(line) for line in lines[1:]]


def test_haar_run(tmp_path):
    assert run(tmp_path, HAAR) == EXIT_OK
    header, recs = records(tmp_path / "out" / "samples.jsonl")
    assert header["schema_version"] == 1
    assert len(recs) == 150
    assert all(r["accepted"] for r in recs)
    assert [r["index"] for r in recs] == list(range(150))
    q = np.array(recs[10]["q"]).reshape(3, 3)
    assert np.abs(q.T @ q - np.eye(3)).max() < 1e-12
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["acceptance_rate"] == 1.0
    assert report["max_membership_defect"] < 1e-12
    assert report["ess_trace_total"] > 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["liehmc_version"] == __version__
    assert manifest["config"]["sampling"]["seed"] == 5


def test_full_precision_output(tmp_path):
    assert run(tmp_path, HAAR) == EXIT_OK
    line = (tmp_path / "out" / "samples.jsonl").read_text().splitlines()[1]
    first = line.split('"q": [')[1].split(",")[0]
    assert float(first) == json.loads(line)["q"][0]
    assert len(first.lstrip("-").replace(".", "").lstrip("0").split("e")[0]) >= 15


def test_determinism_and_manifest_rerun(tmp_path):
    assert run(tmp_path, HAAR, "a") == EXIT_OK
    assert run(tmp_path, HAAR, "b") == EXIT_OK
    a = (tmp_path / "a" / "samples.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "samples.jsonl").read_bytes()
    rc = main(["run", "--config", str(tmp_path / "a" / "manifest.json"),
               "--output-dir", str(tmp_path / "c"), "--quiet"])
    assert rc == EXIT_OK
    assert a == (tmp_path / "c" / "samples.jsonl").read_bytes()


def test_seed_override_and_chains(tmp_path):
    assert run(tmp_path, HAAR, "a") == EXIT_OK
    assert run(tmp_path, HAAR, "b", "--seed-override", "6", "--chains", "2") == EXIT_OK
    _, recs = records(tmp_path / "b" / "samples.jsonl")
    assert len(recs) == 300
    assert [r["chain"] for r in recs] == [0] * 150 + [1] * 150
    _, base = records(tmp_path / "a" / "samples.jsonl")
    assert base[0]["q"] != recs[0]["q"]
    assert recs[0]["q"] != recs[150]["q"]
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    assert len(report["chains"]) == 2


def test_vmf_report(tmp_path):
    assert run(tmp_path, VMF) == EXIT_OK
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    vmf = report["vmf"]
    assert vmf["oracle"] == pytest.approx(1 / np.tanh(2) - 0.5)
    assert abs(vmf["mean_resultant_length"] - vmf["oracle"]) <= 3 * vmf["standard_error"]
    assert report["max_vertical_leakage"] <= 1e-9
    header, recs = records(tmp_path / "out" / "samples.jsonl")
    assert "x" in header["columns"]
    x = np.array(recs[5]["x"])
    q = np.array(recs[5]["q"]).reshape(3, 3)
    assert np.array_equal(x, q[:, 2])


def test_csv_output(tmp_path):
    cfg = dict(HAAR, output={"format": "csv"})
    assert run(tmp_path, cfg) == EXIT_OK
    lines = (tmp_path / "out" / "samples.csv").read_text().splitlines()
    assert lines[0].startswith("# liehmc.samples schema_version=1")
    assert lines[1].split(",")[:3] == ["index", "chain", "q_0"]
    assert len(lines) == 2 + 150
    assert len(lines[2].split(",")) == 2 + 9 + 3


def test_stiefel_run(tmp_path):
    cfg = {
        "target": {"type": "stiefel", "n": 4, "k": 2},
        "potential": {"name": "fisher", "F": [[0, 0], [0, 0], [2, 0], [0, 2]]},
        "integrator": {"scheme": "force_gradient", "step_size": 0.3, "n_steps": 3},
        "sampling": {"n_samples": 20},
    }
    assert run(tmp_path, cfg) == EXIT_OK
    header, recs = records(tmp_path / "out" / "samples.jsonl")
    assert header["x_order"] == "column-major"
    assert len(recs[0]["x"]) == 8


def test_energy_scan_in_report(tmp_path):
    cfg = dict(HAAR, potential={"name": "gauge", "U": np.eye(3).tolist(), "beta": 0.5},
               diagnostics={"energy_scan": {"step_sizes": [0.2, 0.1, 0.05], "n_trajectories": 10}})
    assert run(tmp_path, cfg) == EXIT_OK
    scan = json.loads((tmp_path / "out" / "report.json").read_text())["energy_scan"]
    assert abs(scan["slope"] - 2.0) < 0.3


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(bogus=1),
    lambda c: c["target"].update(n=1),
    lambda c: c["integrator"].update(step_size=0),
    lambda c: c["integrator"].update(scheme="rk4"),
    lambda c: c["sampling"].update(thinning=0),
    lambda c: c["sampling"].update(seed=-3),
    lambda c: c.update(potential={"name": "vmf", "mu": [1, 1, 0], "kappa": 1.0}),
    lambda c: c.update(potential={"name": "gauge"}),
    lambda c: c.update(metric={"flavor": "neg_killing"}, target={"type": "group", "family": "SL", "n": 2}),
    lambda c: c.update(target={"type": "stiefel", "n": 3}),
])
def test_config_errors(tmp_path, mutate):
    cfg = json.loads(json.dumps(HAAR))
    mutate(cfg)
    assert run(tmp_path, cfg) == EXIT_CONFIG


def test_unreadable_and_malformed_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--quiet"]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--quiet"]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_k_invariance_exit(tmp_path):
    cfg = dict(VMF, potential={"name": "gauge", "U": np.diag([1.0, 2.0, 3.0]).tolist()})
    assert run(tmp_path, cfg) == EXIT_K_INVARIANCE


def test_io_failure_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    rc = main(["run", "--config", write(tmp_path, HAAR), "--output-dir", str(blocker / "sub"), "--quiet"])
    assert rc == EXIT_IO


def test_blowup_ceiling_exit(tmp_path):
    cfg = dict(HAAR, potential={"name": "gauge", "U": np.eye(3).tolist(), "beta": 500.0},
               integrator={"scheme": "leapfrog", "step_size": 1.0, "n_steps": 5},
               diagnostics={"max_blowup_rate": 0.0})
    cfg["sampling"] = {"n_samples": 30, "seed": 1}
    assert run(tmp_path, cfg) == EXIT_BLOWUP


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "liehmc.cli", "run", "--config", write(tmp_path, HAAR),
                           "--output-dir", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "acceptance 1.0000" in proc.stdout
