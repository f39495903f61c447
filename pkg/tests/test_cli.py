import csv
import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from greedy_route_pde.cli import main
from greedy_route_pde.config import load_config
from greedy_route_pde.errors import ConfigParse
from greedy_route_pde.grid import GridSpec
from greedy_route_pde.neural.checkpoint import checkpoint_save
from greedy_route_pde.neural.layers import DeepOnetModel


def _write_cfg(path, **overrides):
    cfg = {
        "equation": "poisson",
        "dim": 1,
        "n": 16,
        "T": 6,
        "seed": 0,
        "out_dir": str(path.parent / "out"),
        "ensemble": [
            {"kind": "jacobi", "omega": 0.667, "label": "jacobi"},
            {"kind": "gauss_seidel", "label": "gs"},
        ],
        "policy": {"type": "greedy"},
        "data": {"counts": {"train": 3, "val": 2, "test": 2}},
        "training": {"epochs": 1, "batch_size": 2, "w_start": 2, "t_max": 6},
        "metrics": {"modes": [1, 3]},
        "compare": {"policies": [{"type": "single", "solver_id": 1,
                                  "name": "jacobi-only"}]},
        "theory": {"n": 8, "T": 2, "trials": 5},
    }
    cfg.update(overrides)
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_load_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("equation: poisson\nbogus_key: 1\n")
    with pytest.raises(ConfigParse):
        load_config(p)


def test_load_config_rejects_bad_equation(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("equation: heat\n")
    with pytest.raises(ConfigParse):
        load_config(p)


def test_load_config_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("n: 65\n")
    cfg = load_config(p)
    assert cfg.equation == "poisson"
    assert cfg.T == 300
    assert cfg.training.lr == 1e-3
    assert cfg.training.weight_decay == 0.005


def test_run_trace_has_one_row_per_iteration(tmp_path):
    cfg_path = _write_cfg(tmp_path / "c.yaml")
    result = CliRunner().invoke(main, ["run", "--config", str(cfg_path)])
    assert result.exit_code == 0, result.output
    with open(tmp_path / "out" / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["T"] == 6 and not summary["diverged"]
    assert (tmp_path / "out" / "convergence.png").exists()
    assert (tmp_path / "out" / "modes.csv").exists()


def test_missing_config_exits_2(tmp_path):
    result = CliRunner().invoke(main, ["run", "--config",
                                       str(tmp_path / "nope.yaml")])
    assert result.exit_code == 2


def test_bad_config_exits_2(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("ensemble: []\npolicy: {type: greedy}\n")
    result = CliRunner().invoke(main, ["run", "--config", str(p)])
    assert result.exit_code == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverged_run_exits_3(tmp_path):
    # a surrogate checkpoint with huge weights makes the iteration blow up
    # relu keeps the surrogate positively homogeneous, so scaled-up weights
    # amplify the residual multiplicatively every step
    g = GridSpec(1, 16)
    model = DeepOnetModel(g, np.random.default_rng(0), hidden=8, p=4,
                          activation="relu")
    for p in model.parameters():
        p.data = p.data * 100.0
    ckpt = tmp_path / "bad.grck"
    checkpoint_save(model, ckpt)
    cfg_path = _write_cfg(
        tmp_path / "c.yaml",
        ensemble=[{"kind": "neural", "checkpoint": str(ckpt)}],
        policy={"type": "single", "solver_id": 1},
        T=50,
    )
    result = CliRunner().invoke(main, ["run", "--config", str(cfg_path)])
    assert result.exit_code == 3, result.output
    assert (tmp_path / "out" / "trace.csv").exists()  # partial trace written


def test_compare_single_policy_single_row(tmp_path):
    cfg_path = _write_cfg(tmp_path / "c.yaml")
    result = CliRunner().invoke(main, ["compare", "--config", str(cfg_path)])
    assert result.exit_code == 0, result.output
    with open(tmp_path / "out" / "compare_table.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and rows[0]["policy"] == "jacobi-only"


def test_compare_table_matches_instance_csv(tmp_path):
    cfg_path = _write_cfg(tmp_path / "c.yaml")
    CliRunner().invoke(main, ["compare", "--config", str(cfg_path)])
    with open(tmp_path / "out" / "compare_jacobi-only.csv") as fh:
        finals = [float(r["final_error"]) for r in csv.DictReader(fh)]
    with open(tmp_path / "out" / "compare_table.csv") as fh:
        row = next(csv.DictReader(fh))
    mean = np.mean(finals)
    sem = np.std(finals, ddof=1) / np.sqrt(len(finals))
    assert abs(float(row["mean_final_error"]) - mean) <= 1e-12 * abs(mean)
    assert abs(float(row["sem_final_error"]) - sem) <= 1e-12 * max(abs(sem), 1e-300)


def test_rerun_is_byte_identical(tmp_path):
    files = ["trace.csv", "summary.json", "modes.csv"]
    outputs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        d.mkdir()
        cfg_path = _write_cfg(d / "c.yaml")
        result = CliRunner().invoke(
            main, ["run", "--config", str(cfg_path), "--out", str(d / "out")]
        )
        assert result.exit_code == 0, result.output
        outputs.append({f: (d / "out" / f).read_bytes() for f in files})
    assert outputs[0] == outputs[1]


def test_generate_data_then_run_uses_saved_dataset(tmp_path):
    cfg_path = _write_cfg(tmp_path / "c.yaml")
    runner = CliRunner()
    assert runner.invoke(main, ["generate-data", "--config",
                                str(cfg_path)]).exit_code == 0
    assert (tmp_path / "out" / "test.grds").exists()
    assert runner.invoke(main, ["run", "--config",
                                str(cfg_path)]).exit_code == 0


def test_verify_theory_report(tmp_path):
    cfg_path = _write_cfg(tmp_path / "c.yaml")
    result = CliRunner().invoke(main, ["verify-theory", "--config",
                                       str(cfg_path)])
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "out" / "theory_report.json").read_text())
    assert all(c["violations"] == 0 for c in report)
    names = {c["name"] for c in report}
    assert "greedy_suboptimality_bound" in names
    assert "supermodularity_prefix" in names


def test_seed_override_changes_data(tmp_path):
    cfg_path = _write_cfg(tmp_path / "c.yaml")
    runner = CliRunner()
    runner.invoke(main, ["run", "--config", str(cfg_path),
                         "--out", str(tmp_path / "o1")])
    runner.invoke(main, ["run", "--config", str(cfg_path), "--seed", "99",
                         "--out", str(tmp_path / "o2")])
    t1 = (tmp_path / "o1" / "trace.csv").read_bytes()
    t2 = (tmp_path / "o2" / "trace.csv").read_bytes()
    assert t1 != t2
