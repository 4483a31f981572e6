import json
import os

import numpy as np
import pytest

from cganlab.cli import main

MINI_TASK = {"type": "gauss_modes", "n_modes": 4, "radius": 3.0, "sigma": 0.25,
             "n_samples": 400}
MINI_EVAL = {"n_eval": 200, "n_bins": 20, "ndb_k": 4, "alpha": 0.05,
             "n_per_label": 50, "phase_epochs": 1}


def write_config(path, out_dir, formulation="classic", seed=0, epochs=1):
    cfg = {
        "seed": seed,
        "out_dir": str(out_dir),
        "task": MINI_TASK,
        "model": {"gen_hidden": [16, 16], "disc_hidden": [16, 16]},
        "train": {"epochs": epochs, "batch_size": 50},
        "loss": {"formulation": formulation},
        "eval": MINI_EVAL,
    }
    path.write_text(json.dumps(cfg))
    return path


def run_pipeline(cfg_path, out_dir):
    assert main(["gen-data", "--config", str(cfg_path)]) == 0
    assert main(["train", "--config", str(cfg_path)]) == 0
    ckpt = str(out_dir / "checkpoint.json")
    assert main(["eval-conditionality", "--config", str(cfg_path), "--checkpoint", ckpt]) == 0
    assert main(["ndb", "--config", str(cfg_path), "--checkpoint", ckpt]) == 0


def test_gen_data_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json", tmp_path / "run")
    assert main(["gen-data", "--config", str(cfg)]) == 0
    first = (tmp_path / "run" / "dataset.csv").read_bytes()
    assert main(["gen-data", "--config", str(cfg)]) == 0
    assert (tmp_path / "run" / "dataset.csv").read_bytes() == first


def test_full_pipeline_outputs_and_schema(tmp_path):
    out = tmp_path / "run"
    cfg = write_config(tmp_path / "c.json", out)
    run_pipeline(cfg, out)

    for name in ("config.json", "dataset.csv", "metrics.csv", "checkpoint.json",
                 "histogram.csv", "report.json", "ndb.json"):
        assert (out / name).exists(), name

    report = json.loads((out / "report.json").read_text())
    rates = report["classification_rates"]
    assert set(rates) == {"real_cond", "gen_cond", "real_ac", "gen_ac"}
    assert all(0.0 <= v <= 1.0 for v in rates.values())
    assert 0.0 <= report["oracle_accuracy"] <= 1.0
    assert 0.0 <= report["ndb"]["ndb_over_k"] <= 1.0

    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header.startswith("step,d_real_cond,d_gen_cond,d_real_ac,d_gen_ac,d_total")


def test_pipeline_reproducible_byte_for_byte(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        cfg = write_config(tmp_path / f"{tag}.json", out)
        run_pipeline(cfg, out)
        outs.append(out)
    for name in ("dataset.csv", "metrics.csv", "checkpoint.json", "histogram.csv",
                 "report.json", "ndb.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_effective_config_round_trips(tmp_path):
    out = tmp_path / "run"
    cfg = write_config(tmp_path / "c.json", out)
    assert main(["gen-data", "--config", str(cfg)]) == 0
    effective = out / "config.json"
    first = effective.read_bytes()
    # the echoed config is a valid input and reproduces itself
    assert main(["gen-data", "--config", str(effective)]) == 0
    assert effective.read_bytes() == first


def test_report_compares_formulations(tmp_path):
    for tag, formulation in (("base", "classic"), ("ac", "acontrario")):
        out = tmp_path / "sweep" / tag
        cfg = write_config(tmp_path / f"{tag}.json", out, formulation=formulation)
        run_pipeline(cfg, out)
    assert main(["report", "--run-dir", str(tmp_path / "sweep")]) == 0
    summary = json.loads((tmp_path / "sweep" / "summary.json").read_text())
    assert {r["formulation"] for r in summary["runs"]} == {"classic", "acontrario"}
    assert set(summary["comparison"]) == {"acontrario_real_ac_rate_lower",
                                          "oracle_accuracy_delta", "ndb_ordering_ok"}
    assert summary["baseline"]["median_real_ac_true_rate"] is not None


def test_unknown_keys_rejected(tmp_path, capsys):
    bad = {"seed": 0, "out_dir": str(tmp_path / "r"), "task": MINI_TASK, "typo": 1}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert main(["gen-data", "--config", str(p)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: invalid-config:") and err.count("\n") == 1

    bad = {"seed": 0, "out_dir": str(tmp_path / "r"),
           "task": dict(MINI_TASK, extra=True)}
    p.write_text(json.dumps(bad))
    assert main(["gen-data", "--config", str(p)]) == 1
    assert "extra" in capsys.readouterr().err


def test_invalid_loss_config_rejected(tmp_path, capsys):
    cfg = {"seed": 0, "out_dir": str(tmp_path / "r"), "task": MINI_TASK,
           "loss": {"formulation": "classic", "lambdas": [1, 1, 1, 1]}}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["gen-data", "--config", str(p)]) == 0  # gen-data ignores loss weights
    assert main(["train", "--config", str(p)]) == 1
    assert "error:" in capsys.readouterr().err


def test_missing_files_reported(tmp_path, capsys):
    assert main(["gen-data", "--config", str(tmp_path / "nope.json")]) == 1
    assert "missing-file" in capsys.readouterr().err

    cfg = write_config(tmp_path / "c.json", tmp_path / "run")
    assert main(["train", "--config", str(cfg)]) == 1  # dataset not generated yet
    assert "missing-file" in capsys.readouterr().err

    assert main(["gen-data", "--config", str(cfg)]) == 0
    assert main(["eval-conditionality", "--config", str(cfg),
                 "--checkpoint", str(tmp_path / "run" / "nope.json")]) == 1
    assert "missing-file" in capsys.readouterr().err


def test_checkpoint_task_mismatch(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write_config(tmp_path / "c.json", out)
    assert main(["gen-data", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0

    other = {"seed": 0, "out_dir": str(tmp_path / "other"),
             "task": {"type": "cond_regression", "n_samples": 300},
             "train": {"epochs": 1, "batch_size": 50},
             "eval": MINI_EVAL}
    p2 = tmp_path / "other.json"
    p2.write_text(json.dumps(other))
    assert main(["gen-data", "--config", str(p2)]) == 0
    assert main(["eval-conditionality", "--config", str(p2),
                 "--checkpoint", str(out / "checkpoint.json")]) == 1
    assert "task-mismatch" in capsys.readouterr().err


def test_seed_and_out_overrides(tmp_path):
    cfg = write_config(tmp_path / "c.json", tmp_path / "run")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "elsewhere"),
                 "--seed", "99"]) == 0
    assert (tmp_path / "elsewhere" / "dataset.csv").exists()
    echoed = json.loads((tmp_path / "elsewhere" / "config.json").read_text())
    assert echoed["seed"] == 99
    base = (tmp_path / "run")
    assert main(["gen-data", "--config", str(cfg)]) == 0
    assert (base / "dataset.csv").read_bytes() != \
        (tmp_path / "elsewhere" / "dataset.csv").read_bytes()


def test_regression_task_pipeline_skips_oracle(tmp_path):
    out = tmp_path / "reg"
    cfg_doc = {"seed": 1, "out_dir": str(out),
               "task": {"type": "cond_regression", "n_samples": 400},
               "model": {"gen_hidden": [16, 16], "disc_hidden": [16, 16]},
               "train": {"epochs": 1, "batch_size": 50},
               "loss": {"formulation": "acontrario"},
               "eval": MINI_EVAL}
    p = tmp_path / "reg.json"
    p.write_text(json.dumps(cfg_doc))
    run_pipeline(p, out)
    report = json.loads((out / "report.json").read_text())
    assert report["oracle_accuracy"] is None
    assert report["ndb"] is not None
