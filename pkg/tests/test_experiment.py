import json
from pathlib import Path

import numpy as np
import pytest

from advnf.cli import main
from advnf.core.errors import ConfigError
from advnf.core.outputs import read_csv
from advnf.services.data_service import MANIFEST_NAME, data_service
from advnf.services.experiment_service import experiment_service

ROOT = Path(__file__).resolve().parents[1]

TINY = {
    "model": {"n_layers": 2, "hidden": [8], "disc_hidden": [8]},
    "train": {
        "batch_size": 32,
        "gen_lr": 1e-3,
        "phase1": {"max_epochs": 2, "validation_draws": 64},
        "phase2": {"iterations": 6},
    },
    "ensemble": {"train": 64, "val": 16, "test": 32},
    "evaluation": {"n_per_condition": 40},
}

TINY_LATTICE = {
    "dataset": {"lattice_size": 3, "temperatures": [0.5, 1.5]},
    "mcmc": {"thinning_steps": 9, "burn_in_sweeps": 10},
    "ensemble": {"train": 6, "val": 2, "test": 3},
}


def _mog4(tmp_path: Path):
    return experiment_service.load_config(ROOT / "configs" / "mog4.toml", seed=1, out=tmp_path, overrides=TINY)


def test_lattice_ensembles_round_trip_through_csv(tmp_path):
    cfg = experiment_service.load_config(preset="xy-desk", out=tmp_path, overrides=TINY_LATTICE)
    dataset = data_service.generate(cfg)
    data_service.write(dataset, cfg, tmp_path / "data")

    columns, rows, metadata = read_csv(tmp_path / "data" / "cond001_train.csv")
    assert columns[:5] == ["n", "T", "J", "K", "x0"] and len(columns) == 4 + 9
    assert len(rows) == 6
    assert [float(v) for v in rows[0][:4]] == [3.0, 1.5, 1.0, 0.0]
    assert metadata["split"] == "train"

    manifest = json.loads((tmp_path / "data" / MANIFEST_NAME).read_text(encoding="utf-8"))
    entry = manifest["conditions"][0]
    assert entry["temperature"] == 0.5 and entry["thinning_steps"] == 9
    assert entry["burn_in_steps"] == 90
    assert entry["wall_time_seconds"] >= 0.0

    loaded = data_service.load(cfg, tmp_path / "data")
    for split in ("train", "val", "test"):
        for original, reloaded in zip(dataset.splits[split], loaded.splits[split]):
            assert np.array_equal(original, reloaded)

    reseeded = cfg.model_copy(update={"seed": cfg.seed + 1})
    assert data_service.load(reseeded, tmp_path / "data") is None


def test_generation_is_seeded_per_condition(tmp_path):
    cfg = _mog4(tmp_path)
    first = data_service.generate(cfg)
    second = data_service.generate(cfg)
    assert np.array_equal(first.splits["train"][2], second.splits["train"][2])
    assert not np.array_equal(first.splits["train"][0], first.splits["train"][1])
    assert first.splits["test"][0].shape == (32, 2)


@pytest.mark.slow
def test_train_evaluate_and_sample_a_tiny_synthetic_run(tmp_path):
    cfg = _mog4(tmp_path)
    outcome = experiment_service.cmd_train(cfg)
    assert outcome.phase1.epochs == 2
    assert outcome.phase2.iterations == 6
    for name in ("model.ckpt.json", "phase1.ckpt.json", "trace.csv"):
        assert (tmp_path / name).is_file()
    columns, rows, metadata = read_csv(tmp_path / "trace.csv")
    assert columns[:3] == ["phase", "iteration", "lambda1"]
    assert metadata["config_hash"] == cfg.config_hash()

    report = experiment_service.cmd_evaluate(cfg)
    assert len(report.rows) == 4
    _, report_rows, _ = read_csv(tmp_path / "report.csv")
    assert len(report_rows) == 5
    assert report_rows[-1][1] == "mean"
    assert all(0.0 <= row.ar <= 100.0 for row in report.rows)
    assert (tmp_path / "occupancy.csv").is_file()
    assert not (tmp_path / "emd_bins.csv").exists()

    sample = experiment_service.cmd_sample(tmp_path / "model.ckpt.json", "2", 20, out=tmp_path / "samples.csv")
    assert sample.samples.shape == (20, 2)
    columns, rows, metadata = read_csv(tmp_path / "samples.csv")
    assert columns == ["x0", "x1", "log_q"]
    assert metadata["condition"] == "2"

    chain = experiment_service.cmd_sample(tmp_path / "model.ckpt.json", "0", 30, imh=True)
    assert chain.log_q is None and len(chain.samples) == 30
    assert 0.0 <= chain.acceptance_rate <= 100.0


def test_cli_rejects_missing_or_invalid_configs(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.toml")]) == 1
    assert main(["gen-data"]) == 1
    broken = tmp_path / "broken.toml"
    broken.write_text("[dataset]\nkind = \"torus\"\n", encoding="utf-8")
    assert main(["gen-data", "--config", str(broken)]) == 1
    assert main(["sample", "--checkpoint", str(tmp_path / "none.json"), "--condition", "0"]) == 1
    assert capsys.readouterr().out == ""


def test_cli_gen_data_prints_a_json_summary(tmp_path, capsys):
    config = tmp_path / "tiny.toml"
    config.write_text(
        "[dataset]\nkind = \"rings4\"\n[ensemble]\ntrain = 10\nval = 2\ntest = 3\n", encoding="utf-8"
    )
    assert main(["gen-data", "--config", str(config), "--seed", "2", "--out", str(tmp_path / "run")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["command"] == "gen-data"
    assert summary["seed"] == 2
    # three splits for each of the four rings plus the manifest
    assert summary["files_written"] == 13
    assert (tmp_path / "run" / "data" / MANIFEST_NAME).is_file()


def test_synthetic_rows_carry_their_component(tmp_path):
    cfg = _mog4(tmp_path)
    dataset = data_service.generate(cfg)
    data_service.write(dataset, cfg, tmp_path / "data")

    columns, rows, _ = read_csv(tmp_path / "data" / "cond002_test.csv")
    assert columns == ["x1", "x2", "component_index", "c0", "c1"]
    assert len(rows) == 32
    mean = dataset.conditions[2].embedding().tolist()
    assert all(float(row[2]) == 2.0 and [float(v) for v in row[3:]] == mean for row in rows)

    loaded = data_service.load(cfg, tmp_path / "data")
    assert np.array_equal(loaded.splits["test"][2], dataset.splits["test"][2])

    # a file swapped in from another component is refused
    swapped = tmp_path / "data" / "cond001_val.csv"
    swapped.write_text((tmp_path / "data" / "cond002_val.csv").read_text(encoding="utf-8"), encoding="utf-8")
    with pytest.raises(ConfigError):
        data_service.load(cfg, tmp_path / "data")


def test_cli_usage_errors_exit_with_the_validation_code(capsys):
    for argv in (["reproduce", "table5"], ["frobnicate"], ["sample", "--condition", "1"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1
    assert "usage:" in capsys.readouterr().err
