import pytest

from advnf.core.errors import ConfigError
from advnf.core.outputs import read_csv
from advnf.services.reproduce_service import STUDIES, comparison_columns, normalize_study, reproduce_service

TINY = {
    "model": {"n_layers": 2, "hidden": [8], "disc_hidden": [8]},
    "train": {"batch_size": 32, "phase1": {"max_epochs": 1, "validation_draws": 64}, "phase2": {"iterations": 6}},
    "ensemble": {"train": 64, "val": 16, "test": 16},
    "evaluation": {"n_per_condition": 20},
}


def test_study_names():
    assert normalize_study(" Table2-Desk ") == "table2-desk"
    assert "fig4-data" in STUDIES
    with pytest.raises(ConfigError):
        normalize_study("table5")


def test_comparison_columns_pair_mean_and_std():
    columns = comparison_columns("projection")
    assert columns[:4] == ("projection", "variant", "nll_mean", "nll_std")
    assert len(columns) == 2 + 2 * 6


@pytest.mark.slow
def test_ring_snapshots_are_written_at_evenly_spaced_iterations(tmp_path):
    result = reproduce_service.run_study("fig4-data", seed=0, out_dir=tmp_path, overrides=TINY)
    snapshots = sorted(path.name for path in tmp_path.glob("snapshot_*.csv"))
    assert snapshots == [f"snapshot_{it:07d}.csv" for it in (0, 2, 3, 4, 6)]

    columns, rows, metadata = read_csv(tmp_path / "occupancy.csv")
    assert columns == ["iteration", "mode", "fraction"]
    assert len(rows) == 5 * 4
    assert metadata["seed"] == "0"
    assert result.summary()["study"] == "fig4-data"
    assert (tmp_path / "advnf_rkl" / "model.ckpt.json").is_file()
