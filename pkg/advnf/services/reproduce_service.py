"""Desk-scale reproductions of the comparison tables and figure data.

Every study trains the {CNF, AdvNF} x {FKL, RKL, FKL&RKL} grid (or the slice
of it the study needs) through the same ``experiment_service`` pipeline and
writes a directory of CSV files. Each file carries the config hash and the
master seed in its ``#`` header, so identical re-runs differ only there.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np

from advnf.core.config import settings
from advnf.core.errors import ConfigError
from advnf.core.outputs import write_csv
from advnf.experiments.presets import VARIANTS, deep_merge
from advnf.models.experiment import ExperimentConfig
from advnf.models.metrics import MetricsReport
from advnf.networks.flow import FlowModel
from advnf.services.data_service import Dataset
from advnf.services.experiment_service import TrainOutcome, experiment_service
from advnf.services.flow_service import flow_service
from advnf.services.mcmc_service import mcmc_service
from advnf.services.metrics_service import metrics_service
from advnf.services.synthetic_service import synthetic_service

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

STUDIES = ("table1", "table2-desk", "table6-desk", "table7-desk", "fig3-data", "fig4-data")
SYNTHETIC_PRESETS = ("mog4", "mog8", "rings4")
LATTICE_PRESET = "xy-desk"
ENSEMBLE_SIZES = (100, 512, 1024, 5120)
PROJECTIONS = ("tan", "sigmoid")
SCATTER_DRAWS = 1000
FIG4_SNAPSHOTS = 5

METRIC_NAMES = ("nll", "ar", "ol_energy", "emd_energy", "ol_mag", "emd_mag")
TABLE1_COLUMNS = ("dataset", "variant", "nll_mean", "nll_std", "ar_mean", "ar_std", "mode_occupancy")
CURVE_COLUMNS = ("source", "temperature", "energy_mean", "energy_std", "mag_mean", "mag_std")
SCATTER_COLUMNS = ("condition", "x0", "x1")


def comparison_columns(key: str) -> tuple[str, ...]:
    return (key, "variant") + tuple(f"{name}_{stat}" for name in METRIC_NAMES for stat in ("mean", "std"))


@dataclass
class Run:
    cfg: ExperimentConfig
    outcome: TrainOutcome
    report: MetricsReport


@dataclass
class StudyResult:
    study: str
    out_dir: Path
    files: list[Path] = field(default_factory=list)
    reports: list[MetricsReport] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        return {
            "study": self.study,
            "out_dir": str(self.out_dir),
            "files": [str(path) for path in self.files],
            "variants": [report.variant for report in self.reports],
        }


def normalize_study(study: Optional[str]) -> str:
    candidate = str(study or "").strip().lower()
    if candidate not in STUDIES:
        raise ConfigError(f"unknown study {study!r}; expected one of {STUDIES}")
    return candidate


def bundle_hash(configs: list[ExperimentConfig]) -> str:
    joined = ",".join(cfg.config_hash() for cfg in configs)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


def _slug(cfg: ExperimentConfig) -> str:
    return f"{'advnf' if cfg.adversarial else 'cnf'}_{cfg.variant}"


def _metric_cells(report: MetricsReport) -> list[Optional[float]]:
    cells = []
    for name in METRIC_NAMES:
        cells.extend([report.mean.get(name), report.std.get(name)])
    return cells


def _pooled_occupancy(report: MetricsReport) -> Optional[list[float]]:
    rows = [row.mode_occupancy for row in report.rows if row.mode_occupancy is not None]
    if not rows:
        return None
    return np.mean(np.asarray(rows), axis=0).tolist()


class ReproduceService:
    # -- building blocks -------------------------------------------------

    def _config(
        self,
        preset: str,
        seed: int,
        out_dir: Path,
        overrides: Optional[dict[str, Any]],
        study_sections: Optional[dict[str, Any]] = None,
    ) -> ExperimentConfig:
        # preset < study settings < caller overrides < seed/out
        merged = deep_merge(study_sections or {}, overrides or {})
        return experiment_service.load_config(preset=preset, seed=seed, out=out_dir, overrides=merged)

    def _variant(
        self, base: ExperimentConfig, variant: str, adversarial: bool, out_dir: Path, **model_updates: Any
    ) -> ExperimentConfig:
        update: dict[str, Any] = {"variant": variant, "adversarial": adversarial}
        if model_updates:
            update["model"] = base.model.model_copy(update=model_updates)
        cfg = base.model_copy(update=update)
        return cfg.model_copy(update={"output_dir": str(out_dir / _slug(cfg))})

    def _compare_variants(
        self,
        base: ExperimentConfig,
        dataset: Dataset,
        out_dir: Path,
        jobs: int,
        flags: tuple[bool, ...] = (False, True),
        train_size: Optional[int] = None,
        label_suffix: str = "",
        **model_updates: Any,
    ) -> list[Run]:
        """Train and evaluate each variant; baseline and adversarial runs share phase 1."""
        runs = []
        for variant in VARIANTS:
            cache = None
            for adversarial in flags:
                cfg = self._variant(base, variant, adversarial, out_dir, **model_updates)
                if cache is None and len(flags) > 1:
                    cache = experiment_service.run_phase1(cfg, dataset, train_size)
                outcome = experiment_service.train_model(
                    cfg, dataset, phase1=cache, out_dir=cfg.output_dir, train_size=train_size
                )
                report = experiment_service.evaluate(
                    cfg, outcome.model, dataset, jobs, variant=cfg.variant_label() + label_suffix
                )
                runs.append(Run(cfg=cfg, outcome=outcome, report=report))
        return runs

    def _imh_chain(self, model: FlowModel, c, dataset: Dataset, n: int, rng: np.random.Generator) -> np.ndarray:
        proposal_rng, chain_rng = rng.spawn(2)
        result = mcmc_service.imh_resample(
            lambda k: flow_service.flow_sample(model, k, c, proposal_rng),
            lambda x: dataset.target.log_prob(x, c),
            n,
            chain_rng,
        )
        return result.chain

    def _scatter_rows(self, model: FlowModel, dataset: Dataset, seed: int, draws: int) -> list[list[Any]]:
        rng = np.random.default_rng([seed, 3])
        rows = []
        for c in dataset.conditions:
            samples, _ = flow_service.flow_sample(model, draws, c, rng)
            rows.extend([c.label(), x0, x1] for x0, x1 in samples.tolist())
        return rows

    def _write_scatter(self, runs: list[Run], base: ExperimentConfig, dataset: Dataset, out_dir: Path) -> list[Path]:
        target_rows = [
            [c.label(), x0, x1]
            for c, samples in zip(dataset.conditions, dataset.splits["test"])
            for x0, x1 in samples.tolist()
        ]
        files = [
            write_csv(out_dir / "target_samples.csv", SCATTER_COLUMNS, target_rows, base.config_hash(), base.seed)
        ]
        for run in runs:
            rows = self._scatter_rows(run.outcome.model, dataset, run.cfg.seed, SCATTER_DRAWS)
            files.append(
                write_csv(
                    out_dir / f"{_slug(run.cfg)}_samples.csv", SCATTER_COLUMNS, rows,
                    run.cfg.config_hash(), run.cfg.seed, extra={"variant": run.cfg.variant_label()},
                )
            )
        return files

    def _curve_rows(self, runs: list[Run], dataset: Dataset, seed: int, n: int) -> list[list[Any]]:
        """Per-temperature observable mean and std for the reference ensemble and each model."""
        rows = []
        for c, reference in zip(dataset.conditions, dataset.splits["test"]):
            stats = metrics_service.observable_summary(reference, c.J, c.K)
            rows.append(["MCMC", c.temperature, stats["energy_mean"], stats["energy_std"], stats["mag_mean"], stats["mag_std"]])
        for run in runs:
            streams = np.random.default_rng([seed, 5]).spawn(len(dataset.conditions))
            for c, rng in zip(dataset.conditions, streams):
                chain = self._imh_chain(run.outcome.model, c, dataset, n, rng)
                stats = metrics_service.observable_summary(chain, c.J, c.K)
                rows.append(
                    [run.report.variant, c.temperature, stats["energy_mean"], stats["energy_std"], stats["mag_mean"], stats["mag_std"]]
                )
        return rows

    # -- studies ---------------------------------------------------------

    def _synthetic_suite(
        self, seed: int, out_dir: Path, overrides, jobs: int, tables: bool, scatter: bool
    ) -> StudyResult:
        result = StudyResult(study="table1" if tables else "fig3-data", out_dir=out_dir)
        summary_rows = []
        configs = []
        for preset in SYNTHETIC_PRESETS:
            base = self._config(preset, seed, out_dir / preset, overrides)
            configs.append(base)
            dataset = experiment_service.dataset_for(base, jobs)
            runs = self._compare_variants(base, dataset, out_dir / preset, jobs)
            result.reports.extend(run.report for run in runs)
            if tables:
                reports = [run.report for run in runs]
                result.files.extend(experiment_service.write_reports(out_dir / preset, base, reports).values())
                for report in reports:
                    summary_rows.append(
                        [preset, report.variant, report.mean.get("nll"), report.std.get("nll"),
                         report.mean.get("ar"), report.std.get("ar"), _pooled_occupancy(report)]
                    )
            if scatter:
                result.files.extend(self._write_scatter(runs, base, dataset, out_dir / preset))
        if tables:
            result.files.append(
                write_csv(out_dir / "table1.csv", TABLE1_COLUMNS, summary_rows, bundle_hash(configs), seed)
            )
        return result

    def table1(self, seed: int, out_dir: Path, overrides, jobs: int) -> StudyResult:
        return self._synthetic_suite(seed, out_dir, overrides, jobs, tables=True, scatter=False)

    def fig3_data(self, seed: int, out_dir: Path, overrides, jobs: int) -> StudyResult:
        return self._synthetic_suite(seed, out_dir, overrides, jobs, tables=False, scatter=True)

    def table2_desk(self, seed: int, out_dir: Path, overrides, jobs: int) -> StudyResult:
        base = self._config(LATTICE_PRESET, seed, out_dir, overrides)
        dataset = experiment_service.dataset_for(base, jobs)
        runs = self._compare_variants(base, dataset, out_dir, jobs)
        reports = [run.report for run in runs]
        result = StudyResult(study="table2-desk", out_dir=out_dir, reports=reports)
        result.files.extend(experiment_service.write_reports(out_dir, base, reports).values())
        result.files.append(
            write_csv(
                out_dir / "curves.csv", CURVE_COLUMNS,
                self._curve_rows(runs, dataset, seed, base.evaluation.n_per_condition),
                base.config_hash(), seed,
            )
        )
        return result

    def table6_desk(self, seed: int, out_dir: Path, overrides, jobs: int) -> StudyResult:
        base = self._config(
            LATTICE_PRESET, seed, out_dir, overrides, {"ensemble": {"train": max(ENSEMBLE_SIZES)}}
        )
        dataset = experiment_service.dataset_for(base, jobs)
        available = min(len(samples) for samples in dataset.splits["train"])
        sizes = [size for size in ENSEMBLE_SIZES if size <= available] or [available]
        result = StudyResult(study="table6-desk", out_dir=out_dir)
        rows = []
        for size in sizes:
            runs = self._compare_variants(
                base, dataset, out_dir / f"n{size}", jobs,
                flags=(True,), train_size=size, label_suffix=f" n={size}",
            )
            for run in runs:
                result.reports.append(run.report)
                rows.append([size, run.cfg.variant_label()] + _metric_cells(run.report))
        result.files.append(
            write_csv(out_dir / "ensemble_size.csv", comparison_columns("ensemble_size"), rows, base.config_hash(), seed)
        )
        return result

    def table7_desk(self, seed: int, out_dir: Path, overrides, jobs: int) -> StudyResult:
        base = self._config(LATTICE_PRESET, seed, out_dir, overrides)
        dataset = experiment_service.dataset_for(base, jobs)
        result = StudyResult(study="table7-desk", out_dir=out_dir)
        rows = []
        for projection in PROJECTIONS:
            runs = self._compare_variants(
                base, dataset, out_dir / projection, jobs,
                flags=(True,), label_suffix=f" {projection}", projection=projection,
            )
            for run in runs:
                result.reports.append(run.report)
                rows.append([projection, run.cfg.variant_label()] + _metric_cells(run.report))
        result.files.append(
            write_csv(out_dir / "projection.csv", comparison_columns("projection"), rows, base.config_hash(), seed)
        )
        return result

    def fig4_data(self, seed: int, out_dir: Path, overrides, jobs: int) -> StudyResult:
        """Rings-4 reverse-KL samples at evenly spaced phase-2 iterations.

        The mixture target lets phase 1 collapse onto a subset of rings; the
        snapshots show whether the adversarial phase recovers the rest.
        """
        base = self._config("rings4", seed, out_dir, overrides, {"dataset": {"conditional_target": "mixture"}})
        cfg = self._variant(base, "rkl", True, out_dir)
        phase2 = cfg.train.phase2
        snapshots = phase2.snapshot_iterations or sorted(
            {round(phase2.iterations * j / (FIG4_SNAPSHOTS - 1)) for j in range(FIG4_SNAPSHOTS)}
        )
        cfg = cfg.model_copy(
            update={"train": cfg.train.model_copy(update={"phase2": phase2.model_copy(update={"snapshot_iterations": snapshots})})}
        )
        dataset = experiment_service.dataset_for(cfg, jobs)
        result = StudyResult(study="fig4-data", out_dir=out_dir)
        occupancy_rows = []

        def on_snapshot(iteration: int, model: FlowModel) -> None:
            rows = self._scatter_rows(model, dataset, cfg.seed, SCATTER_DRAWS)
            result.files.append(
                write_csv(
                    out_dir / f"snapshot_{iteration:07d}.csv", SCATTER_COLUMNS, rows,
                    cfg.config_hash(), cfg.seed, extra={"iteration": iteration},
                )
            )
            pooled = np.asarray([[x0, x1] for _, x0, x1 in rows])
            fractions = synthetic_service.mode_occupancy(pooled, dataset.synthetic_params)
            occupancy_rows.extend([iteration, mode, fraction] for mode, fraction in enumerate(fractions))
            logger.info("Snapshot %d: ring occupancy %s", iteration, fractions)

        experiment_service.train_model(cfg, dataset, on_snapshot=on_snapshot, out_dir=cfg.output_dir)
        result.files.append(
            write_csv(
                out_dir / "occupancy.csv", ("iteration", "mode", "fraction"), occupancy_rows,
                cfg.config_hash(), cfg.seed,
            )
        )
        return result

    def run_study(
        self,
        study: str,
        seed: int = 0,
        out_dir: Optional[PathLike] = None,
        overrides: Optional[dict[str, Any]] = None,
        jobs: int = 1,
    ) -> StudyResult:
        study = normalize_study(study)
        out_path = Path(out_dir) if out_dir is not None else Path(settings.OUTPUT_DIR) / study
        runners: dict[str, Callable[..., StudyResult]] = {
            "table1": self.table1,
            "table2-desk": self.table2_desk,
            "table6-desk": self.table6_desk,
            "table7-desk": self.table7_desk,
            "fig3-data": self.fig3_data,
            "fig4-data": self.fig4_data,
        }
        logger.info("Reproducing %s into %s", study, out_path)
        return runners[study](seed, out_path, overrides, jobs)


reproduce_service = ReproduceService()
