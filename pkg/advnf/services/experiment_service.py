import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import ValidationError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from advnf.core.config import settings
from advnf.core.errors import ConfigError, ContractError
from advnf.core.outputs import write_csv, write_json
from advnf.experiments.presets import deep_merge, default_lambda1_schedule, get_preset, preset_weights
from advnf.models.experiment import ExperimentConfig
from advnf.models.flow import DiscriminatorSpec, FlowSpec
from advnf.models.lattice import LatticeCondition
from advnf.models.metrics import REPORT_COLUMNS, MetricsReport
from advnf.models.training import TRACE_COLUMNS, TrainConfig
from advnf.networks.checkpoint import load_checkpoint, save_checkpoint
from advnf.networks.discriminator import Discriminator
from advnf.networks.flow import FlowModel
from advnf.services.data_service import Dataset, data_service
from advnf.services.flow_service import flow_service
from advnf.services.mcmc_service import mcmc_service
from advnf.services.metrics_service import metrics_service
from advnf.services.training_service import PhaseResult, training_service

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_LAYERS = {"synthetic": 10, "lattice": 8}
DEFAULT_HIDDEN = {"synthetic": [32, 32], "lattice": [128, 128]}
DEFAULT_DISC_HIDDEN = {"synthetic": [64, 64, 64, 64, 8], "lattice": [256, 128, 64]}

CHECKPOINT_NAME = "model.ckpt.json"
PHASE1_CHECKPOINT_NAME = "phase1.ckpt.json"


@dataclass
class Phase1Cache:
    """Phase-1 parameters and trace shared by the baseline and adversarial runs of a variant."""

    state: dict[str, np.ndarray]
    result: PhaseResult


@dataclass
class TrainOutcome:
    model: FlowModel
    disc: Optional[Discriminator]
    phase1: PhaseResult
    phase2: Optional[PhaseResult]
    files: dict[str, Path] = field(default_factory=dict)


@dataclass
class SampleOutcome:
    samples: np.ndarray
    log_q: Optional[np.ndarray]
    acceptance_rate: Optional[float]
    path: Optional[Path]


def _family(cfg: ExperimentConfig) -> str:
    return "lattice" if cfg.dataset.is_lattice else "synthetic"


class ExperimentService:
    # -- configuration ---------------------------------------------------

    def load_config(
        self,
        path: Optional[PathLike] = None,
        preset: Optional[str] = None,
        seed: Optional[int] = None,
        out: Optional[PathLike] = None,
        overrides: Optional[dict[str, Any]] = None,
    ) -> ExperimentConfig:
        """Preset, then file, then overrides, then --seed/--out."""
        data: dict[str, Any] = get_preset(preset) if preset else {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            try:
                with path.open("rb") as handle:
                    data = deep_merge(data, tomllib.load(handle))
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        if overrides:
            data = deep_merge(data, overrides)
        if seed is not None:
            data["seed"] = seed
        if out is not None:
            data["output_dir"] = str(out)
        elif "output_dir" not in data:
            data["output_dir"] = str(Path(settings.OUTPUT_DIR) / str(data.get("name", "experiment")))
        return self.validate_config(data)

    def validate_config(self, data: dict[str, Any]) -> ExperimentConfig:
        try:
            cfg = ExperimentConfig.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc
        if not cfg.dataset.is_lattice and cfg.model.projection not in (None, "none"):
            raise ConfigError("synthetic datasets live in R^2 and take no angle projection")
        return cfg

    def resolve_train_config(self, cfg: ExperimentConfig) -> TrainConfig:
        """Fill loss weights and the lambda_adv schedule from the dataset presets."""
        phase1_default, phase2_default = preset_weights(cfg.variant, cfg.dataset.kind, cfg.adversarial)
        train = cfg.train
        phase1 = train.phase1.model_copy(update={"weights": train.phase1.weights or phase1_default})
        phase2_weights = train.phase2.weights or phase2_default
        schedule = list(train.phase2.lambda1_schedule)
        if not cfg.adversarial:
            # the baseline is the same procedure with lambda_adv pinned to 0
            phase2_weights = phase2_weights.with_adv(0.0)
            schedule = []
        elif not schedule:
            schedule = default_lambda1_schedule(phase2_weights.lambda_adv, train.phase2.iterations)
        phase2 = train.phase2.model_copy(update={"weights": phase2_weights, "lambda1_schedule": schedule})
        return train.model_copy(
            update={
                "phase1": phase1,
                "phase2": phase2,
                "seed": cfg.seed,
                "checkpoint_every": train.checkpoint_every or settings.CHECKPOINT_EVERY,
            }
        )

    # -- models ------------------------------------------------------------

    def flow_spec(self, cfg: ExperimentConfig, dataset: Dataset) -> FlowSpec:
        family = _family(cfg)
        model = cfg.model
        cond_dim = int(np.asarray(dataset.conditions[0].embedding()).size)
        common = {
            "cond_dim": cond_dim,
            "n_layers": model.n_layers or DEFAULT_LAYERS[family],
            "hidden": tuple(model.hidden or DEFAULT_HIDDEN[family]),
            "alpha": model.alpha,
            "base": model.base,
            "uniform_bound": model.uniform_bound,
        }
        if family == "lattice":
            n = cfg.dataset.lattice_size
            return FlowSpec(
                dim=n * n, mask_kind="checkerboard", lattice_size=n,
                projection=model.projection or "sigmoid", **common,
            )
        return FlowSpec(dim=2, mask_kind="alternate", projection="none", **common)

    def disc_spec(self, cfg: ExperimentConfig, flow: FlowSpec) -> DiscriminatorSpec:
        family = _family(cfg)
        return DiscriminatorSpec(
            dim=flow.dim,
            cond_dim=flow.cond_dim,
            hidden=tuple(cfg.model.disc_hidden or DEFAULT_DISC_HIDDEN[family]),
            features="circular" if family == "lattice" else "raw",
        )

    def build_models(self, cfg: ExperimentConfig, dataset: Dataset) -> tuple[FlowModel, Optional[Discriminator]]:
        spec = self.flow_spec(cfg, dataset)
        model = FlowModel(spec, np.random.default_rng([cfg.seed, 11]))
        disc = None
        if cfg.adversarial:
            disc = Discriminator(self.disc_spec(cfg, spec), np.random.default_rng([cfg.seed, 12]))
        return model, disc

    # -- data --------------------------------------------------------------

    def data_dir(self, cfg: ExperimentConfig) -> Path:
        return Path(cfg.output_dir) / "data"

    def dataset_for(self, cfg: ExperimentConfig, jobs: int = 1, write: bool = True) -> Dataset:
        """Ensembles from the output directory when present, otherwise freshly generated."""
        dataset = data_service.load(cfg, self.data_dir(cfg))
        if dataset is not None:
            logger.info("Loaded ensembles from %s", self.data_dir(cfg))
            return dataset
        dataset = data_service.generate(cfg, jobs)
        if write:
            data_service.write(dataset, cfg, self.data_dir(cfg))
        return dataset

    def cmd_gen_data(self, cfg: ExperimentConfig, jobs: Optional[int] = None) -> list[Path]:
        dataset = data_service.generate(cfg, jobs or settings.DEFAULT_JOBS)
        return data_service.write(dataset, cfg, self.data_dir(cfg))

    # -- training ----------------------------------------------------------

    def run_phase1(self, cfg: ExperimentConfig, dataset: Dataset, train_size: Optional[int] = None) -> Phase1Cache:
        train_cfg = self.resolve_train_config(cfg)
        model, _ = self.build_models(cfg, dataset)
        result = training_service.train_phase1(model, dataset.training_set(train_size), dataset.target, train_cfg)
        return Phase1Cache(state=model.state_dict(), result=result)

    def train_model(
        self,
        cfg: ExperimentConfig,
        dataset: Dataset,
        phase1: Optional[Phase1Cache] = None,
        on_snapshot=None,
        out_dir: Optional[PathLike] = None,
        train_size: Optional[int] = None,
    ) -> TrainOutcome:
        """Phase 1 (or a cached copy of it) followed by phase 2.

        With ``out_dir`` set, checkpoints and the loss trace are written there.
        ``train_size`` trains on the leading samples of each condition only.
        """
        train_cfg = self.resolve_train_config(cfg)
        model, disc = self.build_models(cfg, dataset)
        data = dataset.training_set(train_size)
        out_path = Path(out_dir) if out_dir is not None else None
        metadata = {
            "config": cfg.model_dump(mode="json"),
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "variant": cfg.variant_label(),
        }

        if phase1 is None:
            phase1_result = training_service.train_phase1(model, data, dataset.target, train_cfg)
        else:
            model.load_state_dict(copy.deepcopy(phase1.state))
            phase1_result = phase1.result
        files: dict[str, Path] = {}
        if out_path is not None:
            files["phase1_checkpoint"] = save_checkpoint(
                out_path / PHASE1_CHECKPOINT_NAME, model, None, {**metadata, "phase": 1}
            )

        on_checkpoint = None
        if out_path is not None:
            def on_checkpoint(phase, iteration, m, d):
                save_checkpoint(
                    out_path / "checkpoints" / f"phase{phase}_iter{iteration:07d}.json",
                    m, d, {**metadata, "phase": phase, "iteration": iteration},
                )

        phase2_result = None
        if train_cfg.phase2.iterations > 0:
            phase2_result = training_service.train_phase2(
                model, disc, data, dataset.target, train_cfg,
                on_checkpoint=on_checkpoint, on_snapshot=on_snapshot,
            )

        if out_path is not None:
            files["checkpoint"] = save_checkpoint(
                out_path / CHECKPOINT_NAME, model, disc, {**metadata, "phase": 2 if phase2_result else 1}
            )
            rows = phase1_result.trace + (phase2_result.trace if phase2_result else [])
            files["trace"] = write_csv(
                out_path / "trace.csv",
                TRACE_COLUMNS,
                ([getattr(row, column) for column in TRACE_COLUMNS] for row in rows),
                cfg.config_hash(),
                cfg.seed,
                extra={"variant": cfg.variant_label()},
            )
        return TrainOutcome(model=model, disc=disc, phase1=phase1_result, phase2=phase2_result, files=files)

    def cmd_train(self, cfg: ExperimentConfig, jobs: Optional[int] = None) -> TrainOutcome:
        dataset = self.dataset_for(cfg, jobs or settings.DEFAULT_JOBS)
        logger.info("Training %s on %s", cfg.variant_label(), cfg.dataset.kind)
        return self.train_model(cfg, dataset, out_dir=cfg.output_dir)

    # -- evaluation ----------------------------------------------------------

    def evaluate(
        self, cfg: ExperimentConfig, model: FlowModel, dataset: Dataset, jobs: int = 1, variant: Optional[str] = None
    ) -> MetricsReport:
        test_sets = dataset.splits.get("test")
        if not test_sets or any(len(t) == 0 for t in test_sets):
            raise ContractError("evaluation needs a nonempty test ensemble for every condition")
        return metrics_service.evaluate_model(
            model,
            dataset.conditions,
            dataset.target,
            cfg.evaluation.n_per_condition,
            references=test_sets if cfg.dataset.is_lattice else None,
            test_sets=test_sets,
            evaluation=cfg.evaluation,
            variant=variant or cfg.variant_label(),
            seed=cfg.seed,
            jobs=jobs,
            synthetic_params=dataset.synthetic_params,
        )

    def write_reports(self, out_dir: PathLike, cfg: ExperimentConfig, reports: list[MetricsReport]) -> dict[str, Path]:
        out_dir = Path(out_dir)
        config_hash = cfg.config_hash()
        rows = []
        bins = []
        occupancy = []
        for report in reports:
            for row in report.rows + [report.summary_row()]:
                rows.append([getattr(row, column) for column in REPORT_COLUMNS])
            for row in report.rows:
                bins.append([report.variant, row.condition, row.emd_energy_bins, row.emd_mag_bins])
                for mode, fraction in enumerate(row.mode_occupancy or []):
                    occupancy.append([report.variant, row.condition, mode, fraction])
        files = {
            "report": write_csv(out_dir / "report.csv", REPORT_COLUMNS, rows, config_hash, cfg.seed),
            "report_json": write_json(
                out_dir / "report.json",
                {
                    "config_hash": config_hash,
                    "seed": cfg.seed,
                    "reports": [report.model_dump(mode="json") for report in reports],
                },
            ),
        }
        if cfg.dataset.is_lattice:
            files["emd_bins"] = write_csv(
                out_dir / "emd_bins.csv",
                ("variant", "condition", "emd_energy_bins", "emd_mag_bins"),
                bins, config_hash, cfg.seed,
            )
        if occupancy:
            files["occupancy"] = write_csv(
                out_dir / "occupancy.csv", ("variant", "condition", "mode", "fraction"),
                occupancy, config_hash, cfg.seed,
            )
        return files

    def cmd_evaluate(
        self, cfg: ExperimentConfig, checkpoint: Optional[PathLike] = None, jobs: Optional[int] = None
    ) -> MetricsReport:
        checkpoint = Path(checkpoint) if checkpoint is not None else Path(cfg.output_dir) / CHECKPOINT_NAME
        model, _, _ = load_checkpoint(checkpoint)
        jobs = jobs or settings.DEFAULT_JOBS
        dataset = self.dataset_for(cfg, jobs)
        report = self.evaluate(cfg, model, dataset, jobs)
        self.write_reports(cfg.output_dir, cfg, [report])
        return report

    # -- sampling ------------------------------------------------------------

    def _parse_condition(self, cfg: ExperimentConfig, dataset: Dataset, condition: str):
        if cfg.dataset.is_lattice:
            try:
                temperature = float(condition)
            except ValueError as exc:
                raise ContractError(f"lattice condition must be a temperature, got {condition!r}") from exc
            return LatticeCondition(temperature=temperature, J=cfg.dataset.J, K=cfg.dataset.K)
        try:
            index = int(condition)
        except ValueError as exc:
            raise ContractError(f"synthetic condition must be a component index, got {condition!r}") from exc
        if not 0 <= index < len(dataset.conditions):
            raise ContractError(f"component index {index} out of range 0..{len(dataset.conditions) - 1}")
        return dataset.conditions[index]

    def cmd_sample(
        self,
        checkpoint: PathLike,
        condition: str,
        n: int,
        imh: bool = False,
        seed: Optional[int] = None,
        out: Optional[PathLike] = None,
    ) -> SampleOutcome:
        """Flow samples with their log q, or an IMH chain built from them."""
        if n < 1:
            raise ContractError("sample count must be >= 1")
        model, _, metadata = load_checkpoint(checkpoint)
        if "config" not in metadata:
            raise ConfigError(f"checkpoint {checkpoint} carries no experiment config")
        cfg = self.validate_config(metadata["config"])
        seed = cfg.seed if seed is None else seed
        dataset = data_service.empty(cfg)
        c = self._parse_condition(cfg, dataset, condition)
        proposal_rng, chain_rng = np.random.default_rng(seed).spawn(2)

        if imh:
            result = mcmc_service.imh_resample(
                lambda k: flow_service.flow_sample(model, k, c, proposal_rng),
                lambda x: dataset.target.log_prob(x, c),
                n,
                chain_rng,
            )
            samples, log_q, ar = result.chain, None, result.acceptance_rate
            logger.info("IMH acceptance rate %.2f%% over %d proposals", ar, result.total_count)
        else:
            samples, log_q = flow_service.flow_sample(model, n, c, proposal_rng)
            ar = None

        path = None
        if out is not None:
            columns = [f"x{d}" for d in range(samples.shape[1])]
            rows = samples.tolist() if log_q is None else [
                list(row) + [lq] for row, lq in zip(samples.tolist(), log_q.tolist())
            ]
            if log_q is not None:
                columns.append("log_q")
            extra: dict[str, Any] = {"condition": c.label(), "imh": imh}
            if ar is not None:
                extra["acceptance_rate"] = ar
            path = write_csv(out, columns, rows, metadata.get("config_hash", cfg.config_hash()), seed, extra=extra)
        return SampleOutcome(samples=samples, log_q=log_q, acceptance_rate=ar, path=path)

    # -- studies -----------------------------------------------------------

    def cmd_reproduce(
        self,
        study: str,
        seed: int = 0,
        out_dir: Optional[PathLike] = None,
        overrides: Optional[dict[str, Any]] = None,
        jobs: Optional[int] = None,
    ):
        from advnf.services.reproduce_service import reproduce_service

        return reproduce_service.run_study(study, seed, out_dir, overrides, jobs or settings.DEFAULT_JOBS)


experiment_service = ExperimentService()
