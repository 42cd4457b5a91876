import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from advnf.core.errors import ConfigError
from advnf.core.outputs import read_matrix, write_csv, write_json
from advnf.models.experiment import ExperimentConfig
from advnf.models.lattice import LatticeCondition
from advnf.models.sampling import MHConfig
from advnf.models.synthetic import MOGParams
from advnf.services.mcmc_service import mcmc_service
from advnf.services.synthetic_service import DEFAULT_GEOMETRY, SyntheticParams, synthetic_service
from advnf.services.targets import BoltzmannTarget, SyntheticTarget, TargetDensity
from advnf.services.training_service import TrainingSet

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.json"
LATTICE_PREFIX = ["n", "T", "J", "K"]
SYNTHETIC_COLUMNS = ["x1", "x2", "component_index"]


@dataclass
class Dataset:
    kind: str
    conditions: list
    target: TargetDensity
    splits: dict[str, list[np.ndarray]] = field(default_factory=dict)
    synthetic_params: Optional[SyntheticParams] = None
    lattice_size: Optional[int] = None
    # seconds spent generating each condition's ensemble
    wall_times: list[float] = field(default_factory=list)

    def training_set(self, train_size: Optional[int] = None) -> TrainingSet:
        """Training view; ``train_size`` keeps the leading samples of each condition."""
        train = self.splits.get("train", [])
        if train_size is not None:
            train = [samples[:train_size] for samples in train]
        return TrainingSet(conditions=self.conditions, train=train, val=self.splits.get("val", []))


def data_hash(cfg: ExperimentConfig) -> str:
    payload = {
        "dataset": cfg.dataset.model_dump(mode="json"),
        "mcmc": cfg.mcmc.model_dump(mode="json"),
        "ensemble": cfg.ensemble.model_dump(mode="json"),
        "seed": cfg.seed,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def condition_seeds(seed: int, count: int) -> list[int]:
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(count)]


def _mcmc_ensemble(job: tuple[LatticeCondition, MHConfig, int]) -> tuple[np.ndarray, float]:
    c, mh_config, n = job
    started = time.perf_counter()
    samples = mcmc_service.mh_generate_array(c, mh_config, n).reshape(mh_config.n_samples, n * n)
    return samples, time.perf_counter() - started


class DataService:
    def synthetic_params(self, cfg: ExperimentConfig) -> SyntheticParams:
        spec = cfg.dataset
        if spec.kind.startswith("mog") and spec.mog is not None:
            return spec.mog
        if spec.kind.startswith("rings") and spec.rings is not None:
            return spec.rings
        return DEFAULT_GEOMETRY[spec.kind]()

    def conditions(self, cfg: ExperimentConfig) -> list:
        spec = cfg.dataset
        if spec.is_lattice:
            return [LatticeCondition(temperature=t, J=spec.J, K=spec.K) for t in spec.temperature_grid()]
        return synthetic_service.conditions(self.synthetic_params(cfg))

    def target(self, cfg: ExperimentConfig) -> TargetDensity:
        if cfg.dataset.is_lattice:
            return BoltzmannTarget(cfg.dataset.lattice_size)
        return SyntheticTarget(self.synthetic_params(cfg), cfg.dataset.conditional_target)

    def empty(self, cfg: ExperimentConfig) -> Dataset:
        """Conditions and target without samples."""
        spec = cfg.dataset
        return Dataset(
            kind=spec.kind,
            conditions=self.conditions(cfg),
            target=self.target(cfg),
            synthetic_params=None if spec.is_lattice else self.synthetic_params(cfg),
            lattice_size=spec.lattice_size if spec.is_lattice else None,
        )

    def _split(self, samples: np.ndarray, cfg: ExperimentConfig) -> dict[str, np.ndarray]:
        sizes = cfg.ensemble
        train_end = sizes.train
        val_end = train_end + sizes.val
        return {
            "train": samples[:train_end],
            "val": samples[train_end:val_end],
            "test": samples[val_end:val_end + sizes.test],
        }

    def _synthetic_samples(self, cfg: ExperimentConfig, dataset: Dataset, total: int) -> list[np.ndarray]:
        params = dataset.synthetic_params
        seeds = condition_seeds(cfg.seed, len(dataset.conditions))
        ensembles = []
        for index, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            if cfg.dataset.conditional_target == "mixture":
                if isinstance(params, MOGParams):
                    ensembles.append(synthetic_service.sample_mog(params, total, rng))
                else:
                    ensembles.append(synthetic_service.sample_rings(params, total, rng))
            else:
                ensembles.append(synthetic_service.sample_component(params, index, total, rng))
        return ensembles

    def _lattice_samples(
        self, cfg: ExperimentConfig, dataset: Dataset, total: int, jobs: int
    ) -> list[tuple[np.ndarray, float]]:
        seeds = condition_seeds(cfg.seed, len(dataset.conditions))
        n = cfg.dataset.lattice_size
        work = [
            (c, cfg.mcmc.model_copy(update={"n_samples": total, "seed": seed}), n)
            for c, seed in zip(dataset.conditions, seeds)
        ]
        if jobs <= 1 or len(work) == 1:
            return [_mcmc_ensemble(job) for job in work]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_mcmc_ensemble, work))

    def generate(self, cfg: ExperimentConfig, jobs: int = 1) -> Dataset:
        """Per-condition train/val/test ensembles, each condition on its own seed-derived stream."""
        dataset = self.empty(cfg)
        total = cfg.ensemble.train + cfg.ensemble.val + cfg.ensemble.test
        if cfg.dataset.is_lattice:
            timed = self._lattice_samples(cfg, dataset, total, jobs)
            ensembles = [samples for samples, _ in timed]
            dataset.wall_times = [seconds for _, seconds in timed]
        else:
            ensembles = self._synthetic_samples(cfg, dataset, total)
        splits = [self._split(samples, cfg) for samples in ensembles]
        dataset.splits = {name: [s[name] for s in splits] for name in SPLITS}
        logger.info("Generated %d samples for each of %d conditions", total, len(dataset.conditions))
        return dataset

    # -- files -----------------------------------------------------------

    def _rows(self, samples: np.ndarray, c, cfg: ExperimentConfig) -> tuple[list[str], list[list[float]]]:
        """Lattice rows lead with n,T,J,K and then the n*n angles in row-major order.

        Synthetic rows are x1,x2 followed by the component index and the
        condition embedding c0.. of the component they were drawn for.
        """
        if not isinstance(c, LatticeCondition):
            embedding = c.embedding().tolist()
            columns = SYNTHETIC_COLUMNS + [f"c{d}" for d in range(len(embedding))]
            suffix = [c.component_index, *embedding]
            return columns, [row + suffix for row in samples.tolist()]
        width = samples.shape[1] if samples.ndim == 2 else 0
        columns = [f"x{d}" for d in range(width)]
        prefix = [cfg.dataset.lattice_size, c.temperature, c.J, c.K]
        return LATTICE_PREFIX + columns, [prefix + row for row in samples.tolist()]

    def write(self, dataset: Dataset, cfg: ExperimentConfig, data_dir: Union[str, Path]) -> list[Path]:
        data_dir = Path(data_dir)
        config_hash = cfg.config_hash()
        written = []
        entries = []
        seeds = condition_seeds(cfg.seed, len(dataset.conditions))
        for index, c in enumerate(dataset.conditions):
            files = {}
            for split in SPLITS:
                columns, rows = self._rows(dataset.splits[split][index], c, cfg)
                path = data_dir / f"cond{index:03d}_{split}.csv"
                written.append(
                    write_csv(
                        path, columns, rows, config_hash, cfg.seed,
                        extra={"condition": c.label(), "split": split},
                    )
                )
                files[split] = path.name
            entry = {"index": index, "label": c.label(), "seed": seeds[index], "files": files}
            if isinstance(c, LatticeCondition):
                entry.update(
                    temperature=c.temperature,
                    J=c.J,
                    K=c.K,
                    burn_in_steps=cfg.mcmc.resolved_burn_in(cfg.dataset.lattice_size),
                    thinning_steps=cfg.mcmc.thinning_steps,
                    proposal=cfg.mcmc.proposal,
                )
                if index < len(dataset.wall_times):
                    entry["wall_time_seconds"] = round(dataset.wall_times[index], 3)
            else:
                entry.update(embedding=c.embedding().tolist())
            entries.append(entry)
        manifest = {
            "config_hash": config_hash,
            "data_hash": data_hash(cfg),
            "seed": cfg.seed,
            "kind": cfg.dataset.kind,
            "sizes": cfg.ensemble.model_dump(),
            "conditions": entries,
        }
        written.append(write_json(data_dir / MANIFEST_NAME, manifest))
        return written

    def load(self, cfg: ExperimentConfig, data_dir: Union[str, Path]) -> Optional[Dataset]:
        """Ensembles previously written for this exact data configuration, if any."""
        data_dir = Path(data_dir)
        manifest_path = data_dir / MANIFEST_NAME
        if not manifest_path.is_file():
            return None
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"unreadable data manifest {manifest_path}: {exc}") from exc
        if manifest.get("data_hash") != data_hash(cfg):
            logger.info("Data in %s was generated for another configuration; regenerating", data_dir)
            return None
        dataset = self.empty(cfg)
        dim = cfg.dataset.lattice_size**2 if cfg.dataset.is_lattice else 2
        splits: dict[str, list[np.ndarray]] = {name: [] for name in SPLITS}
        for entry in manifest["conditions"]:
            for split in SPLITS:
                path = data_dir / entry["files"][split]
                columns, values = read_matrix(path)
                if columns[: len(LATTICE_PREFIX)] == LATTICE_PREFIX:
                    values = values[:, len(LATTICE_PREFIX):]
                elif columns[: len(SYNTHETIC_COLUMNS)] == SYNTHETIC_COLUMNS:
                    if np.any(values[:, 2] != entry["index"]):
                        raise ConfigError(f"{path} holds rows of another component than {entry['index']}")
                    values = values[:, :2]
                splits[split].append(values.reshape(-1, dim))
        dataset.splits = splits
        return dataset


data_service = DataService()
