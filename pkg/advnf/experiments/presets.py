"""Named experiment presets and the per-dataset loss weights.

A preset is a partial ``ExperimentConfig`` dump; the command line merges a
config file over it.
"""

import copy
from typing import Any, Optional

from advnf.core.errors import ConfigError
from advnf.models.training import LossWeights

VARIANTS: tuple[str, ...] = ("fkl", "rkl", "fkl_rkl")

# Accept the spellings used in reports and on the command line.
VARIANT_ALIASES: dict[str, str] = {
    "fkl&rkl": "fkl_rkl",
    "fkl+rkl": "fkl_rkl",
    "fkl-rkl": "fkl_rkl",
}

DATASET_FAMILIES: dict[str, str] = {
    "synthetic": "synthetic",
    "mog4": "synthetic",
    "mog8": "synthetic",
    "rings4": "synthetic",
    "xy": "xy",
    "exy": "exy",
}

# Final (lambda_adv, lambda_rkl, lambda_fkl) per dataset family and variant.
LOSS_WEIGHTS: dict[str, dict[str, tuple[float, float, float]]] = {
    "synthetic": {
        "fkl": (1.0, 0.0, 1.0),
        "rkl": (1.0, 1.0, 0.0),
        "fkl_rkl": (1.0, 0.5, 1.0),
    },
    "xy": {
        "fkl": (100.0, 0.0, 1.0),
        "rkl": (10.0, 1.0, 0.0),
        "fkl_rkl": (1.0, 0.5, 1.0),
    },
    "exy": {
        "fkl": (100.0, 0.0, 1.0),
        "rkl": (5.0, 1.0, 0.0),
        "fkl_rkl": (1.0, 1.0, 1.0),
    },
}

# lambda_adv starts at this multiple of its final value and drops halfway through phase 2
LAMBDA1_START_FACTOR = 10.0


def normalize_variant(variant: Optional[str]) -> str:
    candidate = str(variant or "").strip().lower()
    candidate = VARIANT_ALIASES.get(candidate, candidate)
    if candidate not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return candidate


def dataset_family(dataset: Optional[str]) -> str:
    candidate = str(dataset or "").strip().lower()
    if candidate not in DATASET_FAMILIES:
        raise ConfigError(f"unknown dataset {dataset!r}")
    return DATASET_FAMILIES[candidate]


def preset_weights(variant: str, dataset: str, adversarial: bool = True) -> tuple[LossWeights, LossWeights]:
    """(phase-1, phase-2) weights; the non-adversarial baseline pins lambda_adv to 0."""
    lambda_adv, lambda_rkl, lambda_fkl = LOSS_WEIGHTS[dataset_family(dataset)][normalize_variant(variant)]
    phase1 = LossWeights(lambda_adv=0.0, lambda_rkl=lambda_rkl, lambda_fkl=lambda_fkl)
    phase2 = phase1.with_adv(lambda_adv if adversarial else 0.0)
    return phase1, phase2


def default_lambda1_schedule(final_value: float, iterations: int) -> list[tuple[int, float]]:
    if final_value <= 0.0 or iterations <= 1:
        return [(0, final_value)] if final_value > 0.0 else []
    return [(0, LAMBDA1_START_FACTOR * final_value), (iterations // 2, final_value)]


def _synthetic(kind: str, per_component: int) -> dict[str, Any]:
    return {
        "name": kind,
        "dataset": {"kind": kind},
        "model": {"n_layers": 10, "hidden": [32, 32], "projection": "none", "disc_hidden": [64, 64, 64, 64, 8]},
        "train": {
            "batch_size": 256,
            "gen_lr": 1e-4,
            "disc_lr": 5e-5,
            "phase1": {"max_epochs": 500, "patience": 10, "tolerance": 1e-3},
            "phase2": {"iterations": 20000},
        },
        # train and test are drawn separately; val is a fifth of train
        "ensemble": {"train": per_component, "val": per_component // 5, "test": per_component},
        "evaluation": {"n_per_condition": 1000},
    }


def _lattice(
    name: str,
    kind: str,
    size: int,
    temperatures: tuple[float, float, int],
    thinning: int,
    n_layers: int,
    iterations: int,
    ensemble: tuple[int, int, int],
    max_epochs: int = 200,
) -> dict[str, Any]:
    low, high, count = temperatures
    couplings = {"J": 1.0, "K": 1.0} if kind == "exy" else {"J": 1.0, "K": 0.0}
    return {
        "name": name,
        "dataset": {
            "kind": kind,
            "lattice_size": size,
            "temperature_range": [low, high],
            "temperature_count": count,
            **couplings,
        },
        "model": {"n_layers": n_layers, "hidden": [128, 128], "projection": "sigmoid", "disc_hidden": [256, 128, 64]},
        "train": {
            "batch_size": 256,
            "gen_lr": 5e-5,
            "disc_lr": 5e-5,
            "phase1": {"max_epochs": max_epochs, "patience": 10, "tolerance": 1e-3},
            "phase2": {"iterations": iterations},
        },
        "mcmc": {"thinning_steps": thinning, "burn_in_sweeps": 100, "proposal": "uniform"},
        "ensemble": {"train": ensemble[0], "val": ensemble[1], "test": ensemble[2]},
        "evaluation": {
            "n_per_condition": 1000,
            "energy_range": [-3.0, 0.0] if kind == "exy" else [-2.0, 0.0],
        },
    }


EXPERIMENT_PRESETS: dict[str, dict[str, Any]] = {
    "mog4": _synthetic("mog4", 1000),
    "mog8": _synthetic("mog8", 500),
    "rings4": _synthetic("rings4", 1000),
    # native scale
    "xy8": _lattice("xy8", "xy", 8, (0.05, 2.05, 32), 320, 24, 50000, (5000, 1000, 1000)),
    "xy16": _lattice("xy16", "xy", 16, (0.05, 2.05, 32), 1280, 24, 50000, (5000, 1000, 1000)),
    "xy32": _lattice("xy32", "xy", 32, (0.85, 1.25, 10), 5120, 24, 50000, (5000, 1000, 1000)),
    "exy16": _lattice("exy16", "exy", 16, (0.5, 3.5, 50), 1280, 24, 50000, (5000, 1000, 1000)),
    # desk scale
    "xy-desk": _lattice("xy-desk", "xy", 4, (0.25, 2.0, 8), 80, 8, 5000, (2000, 200, 200), max_epochs=50),
    "xy8-desk": _lattice("xy8-desk", "xy", 8, (0.25, 2.0, 8), 320, 8, 5000, (2000, 200, 200), max_epochs=50),
    "exy-desk": _lattice("exy-desk", "exy", 4, (0.5, 3.5, 8), 80, 8, 5000, (2000, 200, 200), max_epochs=50),
}

PRESET_ALIASES: dict[str, str] = {
    "xy": "xy8",
    "exy": "exy16",
    "desk": "xy-desk",
    "rings": "rings4",
}


def normalize_preset_name(name: Optional[str]) -> str:
    candidate = str(name or "").strip().lower()
    candidate = PRESET_ALIASES.get(candidate, candidate)
    if candidate not in EXPERIMENT_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known presets: {sorted(EXPERIMENT_PRESETS)}")
    return candidate


def get_preset(name: str) -> dict[str, Any]:
    return copy.deepcopy(EXPERIMENT_PRESETS[normalize_preset_name(name)])


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursive dict merge; values from ``override`` win, nested dicts merge."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged
