"""Versioned JSON checkpoints for a flow and, optionally, its discriminator.

Floats are written by ``json`` with ``repr`` precision, so a reload
reproduces every parameter bit for bit.
"""

import json
import logging
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import ValidationError

from advnf.core.errors import CheckpointError
from advnf.models.flow import DiscriminatorSpec, FlowSpec
from advnf.networks.discriminator import Discriminator
from advnf.networks.flow import FlowModel

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "advnf-checkpoint"
CHECKPOINT_VERSION = 1


def _parameter_block(state: dict[str, np.ndarray]) -> dict[str, dict[str, Any]]:
    return {
        name: {"shape": list(value.shape), "values": [float(v) for v in value.reshape(-1)]}
        for name, value in sorted(state.items())
    }


def _read_parameter_block(block: dict[str, Any]) -> dict[str, np.ndarray]:
    state = {}
    for name, entry in block.items():
        values = np.asarray(entry["values"], dtype=np.float64)
        shape = tuple(int(d) for d in entry["shape"])
        if values.size != int(np.prod(shape)):
            raise CheckpointError(f"{name}: {values.size} values do not fill shape {shape}")
        state[name] = values.reshape(shape)
    return state


def checkpoint_payload(
    model: FlowModel,
    disc: Optional[Discriminator] = None,
    metadata: Optional[dict[str, Any]] = None,
) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "flow": {
            "spec": model.spec.model_dump(mode="json"),
            "masks": [mask.astype(int).tolist() for mask in model.masks],
            "parameters": _parameter_block(model.state_dict()),
        },
        "discriminator": None,
        "metadata": metadata or {},
    }
    if disc is not None:
        payload["discriminator"] = {
            "spec": disc.spec.model_dump(mode="json"),
            "parameters": _parameter_block(disc.state_dict()),
        }
    return payload


def models_from_payload(payload: dict[str, Any]) -> tuple[FlowModel, Optional[Discriminator], dict[str, Any]]:
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"not an AdvNF checkpoint (format={payload.get('format')!r})")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {payload.get('version')!r}; expected {CHECKPOINT_VERSION}"
        )
    try:
        flow_block = payload["flow"]
        spec = FlowSpec.model_validate(flow_block["spec"])
        # parameters are overwritten below, the generator only shapes them
        model = FlowModel(spec, np.random.default_rng(0))
        stored_masks = [np.asarray(mask, dtype=np.float64) for mask in flow_block["masks"]]
        if len(stored_masks) != len(model.masks) or any(
            not np.array_equal(a, b) for a, b in zip(stored_masks, model.masks)
        ):
            raise CheckpointError("stored coupling masks differ from the ones the spec builds")
        model.load_state_dict(_read_parameter_block(flow_block["parameters"]))

        disc = None
        if payload.get("discriminator") is not None:
            disc_block = payload["discriminator"]
            disc = Discriminator(DiscriminatorSpec.model_validate(disc_block["spec"]), np.random.default_rng(0))
            disc.load_state_dict(_read_parameter_block(disc_block["parameters"]))
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return model, disc, dict(payload.get("metadata") or {})


def save_checkpoint(
    path: Union[str, Path],
    model: FlowModel,
    disc: Optional[Discriminator] = None,
    metadata: Optional[dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_payload(model, disc, metadata)), encoding="utf-8")
    logger.info("Wrote checkpoint %s", path)
    return path


def load_checkpoint(path: Union[str, Path]) -> tuple[FlowModel, Optional[Discriminator], dict[str, Any]]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise CheckpointError(f"corrupt checkpoint: {path}")
    return models_from_payload(payload)
