"""CSV and JSON result files.

Every file opens with ``#`` metadata lines naming the config hash and master
seed; only the ``generated_at`` line changes between identical re-runs.
"""

import csv
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np

from advnf.core.errors import AdvNFError, ConfigError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(format_value(v) for v in value)
    return str(value)


def metadata_lines(config_hash: str, seed: int, extra: Optional[dict[str, Any]] = None) -> list[str]:
    lines = [f"# config_hash={config_hash}", f"# seed={seed}"]
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={format_value(value)}")
    lines.append(f"# generated_at={datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    return lines


def _open_for_write(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise AdvNFError(f"cannot create output directory {path.parent}: {exc}") from exc
    return path


def write_csv(
    path: PathLike,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config_hash: str,
    seed: int,
    extra: Optional[dict[str, Any]] = None,
) -> Path:
    path = _open_for_write(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            for line in metadata_lines(config_hash, seed, extra):
                handle.write(line + "\n")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise AdvNFError(f"cannot write {path}: {exc}") from exc
    logger.info("Wrote %s", path)
    return path


def write_json(path: PathLike, payload: dict[str, Any]) -> Path:
    path = _open_for_write(path)
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise AdvNFError(f"cannot write {path}: {exc}") from exc
    logger.info("Wrote %s", path)
    return path


def read_csv(path: PathLike) -> tuple[list[str], list[list[str]], dict[str, str]]:
    """(columns, rows, metadata) of a file written by :func:`write_csv`."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing file {path}")
    metadata: dict[str, str] = {}
    body: list[str] = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                metadata[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
    reader = list(csv.reader(body))
    if not reader:
        raise ConfigError(f"{path} has no header row")
    return reader[0], reader[1:], metadata


def read_matrix(path: PathLike) -> tuple[list[str], np.ndarray]:
    columns, rows, _ = read_csv(path)
    if not rows:
        return columns, np.empty((0, len(columns)))
    return columns, np.asarray([[float(v) for v in row] for row in rows], dtype=np.float64)
