"""
Artifact storage for cirlab runs

Every file goes through `atomic_write_text`: the content is written to a
temporary file in the destination directory and moved into place with
`os.replace`, so readers never observe a truncated file.
"""

import csv
import io
import json
import os
import tempfile
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

import numpy as np

from .models import CURVE_COLUMNS, CurvePoint


CHECKPOINT_FORMAT = "cirlab-checkpoint"
CHECKPOINT_VERSION = 1


def atomic_write_text(path: Path, text: str) -> None:
    """Replace `path` with `text` in one rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    tmp = Path(tmp_name)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        tmp.replace(path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def write_json(path: Path, data: Any) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path: Path) -> Any:
    with path.open(encoding="utf-8") as f:
        return json.load(f)


def write_curve_csv(path: Path, points: Iterable[CurvePoint]) -> None:
    """Write the learning curve with LF line endings and '.' decimals."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for point in points:
        writer.writerow(point.to_row())
    atomic_write_text(path, buffer.getvalue())


def read_curve_csv(path: Path) -> list[CurvePoint]:
    with path.open(encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    return [
        CurvePoint(
            env_step=int(row["env_step"]),
            **{c: float(row[c]) for c in CURVE_COLUMNS[1:]},
        )
        for row in rows
    ]


def save_checkpoint(path: Path, tensors: Mapping[str, np.ndarray]) -> None:
    """Store named float64 tensors as JSON with shape headers."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "tensors": [
            {
                "name": name,
                "shape": list(np.shape(value)),
                "data": np.asarray(value, dtype=np.float64).ravel().tolist(),
            }
            for name, value in tensors.items()
        ],
    }
    atomic_write_text(path, json.dumps(payload) + "\n")


def load_checkpoint(path: Path) -> dict[str, np.ndarray]:
    data = read_json(path)
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a cirlab checkpoint")
    return {
        entry["name"]: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for entry in data["tensors"]
    }
