"""
Result serialization: CSV tables, JSON documents and the run manifest.

Output is byte-for-byte deterministic for identical inputs: floats are written
with 17 significant digits, JSON keys are sorted and the manifest carries no
timestamp.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from .exceptions import OutputError
from .ode_sim import Trajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
FORMATS = ("csv", "json")
MANIFEST_NAME = "manifest.json"


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars and arrays, enums and result objects to JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if np.isfinite(value) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, Enum):
        return obj.value
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(data: Any) -> str:
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n"


class ResultWriter:
    """Writes the files of one run into ``output_dir`` and keeps track of them."""

    def __init__(self, output_dir: str, fmt: str = "csv"):
        if fmt not in FORMATS:
            raise OutputError(f"Unknown output format '{fmt}', expected one of {FORMATS}")
        self.output_dir = Path(output_dir)
        self.fmt = fmt
        self.files: List[str] = []
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(str(e), path=str(self.output_dir))

    def _write_text(self, name: str, text: str) -> str:
        path = self.output_dir / name
        try:
            with open(path, "w", newline="") as f:
                f.write(text)
        except OSError as e:
            raise OutputError(str(e), path=str(path))
        if name not in self.files:
            self.files.append(name)
        logger.info(f"Wrote {path}")
        return str(path)

    def write_json(self, stem: str, data: Any) -> str:
        return self._write_text(f"{stem}.json", dumps(data))

    def write_frame(self, stem: str, frame: pd.DataFrame, comments: Optional[Iterable[str]] = None) -> str:
        """Write a table in the writer's format; CSV comment lines go after the rows."""
        if self.fmt == "json":
            records = frame.astype(object).where(frame.notna(), None).to_dict(orient="records")
            return self.write_json(stem, records)

        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        for line in comments or []:
            text += f"# {line}\n"
        return self._write_text(f"{stem}.csv", text)

    def write_trajectory(self, stem: str, traj: Trajectory) -> str:
        if self.fmt == "json":
            return self.write_json(stem, traj.to_dict())
        comments = [
            f"event,{event.time!r},{event.species},{event.kind.value}"
            for event in traj.events
        ]
        return self.write_frame(stem, traj.to_frame(), comments)

    def write_manifest(self, config: Dict[str, Any], config_hash: str, version: str, summary: Dict[str, Any]) -> str:
        manifest = {
            "tool": "ftem",
            "version": version,
            "command": config.get("command"),
            "config": config,
            "config_hash": config_hash,
            "files": sorted(self.files),
            "summary": summary,
        }
        return self._write_text(MANIFEST_NAME, dumps(manifest))
