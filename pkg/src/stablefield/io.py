"""Tabular outputs and run manifests."""

from __future__ import annotations

import csv
import json
import platform
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["write_table", "read_table", "write_json", "Manifest"]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, tuple):
        return " ".join(_cell(x) for x in v)
    return str(v)


def write_table(path, rows: Iterable[dict], fields: Sequence[str]) -> Path:
    """Comma-separated table with a fixed header; floats written with repr for exact round trips."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_cell(row.get(f, "")) for f in fields])
    return path


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple, set)):
        return [_jsonable(v) for v in (sorted(o, key=str) if isinstance(o, set) else o)]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return o


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


class Manifest:
    """Inputs, seed, library versions, outputs and wall time of one run."""

    def __init__(self, command: str, config_path: str | None, config: dict | None):
        self.started = time.time()
        self.data = {
            "command": command,
            "config_path": config_path,
            "config": config,
            "seed": (config or {}).get("seed"),
            "versions": self.versions(),
            "outputs": [],
        }

    @staticmethod
    def versions() -> dict:
        import scipy

        from . import __version__

        return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
                "stablefield": __version__}

    def add(self, path) -> None:
        self.data["outputs"].append(str(path))

    def write(self, out_dir, exit_code: int, error: str | None = None) -> Path:
        self.data.update(exit_code=exit_code, error=error, wall_time_s=round(time.time() - self.started, 3),
                         started_unix=round(self.started, 3))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return write_json(out / "manifest.json", self.data)
