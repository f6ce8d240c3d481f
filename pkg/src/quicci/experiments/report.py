"""Experiment output directories: CSV tables plus a run manifest.

Outputs are staged in a sibling temporary directory and moved into place
only when the experiment finishes, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import csv
import json
import platform
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np


def versions() -> dict:
    import numba
    import scipy

    return {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


class OutputDir:
    def __init__(self, target):
        self.target = Path(target)
        self.staging: Path | None = None
        self.files: list[str] = []

    def __enter__(self):
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.staging, ignore_errors=True)
            return False
        if self.target.exists():
            shutil.rmtree(self.target)
        self.staging.rename(self.target)
        return False

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.staging / name

    def write_csv(self, name: str, header, rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)

    def write_manifest(self, experiment: str, config: dict, seed: int, extra: dict | None = None) -> None:
        doc = {
            "experiment": experiment,
            "seed": seed,
            "config": config,
            "versions": versions(),
            "files": sorted(set(self.files)),
        }
        if extra:
            doc.update(extra)
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
