"""Byte-stable CSV, P5 graymap and JSON manifest writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def format_cell(value) -> str:
    """17 significant digits for floats, plain ints, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return ""
        return f"{value:.16e}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], []
    return rows[0], rows[1:]


def read_counts(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Shot indices and the count matrix of a ``shots.csv`` file.

    An empty file (or one with a header only) gives zero rows; the caller
    decides whether that is an error.
    """
    header, rows = read_csv(path)
    if not header:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 0), dtype=np.int64)
    if header[0] != "shot_index" or any(h != f"n_{i + 1}" for i, h in enumerate(header[1:])):
        raise ValueError(f"{path}: expected columns shot_index, n_1..n_K")
    data = np.array([[int(v) for v in row] for row in rows], dtype=np.int64).reshape(-1, len(header))
    return data[:, 0], data[:, 1:]


def counts_to_image(counts: np.ndarray, scale_max: int, height: int = 1) -> np.ndarray:
    """8-bit pixel rows for one count string, 255 at the batch maximum."""
    counts = np.asarray(counts, dtype=np.int64)
    if scale_max <= 0:
        row = np.zeros(counts.size, dtype=np.uint8)
    else:
        # integer rounding so pixels never depend on float formatting
        row = ((counts * 255 + scale_max // 2) // scale_max).astype(np.uint8)
    return np.tile(row, (height, 1))


def write_pgm(path: Path, pixels: np.ndarray) -> Path:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError("a graymap needs a 2D pixel array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return Path(path)


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary graymap")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit graymaps are supported")
    pixels = np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    return pixels.reshape(h, w)


@dataclass
class ResultManifest:
    command: str
    config_hash: str
    version: str
    seed: int
    wall_time: float = 0.0
    files: list[str] = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def check(self, name: str, passed: bool, **details) -> bool:
        self.checks[name] = {"passed": bool(passed), **details}
        return bool(passed)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "files": sorted(self.files),
            "checks": self.checks,
            "results": self.results,
            "passed": self.passed,
        }

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n",
                        encoding="utf-8")
        return path


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")
