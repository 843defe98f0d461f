"""Sample, solution and manifest files.

Sample and solution files are CSV with a block of ``# key: value`` header
lines (values JSON-encoded).  Floats are written with ``repr`` so reading a
file back reproduces the arrays bit for bit, and identical runs produce
byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .model import GridMeasure

__all__ = ["write_table", "read_table", "write_samples", "read_samples", "write_solution", "read_solution",
           "sha256_file", "Manifest", "MissingArtifactError"]


class MissingArtifactError(FileNotFoundError):
    """A file produced by an earlier pipeline stage is absent."""


def _fmt(v) -> str:
    return repr(float(v))


def write_table(path, columns, rows, header: dict | None = None):
    """Write ``rows`` (2-D array or list of sequences) under a column line and ``header`` comments."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")
    os.replace(tmp, path)


def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    """Inverse of :func:`write_table` for numeric tables."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(str(path))
    header = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][2:].partition(": ")
        header[key] = json.loads(val)
        i += 1
    columns = lines[i].split(",")
    body = lines[i + 1:]
    data = np.array([[float(v) for v in ln.split(",")] for ln in body if ln], dtype=float)
    return header, columns, data.reshape(len(data), len(columns))


def write_samples(path, samples, header: dict):
    samples = np.asarray(samples, dtype=float)
    cols = [f"x{j}" for j in range(samples.shape[1])]
    write_table(path, cols, samples, header)


def read_samples(path) -> tuple[dict, np.ndarray]:
    header, _, data = read_table(path)
    return header, data


def write_solution(path, sol, header: dict):
    """Cell table of an equilibrium solution: midpoint, weight, density, effective potential."""
    mu = sol.mu
    F = np.asarray(sol.effective_potential, dtype=float)
    rows = np.column_stack([mu.midpoints, mu.weights, mu.density, F])
    h = {"left": mu.left, "right": mu.right, "n_cells": mu.n_cells, **header}
    write_table(path, ["cell_midpoint", "weight", "density", "effective_potential"], rows, h)


def read_solution(path) -> tuple[dict, GridMeasure]:
    header, _, data = read_table(path)
    mu = GridMeasure(float(header["left"]), float(header["right"]), int(header["n_cells"]), data[:, 1])
    return header, mu


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """``manifest.json`` of a run directory: config, versions and file hashes per command."""

    NAME = "manifest.json"

    def __init__(self, directory):
        self.directory = Path(directory)
        self.path = self.directory / self.NAME
        self.data = json.loads(self.path.read_text()) if self.path.exists() else {"commands": {}, "files": {}}

    def record(self, command: str, info: dict, files=()):
        entry = dict(info)
        entry["files"] = []
        for f in files:
            name = Path(f).name
            digest = sha256_file(self.directory / name)
            self.data["files"][name] = digest
            entry["files"].append(name)
        self.data["commands"][command] = entry

    def set(self, key, value):
        self.data[key] = value

    def save(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def verify(self) -> dict:
        """``{file: hash matches}`` for every recorded file."""
        out = {}
        for name, digest in self.data["files"].items():
            p = self.directory / name
            out[name] = p.exists() and sha256_file(p) == digest
        return out
