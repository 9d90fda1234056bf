"""On-disk field format: a JSON header plus a flat little-endian float64 blob.

``<name>.json`` holds the grid, the field kind and the array layout;
``<name>.bin`` holds the samples in row-major order.  Complex fields are
stored as interleaved (re, im) pairs, vector fields with the component axis
first.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .fields import Grid

FORMAT_VERSION = 1
KINDS = ("scalar", "vector", "complex", "mask")


def _infer_kind(values: np.ndarray, grid: Grid) -> str:
    if values.dtype == bool:
        return "mask"
    if np.iscomplexobj(values):
        return "complex"
    if values.shape == grid.shape:
        return "scalar"
    if values.shape == (grid.dim,) + grid.shape:
        return "vector"
    raise ValidationError(f"cannot infer field kind for shape {values.shape}")


def write_field(path_stem, values: np.ndarray, grid: Grid, kind: str | None = None, meta: dict | None = None) -> Path:
    """Write a field; returns the header path."""
    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values)
    kind = kind or _infer_kind(values, grid)
    if kind not in KINDS:
        raise ValidationError(f"unknown field kind {kind!r}")
    if kind == "complex":
        data = np.stack([values.real, values.imag], axis=-1).astype("<f8")
    else:
        data = values.astype("<f8")
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "grid": grid.to_dict(),
        "array_shape": list(values.shape),
        "dtype": "<f8",
        "order": "C",
        "data_file": stem.name + ".bin",
    }
    if meta:
        header["meta"] = meta
    bin_path = stem.with_name(stem.name + ".bin")
    bin_path.write_bytes(np.ascontiguousarray(data).tobytes(order="C"))
    hdr_path = stem.with_name(stem.name + ".json")
    hdr_path.write_text(json.dumps(header, indent=2, sort_keys=True))
    return hdr_path


def read_field(header_path) -> tuple[np.ndarray, Grid, dict]:
    """Read a field written by :func:`write_field`; returns (values, grid, header)."""
    header_path = Path(header_path)
    if header_path.suffix != ".json":
        header_path = header_path.with_name(header_path.name + ".json")
    try:
        header = json.loads(header_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"unreadable field header {header_path}: {exc}") from exc
    grid = Grid.from_dict(header["grid"])
    shape = tuple(header["array_shape"])
    raw = np.frombuffer((header_path.parent / header["data_file"]).read_bytes(), dtype="<f8")
    kind = header["kind"]
    if kind == "complex":
        arr = raw.reshape(shape + (2,))
        values = arr[..., 0] + 1j * arr[..., 1]
    else:
        values = raw.reshape(shape).copy()
        if kind == "mask":
            values = values.astype(bool)
    return values, grid, header
