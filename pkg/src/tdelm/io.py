"""Tensor file format: a JSON sidecar plus raw little-endian float64 values.

``<stem>.json`` holds ``{"shape": [...], "dtype": "f64", "layout":
"first-index-fastest", "complex": bool}`` and ``<stem>.bin`` the values in
layout order. Complex tensors store all real parts, then all imaginary parts.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor_core import Tensor

LAYOUT = "first-index-fastest"


class TensorFileError(ValueError):
    pass


def _stem(path) -> Path:
    path = Path(path)
    if path.suffix in (".bin", ".json"):
        return path.with_suffix("")
    return path


def save_tensor(path, X) -> tuple[Path, Path]:
    """Write X (real or complex) next to a sidecar; returns (json_path, bin_path)."""
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    arr = X.data if isinstance(X, Tensor) else np.asarray(X)
    is_complex = np.iscomplexobj(arr)
    flat = arr.ravel(order="F")
    if is_complex:
        payload = np.concatenate([flat.real, flat.imag])
    else:
        payload = flat.astype(np.float64)
    meta = {
        "shape": [int(s) for s in arr.shape],
        "dtype": "f64",
        "layout": LAYOUT,
        "complex": bool(is_complex),
    }
    json_path, bin_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    json_path.write_text(json.dumps(meta, indent=2) + "\n")
    payload.astype("<f8").tofile(bin_path)
    return json_path, bin_path


def load_tensor(path) -> np.ndarray:
    """Read a tensor file pair; returns a float64 or complex128 ndarray."""
    stem = _stem(path)
    json_path, bin_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    try:
        meta = json.loads(json_path.read_text())
    except FileNotFoundError as exc:
        raise TensorFileError(f"missing sidecar {json_path}") from exc
    if meta.get("dtype") != "f64" or meta.get("layout") != LAYOUT:
        raise TensorFileError(f"unsupported dtype/layout in {json_path}: {meta}")
    shape = tuple(int(s) for s in meta["shape"])
    count = int(np.prod(shape)) if shape else 1
    raw = np.fromfile(bin_path, dtype="<f8").astype(np.float64)
    expected = 2 * count if meta.get("complex") else count
    if raw.size != expected:
        raise TensorFileError(f"{bin_path} holds {raw.size} values, expected {expected}")
    if meta.get("complex"):
        raw = raw[:count] + 1j * raw[count:]
    return raw.reshape(shape, order="F")


def load_real_tensor(path) -> Tensor:
    arr = load_tensor(path)
    if np.iscomplexobj(arr):
        raise TensorFileError(f"{path} is complex; expected a real tensor")
    return Tensor(arr)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())

