"""Versioned on-disk formats for intermediate arrays, models, and tables.

Array container ("EMC"): fixed little-endian layout so any two writes of the
same content are byte-identical.

    magic   b"EEGMCNT1"
    u16     format version (1)
    u16     number of arrays
    per array:
        u16   name length, then UTF-8 name
        u8    dtype code (0 = float64, 1 = int64)
        u8    ndim
        u64*  dims
        raw   little-endian payload, C order
    u64     metadata length, then UTF-8 JSON (sorted keys)

Model files reuse the container with one weight/bias array pair per layer.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .mlp import MlpParams

MAGIC = b"EEGMCNT1"
FORMAT_VERSION = 1
_DTYPES = {0: "<f8", 1: "<i8"}
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.int64): 1}


class ContainerError(ValueError):
    """Corrupt or unsupported container file."""


def write_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            arr = arr.astype(np.int64 if np.issubdtype(arr.dtype, np.integer)
                             else np.float64)
        code = _DTYPE_CODES[arr.dtype]
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).astype(_DTYPES[code]).tobytes())
    meta_bytes = json.dumps(meta or {}, sort_keys=True,
                            separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<Q", len(meta_bytes)))
    parts.append(meta_bytes)
    Path(path).write_bytes(b"".join(parts))


def read_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: bad magic bytes")
    off = len(MAGIC)
    version, n_arrays = struct.unpack_from("<HH", data, off)
    off += 4
    if version != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        code, ndim = struct.unpack_from("<BB", data, off)
        off += 2
        dims = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        if code not in _DTYPES:
            raise ContainerError(f"{path}: unknown dtype code {code}")
        count = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(data, dtype=_DTYPES[code], count=count, offset=off)
        off += arr.nbytes
        arrays[name] = arr.reshape(dims).copy()
    (meta_len,) = struct.unpack_from("<Q", data, off)
    off += 8
    meta = json.loads(data[off : off + meta_len].decode("utf-8")) if meta_len else {}
    return arrays, meta


def save_signal(path, signal: np.ndarray, meta: dict | None = None) -> None:
    write_arrays(path, {"signal": np.asarray(signal, dtype=np.float64)}, meta)


def load_signal(path) -> tuple[np.ndarray, dict]:
    arrays, meta = read_arrays(path)
    if "signal" not in arrays:
        raise ContainerError(f"{path}: no 'signal' array present")
    return arrays["signal"], meta


def save_model(path, params: MlpParams, meta: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {
        "layer_sizes": np.asarray(params.layer_sizes, dtype=np.int64)
    }
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"weight_{i}"] = w
        arrays[f"bias_{i}"] = b
    write_arrays(path, arrays, meta)


def load_model(path) -> tuple[MlpParams, dict]:
    arrays, meta = read_arrays(path)
    if "layer_sizes" not in arrays:
        raise ContainerError(f"{path}: not a model container")
    n_layers = len(arrays["layer_sizes"]) - 1
    weights = [arrays[f"weight_{i}"] for i in range(n_layers)]
    biases = [arrays[f"bias_{i}"] for i in range(n_layers)]
    return MlpParams(weights=weights, biases=biases), meta


def format_value(value) -> str:
    """Deterministic cell formatting; floats use shortest round-trip repr."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:] if line]


def save_feature_csv(path, matrix) -> None:
    """Feature matrix as CSV: one ch.<name>.<feature> column each + label."""
    header = ",".join(list(matrix.columns) + ["label"])
    body = np.column_stack([matrix.X, matrix.labels.astype(np.float64)])
    with open(path, "w") as f:
        f.write(header + "\n")
        np.savetxt(f, body, fmt="%.17g", delimiter=",")


def load_feature_csv(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        body = np.loadtxt(f, delimiter=",", ndmin=2)
    if body.size == 0:
        return np.empty((0, len(header) - 1)), np.empty(0, np.int64), header[:-1]
    return body[:, :-1], body[:, -1].astype(np.int64), header[:-1]
