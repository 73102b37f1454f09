"""Field files (JSON header + raw little-endian payload) and binary PGM input.

A field ``name`` lives in two files: ``name.json`` holds

    {"dims": [...], "spacing_mm": [...], "dtype": "f32" | "u8" | "u16",
     "order": "row-major", "kind": "image" | "mask" | "scalar-field" | "deformation"}

and ``name.raw`` the payload. Deformations store one component per axis,
axis-major, i.e. an array of shape ``(ndim, *dims)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1"), "u16": np.dtype("<u2")}
KINDS = ("image", "mask", "scalar-field", "deformation")


class FieldFileError(ValueError):
    """Malformed or inconsistent field file; ``code`` names the failure."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class FieldFile:
    data: np.ndarray
    kind: str
    spacing: tuple[float, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape[1:] if self.kind == "deformation" else self.data.shape


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix in (".json", ".raw"):
        path = path.with_suffix("")
    return path.with_suffix(".json"), path.with_suffix(".raw")


def _default_dtype(kind: str, data: np.ndarray) -> str:
    if kind == "mask":
        return "u8" if data.max(initial=0) < 256 else "u16"
    return "f32"


def write_field(path, data, kind: str = "image", spacing=None, dtype: str | None = None) -> Path:
    """Write ``data`` and return the header path."""
    if kind not in KINDS:
        raise FieldFileError("unknown-kind", f"unknown kind {kind!r}; expected one of {KINDS}")
    data = np.asarray(data)
    dims = data.shape[1:] if kind == "deformation" else data.shape
    if kind == "deformation" and data.shape[0] != len(dims):
        raise FieldFileError("bad-shape", f"deformation must have shape (ndim, *dims), got {data.shape}")
    dtype = dtype or _default_dtype(kind, data)
    if dtype not in DTYPES:
        raise FieldFileError("unknown-dtype", f"unknown dtype {dtype!r}; expected one of {tuple(DTYPES)}")
    spacing = [1.0] * len(dims) if spacing is None else [float(s) for s in spacing]
    header = {
        "dims": [int(n) for n in dims],
        "spacing_mm": spacing,
        "dtype": dtype,
        "order": "row-major",
        "kind": kind,
    }
    head, raw = _paths(path)
    head.parent.mkdir(parents=True, exist_ok=True)
    head.write_text(json.dumps(header, indent=2) + "\n")
    raw.write_bytes(np.ascontiguousarray(data, dtype=DTYPES[dtype]).tobytes())
    return head


def read_field(path) -> FieldFile:
    head, raw = _paths(path)
    try:
        header = json.loads(head.read_text())
        dims = tuple(int(n) for n in header["dims"])
        kind = header["kind"]
        dtype = header["dtype"]
        spacing = tuple(float(s) for s in header.get("spacing_mm", [1.0] * len(dims)))
        order = header.get("order", "row-major")
    except (ValueError, KeyError, TypeError) as exc:
        raise FieldFileError("malformed-header", f"{head}: malformed header ({exc})") from exc
    if kind not in KINDS:
        raise FieldFileError("unknown-kind", f"{head}: unknown kind {kind!r}")
    if dtype not in DTYPES:
        raise FieldFileError("unknown-dtype", f"{head}: unknown dtype {dtype!r}")
    if order != "row-major":
        raise FieldFileError("malformed-header", f"{head}: unsupported order {order!r}")
    if len(spacing) != len(dims):
        raise FieldFileError("malformed-header", f"{head}: spacing has {len(spacing)} entries for {len(dims)} axes")
    shape = ((len(dims),) if kind == "deformation" else ()) + dims
    payload = raw.read_bytes()
    expected = int(np.prod(shape)) * DTYPES[dtype].itemsize
    if len(payload) != expected:
        raise FieldFileError(
            "size-mismatch", f"{raw}: expected {expected} bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=DTYPES[dtype]).reshape(shape)
    if dtype == "f32":
        data = data.astype(float)
    else:
        data = data.copy()
    return FieldFile(data, kind, spacing)


def read_pgm(path) -> np.ndarray:
    """Binary (P5) 8/16-bit graymap as floats in ``[0, 1]`` (divided by maxval)."""
    blob = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FieldFileError("malformed-header", f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace before the raster
    if tokens[0] != b"P5":
        raise FieldFileError("malformed-header", f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FieldFileError("malformed-header", f"{path}: bad PGM header ({exc})") from exc
    if not 0 < maxval < 65536:
        raise FieldFileError("malformed-header", f"{path}: maxval {maxval} out of range")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    expected = width * height * dtype.itemsize
    raster = blob[pos : pos + expected]
    if len(raster) != expected:
        raise FieldFileError("size-mismatch", f"{path}: expected {expected} bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=dtype).reshape(height, width).astype(float) / maxval


def write_pgm(path, image, maxval: int = 255) -> None:
    image = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    raster = np.rint(image * maxval).astype(dtype)
    h, w = raster.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + raster.tobytes())


def load_image(path):
    """Read an image from a field file or a PGM; returns ``(array, spacing)``."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        img = read_pgm(path)
        return img, (1.0,) * img.ndim
    f = read_field(path)
    if f.kind == "deformation":
        raise FieldFileError("wrong-kind", f"{path}: expected an image, found a deformation")
    return f.data.astype(float), f.spacing
