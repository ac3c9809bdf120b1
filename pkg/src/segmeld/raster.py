"""Image, boundary-map, label-map and mask containers plus Netpbm I/O.

All rasters are plain numpy arrays in row-major (height, width) order:

* colour image   -- ``uint8`` array of shape ``(h, w, 3)``
* boundary map   -- ``float64`` array of shape ``(h, w)`` with values in [0, 1]
* label map      -- ``int32`` array of shape ``(h, w)``; 0 is background
* binary mask    -- ``bool`` array of shape ``(h, w)``

Colour images are stored as binary PPM (P6, 8 bit). Boundary and label maps
are stored as binary PGM (P5, 16 bit, big-endian samples).
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    IoFailure,
    MalformedHeader,
    TruncatedPayload,
    ValueOutOfRange,
)

BOUNDARY_SCALE = 65535
_WS = b" \t\n\r\v\f"
_DIGITS = re.compile(rb"\d+")


# -- validation helpers ------------------------------------------------------

def as_color_image(data) -> np.ndarray:
    img = np.asarray(data)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionMismatch(f"colour image must have shape (h, w, 3), got {img.shape}")
    if img.dtype != np.uint8:
        if np.any((img < 0) | (img > 255)):
            raise ValueOutOfRange("colour samples must lie in [0, 255]")
        img = img.astype(np.uint8)
    return img


def as_boundary_map(data) -> np.ndarray:
    b = np.asarray(data, dtype=np.float64)
    if b.ndim != 2 or b.size == 0:
        raise DimensionMismatch(f"boundary map must be 2-D and non-empty, got {b.shape}")
    if not np.all(np.isfinite(b)) or b.min() < 0.0 or b.max() > 1.0:
        raise ValueOutOfRange("boundary strengths must lie in [0, 1]")
    return b


def as_label_map(data) -> np.ndarray:
    lab = np.asarray(data)
    if lab.ndim != 2 or lab.size == 0:
        raise DimensionMismatch(f"label map must be 2-D and non-empty, got {lab.shape}")
    if lab.dtype.kind not in "iub":
        raise ValueOutOfRange("label ids must be integers")
    if lab.size and lab.min() < 0:
        raise ValueOutOfRange("label ids must be non-negative")
    return lab.astype(np.int32, copy=False)


def as_mask(data) -> np.ndarray:
    m = np.asarray(data)
    if m.ndim != 2:
        raise DimensionMismatch(f"mask must be 2-D, got {m.shape}")
    return m.astype(bool, copy=False)


def check_same_shape(*arrays, what="rasters"):
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) > 1:
        raise DimensionMismatch(f"{what} differ in size: {sorted(shapes)}")


# -- Netpbm ------------------------------------------------------------------

def _parse_header(buf: bytes, magic: bytes):
    """Return ``(width, height, maxval, payload_offset)`` for a P5/P6 header."""
    if len(buf) < 2 or buf[:2] != magic:
        raise MalformedHeader(f"expected magic {magic!r}, got {buf[:2]!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and comments
        while pos < len(buf):
            c = buf[pos:pos + 1]
            if c in _WS:
                pos += 1
            elif c == b"#":
                nl = buf.find(b"\n", pos)
                pos = len(buf) if nl < 0 else nl + 1
            else:
                break
        m = _DIGITS.match(buf, pos)
        if m is None:
            raise MalformedHeader("header ends before width, height and maxval")
        if len(m.group()) > 9:
            raise MalformedHeader("header field too large")
        fields.append(int(m.group()))
        pos = m.end()
    if pos >= len(buf) or buf[pos:pos + 1] not in _WS:
        raise MalformedHeader("missing whitespace after maxval")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeader(f"degenerate dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise MalformedHeader(f"maxval {maxval} outside [1, 65535]")
    return width, height, maxval, pos + 1


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _write_bytes(path, data: bytes):
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _decode_samples(buf, offset, count, maxval, path):
    nbytes = 1 if maxval < 256 else 2
    need = count * nbytes
    if len(buf) - offset < need:
        raise TruncatedPayload(f"{path}: payload has {len(buf) - offset} bytes, need {need}")
    dtype = np.uint8 if nbytes == 1 else np.dtype(">u2")
    samples = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    if samples.max(initial=0) > maxval:
        raise ValueOutOfRange(f"{path}: sample exceeds maxval {maxval}")
    return samples


def decode_ppm(buf: bytes, path="<bytes>") -> np.ndarray:
    w, h, maxval, off = _parse_header(buf, b"P6")
    if maxval > 255:
        raise MalformedHeader(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    samples = _decode_samples(buf, off, w * h * 3, maxval, path)
    return samples.reshape(h, w, 3).copy()


def read_ppm(path) -> np.ndarray:
    return decode_ppm(_read_bytes(path), path)


def encode_ppm(image) -> bytes:
    img = as_color_image(image)
    h, w, _ = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def write_ppm(image, path):
    _write_bytes(path, encode_ppm(image))


def decode_pgm16(buf: bytes, kind="label", path="<bytes>") -> np.ndarray:
    w, h, maxval, off = _parse_header(buf, b"P5")
    samples = _decode_samples(buf, off, w * h, maxval, path).reshape(h, w)
    if kind == "boundary":
        return samples.astype(np.float64) / maxval
    if kind == "label":
        return samples.astype(np.int32)
    if kind == "mask":
        return samples != 0
    raise ValueError(f"unknown pgm kind {kind!r}")


def read_pgm16(path, kind="label") -> np.ndarray:
    """Read a P5 file as a ``"label"`` map, ``"boundary"`` map or ``"mask"``.

    Boundary maps are scaled by 1/maxval (1/65535 for 16-bit files).
    """
    return decode_pgm16(_read_bytes(path), kind, path)


def encode_pgm16(data) -> bytes:
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionMismatch(f"PGM payload must be 2-D and non-empty, got {arr.shape}")
    if arr.dtype.kind == "f":
        b = as_boundary_map(arr)
        q = np.rint(b * BOUNDARY_SCALE)
    else:
        if arr.min() < 0 or arr.max() > 65535:
            raise ValueOutOfRange("label ids must lie in [0, 65535] to fit a 16-bit PGM")
        q = arr
    h, w = arr.shape
    payload = q.astype(">u2").tobytes()
    return b"P5\n%d %d\n65535\n" % (w, h) + payload


def write_pgm16(data, path):
    """Write a boundary map (float) or label map / mask (int, bool) as 16-bit P5."""
    _write_bytes(path, encode_pgm16(data))


# -- class registry ----------------------------------------------------------

@dataclass(frozen=True)
class ClassRegistry:
    """Ordered (id, name) pairs; id 0 is reserved for background."""

    classes: tuple

    def __post_init__(self):
        classes = tuple((int(i), str(n)) for i, n in self.classes)
        ids = [i for i, _ in classes]
        names = [n for _, n in classes]
        if any(i <= 0 for i in ids):
            raise ConfigError("class ids must be positive (0 is background)")
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate class id in registry")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate class name in registry")
        object.__setattr__(self, "classes", classes)

    @classmethod
    def from_names(cls, names: Iterable[str]):
        return cls(tuple((i + 1, n) for i, n in enumerate(names)))

    @property
    def ids(self) -> list[int]:
        return [i for i, _ in self.classes]

    def __len__(self):
        return len(self.classes)

    def __contains__(self, class_id):
        return int(class_id) in self.ids

    def name(self, class_id: int) -> str:
        for i, n in self.classes:
            if i == class_id:
                return n
        if class_id == 0:
            return "background"
        raise KeyError(class_id)

    def id_of(self, name: str) -> int:
        for i, n in self.classes:
            if n == name:
                return i
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"classes": [{"id": i, "name": n} for i, n in self.classes]}

    @classmethod
    def from_json(cls, doc) -> "ClassRegistry":
        try:
            return cls(tuple((c["id"], c["name"]) for c in doc["classes"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed registry document: {exc}") from exc


def save_json(doc, path):
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def load_registry(path) -> ClassRegistry:
    return ClassRegistry.from_json(load_json(path))


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        os.makedirs(p, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {p}: {exc}") from exc
    return p
