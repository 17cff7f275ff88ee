"""Hyperspectral cubes and the HSC v1 file format.

An HSC v1 file is one UTF-8 JSON header line terminated by ``\\n``::

    {"magic": "HSC1", "width": W, "height": H, "bands": B, "dtype": "f32",
     "layout": "BSQ", "wavelengths_nm": [...]}

followed by exactly W*H*B little-endian float32 values in band-sequential
order (all pixels of band 0 row by row, then band 1, ...).

In memory a cube is an (H, W, B) array: row y, column x, band b.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

MAGIC = "HSC1"


class CubeFormatError(ValueError):
    pass


@dataclass
class HsiCube:
    data: np.ndarray            # (H, W, B)
    wavelengths_nm: np.ndarray  # (B,) strictly ascending

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"cube data must be (H, W, B), got shape {self.data.shape}")
        if self.wavelengths_nm.shape != (self.data.shape[2],):
            raise ValueError(f"{self.wavelengths_nm.size} wavelengths for {self.data.shape[2]} bands")
        if np.any(np.diff(self.wavelengths_nm) <= 0):
            raise ValueError("wavelengths must be strictly ascending")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    def crop(self, y: int, x: int, size_y: int, size_x: int | None = None) -> "HsiCube":
        size_x = size_y if size_x is None else size_x
        return HsiCube(self.data[y:y + size_y, x:x + size_x].copy(), self.wavelengths_nm)


def default_wavelengths(bands: int, start: float = 400.0, stop: float = 2500.0) -> np.ndarray:
    if bands == 1:
        return np.array([start])
    return np.linspace(start, stop, bands)


def _header(cube: HsiCube) -> bytes:
    header = {
        "magic": MAGIC,
        "width": cube.width,
        "height": cube.height,
        "bands": cube.bands,
        "dtype": "f32",
        "layout": "BSQ",
        "wavelengths_nm": [float(w) for w in cube.wavelengths_nm],
    }
    return (json.dumps(header) + "\n").encode("utf-8")


def encode_cube(cube: HsiCube) -> bytes:
    payload = np.ascontiguousarray(cube.data.transpose(2, 0, 1), dtype="<f4").tobytes()
    return _header(cube) + payload


def decode_cube(raw: bytes, source: str = "<bytes>") -> HsiCube:
    nl = raw.find(b"\n")
    if nl < 0:
        raise CubeFormatError(f"{source}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CubeFormatError(f"{source}: bad header: {exc}") from None
    if header.get("magic") != MAGIC:
        raise CubeFormatError(f"{source}: bad magic {header.get('magic')!r}")
    if header.get("dtype") != "f32" or header.get("layout") != "BSQ":
        raise CubeFormatError(f"{source}: unsupported dtype/layout {header.get('dtype')}/{header.get('layout')}")
    w, h, b = int(header["width"]), int(header["height"]), int(header["bands"])
    payload = raw[nl + 1:]
    if len(payload) != 4 * w * h * b:
        raise CubeFormatError(f"{source}: payload has {len(payload)} bytes, expected {4 * w * h * b}")
    bsq = np.frombuffer(payload, dtype="<f4").reshape(b, h, w)
    data = bsq.transpose(1, 2, 0).astype(np.float32)
    return HsiCube(data, np.asarray(header["wavelengths_nm"], dtype=np.float64))


def write_cube(path: str | os.PathLike, cube: HsiCube) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_cube(cube))


def read_cube(path: str | os.PathLike) -> HsiCube:
    with open(path, "rb") as fh:
        raw = fh.read()
    return decode_cube(raw, str(path))
