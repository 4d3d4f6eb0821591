"""Binary PGM (P5) label-map files: class indices as 8-bit pixel values."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def write_pgm(path, grid: np.ndarray) -> None:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise DataError(f"label grid must be 2-D, got shape {grid.shape}")
    if grid.min() < 0 or grid.max() > 255:
        raise DataError("PGM label maps support class indices 0..255 only")
    h, w = grid.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(grid.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: malformed PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise DataError(f"{path}: expected maxval 255, got {maxval}")
    pixels = data[pos : pos + w * h]
    if len(pixels) != w * h:
        raise DataError(f"{path}: pixel payload shorter than {w}x{h}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()
