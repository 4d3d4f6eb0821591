"""Writer for the engine's binary mask-embedding dataset format.

Implemented against the documented layout (little-endian; magic "USAMDS01";
JSON manifest + crc; u64 offset index; length-prefixed crc-checked records).
Format conformance is this package's contract with the engine, so nothing
here imports it; the test suite proves conformance by running the engine's
``inspect`` command on emitted files.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"USAMDS01"
FORMAT_VERSION = 1


def rle_encode(mask: np.ndarray) -> np.ndarray:
    """Row-major alternating run lengths, first run counting 0-bits."""
    bits = np.asarray(mask).reshape(-1).astype(np.uint8)
    change = np.flatnonzero(bits[1:] != bits[:-1]) + 1
    edges = np.concatenate(([0], change, [bits.size]))
    runs = np.diff(edges)
    if bits[0] == 1:
        runs = np.concatenate(([0], runs))
    return runs.astype(np.int64)


@dataclass
class Record:
    image_id: str
    embeddings: np.ndarray        # (d, E) float32
    masks: np.ndarray             # (d, mask_h, mask_w) bool
    label_index: int              # single-hot class
    image_h: int
    image_w: int
    valid_rows: int = -1          # rows before zero-padding; -1 = all


@dataclass
class Manifest:
    class_names: tuple[str, ...]
    d: int
    E: int
    mask_h: int
    mask_w: int
    record_count: int = 0
    seed_note: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": FORMAT_VERSION,
                "class_names": list(self.class_names),
                "d": self.d,
                "E": self.E,
                "mask_h": self.mask_h,
                "mask_w": self.mask_w,
                "record_count": self.record_count,
                "seed_note": self.seed_note,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


def _record_body(record: Record, num_classes: int) -> bytes:
    out = io.BytesIO()
    id_bytes = record.image_id.encode("utf-8")
    out.write(struct.pack("<H", len(id_bytes)))
    out.write(id_bytes)
    out.write(struct.pack("<II", record.image_h, record.image_w))
    labels = np.zeros(num_classes, dtype=np.uint8)
    labels[record.label_index] = 1
    out.write(labels.tobytes())
    out.write(np.ascontiguousarray(record.embeddings, dtype="<f4").tobytes())
    for mask in record.masks:
        runs = rle_encode(mask).astype("<u4")
        out.write(struct.pack("<I", runs.size))
        out.write(runs.tobytes())
    return out.getvalue()


def write_dataset(manifest: Manifest, records: list[Record], path) -> None:
    manifest.record_count = len(records)
    bodies = [_record_body(r, len(manifest.class_names)) for r in records]
    manifest_bytes = manifest.to_json().encode("utf-8")
    pos = len(MAGIC) + 4 + len(manifest_bytes) + 4 + 8 * len(records)
    offsets = []
    for body in bodies:
        offsets.append(pos)
        pos += 4 + len(body) + 4
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(manifest_bytes)))
        f.write(manifest_bytes)
        f.write(struct.pack("<I", zlib.crc32(manifest_bytes)))
        for off in offsets:
            f.write(struct.pack("<Q", off))
        for body in bodies:
            f.write(struct.pack("<I", len(body)))
            f.write(body)
            f.write(struct.pack("<I", zlib.crc32(body)))


def write_validity_sidecar(records: list[Record], d: int, path) -> None:
    """Per-record count of backbone-produced rows (the rest are padding)."""
    payload = {
        r.image_id: (r.valid_rows if r.valid_rows >= 0 else d) for r in records
    }
    with open(str(path) + ".validity.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")
