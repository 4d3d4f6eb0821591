"""Binary mask-embedding dataset: RLE masks, manifest, random-access file format.

File layout (little-endian throughout)::

    magic           8 bytes  b"USAMDS01"
    manifest_len    u32
    manifest        UTF-8 JSON (format_version, class_names, d, E,
                    mask_h, mask_w, record_count, seed_note)
    manifest_crc    u32      crc32 of the manifest JSON bytes
    index           record_count x u64 absolute record offsets
    records         one block per record:
        record_len  u32      byte length of body (excludes len and crc)
        body:
            id_len      u16, image_id UTF-8
            image_h     u32
            image_w     u32
            labels      C x u8 (0/1 multi-hot)
            embeddings  d*E float32, row-major
            masks       d blocks of (run_count u32, runs run_count x u32)
        record_crc  u32      crc32 of body

Masks are stored run-length encoded: alternating run lengths in row-major
scan order, the first run counting 0-bits (and may be zero); runs must sum
to mask_h*mask_w and no interior run may be empty.
"""

from __future__ import annotations

import io
import json
import mmap
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    DataError,
    LengthMismatch,
    TruncatedRecord,
    VersionUnsupported,
)

MAGIC = b"USAMDS01"
FORMAT_VERSION = 1

# validate_record violation tags
NON_FINITE_EMBEDDING = "NonFiniteEmbedding"
EMBEDDING_SHAPE_MISMATCH = "EmbeddingShapeMismatch"
MASK_COUNT_MISMATCH = "MaskCountMismatch"
MASK_LENGTH_MISMATCH = "MaskLengthMismatch"
BAD_RUNS = "BadRuns"
LABEL_SHAPE_MISMATCH = "LabelShapeMismatch"
LABEL_NOT_BINARY = "LabelNotBinary"
EMPTY_LABEL = "EmptyLabel"
BAD_IMAGE_SIZE = "BadImageSize"


# ---------------------------------------------------------------------------
# RLE
# ---------------------------------------------------------------------------

def rle_encode(mask: np.ndarray) -> np.ndarray:
    """Encode a binary grid as alternating run lengths (first run counts 0s)."""
    bits = np.asarray(mask).reshape(-1).astype(np.uint8)
    if bits.size == 0:
        return np.zeros(0, dtype=np.int64)
    # boundaries where the bit value changes
    change = np.flatnonzero(bits[1:] != bits[:-1]) + 1
    edges = np.concatenate(([0], change, [bits.size]))
    runs = np.diff(edges)
    if bits[0] == 1:
        runs = np.concatenate(([0], runs))
    return runs.astype(np.int64)


def rle_decode(runs: np.ndarray, h: int, w: int) -> np.ndarray:
    """Decode run lengths back to an h*w boolean grid.

    Raises LengthMismatch when the runs do not sum to h*w.
    """
    runs = np.asarray(runs, dtype=np.int64)
    total = int(runs.sum())
    if total != h * w:
        raise LengthMismatch(f"runs sum to {total}, expected {h * w}")
    values = np.arange(runs.size, dtype=np.int64) % 2
    flat = np.repeat(values.astype(bool), runs)
    return flat.reshape(h, w)


def _runs_structurally_ok(runs: np.ndarray) -> bool:
    """Non-empty, non-negative, and only the leading 0-run may be empty."""
    runs = np.asarray(runs, dtype=np.int64)
    if runs.size == 0 or (runs < 0).any():
        return False
    return not (runs[1:] == 0).any()


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    class_names: tuple[str, ...]
    d: int
    E: int
    mask_h: int
    mask_w: int
    record_count: int
    format_version: int = FORMAT_VERSION
    seed_note: str = ""

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def check(self) -> None:
        if self.num_classes < 1:
            raise DataError("manifest needs at least one class")
        if len(set(self.class_names)) != self.num_classes or any(
            not c for c in self.class_names
        ):
            raise DataError("class names must be unique and non-empty")
        if self.d < 1 or self.E < 1 or self.mask_h < 1 or self.mask_w < 1:
            raise DataError("d, E and mask dims must be positive")
        if self.record_count < 0:
            raise DataError("record_count must be non-negative")

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": self.format_version,
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

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        obj = json.loads(text)
        version = int(obj.get("format_version", -1))
        if version != FORMAT_VERSION:
            raise VersionUnsupported(f"format_version {version} not supported")
        return cls(
            class_names=tuple(obj["class_names"]),
            d=int(obj["d"]),
            E=int(obj["E"]),
            mask_h=int(obj["mask_h"]),
            mask_w=int(obj["mask_w"]),
            record_count=int(obj["record_count"]),
            format_version=version,
            seed_note=str(obj.get("seed_note", "")),
        )


@dataclass
class EmbeddingRecord:
    image_id: str
    embeddings: np.ndarray          # (d, E) float32
    mask_rles: list[np.ndarray]     # d run-length arrays
    labels: np.ndarray              # (C,) uint8 multi-hot
    image_h: int
    image_w: int

    def decode_masks(self, mask_h: int, mask_w: int) -> np.ndarray:
        """All d masks as a (d, mask_h, mask_w) boolean array."""
        return np.stack([rle_decode(r, mask_h, mask_w) for r in self.mask_rles])


def validate_record(
    record: EmbeddingRecord,
    manifest: DatasetManifest,
    require_labels: bool = True,
) -> list[str]:
    """List of invariant violations; empty iff the record conforms.

    require_labels=False admits all-zero label vectors (inference records
    whose contents are unknown).
    """
    v: list[str] = []
    emb = np.asarray(record.embeddings)
    if emb.shape != (manifest.d, manifest.E):
        v.append(EMBEDDING_SHAPE_MISMATCH)
    if emb.size and not np.isfinite(emb).all():
        v.append(NON_FINITE_EMBEDDING)
    if len(record.mask_rles) != manifest.d:
        v.append(MASK_COUNT_MISMATCH)
    n_bits = manifest.mask_h * manifest.mask_w
    for runs in record.mask_rles:
        runs = np.asarray(runs, dtype=np.int64)
        if int(runs.sum()) != n_bits:
            v.append(MASK_LENGTH_MISMATCH)
            break
    for runs in record.mask_rles:
        if not _runs_structurally_ok(runs):
            v.append(BAD_RUNS)
            break
    labels = np.asarray(record.labels)
    if labels.shape != (manifest.num_classes,):
        v.append(LABEL_SHAPE_MISMATCH)
    else:
        if not np.isin(labels, (0, 1)).all():
            v.append(LABEL_NOT_BINARY)
        elif require_labels and labels.sum() == 0:
            v.append(EMPTY_LABEL)
    if record.image_h < 1 or record.image_w < 1:
        v.append(BAD_IMAGE_SIZE)
    return v


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def encode_record_body(record: EmbeddingRecord) -> bytes:
    """Body bytes of one record (no length prefix, no crc)."""
    out = io.BytesIO()
    id_bytes = record.image_id.encode("utf-8")
    out.write(struct.pack("<H", len(id_bytes)))
    out.write(id_bytes)
    out.write(struct.pack("<II", record.image_h, record.image_w))
    out.write(np.asarray(record.labels, dtype=np.uint8).tobytes())
    out.write(np.ascontiguousarray(record.embeddings, dtype="<f4").tobytes())
    for runs in record.mask_rles:
        runs = np.asarray(runs, dtype="<u4")
        out.write(struct.pack("<I", runs.size))
        out.write(runs.tobytes())
    return out.getvalue()


class _Cursor:
    """Bounds-checked reader over a record body."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedRecord(
                f"record body ends at {len(self.buf)} bytes, needed {self.pos + n}"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode_record_body(body: bytes, manifest: DatasetManifest) -> EmbeddingRecord:
    cur = _Cursor(body)
    image_id = cur.take(cur.u16()).decode("utf-8")
    image_h = cur.u32()
    image_w = cur.u32()
    labels = np.frombuffer(cur.take(manifest.num_classes), dtype=np.uint8).copy()
    emb_bytes = cur.take(manifest.d * manifest.E * 4)
    embeddings = (
        np.frombuffer(emb_bytes, dtype="<f4").reshape(manifest.d, manifest.E).copy()
    )
    mask_rles = []
    for _ in range(manifest.d):
        n = cur.u32()
        runs = np.frombuffer(cur.take(n * 4), dtype="<u4").astype(np.int64)
        mask_rles.append(runs)
    if cur.pos != len(body):
        raise TruncatedRecord(
            f"record body has {len(body) - cur.pos} trailing bytes"
        )
    return EmbeddingRecord(image_id, embeddings, mask_rles, labels, image_h, image_w)


def write_dataset(manifest: DatasetManifest, records, path) -> None:
    """Write a dataset file; records must conform to the manifest.

    Training-style label checking is not applied here (all-zero labels are
    writable for inference datasets); structural conformance is enforced.
    """
    manifest.check()
    records = list(records)
    manifest.record_count = len(records)
    for rec in records:
        bad = [
            x
            for x in validate_record(rec, manifest, require_labels=False)
            if x != EMPTY_LABEL
        ]
        if bad:
            raise DataError(f"record {rec.image_id!r} violates manifest: {bad}")

    bodies = [encode_record_body(r) for r in records]
    manifest_bytes = manifest.to_json().encode("utf-8")
    header_len = len(MAGIC) + 4 + len(manifest_bytes) + 4
    index_len = 8 * len(records)
    offsets = []
    pos = header_len + index_len
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


class DatasetReader:
    """Random-access, read-only view of a dataset file.

    Backed by mmap, so one handle is safely shareable across concurrent
    readers; use as a context manager or call close().
    """

    def __init__(self, path):
        self.path = path
        self._file = open(path, "rb")
        try:
            self._mm = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ)
        except ValueError:
            self._file.close()
            raise TruncatedRecord("file is empty")
        try:
            self.manifest, self._offsets = self._read_header()
        except Exception:
            self.close()
            raise

    def _read_header(self):
        mm = self._mm
        if len(mm) < len(MAGIC) + 4:
            raise TruncatedRecord("file too short for header")
        if mm[: len(MAGIC)] != MAGIC:
            raise BadMagic(f"expected magic {MAGIC!r}")
        pos = len(MAGIC)
        (mlen,) = struct.unpack_from("<I", mm, pos)
        pos += 4
        if pos + mlen + 4 > len(mm):
            raise TruncatedRecord("manifest extends past end of file")
        manifest_bytes = bytes(mm[pos : pos + mlen])
        pos += mlen
        (crc,) = struct.unpack_from("<I", mm, pos)
        pos += 4
        if zlib.crc32(manifest_bytes) != crc:
            raise ChecksumMismatch("manifest checksum mismatch")
        manifest = DatasetManifest.from_json(manifest_bytes.decode("utf-8"))
        n = manifest.record_count
        if pos + 8 * n > len(mm):
            raise TruncatedRecord("record index extends past end of file")
        offsets = struct.unpack_from(f"<{n}Q", mm, pos) if n else ()
        return manifest, offsets

    def __len__(self) -> int:
        return len(self._offsets)

    def __getitem__(self, i: int) -> EmbeddingRecord:
        if not 0 <= i < len(self._offsets):
            raise IndexError(i)
        mm = self._mm
        off = self._offsets[i]
        if off + 4 > len(mm):
            raise TruncatedRecord(f"record {i} offset past end of file")
        (body_len,) = struct.unpack_from("<I", mm, off)
        end = off + 4 + body_len + 4
        if end > len(mm):
            raise TruncatedRecord(f"record {i} extends past end of file")
        body = bytes(mm[off + 4 : off + 4 + body_len])
        (crc,) = struct.unpack_from("<I", mm, off + 4 + body_len)
        if zlib.crc32(body) != crc:
            raise ChecksumMismatch(f"record {i} checksum mismatch")
        return decode_record_body(body, self.manifest)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def close(self) -> None:
        if getattr(self, "_mm", None) is not None:
            self._mm.close()
            self._mm = None
        if getattr(self, "_file", None) is not None:
            self._file.close()
            self._file = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_dataset(path) -> DatasetReader:
    return DatasetReader(path)
