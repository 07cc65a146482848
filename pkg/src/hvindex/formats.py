"""Binary artifact files: codes, projection banks, embeddings, MIH indexes, weights, PGM strips.

All integers are little-endian.  Layouts:

``HVC1`` codes       magic, u32 count, u32 width, u32 has_labels, then per
                     record ceil(width/8) code bytes (bit j of the code is
                     bit j%8 of byte j//8) and, if flagged, a u32 label.
``HVP1`` bank        magic, u32 input_dim, u32 output_bits, u64 seed.
``HVE1`` embeddings  magic, u32 count, u32 dim, u32 has_labels, then per row
                     dim float32 values and, if flagged, a u32 label.
``HVMI`` MIH index   magic, u32 width, u32 t, u32 size, then a complete HVC1
                     file holding the enrolled codes in id order.
``HVW1`` weights     magic, u32 layer count, then per layer u32 filter count
                     and that many float32 weights.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from hvindex.bitcode import BitCode, CodeSet
from hvindex.errors import FormatError
from hvindex.mih import MihIndex
from hvindex.simhash import ProjectionBank

CODES_MAGIC = b"HVC1"
BANK_MAGIC = b"HVP1"
EMBED_MAGIC = b"HVE1"
INDEX_MAGIC = b"HVMI"
WEIGHTS_MAGIC = b"HVW1"


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temporary file so no partial file is left behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.buf = memoryview(data)
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated {self.what} file")
        out = bytes(self.buf[self.pos : self.pos + n])
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def magic(self, expected: bytes) -> None:
        got = self.take(4)
        if got != expected:
            raise FormatError(f"bad magic {got!r} for {self.what} file (expected {expected!r})")

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes in {self.what} file")


def _read(path) -> bytes:
    return Path(path).read_bytes()


# --- codes ---------------------------------------------------------------------


def encode_codes(codes: CodeSet, with_labels: bool = True) -> bytes:
    out = io.BytesIO()
    out.write(CODES_MAGIC)
    out.write(struct.pack("<III", len(codes), codes.width, int(with_labels)))
    for code, label in zip(codes.codes, codes.labels):
        out.write(code.to_bytes())
        if with_labels:
            out.write(struct.pack("<I", label))
    return out.getvalue()


def decode_codes(data: bytes) -> CodeSet:
    rd = _Reader(data, "codes")
    rd.magic(CODES_MAGIC)
    n, width, flag = rd.unpack("<III")
    if not 1 <= width <= 4096 or flag not in (0, 1):
        raise FormatError(f"invalid codes header (width={width}, label flag={flag})")
    nbytes = (width + 7) // 8
    codes, labels = [], []
    for _ in range(n):
        raw = rd.take(nbytes)
        value = int.from_bytes(raw, "little")
        if value >> width:
            raise FormatError("code record has bits set beyond its width")
        codes.append(BitCode(width, value))
        labels.append(rd.unpack("<I")[0] if flag else 0)
    rd.done()
    return CodeSet(width, codes, labels)


def write_codes(codes: CodeSet, path, with_labels: bool = True) -> None:
    atomic_write(path, encode_codes(codes, with_labels))


def read_codes(path) -> CodeSet:
    return decode_codes(_read(path))


# --- projection bank -------------------------------------------------------------


def encode_bank(bank: ProjectionBank) -> bytes:
    return BANK_MAGIC + struct.pack("<IIQ", bank.input_dim, bank.output_bits, bank.seed)


def decode_bank(data: bytes) -> ProjectionBank:
    rd = _Reader(data, "projection bank")
    rd.magic(BANK_MAGIC)
    n, k, seed = rd.unpack("<IIQ")
    rd.done()
    return ProjectionBank(n, k, seed)


def write_bank(bank: ProjectionBank, path) -> None:
    atomic_write(path, encode_bank(bank))


def read_bank(path) -> ProjectionBank:
    return decode_bank(_read(path))


# --- embeddings --------------------------------------------------------------------


def encode_embeddings(x: np.ndarray, labels=None) -> bytes:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise FormatError("embeddings must be a 2-D array")
    out = io.BytesIO()
    out.write(EMBED_MAGIC)
    out.write(struct.pack("<III", x.shape[0], x.shape[1], int(labels is not None)))
    rows = x.astype("<f4")
    for i, row in enumerate(rows):
        out.write(row.tobytes())
        if labels is not None:
            out.write(struct.pack("<I", int(labels[i])))
    return out.getvalue()


def decode_embeddings(data: bytes) -> tuple[np.ndarray, list[int] | None]:
    rd = _Reader(data, "embeddings")
    rd.magic(EMBED_MAGIC)
    n, dim, flag = rd.unpack("<III")
    if dim < 1 or flag not in (0, 1):
        raise FormatError(f"invalid embeddings header (dim={dim}, label flag={flag})")
    x = np.empty((n, dim), dtype=np.float32)
    labels = [] if flag else None
    for i in range(n):
        x[i] = np.frombuffer(rd.take(4 * dim), dtype="<f4")
        if flag:
            labels.append(rd.unpack("<I")[0])
    rd.done()
    return x, labels


def write_embeddings(x, path, labels=None) -> None:
    atomic_write(path, encode_embeddings(x, labels))


def read_embeddings(path) -> tuple[np.ndarray, list[int] | None]:
    return decode_embeddings(_read(path))


# --- MIH index -----------------------------------------------------------------------


def encode_index(ix: MihIndex) -> bytes:
    header = INDEX_MAGIC + struct.pack("<III", ix.width, ix.t, ix.size)
    return header + encode_codes(ix.codeset())


def decode_index(data: bytes) -> MihIndex:
    rd = _Reader(data, "index")
    rd.magic(INDEX_MAGIC)
    width, t, size = rd.unpack("<III")
    codes = decode_codes(data[rd.pos :])
    if codes.width != width or len(codes) != size:
        raise FormatError(
            f"index header (width={width}, size={size}) disagrees with payload (width={codes.width}, size={len(codes)})"
        )
    try:
        return MihIndex.build(codes, t)
    except ValueError as exc:
        raise FormatError(f"invalid index configuration: {exc}") from exc


def write_index(ix: MihIndex, path) -> None:
    atomic_write(path, encode_index(ix))


def read_index(path) -> MihIndex:
    return decode_index(_read(path))


# --- combiner weights ------------------------------------------------------------------


def encode_weights(layers) -> bytes:
    out = io.BytesIO()
    out.write(WEIGHTS_MAGIC)
    out.write(struct.pack("<I", len(layers)))
    for w in layers:
        w = np.asarray(w, dtype="<f4").ravel()
        out.write(struct.pack("<I", w.size))
        out.write(w.tobytes())
    return out.getvalue()


def decode_weights(data: bytes) -> list[np.ndarray]:
    rd = _Reader(data, "weights")
    rd.magic(WEIGHTS_MAGIC)
    (n_layers,) = rd.unpack("<I")
    layers = []
    for _ in range(n_layers):
        (n,) = rd.unpack("<I")
        layers.append(np.frombuffer(rd.take(4 * n), dtype="<f4").astype(np.float64))
    rd.done()
    return layers


def write_weights(layers, path) -> None:
    atomic_write(path, encode_weights(layers))


def read_weights(path) -> list[np.ndarray]:
    return decode_weights(_read(path))


# --- PGM strips ----------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise FormatError(f"bad PGM header token {data[start:pos]!r}") from None
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    """8-bit binary (P5) PGM to a ``(height, width)`` ``uint8`` array."""
    if data[:2] != b"P5":
        raise FormatError("not a binary (P5) PGM image")
    (width, height, maxval), pos = _pgm_tokens(data, 3)
    if not 0 < maxval < 256:
        raise FormatError(f"only 8-bit PGM is supported (maxval={maxval})")
    pixels = data[pos : pos + width * height]
    if len(pixels) != width * height:
        raise FormatError("truncated PGM pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)


def encode_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()


def read_pgm(path) -> np.ndarray:
    return decode_pgm(_read(path))


def write_pgm(img, path) -> None:
    atomic_write(path, encode_pgm(img))


# --- inspection ------------------------------------------------------------------------


def describe(path) -> dict:
    """Header fields of any artifact file, for debugging."""
    data = _read(path)
    magic = data[:4]
    rd = _Reader(data, "artifact")
    if magic == CODES_MAGIC:
        rd.take(4)
        n, k, flag = rd.unpack("<III")
        return {"kind": "codes", "magic": "HVC1", "count": n, "width": k, "labels": bool(flag), "bytes": len(data)}
    if magic == BANK_MAGIC:
        rd.take(4)
        n, k, seed = rd.unpack("<IIQ")
        return {"kind": "projection bank", "magic": "HVP1", "input_dim": n, "output_bits": k, "seed": seed}
    if magic == EMBED_MAGIC:
        rd.take(4)
        n, dim, flag = rd.unpack("<III")
        return {"kind": "embeddings", "magic": "HVE1", "count": n, "dim": dim, "labels": bool(flag), "bytes": len(data)}
    if magic == INDEX_MAGIC:
        rd.take(4)
        k, t, size = rd.unpack("<III")
        return {"kind": "mih index", "magic": "HVMI", "width": k, "t": t, "size": size, "substring_bits": k // t if t else 0}
    if magic == WEIGHTS_MAGIC:
        layers = decode_weights(data)
        return {"kind": "combiner weights", "magic": "HVW1", "layers": len(layers), "filters": [len(w) for w in layers]}
    if data[:2] == b"P5":
        img = decode_pgm(data)
        return {"kind": "pgm image", "magic": "P5", "height": img.shape[0], "width": img.shape[1]}
    raise FormatError(f"unrecognized file magic {magic!r}")
