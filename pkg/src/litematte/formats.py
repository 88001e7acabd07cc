"""Byte-exact file formats: TSR1 tensors, WTS1 weight bundles, 8-bit PGM/PPM.

TSR1:  b"TSR1" | rank u32 | dims u32 x rank | float32 payload, all little-endian
WTS1:  b"WTS1" | count u32 | count x (name_len u16 | utf-8 name | TSR1 record)
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"TSR1"
WEIGHTS_MAGIC = b"WTS1"
MAX_RANK = 4
TRIMAP_LEVELS = np.array([0.0, 0.5, 1.0], dtype=np.float32)


class FormatError(ValueError):
    """Malformed file contents; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _need(buf: bytes, offset: int, size: int, what: str) -> None:
    if len(buf) - offset < size:
        raise FormatError(f"truncated {what}: expected {size} bytes, found {max(len(buf) - offset, 0)}",
                          offset)


def encode_tensor(x) -> bytes:
    x = np.asarray(x, dtype="<f4")
    if x.ndim > MAX_RANK:
        raise ValueError(f"rank {x.ndim} exceeds {MAX_RANK}")
    header = TENSOR_MAGIC + struct.pack(f"<I{x.ndim}I", x.ndim, *x.shape)
    return header + np.ascontiguousarray(x).tobytes()


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one TSR1 record starting at ``offset``; returns (array, end offset)."""
    _need(buf, offset, 8, "tensor header")
    if buf[offset:offset + 4] != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {bytes(buf[offset:offset + 4])!r}", offset)
    (rank,) = struct.unpack_from("<I", buf, offset + 4)
    if rank > MAX_RANK:
        raise FormatError(f"rank {rank} exceeds {MAX_RANK}", offset + 4)
    pos = offset + 8
    _need(buf, pos, 4 * rank, "tensor dims")
    dims = struct.unpack_from(f"<{rank}I", buf, pos)
    if any(d < 1 for d in dims):
        raise FormatError(f"zero extent in dims {dims}", pos)
    pos += 4 * rank
    size = 4 * int(np.prod(dims, dtype=np.int64))
    _need(buf, pos, size, "tensor payload")
    data = np.frombuffer(buf, dtype="<f4", count=size // 4, offset=pos)
    return data.reshape(dims).astype(np.float32), pos + size


def write_tensor(path, x) -> None:
    Path(path).write_bytes(encode_tensor(x))


def read_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    x, end = decode_tensor(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after tensor", end)
    return x


def encode_weights(params: dict) -> bytes:
    parts = [WEIGHTS_MAGIC, struct.pack("<I", len(params))]
    for name, value in params.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"parameter name too long: {name[:40]}...")
        parts += [struct.pack("<H", len(raw)), raw, encode_tensor(value)]
    return b"".join(parts)


def decode_weights(buf: bytes) -> dict[str, np.ndarray]:
    _need(buf, 0, 8, "weights header")
    if buf[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"bad weights magic {bytes(buf[:4])!r}", 0)
    (count,) = struct.unpack_from("<I", buf, 4)
    pos = 8
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        _need(buf, pos, 2, "name length")
        (length,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        _need(buf, pos, length, "parameter name")
        try:
            name = bytes(buf[pos:pos + length]).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("parameter name is not UTF-8", pos) from None
        if name in params:
            raise FormatError(f"duplicate parameter name {name!r}", pos)
        pos += length
        params[name], pos = decode_tensor(buf, pos)
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after {count} entries", pos)
    return params


def write_weights(path, params: dict) -> None:
    Path(path).write_bytes(encode_weights(params))


def read_weights(path) -> dict[str, np.ndarray]:
    return decode_weights(Path(path).read_bytes())


# netpbm -----------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_image(buf: bytes) -> np.ndarray:
    """P5/P6 bytes -> 1 x C x H x W float32 in [0, 1]."""
    fields = []
    pos = 0
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if not m:
            raise FormatError("truncated netpbm header", pos)
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported netpbm magic {magic!r}", 0)
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError(f"non-numeric netpbm header {fields[1:]}", 2) from None
    if maxval != 255:
        raise FormatError(f"only 8-bit images are supported, maxval={maxval}", pos)
    if width < 1 or height < 1:
        raise FormatError(f"empty image {width}x{height}", pos)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after netpbm header", pos)
    pos += 1
    channels = 1 if magic == b"P5" else 3
    size = width * height * channels
    _need(buf, pos, size, "pixel data")
    pixels = np.frombuffer(buf, dtype=np.uint8, count=size, offset=pos)
    img = pixels.reshape(height, width, channels).transpose(2, 0, 1)[None]
    return img.astype(np.float32) / np.float32(255)


def to_bytes(x) -> np.ndarray:
    """[0, 1] reals -> uint8 with round-half-up."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def encode_image(x) -> bytes:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 2:
        x = x[None, None]
    if x.ndim != 4 or x.shape[0] != 1 or x.shape[1] not in (1, 3):
        raise ValueError(f"expected 1 x (1|3) x H x W image, got {x.shape}")
    c, h, w = x.shape[1:]
    magic = b"P5" if c == 1 else b"P6"
    body = to_bytes(x[0]).transpose(1, 2, 0).tobytes()
    return magic + f"\n{w} {h}\n255\n".encode() + body


def read_image(path) -> np.ndarray:
    return decode_image(Path(path).read_bytes())


def write_image(path, x) -> None:
    Path(path).write_bytes(encode_image(x))


def read_trimap(path) -> np.ndarray:
    """Decode a 0/128/255 trimap to {0, 0.5, 1} by nearest level."""
    img = read_image(path)
    if img.shape[1] != 1:
        raise FormatError("trimap must be a single-channel PGM", 0)
    idx = np.abs(img[..., None] - TRIMAP_LEVELS).argmin(axis=-1)
    return TRIMAP_LEVELS[idx]
