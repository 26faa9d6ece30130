"""Versioned binary checkpoint container.

Layout (little-endian): magic ``HWCK`` | version u16 | config length u32 |
config JSON | entry count u32 | entries | CRC32 u32 of all preceding bytes.
Each entry: name length u16 | name UTF-8 | rows u32 | cols u32 | rows*cols f64
row-major.
"""

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError

MAGIC = b"HWCK"
VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray] = field(default_factory=dict)


def encode_checkpoint(params: dict[str, np.ndarray], config_echo: str) -> bytes:
    config_bytes = config_echo.encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(config_bytes)), config_bytes]
    parts.append(struct.pack("<I", len(params)))
    for name in sorted(params):
        value = np.asarray(params[name], dtype="<f8")
        if value.ndim != 2:
            raise CheckpointError(f"entry '{name}' must be 2-d, got shape {value.shape}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<II", *value.shape))
        parts.append(np.ascontiguousarray(value).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(blob) < 4 + 6 + 4 + 4 or blob[:4] != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic or truncated header)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{source}: CRC mismatch, file is corrupt or truncated")

    version, config_len = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version} (expected {VERSION})")
    offset = 10
    try:
        config = json.loads(body[offset:offset + config_len].decode("utf-8"))
        offset += config_len
        (count,) = struct.unpack_from("<I", body, offset)
        offset += 4
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, offset)
            offset += 2
            name = body[offset:offset + name_len].decode("utf-8")
            offset += name_len
            rows, cols = struct.unpack_from("<II", body, offset)
            offset += 8
            size = rows * cols * 8
            if offset + size > len(body):
                raise CheckpointError(
                    f"{source}: entry '{name}' declares shape ({rows}, {cols}) beyond end of file"
                )
            params[name] = np.frombuffer(body, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols).copy()
            offset += size
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{source}: malformed checkpoint: {e}") from e
    if offset != len(body):
        raise CheckpointError(f"{source}: {len(body) - offset} trailing bytes after last entry")
    return Checkpoint(config=config, params=params)


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], config_echo: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params, config_echo))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), str(path))
