# steps/step01_numerics/container.py
"""
Binärformat für Tensoren und Checkpoints.

Tensor ("SMT1"):
    magic b"SMT1" | rank: u64 LE | dims: rank * u64 LE | data: float64 LE, row-major

Checkpoint ("SMC1"):
    magic b"SMC1" | count: u64 LE | count * (name_len: u64 LE | name: UTF-8 | SMT1-Blob)
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping, Tuple, Union

import numpy as np

TENSOR_MAGIC = b"SMT1"
CHECKPOINT_MAGIC = b"SMC1"

_U64 = np.dtype("<u8")
_F64 = np.dtype("<f8")


class ContainerFormatError(ValueError):
    """Beschädigte oder fremde Datei."""


def encode_tensor(arr: np.ndarray) -> bytes:
    a = np.asarray(arr, dtype=_F64)
    header = np.array([a.ndim, *a.shape], dtype=_U64).tobytes()
    return TENSOR_MAGIC + header + np.ascontiguousarray(a).tobytes()


def _read_u64(buf: bytes, offset: int, count: int = 1) -> Tuple[np.ndarray, int]:
    end = offset + 8 * count
    if end > len(buf):
        raise ContainerFormatError(f"Header abgeschnitten bei Byte {offset}")
    return np.frombuffer(buf, dtype=_U64, count=count, offset=offset), end


def decode_tensor(buf: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Liest einen Tensor ab `offset`; liefert (Array, Offset hinter dem Blob)."""
    if buf[offset : offset + 4] != TENSOR_MAGIC:
        raise ContainerFormatError(f"Falsches Magic {buf[offset:offset + 4]!r} (erwartet {TENSOR_MAGIC!r})")
    (rank,), pos = _read_u64(buf, offset + 4)
    dims, pos = _read_u64(buf, pos, int(rank))
    shape = tuple(int(d) for d in dims)
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    end = pos + 8 * n
    if end > len(buf):
        raise ContainerFormatError(f"Daten abgeschnitten: {len(buf) - pos} von {8 * n} Bytes")
    data = np.frombuffer(buf, dtype=_F64, count=n, offset=pos).reshape(shape).astype(np.float64)
    return data, end


def write_tensor(path: Union[str, Path], arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def read_tensor(path: Union[str, Path]) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = decode_tensor(buf)
    if end != len(buf):
        raise ContainerFormatError(f"{path}: {len(buf) - end} überzählige Bytes")
    return arr


def encode_checkpoint(entries: Mapping[str, np.ndarray]) -> bytes:
    parts = [CHECKPOINT_MAGIC, np.array([len(entries)], dtype=_U64).tobytes()]
    for name in sorted(entries):
        raw = name.encode("utf-8")
        parts.append(np.array([len(raw)], dtype=_U64).tobytes())
        parts.append(raw)
        parts.append(encode_tensor(entries[name]))
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> Dict[str, np.ndarray]:
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ContainerFormatError(f"Kein Checkpoint (Magic {buf[:4]!r})")
    (count,), pos = _read_u64(buf, 4)
    out: Dict[str, np.ndarray] = {}
    for _ in range(int(count)):
        (name_len,), pos = _read_u64(buf, pos)
        end = pos + int(name_len)
        if end > len(buf):
            raise ContainerFormatError("Name abgeschnitten")
        try:
            name = buf[pos:end].decode("utf-8")
        except UnicodeDecodeError as e:
            raise ContainerFormatError(f"Ungültiger Name bei Byte {pos}") from e
        out[name], pos = decode_tensor(buf, end)
    if pos != len(buf):
        raise ContainerFormatError(f"{len(buf) - pos} überzählige Bytes im Checkpoint")
    return out


def save_checkpoint(path: Union[str, Path], entries: Mapping[str, np.ndarray]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(encode_checkpoint(entries))
    return p


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    return decode_checkpoint(Path(path).read_bytes())
