#apps/cli/app/lib/sequence_io.py
"""
Bildsequenzen als Verzeichnis:

    00000001.ppm, 00000002.ppm, ...   binäres PPM (P6, maxval 255), RGB
    groundtruth.txt                   Eckenformat, eine Zeile pro Frame

Ein kleiner eigener Rasterleser statt Codec-Abhängigkeiten.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from steps.step08_evaluation.boxfiles import Trajectory, read_groundtruth, write_boxes

log = logging.getLogger(__name__)

FRAME_PATTERN = "{:08d}.ppm"
GROUNDTRUTH = "groundtruth.txt"


class SequenceError(ValueError):
    def __init__(self, frame_index: int, message: str) -> None:
        super().__init__(f"Frame {frame_index}: {message}")
        self.frame_index = frame_index


def _tokens(buf: bytes, count: int) -> Tuple[List[bytes], int]:
    """Liest `count` Header-Token (Kommentare mit # erlaubt); liefert Token und Offset danach."""
    out: List[bytes] = []
    i = 0
    while len(out) < count:
        while i < len(buf) and buf[i:i + 1].isspace():
            i += 1
        if buf[i:i + 1] == b"#":
            while i < len(buf) and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(buf) and not buf[i:i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError("PPM-Header unvollständig")
        out.append(buf[start:i])
    return out, i + 1


def decode_ppm(buf: bytes) -> np.ndarray:
    (magic, w, h, maxval), offset = _tokens(buf, 4)
    if magic != b"P6":
        raise ValueError(f"kein binäres PPM (magic {magic!r})")
    width, height, maxv = int(w), int(h), int(maxval)
    if maxv != 255:
        raise ValueError(f"maxval {maxv} nicht unterstützt")
    n = width * height * 3
    pixels = buf[offset:offset + n]
    if len(pixels) != n:
        raise ValueError(f"{len(pixels)} statt {n} Pixelbytes")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(img: np.ndarray) -> bytes:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"RGB-Bild erwartet, shape={img.shape}")
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def frame_path(seq_dir: Path, index: int) -> Path:
    """index ist 1-basiert."""
    return Path(seq_dir) / FRAME_PATTERN.format(index)


def count_frames(seq_dir: Path) -> int:
    n = 0
    while frame_path(seq_dir, n + 1).is_file():
        n += 1
    return n


def read_frames(seq_dir: Union[str, Path], n_frames: int | None = None) -> List[np.ndarray]:
    """Liest Frames 1..n; fehlende oder defekte Dateien -> SequenceError mit Frame-Index."""
    seq_dir = Path(seq_dir)
    if n_frames is None:
        gt_file = seq_dir / GROUNDTRUTH
        n_frames = len(read_groundtruth(gt_file)) if gt_file.is_file() else count_frames(seq_dir)
    if n_frames == 0:
        raise SequenceError(1, f"keine Frames in {seq_dir}")
    frames = []
    for idx in range(1, n_frames + 1):
        p = frame_path(seq_dir, idx)
        if not p.is_file():
            raise SequenceError(idx, f"Datei fehlt: {p.name}")
        try:
            frames.append(decode_ppm(p.read_bytes()))
        except ValueError as e:
            raise SequenceError(idx, str(e)) from None
    return frames


def write_sequence(seq_dir: Union[str, Path], frames: Sequence[np.ndarray], gt: Trajectory) -> Path:
    seq_dir = Path(seq_dir)
    seq_dir.mkdir(parents=True, exist_ok=True)
    for idx, img in enumerate(frames, start=1):
        frame_path(seq_dir, idx).write_bytes(encode_ppm(img))
    write_boxes(seq_dir / GROUNDTRUTH, gt)
    log.info("Sequenz geschrieben: %s (%d Frames)", seq_dir, len(frames))
    return seq_dir
