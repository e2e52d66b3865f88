# steps/step08_evaluation/boxfiles.py
"""
Box-Dateien im Eckenformat, eine Zeile pro Frame:

    x1,y1,x2,y2           Ground Truth
    x1,y1,x2,y2,score     Trajektorie
    nan,nan,nan,nan[,s]   Objekt abwesend

Die Ecken werden unverändert gehalten (keine Umrechnung über das Zentrumsformat).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from steps.step04_anchors.boxes import Box


class BoxFormatError(ValueError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"Zeile {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Trajectory:
    corners: np.ndarray                  # [n, 4], NaN = abwesend
    scores: Optional[np.ndarray] = None  # [n]

    def __post_init__(self) -> None:
        if self.corners.ndim != 2 or self.corners.shape[1] != 4:
            raise ValueError(f"Trajectory: Ecken-Array {self.corners.shape}")
        if self.scores is not None and self.scores.shape != (len(self.corners),):
            raise ValueError(f"Trajectory: {len(self.corners)} Boxen, {self.scores.shape} Scores")

    @classmethod
    def from_boxes(cls, boxes: Sequence[Optional[Box]], scores: Optional[Sequence[float]] = None) -> "Trajectory":
        corners = np.full((len(boxes), 4), np.nan)
        for i, b in enumerate(boxes):
            if b is not None:
                corners[i] = b.to_corners()
        return cls(corners, None if scores is None else np.asarray(scores, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.corners)

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.corners).any(axis=1)

    def boxes(self) -> List[Optional[Box]]:
        return [Box.from_corners(*row) if ok else None for row, ok in zip(self.corners, self.present)]

    def translated(self, dx: float, dy: float) -> "Trajectory":
        return Trajectory(self.corners + np.array([dx, dy, dx, dy]), self.scores)


def _parse_line(line: str, line_no: int, with_score: bool) -> tuple[List[float], Optional[float]]:
    fields = [f.strip() for f in line.split(",")]
    expected = 5 if with_score else 4
    if len(fields) != expected:
        raise BoxFormatError(line_no, f"{len(fields)} Felder statt {expected}")
    try:
        values = [float(f) for f in fields]
    except ValueError:
        raise BoxFormatError(line_no, f"keine Zahl in {line.strip()!r}") from None
    score = values[4] if with_score else None
    if score is not None and not math.isfinite(score):
        raise BoxFormatError(line_no, f"Score nicht endlich: {fields[4]}")
    coords = values[:4]
    if all(math.isnan(v) for v in coords):
        return [math.nan] * 4, score
    if any(not math.isfinite(v) for v in coords):
        raise BoxFormatError(line_no, f"teilweise ungültige Koordinaten: {line.strip()!r}")
    x1, y1, x2, y2 = coords
    if x2 <= x1 or y2 <= y1:
        raise BoxFormatError(line_no, f"leere Box ({x1}, {y1}, {x2}, {y2})")
    return coords, score


def parse_boxes(lines: Iterable[str], *, with_score: bool = False) -> Trajectory:
    rows: List[List[float]] = []
    scores: List[float] = []
    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            raise BoxFormatError(line_no, "leere Zeile")
        coords, score = _parse_line(raw, line_no, with_score)
        rows.append(coords)
        if score is not None:
            scores.append(score)
    corners = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return Trajectory(corners, np.array(scores, dtype=np.float64) if with_score else None)


def read_boxes(path: Union[str, Path], *, with_score: bool = False) -> Trajectory:
    text = Path(path).read_text(encoding="utf-8")
    return parse_boxes(text.splitlines(), with_score=with_score)


def read_trajectory(path: Union[str, Path]) -> Trajectory:
    return read_boxes(path, with_score=True)


def read_groundtruth(path: Union[str, Path]) -> Trajectory:
    return read_boxes(path, with_score=False)


def format_line(corners: Sequence[float], score: Optional[float] = None) -> str:
    if any(math.isnan(v) for v in corners):
        parts = ["nan"] * 4
    else:
        parts = [f"{v:.3f}" for v in corners]
    if score is not None:
        parts.append(f"{score:.6f}")
    return ",".join(parts)


def write_boxes(path: Union[str, Path], traj: Trajectory) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        format_line(row, None if traj.scores is None else float(traj.scores[i]))
        for i, row in enumerate(traj.corners)
    ]
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p
