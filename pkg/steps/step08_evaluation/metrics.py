# steps/step08_evaluation/metrics.py
"""
Bewertungsprotokolle.

vot   Accuracy (mittlere IoU erfolgreicher Frames), Robustness (Fehlerzahl,
      Fehler = IoU 0, Neuinitialisierung reinit_gap Frames später,
      burn_in Frames nach jeder Neuinitialisierung ohne Accuracy-Beitrag),
      eao_lite als Näherung des EAO-Maßes
otb   Success-AUC über 101 Schwellen (strikt >), Precision bei 20 px
ltb   maximaler F-Wert über die beobachteten Konfidenzen, korrekt bei IoU > 0.5
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .boxfiles import Trajectory

log = logging.getLogger(__name__)

SUCCESS_THRESHOLDS = np.arange(101) / 100.0


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    reinit_gap: int = Field(5, ge=1)
    burn_in: int = Field(10, ge=0)
    eao_interval: Tuple[int, int] = (1, 50)
    precision_px: float = Field(20.0, gt=0.0)
    precision_curve_px: int = Field(50, ge=1)
    longterm_iou: float = Field(0.5, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_interval(self) -> "EvalConfig":
        lo, hi = self.eao_interval
        if not 1 <= lo <= hi:
            raise ValueError(f"eao_interval {self.eao_interval} ungültig")
        return self


class MetricReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    protocol: str
    sequences: int = 1
    frames: int = 0
    accuracy: Optional[float] = None
    robustness: Optional[float] = None
    failures: Optional[int] = None
    eao_lite: Optional[float] = None
    success_auc: Optional[float] = None
    precision_at_20: Optional[float] = None
    max_f_score: Optional[float] = None
    best_threshold: Optional[float] = None


class FrameStatus(IntEnum):
    SKIPPED = 0
    INIT = 1
    TRACKED = 2
    FAILED = 3


@dataclass(frozen=True)
class VotResult:
    accuracy: float
    failures: int
    reset_trace: np.ndarray  # [n] FrameStatus
    overlaps: np.ndarray     # [n]


@dataclass(frozen=True)
class OverlapRun:
    """Überlappungen eines Segments ab seiner Initialisierung; failed = endet mit einem Fehler."""

    overlaps: np.ndarray
    failed: bool


# ---------------------------------------------------------------------
# Geometrie
# ---------------------------------------------------------------------
def _check_lengths(traj: Trajectory, gt: Trajectory) -> None:
    if len(traj) != len(gt):
        raise ValueError(f"Längen verschieden: Trajektorie {len(traj)}, Ground Truth {len(gt)}")


def overlaps(traj: Trajectory, gt: Trajectory) -> np.ndarray:
    """IoU je Frame auf den Ecken; abwesende Boxen ergeben 0."""
    _check_lengths(traj, gt)
    a, b = traj.corners, gt.corners
    iw = np.clip(np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0.0, None)
    ih = np.clip(np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0.0, None)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    with np.errstate(invalid="ignore"):
        out = inter / (area_a + area_b - inter)
    return np.where(traj.present & gt.present, out, 0.0)


def center_distances(traj: Trajectory, gt: Trajectory) -> np.ndarray:
    """Euklidischer Mittelpunktabstand; abwesende Trajektorie -> inf."""
    _check_lengths(traj, gt)
    ca = (traj.corners[:, :2] + traj.corners[:, 2:]) / 2.0
    cb = (gt.corners[:, :2] + gt.corners[:, 2:]) / 2.0
    d = np.sqrt(np.sum((ca - cb) ** 2, axis=1))
    return np.where(traj.present & gt.present, d, np.inf)


# ---------------------------------------------------------------------
# VOT
# ---------------------------------------------------------------------
def vot_accuracy_robustness(traj: Trajectory, gt: Trajectory, cfg: EvalConfig = EvalConfig()) -> VotResult:
    ious = overlaps(traj, gt)
    n = len(ious)
    trace = np.full(n, FrameStatus.SKIPPED, dtype=np.int8)
    counted = np.zeros(n, dtype=bool)
    failures = 0
    t = 0
    initial = True
    while t < n:
        trace[t] = FrameStatus.INIT
        burn_until = t if initial else t + cfg.burn_in
        initial = False
        t += 1
        while t < n:
            if ious[t] <= 0.0:
                trace[t] = FrameStatus.FAILED
                failures += 1
                t += cfg.reinit_gap
                break
            trace[t] = FrameStatus.TRACKED
            counted[t] = t >= burn_until
            t += 1
    accuracy = float(ious[counted].mean()) if counted.any() else 0.0
    return VotResult(accuracy, failures, trace, ious)


def eao_runs_from_trace(result: VotResult) -> List[OverlapRun]:
    """Zerlegt den Reset-Verlauf in Segmente: INIT bis zum Fehler (einschließlich) oder Sequenzende."""
    runs: List[OverlapRun] = []
    start: Optional[int] = None
    for t, status in enumerate(result.reset_trace):
        if status == FrameStatus.INIT:
            if start is not None:
                runs.append(OverlapRun(result.overlaps[start:t].copy(), False))
            start = t
        elif status == FrameStatus.FAILED and start is not None:
            runs.append(OverlapRun(result.overlaps[start:t + 1].copy(), True))
            start = None
    if start is not None:
        runs.append(OverlapRun(result.overlaps[start:].copy(), False))
    return runs


def eao_lite(runs: Sequence[OverlapRun], interval: Tuple[int, int] = (1, 50)) -> float:
    """
    Näherung des EAO: für jede Länge N im Intervall der Mittelwert über die
    Segmente der mittleren Überlappung der ersten N Frames; nach einem Fehler
    zählt 0. Segmente, die ohne Fehler vor N enden, fallen für dieses N weg.
    """
    if not runs:
        raise ValueError("eao_lite: keine Segmente")
    lo, hi = interval
    per_length = []
    for n in range(lo, hi + 1):
        values = []
        for run in runs:
            if len(run.overlaps) >= n:
                values.append(float(run.overlaps[:n].mean()))
            elif run.failed:
                values.append(float(run.overlaps.sum()) / n)
        if values:
            per_length.append(float(np.mean(values)))
    if not per_length:
        log.warning("eao_lite: kein Segment deckt das Intervall %s ab", interval)
        return 0.0
    return float(np.mean(per_length))


# ---------------------------------------------------------------------
# OTB
# ---------------------------------------------------------------------
def success_curve(ious: np.ndarray) -> pd.DataFrame:
    values = [float(np.mean(ious > t)) if len(ious) else 0.0 for t in SUCCESS_THRESHOLDS]
    return pd.DataFrame({"threshold": SUCCESS_THRESHOLDS, "value": values})


def precision_curve(dists: np.ndarray, max_px: int = 50) -> pd.DataFrame:
    thresholds = np.arange(max_px + 1, dtype=np.float64)
    values = [float(np.mean(dists <= t)) if len(dists) else 0.0 for t in thresholds]
    return pd.DataFrame({"threshold": thresholds, "value": values})


def success_precision(traj: Trajectory, gt: Trajectory, cfg: EvalConfig = EvalConfig()) -> Tuple[float, float]:
    """Frames ohne Ground Truth werden nicht bewertet."""
    keep = gt.present
    ious = overlaps(traj, gt)[keep]
    dists = center_distances(traj, gt)[keep]
    auc = float(success_curve(ious)["value"].mean())
    precision = float(np.mean(dists <= cfg.precision_px)) if len(dists) else 0.0
    return auc, precision


# ---------------------------------------------------------------------
# Langzeit
# ---------------------------------------------------------------------
def f_score_longterm(
    traj: Trajectory, gt: Trajectory, cfg: EvalConfig = EvalConfig()
) -> Tuple[float, Optional[float], pd.DataFrame]:
    """-> (max F, zugehörige Schwelle, PR-Kurve [threshold, precision, recall, f])."""
    if traj.scores is None:
        raise ValueError("f_score_longterm: Trajektorie ohne Konfidenzen")
    ious = overlaps(traj, gt)
    reported_any = traj.present
    correct = (ious > cfg.longterm_iou) & gt.present
    n_present = int(gt.present.sum())
    rows = []
    for thr in np.unique(traj.scores[reported_any]):
        reported = reported_any & (traj.scores >= thr)
        n_rep = int(reported.sum())
        hits = int((correct & reported).sum())
        p = hits / n_rep if n_rep else 0.0
        r = hits / n_present if n_present else 0.0
        f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        rows.append({"threshold": float(thr), "precision": p, "recall": r, "f": f})
    curve = pd.DataFrame.from_records(rows, columns=["threshold", "precision", "recall", "f"])
    if curve.empty:
        return 0.0, None, curve
    best = int(curve["f"].to_numpy().argmax())
    return float(curve["f"].iloc[best]), float(curve["threshold"].iloc[best]), curve
