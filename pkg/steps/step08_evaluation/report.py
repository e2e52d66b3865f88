# steps/step08_evaluation/report.py
"""
Bewertung einer oder mehrerer Sequenzen je Protokoll und Ausgabe als
JSON-Bericht plus CSV-Kurven (threshold, value) für externe Plots.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Sequence, Tuple

import numpy as np
import orjson
import pandas as pd

from .boxfiles import Trajectory
from .metrics import (
    EvalConfig,
    MetricReport,
    OverlapRun,
    center_distances,
    eao_lite,
    eao_runs_from_trace,
    f_score_longterm,
    overlaps,
    precision_curve,
    success_curve,
    success_precision,
    vot_accuracy_robustness,
)

log = logging.getLogger(__name__)

Protocol = Literal["vot", "otb", "ltb"]
PROTOCOLS: Tuple[str, ...] = ("vot", "otb", "ltb")
CSV_FLOAT_FORMAT = "%.10g"


@dataclass
class ScoreResult:
    report: MetricReport
    curves: Dict[str, pd.DataFrame] = field(default_factory=dict)
    per_sequence: pd.DataFrame = field(default_factory=pd.DataFrame)
    runs: List[OverlapRun] = field(default_factory=list)


def _check_protocol(protocol: str) -> None:
    if protocol not in PROTOCOLS:
        raise ValueError(f"Unbekanntes Protokoll {protocol!r}, erlaubt: {', '.join(PROTOCOLS)}")


def score_sequence(protocol: Protocol, traj: Trajectory, gt: Trajectory, cfg: EvalConfig = EvalConfig()) -> ScoreResult:
    _check_protocol(protocol)
    n = len(gt)
    if protocol == "vot":
        res = vot_accuracy_robustness(traj, gt, cfg)
        runs = eao_runs_from_trace(res)
        report = MetricReport(
            protocol="vot", frames=n, accuracy=res.accuracy, robustness=float(res.failures),
            failures=res.failures, eao_lite=eao_lite(runs, cfg.eao_interval),
        )
        return ScoreResult(report, runs=runs)
    if protocol == "otb":
        auc, prec = success_precision(traj, gt, cfg)
        keep = gt.present
        curves = {
            "success": success_curve(overlaps(traj, gt)[keep]),
            "precision": precision_curve(center_distances(traj, gt)[keep], cfg.precision_curve_px),
        }
        return ScoreResult(MetricReport(protocol="otb", frames=n, success_auc=auc, precision_at_20=prec), curves)
    max_f, thr, curve = f_score_longterm(traj, gt, cfg)
    return ScoreResult(MetricReport(protocol="ltb", frames=n, max_f_score=max_f, best_threshold=thr), {"pr": curve})


def _concat(items: Sequence[Trajectory]) -> Trajectory:
    scores = None
    if all(t.scores is not None for t in items):
        scores = np.concatenate([t.scores for t in items])  # type: ignore[misc]
    return Trajectory(np.concatenate([t.corners for t in items]), scores)


def score_many(
    protocol: Protocol,
    pairs: Sequence[Tuple[Trajectory, Trajectory]],
    cfg: EvalConfig = EvalConfig(),
    *,
    max_workers: int = 1,
) -> ScoreResult:
    """
    Sequenzen unabhängig (parallel) bewerten und zusammenfassen.
    vot: Mittel von Accuracy/Fehlern, EAO über alle Segmente;
    otb/ltb: Kurven über die aneinandergehängten Frames aller Sequenzen.
    """
    _check_protocol(protocol)
    if not pairs:
        raise ValueError("score_many: keine Sequenzen")
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        singles = list(pool.map(lambda p: score_sequence(protocol, p[0], p[1], cfg), pairs))
    per_seq = pd.DataFrame.from_records(
        [{"sequence": i, **s.report.model_dump(exclude_none=True)} for i, s in enumerate(singles)]
    )
    frames = sum(len(gt) for _, gt in pairs)
    if protocol == "vot":
        runs = [r for s in singles for r in s.runs]
        report = MetricReport(
            protocol="vot", sequences=len(pairs), frames=frames,
            accuracy=float(per_seq["accuracy"].mean()),
            robustness=float(per_seq["failures"].mean()),
            failures=int(per_seq["failures"].sum()),
            eao_lite=eao_lite(runs, cfg.eao_interval),
        )
        return ScoreResult(report, per_sequence=per_seq, runs=runs)
    pooled = score_sequence(protocol, _concat([t for t, _ in pairs]), _concat([g for _, g in pairs]), cfg)
    report = pooled.report.model_copy(update={"sequences": len(pairs), "frames": frames})
    return ScoreResult(report, pooled.curves, per_seq)


def write_report(result: ScoreResult, out_dir: Path) -> List[Path]:
    """report.json (sortierte Schlüssel) und je Kurve <name>.csv; byte-stabil."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    path = out_dir / "report.json"
    payload = result.report.model_dump()
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2) + b"\n")
    written.append(path)
    for name, curve in sorted(result.curves.items()):
        csv = out_dir / f"{name}.csv"
        curve.to_csv(csv, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        written.append(csv)
    if not result.per_sequence.empty:
        csv = out_dir / "per_sequence.csv"
        result.per_sequence.to_csv(csv, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        written.append(csv)
    log.info("Bericht geschrieben: %s", ", ".join(p.name for p in written))
    return written


def report_table(result: ScoreResult) -> str:
    """Konsolentabelle der gesetzten Kennzahlen."""
    data = {k: v for k, v in result.report.model_dump().items() if v is not None}
    return pd.Series(data, name="Wert").to_string()
