from .boxfiles import BoxFormatError, Trajectory, read_groundtruth, read_trajectory, write_boxes
from .metrics import (
    EvalConfig, MetricReport, OverlapRun, eao_lite, eao_runs_from_trace, f_score_longterm,
    success_precision, vot_accuracy_robustness,
)
from .report import PROTOCOLS, ScoreResult, score_many, score_sequence, write_report

__all__ = [
    "BoxFormatError", "Trajectory", "read_groundtruth", "read_trajectory", "write_boxes",
    "EvalConfig", "MetricReport", "OverlapRun", "eao_lite", "eao_runs_from_trace", "f_score_longterm",
    "success_precision", "vot_accuracy_robustness",
    "PROTOCOLS", "ScoreResult", "score_many", "score_sequence", "write_report",
]
