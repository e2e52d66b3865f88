from __future__ import annotations

import numpy as np
import orjson
import pytest

from steps.step08_evaluation.boxfiles import (
    BoxFormatError,
    Trajectory,
    format_line,
    parse_boxes,
    read_groundtruth,
    read_trajectory,
    write_boxes,
)
from steps.step08_evaluation.metrics import (
    EvalConfig,
    FrameStatus,
    OverlapRun,
    center_distances,
    eao_lite,
    eao_runs_from_trace,
    f_score_longterm,
    overlaps,
    success_curve,
    success_precision,
    vot_accuracy_robustness,
)
from steps.step08_evaluation.report import score_many, score_sequence, write_report

NAN4 = [np.nan] * 4


def _traj(rows, scores=None) -> Trajectory:
    return Trajectory(np.array(rows, dtype=np.float64), None if scores is None else np.array(scores, dtype=np.float64))


def _constant_gt(n: int) -> Trajectory:
    return _traj([[0.0, 0.0, 10.0, 10.0]] * n)


# ----------------- Dateiformat -----------------
def test_parse_ground_truth_and_absent_rows():
    traj = parse_boxes(["1,2,11,12", "nan,nan,nan,nan"])
    assert traj.present.tolist() == [True, False]
    assert traj.scores is None
    assert traj.corners[0].tolist() == [1.0, 2.0, 11.0, 12.0]


@pytest.mark.parametrize(
    "line",
    ["1,2,3", "a,b,c,d", "nan,1,2,3", "", "5,5,5,9", "1,2,3,4,5"],
)
def test_malformed_lines_report_line_number(line):
    with pytest.raises(BoxFormatError) as err:
        parse_boxes(["0,0,1,1", line])
    assert err.value.line_no == 2
    assert str(err.value).startswith("Zeile 2:")


def test_trajectory_requires_finite_score():
    with pytest.raises(BoxFormatError):
        parse_boxes(["0,0,1,1,inf"], with_score=True)


def test_format_line():
    assert format_line([1.0, 2.5, 3.25, 4.0], 0.5) == "1.000,2.500,3.250,4.000,0.500000"
    assert format_line(NAN4, 0.25) == "nan,nan,nan,nan,0.250000"
    assert format_line([0.0, 0.0, 1.0, 1.0]) == "0.000,0.000,1.000,1.000"


def test_write_and_read_trajectory(tmp_path):
    traj = _traj([[0.0, 0.0, 10.0, 10.0], NAN4], [1.0, 0.125])
    path = write_boxes(tmp_path / "out" / "t.txt", traj)
    assert path.read_text() == "0.000,0.000,10.000,10.000,1.000000\nnan,nan,nan,nan,0.125000\n"
    back = read_trajectory(path)
    assert back.present.tolist() == [True, False]
    assert back.scores.tolist() == [1.0, 0.125]


def test_read_groundtruth_rejects_score_column(tmp_path):
    path = tmp_path / "gt.txt"
    path.write_text("0,0,1,1,0.5\n")
    with pytest.raises(BoxFormatError):
        read_groundtruth(path)


# ----------------- Geometrie -----------------
def test_overlaps_exact_values():
    gt = _traj([[0, 0, 10, 10], [0, 0, 10, 10], [0, 0, 10, 10], NAN4])
    tr = _traj([[0, 0, 10, 10], [0, 0, 10, 5], NAN4, [0, 0, 10, 10]])
    assert overlaps(tr, gt).tolist() == [1.0, 0.5, 0.0, 0.0]
    d = center_distances(tr, gt)
    assert d[0] == 0.0 and d[1] == 2.5 and np.isinf(d[2])


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        overlaps(_constant_gt(2), _constant_gt(3))


# ----------------- VOT -----------------
def test_vot_trace_hand_case():
    gt = _constant_gt(10)
    rows = [[0, 0, 10, 10]] * 10
    rows[2] = [0, 0, 10, 5]
    rows[3] = [50, 50, 60, 60]
    res = vot_accuracy_robustness(_traj(rows), gt, EvalConfig())
    S, I, T, F = FrameStatus.SKIPPED, FrameStatus.INIT, FrameStatus.TRACKED, FrameStatus.FAILED
    assert res.reset_trace.tolist() == [I, T, T, F, S, S, S, S, I, T]
    assert res.failures == 1
    # Frame 9 liegt in der Einschwingphase nach der Neuinitialisierung
    assert res.accuracy == pytest.approx(0.75)

    runs = eao_runs_from_trace(res)
    assert [r.failed for r in runs] == [True, False]
    assert runs[0].overlaps.tolist() == [1.0, 1.0, 0.5, 0.0]
    assert runs[1].overlaps.tolist() == [1.0, 1.0]


def test_vot_without_counted_frames_has_zero_accuracy():
    res = vot_accuracy_robustness(_traj([[0, 0, 10, 10]]), _constant_gt(1))
    assert res.accuracy == 0.0
    assert res.failures == 0


def test_vot_absent_prediction_is_a_failure():
    res = vot_accuracy_robustness(_traj([[0, 0, 10, 10], NAN4, [0, 0, 10, 10]]), _constant_gt(3))
    assert res.failures == 1


def test_eao_lite_hand_cases():
    runs = [OverlapRun(np.array([1.0, 0.0]), True), OverlapRun(np.array([1.0]), False)]
    assert eao_lite(runs, (2, 2)) == pytest.approx(0.5)
    assert eao_lite(runs, (1, 2)) == pytest.approx((1.0 + 0.5) / 2.0)
    # gescheiterte Segmente zählen über ihr Ende hinaus mit 0
    assert eao_lite([OverlapRun(np.array([1.0]), True)], (1, 4)) == pytest.approx((1 + 1 / 2 + 1 / 3 + 1 / 4) / 4)


def test_eao_lite_requires_runs():
    with pytest.raises(ValueError):
        eao_lite([])


# ----------------- OTB -----------------
def test_otb_perfect_trajectory():
    gt = _constant_gt(5)
    auc, precision = success_precision(gt, gt)
    assert auc == pytest.approx(100.0 / 101.0)
    assert precision == 1.0


def test_otb_ignores_frames_without_ground_truth():
    gt = _traj([[0, 0, 10, 10], NAN4])
    tr = _traj([[0, 0, 10, 10], [50, 50, 60, 60]])
    assert success_precision(tr, gt) == pytest.approx((100.0 / 101.0, 1.0))


def test_success_curve_uses_strict_threshold():
    gt = _constant_gt(1)
    tr = _traj([[0, 0, 10, 5]])
    curve = score_sequence("otb", tr, gt).curves["success"]
    assert len(curve) == 101
    assert curve.loc[curve["threshold"] == 0.5, "value"].item() == 0.0
    assert curve.loc[curve["threshold"] == 0.49, "value"].item() == 1.0


def _integer_pair(rng, n: int = 40):
    """Ganzzahlige Ecken: Verschiebungen bleiben in Gleitkomma exakt."""
    xy = rng.integers(0, 200, size=(n, 2))
    gt = np.hstack([xy, xy + rng.integers(10, 60, size=(n, 2))]).astype(np.float64)
    tr = gt + rng.integers(-15, 16, size=(n, 4))
    tr[:, 2:] = np.maximum(tr[:, 2:], tr[:, :2] + 1)
    tr[rng.uniform(size=n) < 0.1] = np.nan
    return _traj(tr, rng.uniform(size=n)), _traj(gt)


@pytest.mark.parametrize("shift", [(7.0, -3.0), (-120.0, 45.0), (1000.0, 1000.0)])
def test_metrics_are_invariant_to_joint_translation(rng, shift):
    tr, gt = _integer_pair(rng)
    moved_tr, moved_gt = tr.translated(*shift), gt.translated(*shift)
    np.testing.assert_allclose(overlaps(moved_tr, moved_gt), overlaps(tr, gt), atol=1e-12)
    assert success_precision(moved_tr, moved_gt) == pytest.approx(success_precision(tr, gt))
    base, moved = vot_accuracy_robustness(tr, gt), vot_accuracy_robustness(moved_tr, moved_gt)
    assert moved.failures == base.failures
    assert moved.accuracy == pytest.approx(base.accuracy)
    np.testing.assert_array_equal(moved.reset_trace, base.reset_trace)
    assert f_score_longterm(moved_tr, moved_gt)[:2] == pytest.approx(f_score_longterm(tr, gt)[:2])


def test_success_curve_is_monotone(rng):
    ious = rng.uniform(size=200)
    curve = success_curve(ious)["value"].to_numpy()
    assert np.all(np.diff(curve) <= 0.0)
    better = np.minimum(ious + rng.uniform(0.0, 0.3, size=200), 1.0)
    assert success_curve(better)["value"].mean() >= success_curve(ious)["value"].mean()
    assert np.all(success_curve(better)["value"].to_numpy() >= curve)


# ----------------- Langzeit -----------------
def test_longterm_f_score_hand_case():
    gt = _traj([[0, 0, 10, 10]] * 3 + [NAN4])
    tr = _traj([[0, 0, 10, 10], [0, 0, 10, 10], [50, 50, 60, 60], NAN4], [0.5] * 4)
    max_f, thr, curve = f_score_longterm(tr, gt)
    assert max_f == pytest.approx(2.0 / 3.0)
    assert thr == 0.5
    row = curve.iloc[0]
    assert (row["precision"], row["recall"]) == pytest.approx((2.0 / 3.0, 2.0 / 3.0))


def test_longterm_thresholds_are_observed_confidences():
    gt = _constant_gt(3)
    tr = _traj([[0, 0, 10, 10], [0, 0, 10, 10], [50, 50, 60, 60]], [0.9, 0.8, 0.3])
    max_f, thr, curve = f_score_longterm(tr, gt)
    assert curve["threshold"].tolist() == [0.3, 0.8, 0.9]
    assert max_f == pytest.approx(0.8)
    assert thr == 0.8


def test_longterm_requires_scores():
    with pytest.raises(ValueError):
        f_score_longterm(_constant_gt(2), _constant_gt(2))


# ----------------- Berichte -----------------
def _scored(n: int) -> Trajectory:
    return _traj([[0, 0, 10, 10]] * n, [1.0] * n)


@pytest.mark.parametrize("protocol", ["vot", "otb", "ltb"])
def test_perfect_trajectory_reports(protocol):
    report = score_sequence(protocol, _scored(12), _constant_gt(12)).report
    if protocol == "vot":
        assert (report.accuracy, report.failures) == (1.0, 0)
    elif protocol == "otb":
        assert report.success_auc == pytest.approx(100.0 / 101.0)
        assert report.precision_at_20 == 1.0
    else:
        assert report.max_f_score == 1.0


def test_unknown_protocol():
    with pytest.raises(ValueError):
        score_sequence("got", _scored(2), _constant_gt(2))


def test_score_many_vot_pools_sequences():
    bad = _traj([[0, 0, 10, 10], [50, 50, 60, 60]] + [[0, 0, 10, 10]] * 6, [1.0] * 8)
    result = score_many("vot", [(_scored(8), _constant_gt(8)), (bad, _constant_gt(8))], max_workers=2)
    assert result.report.sequences == 2
    assert result.report.frames == 16
    assert result.report.failures == 1
    assert result.report.robustness == pytest.approx(0.5)
    assert len(result.per_sequence) == 2
    assert len(result.runs) == 3


def test_score_many_otb_concatenates_frames():
    result = score_many("otb", [(_scored(3), _constant_gt(3)), (_scored(2), _constant_gt(2))])
    assert result.report.frames == 5
    assert result.report.success_auc == pytest.approx(100.0 / 101.0)


def test_write_report_is_byte_stable(tmp_path):
    result = score_many("ltb", [(_scored(4), _constant_gt(4))])
    first = {p.name: p.read_bytes() for p in write_report(result, tmp_path / "a")}
    second = {p.name: p.read_bytes() for p in write_report(result, tmp_path / "b")}
    assert first == second
    assert set(first) == {"report.json", "pr.csv", "per_sequence.csv"}
    payload = orjson.loads(first["report.json"])
    assert payload["protocol"] == "ltb"
    assert payload["max_f_score"] == 1.0
    assert first["pr.csv"].decode().splitlines()[0] == "threshold,precision,recall,f"
