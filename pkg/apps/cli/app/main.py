#apps/cli/app/main.py
"""
Kommandozeile: gradcheck | train | track | score | synth

Exit-Codes: 0 Erfolg, 1 Verifikation fehlgeschlagen, 2 Aufruf-/Konfigurationsfehler.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import orjson
import yaml
from pydantic import ValidationError

from steps.step01_numerics.container import ContainerFormatError, load_checkpoint
from steps.step03_heads.model import init_model_params
from steps.step04_anchors.boxes import Box
from steps.step06_training.synthetic import constant_velocity_sequence
from steps.step06_training.trainer import prepare_out_dir, train_stages
from steps.step07_inference.tracker import track_sequence
from steps.step08_evaluation.boxfiles import BoxFormatError, Trajectory, read_groundtruth, read_trajectory, write_boxes
from steps.step08_evaluation.report import PROTOCOLS, report_table, score_many, write_report

from .core.config import get_settings
from .gradcheck_suite import run_suite
from .lib.sequence_io import GROUNDTRUTH, SequenceError, read_frames, write_sequence
from .schemas.run_config import RunConfig, dump_run_config, load_run_config, run_config_dict

log = logging.getLogger("siamman")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2

USAGE_ERRORS = (
    ValidationError, yaml.YAMLError, BoxFormatError, SequenceError, ContainerFormatError,
    ValueError, KeyError, OSError,
)


# ----------------- Hilfen -----------------
def _run_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _data_path(path: str) -> Path:
    """Relative Pfade, die es im Arbeitsverzeichnis nicht gibt, unter SIAMMAN_DATA_ROOT suchen."""
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    candidate = get_settings().DATA_ROOT / p
    return candidate if candidate.exists() else p


def _parse_corners(text: str) -> Box:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ValueError(f"--init-box erwartet x1,y1,x2,y2, nicht {text!r}")
    return Box.from_corners(*parts)


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2) + b"\n")
    return path


# ----------------- Kommandos -----------------
def cmd_gradcheck(args: argparse.Namespace) -> int:
    table = run_suite(args.filter, seeds=args.seeds, tol=args.tol)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.3e}"))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(out, index=False, lineterminator="\n")
    failed = table.loc[~table["passed"], "op"].tolist()
    if failed:
        print(f"[FEHLER] Gradientenprüfung fehlgeschlagen: {', '.join(failed)}")
        return EXIT_VERIFY
    print(f"✅ gradcheck: {len(table)} Ops, max. relativer Fehler {table['max_rel_error'].max():.3e}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    out_dir = prepare_out_dir(Path(args.out) if args.out else cfg.out_dir)
    (out_dir / "run_config.yml").write_text(dump_run_config(cfg), encoding="utf-8")
    log.info("Training: seed=%d, Ausgabe %s", cfg.seed, out_dir)
    result = train_stages(cfg.model, cfg.anchors, cfg.losses, cfg.train, seed=cfg.seed, out_dir=out_dir)
    print(result.summary().to_string(index=False))
    print(f"✅ train: {len(result.checkpoints)} Checkpoints in {out_dir}")
    return EXIT_OK


def cmd_track(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    seq_dir = _data_path(args.sequence)
    gt_file = seq_dir / GROUNDTRUTH
    gt = read_groundtruth(gt_file) if gt_file.is_file() else None
    frames = read_frames(seq_dir, len(gt) if gt is not None else None)
    if args.init_box:
        init_box = _parse_corners(args.init_box)
    elif gt is not None and gt.present[0]:
        init_box = Box.from_corners(*gt.corners[0])
    else:
        raise ValueError("Keine Startbox: --init-box angeben oder groundtruth.txt bereitstellen")

    params = init_model_params(cfg.model, seed=cfg.seed)
    params.load_state(load_checkpoint(args.checkpoint))
    states = track_sequence(frames, init_box, params, cfg.model, cfg.anchors, cfg.fusion)

    out = Path(args.out) if args.out else cfg.out_dir / "trajectory.txt"
    traj = Trajectory.from_boxes([s.box for s in states], [s.score for s in states])
    write_boxes(out, traj)
    _write_json(out.with_suffix(".json"), {
        "checkpoint": Path(args.checkpoint).name,
        "config": run_config_dict(cfg),
        "frames": len(states),
        "init_box": list(init_box.to_corners()),
        "seed": cfg.seed,
        "sequence": seq_dir.name,
    })
    print(f"✅ track: {len(states)} Frames -> {out}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    if len(args.traj) != len(args.gt):
        raise ValueError(f"{len(args.traj)} Trajektorien, aber {len(args.gt)} Ground-Truth-Dateien")
    pairs = [(read_trajectory(t), read_groundtruth(_data_path(g))) for t, g in zip(args.traj, args.gt)]
    result = score_many(args.protocol, pairs, cfg.eval, max_workers=get_settings().THREADS)
    print(report_table(result))
    if args.out:
        write_report(result, Path(args.out))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    frames, boxes = constant_velocity_sequence(
        args.frames, seed=args.seed, frame_size=args.frame_size, fast_motion=args.fast_motion
    )
    write_sequence(Path(args.out), frames, Trajectory.from_boxes(boxes))
    print(f"✅ synth: {len(frames)} Frames -> {args.out}")
    return EXIT_OK


# ----------------- Parser -----------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML-Laufkonfiguration")
    common.add_argument("--seed", type=int, default=None, help="überschreibt RunConfig.seed")

    parser = argparse.ArgumentParser(prog="siamman", description="Desk-Maßstab siamesischer Tracker")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", parents=[common], help="Finite-Differenzen-Suite")
    p.add_argument("--filter", default="*", help="Glob-Muster über Op-Namen")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", default=None, help="CSV-Bericht")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", parents=[common], help="dreistufiges Training")
    p.add_argument("--out", default=None, help="Ausgabeverzeichnis (sonst RunConfig.out_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", parents=[common], help="Sequenz verfolgen")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequence", required=True, help="Verzeichnis mit PPM-Frames")
    p.add_argument("--init-box", default=None, help="x1,y1,x2,y2 (sonst erste Zeile der Ground Truth)")
    p.add_argument("--out", default=None, help="Trajektoriendatei")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("score", parents=[common], help="Trajektorien bewerten")
    p.add_argument("--protocol", choices=PROTOCOLS, required=True)
    p.add_argument("--traj", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--out", default=None, help="Verzeichnis für report.json und CSV-Kurven")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="synthetische Sequenz schreiben")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--frame-size", type=int, default=320)
    p.add_argument("--fast-motion", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    try:
        return args.func(args)
    except USAGE_ERRORS as e:
        print(f"[FEHLER] {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
