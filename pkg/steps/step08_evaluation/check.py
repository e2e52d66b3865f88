from __future__ import annotations

import sys

import numpy as np

from steps.step08_evaluation.boxfiles import Trajectory
from steps.step08_evaluation.report import score_sequence


def main() -> None:
    corners = np.array([[10.0 + t, 20.0, 50.0 + t, 60.0] for t in range(30)])
    gt = Trajectory(corners)
    traj = Trajectory(corners, np.ones(len(corners)))

    vot = score_sequence("vot", traj, gt).report
    otb = score_sequence("otb", traj, gt).report
    ltb = score_sequence("ltb", traj, gt).report
    print(f"[INFO] vot A={vot.accuracy} R={vot.robustness} EAO={vot.eao_lite}")
    print(f"[INFO] otb AUC={otb.success_auc} P@20={otb.precision_at_20}; ltb F={ltb.max_f_score}")

    if vot.accuracy != 1.0 or vot.failures != 0:
        print("❌ VOT perfekte Trajektorie")
        sys.exit(1)
    if otb.success_auc != 100 / 101 or otb.precision_at_20 != 1.0:
        print("❌ OTB perfekte Trajektorie")
        sys.exit(1)
    if ltb.max_f_score != 1.0:
        print("❌ LTB perfekte Trajektorie")
        sys.exit(1)
    print("✅ step08: Bewertungsprotokolle OK")


if __name__ == "__main__":
    main()
