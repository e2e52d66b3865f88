# steps/step01_numerics/check.py
from __future__ import annotations

import sys
import tempfile
from pathlib import Path

import numpy as np

try:
    from . import ops
    from .container import read_tensor, write_tensor
    from .gradcheck import grad_check
    from .tensor import Tensor
except ImportError:
    from steps.step01_numerics import ops
    from steps.step01_numerics.container import read_tensor, write_tensor
    from steps.step01_numerics.gradcheck import grad_check
    from steps.step01_numerics.tensor import Tensor


def main() -> None:
    # 1) conv2d Beispiel: 3x3 Rampe * 2x2 Einsen
    x = Tensor(np.arange(1, 10, dtype=float).reshape(1, 3, 3))
    k = Tensor(np.ones((1, 1, 2, 2)))
    out = ops.conv2d(x, k).numpy()[0]
    if not np.array_equal(out, [[12.0, 16.0], [24.0, 28.0]]):
        print(f"❌ conv2d liefert {out.tolist()}")
        sys.exit(1)

    # 2) Gradienten-Stichprobe
    rng = np.random.default_rng(0)
    res = grad_check(
        lambda a, b: ops.sum_(ops.conv2d(a, b, padding=1)),
        [rng.normal(size=(2, 5, 5)), rng.normal(size=(3, 2, 3, 3))],
    )
    if not res.passed():
        print(f"❌ conv2d grad_check: {res.max_rel_error:.2e}")
        sys.exit(1)

    # 3) Container-Roundtrip
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "t.smt"
        arr = rng.normal(size=(2, 3, 4))
        write_tensor(p, arr)
        assert np.array_equal(read_tensor(p), arr)

    print("✅ step01: Tensor, GradTape, Ops und Container OK")


if __name__ == "__main__":
    main()
