# steps/step01_numerics/gradcheck.py
"""Vergleich analytischer Gradienten (GradTape) mit zentralen Differenzen."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from .tensor import GradTape, ShapeError, Tensor, precision

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    per_input: List[float]
    evaluations: int

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_rel_error < tol


def _rel_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def grad_check(
    closure: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> GradCheckResult:
    """
    closure: bildet Tensor-Eingaben auf einen skalaren Tensor ab.
    inputs:  Arrays, die als Blätter dienen (werden nicht verändert).

    Läuft immer im checked-Modus (float64).
    """
    with precision("checked"):
        bases = [np.array(x, dtype=np.float64, copy=True) for x in inputs]
        leaves = [Tensor(b, requires_grad=True) for b in bases]
        with GradTape() as tape:
            out = closure(*leaves)
        if out.size != 1:
            raise ShapeError(f"grad_check: closure muss skalar sein, shape={out.shape}")
        analytic = tape.gradient(out, leaves)

        per_input: List[float] = []
        evaluations = 1
        for i, base in enumerate(bases):
            worst = 0.0
            for idx in np.ndindex(base.shape):
                args = list(leaves)
                plus = base.copy()
                plus[idx] += eps
                args[i] = Tensor(plus)
                f_plus = closure(*args).item()
                minus = base.copy()
                minus[idx] -= eps
                args[i] = Tensor(minus)
                f_minus = closure(*args).item()
                evaluations += 2
                numeric = (f_plus - f_minus) / (2.0 * eps)
                worst = max(worst, _rel_error(float(analytic[i][idx]), numeric))
            per_input.append(worst)

    result = GradCheckResult(max(per_input, default=0.0), per_input, evaluations)
    log.debug("grad_check: max_rel_error=%.3e (%d Auswertungen)", result.max_rel_error, evaluations)
    return result
