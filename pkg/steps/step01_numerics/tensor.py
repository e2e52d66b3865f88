# steps/step01_numerics/tensor.py
"""
Dichter Tensor (row-major, numpy) plus GradTape.

- Tensor-Daten sind nach der Erzeugung schreibgeschützt; Parameter werden nur
  über `assign_` ausgetauscht (explizites In-place-Update des Optimierers).
- Jede Operation, deren Eingaben `requires_grad` tragen, wird auf dem aktiven
  GradTape protokolliert. `tape.gradient(...)` spielt das Band rückwärts ab.
- Modus "checked": float64 + Endlichkeitsprüfung an Op-Grenzen.
  Modus "fast":    float32, keine Prüfung.
"""

from __future__ import annotations

import contextlib
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Dimensionen passen nicht zusammen."""


class NonFiniteError(FloatingPointError):
    """NaN/Inf an einer Op-Grenze (nur im checked-Modus)."""


# ---------------------------------------------------------------------
# Präzisionsmodus
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class NumericsMode:
    name: str
    dtype: type
    checked: bool


CHECKED = NumericsMode("checked", np.float64, True)
FAST = NumericsMode("fast", np.float32, False)
_MODES: Dict[str, NumericsMode] = {"checked": CHECKED, "fast": FAST}

_MODE: ContextVar[NumericsMode] = ContextVar("siamman_numerics_mode", default=CHECKED)


def current_mode() -> NumericsMode:
    return _MODE.get()


@contextlib.contextmanager
def precision(mode: str) -> Iterator[NumericsMode]:
    if mode not in _MODES:
        raise ValueError(f"Unbekannter Präzisionsmodus {mode!r} (erlaubt: {sorted(_MODES)})")
    token = _MODE.set(_MODES[mode])
    try:
        yield _MODES[mode]
    finally:
        _MODE.reset(token)


def check_finite(arr: np.ndarray, where: str) -> None:
    if current_mode().checked and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"Nicht-endliche Werte in {where} (shape={arr.shape})")


# ---------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------
class Tensor:
    __slots__ = ("_data", "requires_grad", "name")

    def __init__(self, data, *, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=current_mode().dtype, copy=True)
        check_finite(arr, name or "Tensor()")
        arr.flags.writeable = False
        self._data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    @classmethod
    def wrap(cls, arr: np.ndarray, *, requires_grad: bool = False) -> "Tensor":
        """Übernimmt ein frisch berechnetes Array ohne Kopie (nur für Op-Ausgaben)."""
        t = cls.__new__(cls)
        if arr.dtype != current_mode().dtype:
            arr = arr.astype(current_mode().dtype)
        arr.flags.writeable = False
        t._data = arr
        t.requires_grad = requires_grad
        t.name = None
        return t

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self._data.shape)

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeError(f"item() nur für Skalare, shape={self.shape}")
        return float(self._data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor.wrap(self._data.copy())

    def assign_(self, arr: np.ndarray) -> None:
        """Explizites In-place-Update (Optimierer, Checkpoint-Laden)."""
        new = np.array(arr, dtype=current_mode().dtype, copy=True)
        if new.shape != self._data.shape:
            raise ShapeError(f"assign_: shape {new.shape} != {self._data.shape} ({self.name})")
        check_finite(new, self.name or "assign_")
        new.flags.writeable = False
        self._data = new

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"


# ---------------------------------------------------------------------
# GradTape
# ---------------------------------------------------------------------
Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class _Node:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Backward


_ACTIVE_TAPE: ContextVar[Optional["GradTape"]] = ContextVar("siamman_active_tape", default=None)


class GradTape:
    """
    Zeichnet Operationen samt gespeicherter Eingaben auf.

    Ein Band gehört genau einem Ausführungskontext; erneutes Betreten eines
    aufzeichnenden Bandes ist ein Fehler.
    """

    def __init__(self) -> None:
        self._nodes: List[_Node] = []
        self._token = None

    def __enter__(self) -> "GradTape":
        if self._token is not None:
            raise RuntimeError("GradTape zeichnet bereits auf")
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward: Backward) -> None:
        self._nodes.append(_Node(op, inputs, output, backward))

    def gradient(
        self,
        target: Tensor,
        sources: Sequence[Tensor],
        *,
        unconnected_zero: bool = True,
    ) -> List[Optional[np.ndarray]]:
        if target.size != 1:
            raise ShapeError(f"gradient(): Ziel muss skalar sein, shape={target.shape}")
        grads: Dict[int, np.ndarray] = {id(target): np.ones_like(target.data)}
        for node in reversed(self._nodes):
            g = grads.get(id(node.output))
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = np.asarray(gi, dtype=inp.data.dtype).reshape(inp.shape)
        out: List[Optional[np.ndarray]] = []
        for s in sources:
            g = grads.get(id(s))
            if g is None:
                out.append(np.zeros_like(s.data) if unconnected_zero else None)
            else:
                out.append(np.asarray(g).reshape(s.shape))
        return out


def active_tape() -> Optional[GradTape]:
    return _ACTIVE_TAPE.get()


def record_op(op: str, out: np.ndarray, inputs: Tuple[Tensor, ...], backward: Backward) -> Tensor:
    """
    Gemeinsamer Ausgang aller Ops: prüft Endlichkeit, verpackt das Ergebnis und
    protokolliert die Rückwärtsfunktion auf dem aktiven Band.
    """
    check_finite(out, op)
    needs_grad = any(t.requires_grad for t in inputs)
    result = Tensor.wrap(np.ascontiguousarray(out), requires_grad=needs_grad)
    tape = active_tape()
    if tape is not None and needs_grad:
        tape.record(op, inputs, result, backward)
    return result
