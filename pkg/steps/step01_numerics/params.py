# steps/step01_numerics/params.py
"""
ParamStore: benannte, trainierbare Tensoren.

Namensschema "<gruppe>.<teil>...", z.B. "backbone.block1.weight" oder
"cls.l3.split.weight". Die Gruppe (erstes Segment) steuert das Einfrieren
während des Trainings.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Union

import numpy as np

from .container import load_checkpoint, save_checkpoint
from .tensor import ShapeError, Tensor

log = logging.getLogger(__name__)


# Lesezugriff der Vorwärtsfunktionen: ParamStore oder ein schlichtes dict
Params = Mapping[str, Tensor]


def group_of(name: str) -> str:
    return name.split(".", 1)[0]


class ParamStore(Mapping):
    def __init__(self) -> None:
        self._params: Dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"Parameter {name!r} existiert bereits")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"Unbekannter Parameter {name!r}") from None

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._params))

    def __len__(self) -> int:
        return len(self._params)

    def names(self, prefix: Optional[str] = None) -> List[str]:
        return [n for n in sorted(self._params) if prefix is None or n.startswith(prefix)]

    def groups(self) -> List[str]:
        return sorted({group_of(n) for n in self._params})

    def select(self, groups: Iterable[str]) -> List[str]:
        wanted = set(groups)
        unknown = wanted - set(self.groups())
        if unknown:
            raise KeyError(f"Unbekannte Parametergruppen: {sorted(unknown)}")
        return [n for n in sorted(self._params) if group_of(n) in wanted]

    def set_trainable(self, names: Iterable[str]) -> None:
        """Nur `names` tragen requires_grad; alle anderen gelten als eingefroren."""
        keep = set(names)
        for name, t in self._params.items():
            t.requires_grad = name in keep

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())

    # -- Zustand -------------------------------------------------------
    def state(self) -> Dict[str, np.ndarray]:
        return {n: t.numpy() for n, t in self._params.items()}

    def load_state(self, state: Dict[str, np.ndarray], *, strict: bool = True) -> None:
        if strict:
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            if missing or extra:
                raise KeyError(f"Checkpoint passt nicht: fehlend={sorted(missing)}, überzählig={sorted(extra)}")
        for name, arr in state.items():
            if name not in self._params:
                continue
            if arr.shape != self._params[name].shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {self._params[name].shape}")
            self._params[name].assign_(arr)

    def copy(self) -> "ParamStore":
        clone = ParamStore()
        for name in self:
            clone.add(name, self._params[name].data)
        return clone

    def save(self, path: Union[str, Path]) -> Path:
        p = save_checkpoint(path, self.state())
        log.info("Checkpoint geschrieben: %s (%d Tensoren)", p, len(self))
        return p

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ParamStore":
        store = cls()
        for name, arr in sorted(load_checkpoint(path).items()):
            store.add(name, arr)
        return store
