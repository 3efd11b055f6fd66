"""Circuits as ordered layers of parallel Clifford gate applications.

A circuit's layers hold explicit gates only; state preparation and
measurement error slots are implicit (a "prep" pseudo-layer before the first
layer and a "meas" pseudo-layer after the last).  Idle qubits carry no gate
and no error.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import DesignError
from .gates import gate_arity, layer_tableau
from .paulis import CliffordTableau


class GateApp(NamedTuple):
    gate: str
    targets: tuple[int, ...]


@dataclass(frozen=True)
class Circuit:
    n: int
    layers: tuple[tuple[GateApp, ...], ...]

    def __post_init__(self):
        for layer in self.layers:
            seen: set[int] = set()
            for app in layer:
                if gate_arity(app.gate) != len(app.targets):
                    raise DesignError(f"bad arity for {app.gate} {app.targets}")
                if any(not 0 <= q < self.n for q in app.targets):
                    raise DesignError(f"target out of range in {app}")
                if seen.intersection(app.targets):
                    raise DesignError(f"overlapping targets in layer: {app}")
                seen.update(app.targets)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer_tableaus(self) -> list[CliffordTableau]:
        return [layer_tableau(self.n, layer) for layer in self.layers]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "layers": [
                [{"gate": a.gate, "targets": list(a.targets)} for a in layer]
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        layers = tuple(
            tuple(GateApp(a["gate"], tuple(a["targets"])) for a in layer)
            for layer in d["layers"]
        )
        return cls(int(d["n"]), layers)

    @property
    def circuit_id(self) -> str:
        """Stable hash of the canonical serialization."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def circuit_from_layers(n: int, layers: Iterable[Iterable[tuple]]) -> Circuit:
    """Convenience constructor from [(gate, targets), ...] lists."""
    return Circuit(
        n,
        tuple(
            tuple(GateApp(g, tuple(t)) for g, t in layer) for layer in layers
        ),
    )
