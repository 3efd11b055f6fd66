"""Clifford gate registry: named tableaus and their embedding into n-qubit layers.

The native set used throughout is {X90, Y90, Z90, CZ} plus a handful of
standard extras useful for tests and custom models.  Rotation convention:
A90 = exp(-i pi/4 A), so X90 maps Z -> -Y, Y90 maps X -> -Z, and Z90 maps
X -> +Y (the S gate up to global phase).
"""

from __future__ import annotations

from .errors import DesignError, DimensionError
from .paulis import CliffordTableau, PauliString

# name -> (arity, X images, Z images) on the gate's own qubits
_GATE_DEFS: dict[str, tuple[int, tuple[str, ...], tuple[str, ...]]] = {
    "I": (1, ("+X",), ("+Z",)),
    "X90": (1, ("+X",), ("-Y",)),
    "Y90": (1, ("-Z",), ("+X",)),
    "Z90": (1, ("+Y",), ("+Z",)),
    "H": (1, ("+Z",), ("+X",)),
    "S": (1, ("+Y",), ("+Z",)),
    "X": (1, ("+X",), ("-Z",)),
    "Y": (1, ("-X",), ("-Z",)),
    "Z": (1, ("-X",), ("+Z",)),
    "CZ": (2, ("+XZ", "+ZX"), ("+ZI", "+IZ")),
    "CX": (2, ("+XX", "+IX"), ("+ZI", "+ZZ")),
    "SWAP": (2, ("+IX", "+XI"), ("+IZ", "+ZI")),
}

_SMALL_TABLEAUS: dict[str, CliffordTableau] = {}


def gate_names() -> tuple[str, ...]:
    return tuple(sorted(_GATE_DEFS))


def gate_arity(name: str) -> int:
    try:
        return _GATE_DEFS[name][0]
    except KeyError:
        raise DesignError(f"unknown gate {name!r}") from None


def gate_tableau(name: str) -> CliffordTableau:
    """Tableau of the named gate on its own `arity` qubits."""
    tab = _SMALL_TABLEAUS.get(name)
    if tab is None:
        try:
            k, ximgs, zimgs = _GATE_DEFS[name]
        except KeyError:
            raise DesignError(f"unknown gate {name!r}") from None
        tab = CliffordTableau(
            k,
            tuple(PauliString.from_label(s, k) for s in ximgs),
            tuple(PauliString.from_label(s, k) for s in zimgs),
        )
        _SMALL_TABLEAUS[name] = tab
    return tab


def _embed(p: PauliString, targets: tuple[int, ...], n: int) -> PauliString:
    x = z = 0
    for local, q in enumerate(targets):
        x |= ((p.x >> local) & 1) << q
        z |= ((p.z >> local) & 1) << q
    return PauliString(n, x, z, p.phase)


def embedded_gate(name: str, targets: tuple[int, ...], n: int) -> CliffordTableau:
    """The named gate acting on `targets`, identity elsewhere, as an n-qubit tableau."""
    small = gate_tableau(name)
    if len(targets) != small.n:
        raise DimensionError(
            f"gate {name} takes {small.n} target(s), got {len(targets)}"
        )
    if len(set(targets)) != len(targets) or any(not 0 <= q < n for q in targets):
        raise DesignError(f"invalid targets {targets} for n={n}")
    ident = CliffordTableau.identity(n)
    xs = list(ident.xout)
    zs = list(ident.zout)
    for local, q in enumerate(targets):
        xs[q] = _embed(small.xout[local], targets, n)
        zs[q] = _embed(small.zout[local], targets, n)
    return CliffordTableau(n, tuple(xs), tuple(zs))


def layer_tableau(n: int, apps) -> CliffordTableau:
    """Tableau of one layer: parallel gates on disjoint targets.

    `apps` is an iterable of (gate_name, targets) pairs.
    """
    seen: set[int] = set()
    xs = list(CliffordTableau.identity(n).xout)
    zs = list(CliffordTableau.identity(n).zout)
    for name, targets in apps:
        targets = tuple(targets)
        if seen.intersection(targets):
            raise DesignError(f"overlapping targets in layer at {name} {targets}")
        seen.update(targets)
        g = embedded_gate(name, targets, n)
        for q in targets:
            xs[q] = g.xout[q]
            zs[q] = g.zout[q]
    return CliffordTableau(n, tuple(xs), tuple(zs))
