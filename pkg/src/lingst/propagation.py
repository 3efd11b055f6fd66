"""Propagation of error generators through Clifford circuits, and first-order
sensitivities of Z-type observables.

Two equivalent frames are used.  The forward frame propagates a generator at
slot ell to the end of the circuit, P' = U_{:ell} P U_{:ell}^dag, and
evaluates traces against the ideal final state |psi> = U|0...0>.  The zero
frame conjugates everything back to |0...0> instead (P_hat = prefix^dag P
prefix, Q_hat = U^dag Q U), where stabilizer membership degenerates to a
Z-type bit test; the design-matrix kernel uses it.  Both are phase-exact and
cross-checked in tests.

Error slots per circuit: slot 0 = "prep" (before the first layer), slots
1..d = after layer i, slot d+1 = "meas" (before readout).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import Circuit
from .errormodel import ErrorModel, make_gate_id
from .errors import DesignError, ModelError, PhaseError
from .paulis import (
    CliffordTableau,
    PauliString,
    StabilizerState,
    commutes,
    pauli_mul,
    stabilizer_sign,
)


@dataclass(frozen=True)
class PropagatedGenerator:
    source_param: int
    kind: str
    label_out: PauliString  # unsigned P'
    sign: int  # gamma(U_{:ell}, P); fixed to +1 for S generators
    slot: int  # 0 = prep, 1..depth = layers, depth+1 = meas


@dataclass(frozen=True)
class SensitivityRow:
    circuit_id: str
    observable: PauliString
    kind: str  # "H" or "S"
    ideal: int  # <Q> of the error-free circuit, in {-1, 0, +1}
    entries: dict  # param index -> coefficient


def _slot_gates(circuit: Circuit, model: ErrorModel, slot: int):
    """(gate_id, spec) pairs contributing errors at a slot; pseudo-gates optional."""
    if slot == 0 or slot == circuit.depth + 1:
        gid = "prep" if slot == 0 else "meas"
        return [(gid, model.spec_for(gid))] if model.has_gate(gid) else []
    out = []
    for app in circuit.layers[slot - 1]:
        gid = make_gate_id(app.gate, app.targets)
        if not model.has_gate(gid):
            raise ModelError(f"gate {gid!r} not in model")
        out.append((gid, model.spec_for(gid)))
    return out


def propagate_all(circuit: Circuit, model: ErrorModel) -> list[PropagatedGenerator]:
    """One PropagatedGenerator per (slot, gate, generator), via a single
    backward sweep that maintains the suffix tableau U_{:ell}."""
    if circuit.n != model.n:
        raise ModelError(f"circuit n={circuit.n} vs model n={model.n}")
    tableaus = circuit.layer_tableaus()
    depth = circuit.depth
    out: list[PropagatedGenerator] = []
    suffix = CliffordTableau.identity(circuit.n)
    # slots processed back to front: meas, layer depth, ..., layer 1, prep
    for slot in range(depth + 1, -1, -1):
        for gid, spec in _slot_gates(circuit, model, slot):
            for gen in spec.generators:
                img = suffix.conjugate(gen.label)
                out.append(
                    PropagatedGenerator(
                        source_param=model.param_index(gid, gen.kind, gen.label),
                        kind=gen.kind,
                        label_out=img.unsigned(),
                        sign=1 if gen.kind == "S" else img.sign,
                        slot=slot,
                    )
                )
        if 1 <= slot <= depth:
            suffix = suffix.compose(tableaus[slot - 1])
    out.reverse()
    return out


def h_trace(Q: PauliString, Qerr: PauliString, psi: StabilizerState) -> float:
    """Tr[Q * H_Qerr(|psi><psi|)] for Hermitian Paulis, exactly in {-2, 0, +2}.

    Peeling identity: the trace equals -2i * <psi| Q*Qerr |psi> when Q and
    Qerr anticommute, else 0; the odd i-power of the product folds the -2i
    back to a real +-2.
    """
    if not Q.is_hermitian or not Qerr.is_hermitian:
        raise PhaseError("h_trace expects Hermitian Paulis")
    M = pauli_mul(Q, Qerr)
    if M.phase % 2 == 0:  # commuting pair
        return 0.0
    sgn = stabilizer_sign(psi, M.unsigned())
    if sgn == 0:
        return 0.0
    return (2.0 if M.phase == 1 else -2.0) * sgn


def s_trace(Q: PauliString, Qerr: PauliString, psi: StabilizerState) -> float:
    """Tr[Q * S_Qerr(|psi><psi|)], exactly in {-2, 0, +2}."""
    if not Q.is_hermitian or not Qerr.is_hermitian:
        raise PhaseError("s_trace expects Hermitian Paulis")
    if commutes(Q, Qerr):
        return 0.0
    return -2.0 * stabilizer_sign(psi, Q)


def ideal_final_state(circuit: Circuit) -> StabilizerState:
    state = StabilizerState.zero(circuit.n)
    for t in circuit.layer_tableaus():
        state = state.apply(t)
    return state


def sensitivity_row(circuit: Circuit, Q: PauliString, model: ErrorModel) -> SensitivityRow:
    """First-order sensitivity of <Q> to every model parameter.

    The row is Hamiltonian-kind when the error-free expectation vanishes and
    stochastic-kind otherwise; coefficients for the other kind are zero at
    first order.
    """
    if not Q.is_z_type or Q.phase != 0:
        raise DesignError(f"observable must be an unsigned Z-type Pauli, got {Q.to_label()}")
    if Q.weight < 1:
        raise DesignError("observable must have weight >= 1")
    psi = ideal_final_state(circuit)
    ideal = stabilizer_sign(psi, Q)
    kind = "H" if ideal == 0 else "S"
    entries: dict[int, float] = {}
    for pg in propagate_all(circuit, model):
        if pg.kind != kind:
            continue
        if kind == "H":
            val = pg.sign * h_trace(Q, pg.label_out, psi)
        else:
            val = s_trace(Q, pg.label_out, psi)
        if val != 0.0:
            entries[pg.source_param] = entries.get(pg.source_param, 0.0) + val
    entries = {i: v for i, v in entries.items() if v != 0.0}
    return SensitivityRow(circuit.circuit_id, Q, kind, ideal, entries)


# ---------------------------------------------------------------------------
# zero-frame representation (fast path shared by design matrix and simulator)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroFrame:
    """Everything conjugated back to |0...0>: per-occurrence generator data
    grouped by slot, plus the whole-circuit inverse tableau for observables."""

    n: int
    slot_ptr: np.ndarray  # int64[n_slots + 1] into the occurrence arrays
    bits: np.ndarray  # int64, (x << n) | z of P_hat
    sign: np.ndarray  # int8, +-1 (i-power of P_hat folded; always even)
    is_h: np.ndarray  # bool
    param: np.ndarray  # int64 parameter index
    final_inv: CliffordTableau  # tableau of U^dag

    def observable_hat(self, Q: PauliString) -> PauliString:
        return self.final_inv.conjugate(Q)


def zero_frame(circuit: Circuit, model: ErrorModel) -> ZeroFrame:
    """Forward sweep building prefix-inverse conjugated generators per slot."""
    if circuit.n != model.n:
        raise ModelError(f"circuit n={circuit.n} vs model n={model.n}")
    n = circuit.n
    depth = circuit.depth
    frame = CliffordTableau.identity(n)
    bits, sign, is_h, param = [], [], [], []
    ptr = [0]
    for slot in range(depth + 2):
        if 1 <= slot <= depth:
            inv = layer_inverse_tableau(circuit, slot - 1)
            frame = frame.compose(inv)
        for gid, spec in _slot_gates(circuit, model, slot):
            for gen in spec.generators:
                img = frame.conjugate(gen.label)
                bits.append(img.x << n | img.z)
                sign.append(img.sign)
                is_h.append(gen.kind == "H")
                param.append(model.param_index(gid, gen.kind, gen.label))
        ptr.append(len(bits))
    return ZeroFrame(
        n=n,
        slot_ptr=np.asarray(ptr, dtype=np.int64),
        bits=np.asarray(bits, dtype=np.int64),
        sign=np.asarray(sign, dtype=np.int8),
        is_h=np.asarray(is_h, dtype=bool),
        param=np.asarray(param, dtype=np.int64),
        final_inv=frame,
    )


_LAYER_INV_CACHE: dict[tuple, CliffordTableau] = {}


def layer_inverse_tableau(circuit: Circuit, layer_idx: int) -> CliffordTableau:
    key = (circuit.n, circuit.layers[layer_idx])
    tab = _LAYER_INV_CACHE.get(key)
    if tab is None:
        from .gates import layer_tableau

        tab = layer_tableau(circuit.n, circuit.layers[layer_idx]).inverse()
        if len(_LAYER_INV_CACHE) > 100_000:
            _LAYER_INV_CACHE.clear()
        _LAYER_INV_CACHE[key] = tab
    return tab
