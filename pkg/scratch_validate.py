"""Scratch validation of simulators vs an independent dense oracle (throwaway)."""
import numpy as np
from scipy.linalg import expm

from lingst.paulis import PauliString
from lingst.circuits import Circuit
from lingst.errormodel import build_paper_model, make_gate_id
from lingst.design import sample_random_circuit, enumerate_observables
from lingst.simulator import simulate_dense, simulate_taylor, evolve_dense, outcome_probabilities

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI1 = {"I": I2, "X": X, "Y": Y, "Z": Z}

GATE_U = {
    "X90": expm(-1j * np.pi / 4 * X),
    "Y90": expm(-1j * np.pi / 4 * Y),
    "Z90": expm(-1j * np.pi / 4 * Z),
    "H": (X + Z) / np.sqrt(2),
    "S": np.diag([1, 1j]),
    "I": I2,
    "X": X, "Y": Y, "Z": Z,
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "CX": np.array([[1,0,0,0],[0,1,0,0],[0,0,0,1],[0,0,1,0]], dtype=complex),
}

def pauli_matrix(p: PauliString) -> np.ndarray:
    m = np.array([[1]], dtype=complex)
    for j in range(p.n):  # qubit 0 = slowest (leftmost kron factor)
        ch = p.to_label(with_sign=False)[j]
        m = np.kron(m, PAULI1[ch])
    return (1j ** p.phase) * m

def embed_unitary(u: np.ndarray, targets, n: int) -> np.ndarray:
    k = len(targets)
    dim = 2 ** n
    U = np.zeros((dim, dim), dtype=complex)
    ut = u.reshape([2] * (2 * k))
    for col in range(dim):
        psi = np.zeros(dim, dtype=complex)
        psi[col] = 1.0
        t = psi.reshape([2] * n)
        t = np.moveaxis(t, targets, range(k))
        t = np.tensordot(u.reshape(2**k, 2**k), t.reshape(2**k, -1), axes=(1, 0)).reshape([2] * n)
        t = np.moveaxis(t, range(k), targets)
        U[:, col] = t.reshape(dim)
    return U

def layer_unitary(circ_layer, n):
    U = np.eye(2 ** n, dtype=complex)
    for app in circ_layer:
        U = embed_unitary(GATE_U[app.gate], list(app.targets), n) @ U
    return U

def lindblad_superop(model, rates, gate_ids, n):
    dim = 2 ** n
    L = np.zeros((dim * dim, dim * dim), dtype=complex)
    Id = np.eye(dim)
    for gid in gate_ids:
        if not model.has_gate(gid):
            continue
        spec = model.spec_for(gid)
        for gen in spec.generators:
            r = rates.values[model.param_index(gid, gen.kind, gen.label)]
            P = pauli_matrix(gen.label)
            if gen.kind == "H":
                L += r * (-1j) * (np.kron(P, Id.T) - np.kron(Id, P.T))
            else:
                L += r * (np.kron(P, P.T) - np.kron(Id, Id.T))
    return L

def oracle_expectations(circuit, model, rates, observables):
    n = circuit.n
    dim = 2 ** n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    v = rho.reshape(-1)
    v = expm(lindblad_superop(model, rates, ["prep"], n)) @ v
    for layer in circuit.layers:
        U = layer_unitary(layer, n)
        rho = (U @ v.reshape(dim, dim) @ U.conj().T)
        v = rho.reshape(-1)
        gids = [make_gate_id(a.gate, a.targets) for a in layer]
        v = expm(lindblad_superop(model, rates, gids, n)) @ v
    v = expm(lindblad_superop(model, rates, ["meas"], n)) @ v
    rho = v.reshape(dim, dim)
    return np.array([np.trace(pauli_matrix(q) @ rho).real for q in observables])

rng = np.random.default_rng(7)
n = 2
model, rates = build_paper_model(n, seed=3)
obs = enumerate_observables(n, 2)
worst_dense = worst_taylor = 0.0
for t in range(8):
    c = sample_random_circuit(n, depth=int(rng.integers(0, 5)), rng=rng)
    ref = oracle_expectations(c, model, rates, obs)
    got = simulate_dense(c, model, rates, obs)
    tay = simulate_taylor(c, model, rates, 8, obs)
    worst_dense = max(worst_dense, np.abs(ref - got).max())
    worst_taylor = max(worst_taylor, np.abs(ref - tay).max())
print("n=2 dense vs kron oracle:", worst_dense)
print("n=2 taylor(k=8) vs kron oracle:", worst_taylor)

n = 3
model, rates = build_paper_model(n, seed=5)
obs = enumerate_observables(n, 2)
worst_dense = worst_taylor = 0.0
for t in range(4):
    c = sample_random_circuit(n, depth=int(rng.integers(1, 6)), rng=rng)
    ref = oracle_expectations(c, model, rates, obs)
    got = simulate_dense(c, model, rates, obs)
    tay = simulate_taylor(c, model, rates, 6, obs)
    worst_dense = max(worst_dense, np.abs(ref - got).max())
    worst_taylor = max(worst_taylor, np.abs(ref - tay).max())
print("n=3 dense vs kron oracle:", worst_dense)
print("n=3 taylor(k=6) vs dense:", worst_taylor)

# k=1 identity vs design row contraction
from lingst.design import make_design, build_design
model, rates = build_paper_model(3, seed=5)
des = make_design(3, 12, depth=5, seed=11)
D = build_design(des, model)
from lingst.simulator import generate_dataset, SimulatorConfig, ideal_expectations
worst = 0.0
for ci, c in enumerate(des.circuits):
    tay1 = simulate_taylor(c, model, rates, 1, des.observables)
    ideal = ideal_expectations(c, des.observables)
    m_obs = len(des.observables); rows = slice(ci * m_obs, (ci + 1) * m_obs)
    pred = ideal + D.matrix[rows] @ rates.values
    worst = max(worst, np.abs(tay1 - pred).max())
print("k=1 vs design-row contraction:", worst)

# zero rates -> ideal
z = rates.scaled(0.0)
c = des.circuits[0]
print("zero-rate dense == ideal:", np.abs(simulate_dense(c, model, z, des.observables) - ideal_expectations(c, des.observables)).max())
