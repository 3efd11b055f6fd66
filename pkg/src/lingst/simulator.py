"""Synthetic-data generation.

Two backends produce per-(circuit, observable) expectation values:

* dense_exact -- evolves the full 4^n Pauli-transfer vector through each
  layer (ideal action = signed basis permutation from the tableau; error
  channel = exp of the layer Lindbladian applied to machine precision).
  Guarded at small n.
* taylor(k)  -- propagates every error generator to the zero frame and
  expands the product of error-channel exponentials to exact total order k
  in the rates; k=1 reproduces the first-order design-matrix prediction.

Shot noise: the dense backend samples N bitstrings from the exact outcome
distribution (cross-observable correlations preserved); the taylor backend
adds Gaussian noise with variance (1 - <Q>^2)/N, clipped to [-1, 1].
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import POPTABLE, evolve_ptm, taylor_propagate
from .circuits import Circuit
from .design import ExperimentDesign
from .errormodel import ErrorModel, RateVector, make_gate_id
from .errors import BackendError, DataError, ModelError
from .gates import layer_tableau
from .paulis import PauliString
from .propagation import zero_frame

DENSE_GUARD = 5
TAYLOR_GUARD = 11
EXP_THETA = 3.5
EXP_MAX_TERMS = 80
EXP_TOL = 1e-14


@dataclass(frozen=True)
class SimulatorConfig:
    backend: str = "dense_exact"  # or "taylor"
    k: int = 3
    shots: float = math.inf
    seed: int = 0
    dense_guard: int = DENSE_GUARD

    def __post_init__(self):
        if self.backend not in ("dense_exact", "taylor"):
            raise BackendError(f"unknown backend {self.backend!r}")
        if self.backend == "taylor" and self.k < 1:
            raise BackendError("taylor order k must be >= 1")
        if not (self.shots == math.inf or (self.shots == int(self.shots) and self.shots >= 1)):
            raise BackendError("shots must be a positive integer or inf")


# ---------------------------------------------------------------------------
# dense backend
# ---------------------------------------------------------------------------

_GATE_PTM_CACHE: dict = {}


def _gate_ptm_pattern(model: ErrorModel, gate_id: str):
    """COO pattern of the gate's Lindbladian in the PTM basis.

    Returns (rows, cols, coeff, param): L[row, col] += coeff * rates[param].
    """
    key = (model.fingerprint(), gate_id)
    hit = _GATE_PTM_CACHE.get(key)
    if hit is not None:
        return hit
    n = model.n
    dim = 1 << (2 * n)
    idx = np.arange(dim, dtype=np.int64)
    xT = idx >> n
    zT = idx & ((1 << n) - 1)
    ycT = np.bitwise_count(xT & zT).astype(np.int64)
    rows, cols, coeff, param = [], [], [], []
    spec = model.spec_for(gate_id)
    for gen in spec.generators:
        p = gen.label
        pi = model.param_index(gate_id, gen.kind, p)
        anti = ((np.bitwise_count(xT & np.int64(p.z)) + np.bitwise_count(zT & np.int64(p.x))) & 1).astype(bool)
        src = idx[anti]
        if gen.kind == "S":
            rows.append(src)
            cols.append(src)
            coeff.append(np.full(len(src), -2.0))
        else:
            pbits = (p.x << n) | p.z
            tgt = src ^ pbits
            # phase of P * T for T = src (both canonical): picks +-2
            g = (
                p.y_count()
                + ycT[anti]
                - np.bitwise_count((tgt >> n) & (tgt & ((1 << n) - 1))).astype(np.int64)
                + 2 * np.bitwise_count(np.int64(p.z) & (src >> n)).astype(np.int64)
            ) & 3
            rows.append(tgt)
            cols.append(src)
            coeff.append(np.where(g == 1, 2.0, -2.0))
        param.append(np.full(len(src), pi, dtype=np.int64))
    if rows:
        out = (
            np.concatenate(rows),
            np.concatenate(cols),
            np.concatenate(coeff),
            np.concatenate(param),
        )
    else:
        out = (
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0),
            np.empty(0, dtype=np.int64),
        )
    if len(_GATE_PTM_CACHE) > 4096:
        _GATE_PTM_CACHE.clear()
    _GATE_PTM_CACHE[key] = out
    return out


_PERM_CACHE: dict = {}


def _layer_perm(n: int, layer) -> tuple[np.ndarray, np.ndarray]:
    """Signed permutation of the PTM basis under the ideal layer unitary."""
    key = (n, tuple(layer))
    hit = _PERM_CACHE.get(key)
    if hit is not None:
        return hit
    tab = layer_tableau(n, layer)
    dim = 1 << (2 * n)
    perm = np.empty(dim, dtype=np.int64)
    sign = np.empty(dim)
    for idx in range(dim):
        p = PauliString(n, idx >> n, idx & ((1 << n) - 1), 0)
        img = tab.conjugate(p)
        perm[idx] = (img.x << n) | img.z
        sign[idx] = 1.0 if img.phase == 0 else -1.0
    if len(_PERM_CACHE) > 65536:
        _PERM_CACHE.clear()
    _PERM_CACHE[key] = (perm, sign)
    return perm, sign


@dataclass
class _DensePlan:
    """Model-structure-dependent, rate-independent evolution plan."""

    n: int
    step_kind: np.ndarray
    step_idx: np.ndarray
    csr_indptr: np.ndarray  # (n_csr, dim+1) local
    csr_cols: np.ndarray
    csr_off: np.ndarray
    coeff: np.ndarray  # per-entry base coefficient
    param: np.ndarray  # per-entry rate index
    perms: np.ndarray
    psigns: np.ndarray

    def data_for(self, rates: RateVector) -> np.ndarray:
        return self.coeff * rates.values[self.param]

    def norm1_for(self, data: np.ndarray) -> np.ndarray:
        out = np.zeros(self.csr_off.shape[0] - 1)
        for i in range(len(out)):
            lo, hi = self.csr_off[i], self.csr_off[i + 1]
            if hi > lo:
                out[i] = np.bincount(
                    self.csr_cols[lo:hi], weights=np.abs(data[lo:hi])
                ).max()
        return out


def _build_dense_plan(circuit: Circuit, model: ErrorModel) -> _DensePlan:
    n = model.n
    dim = 1 << (2 * n)
    error_slots = []  # list of merged COO blocks per error factor
    step_kind, step_idx = [], []
    perms, psigns = [], []

    def add_error(gate_ids):
        parts = [_gate_ptm_pattern(model, gid) for gid in gate_ids if model.has_gate(gid)]
        parts = [p for p in parts if len(p[0])]
        if not parts:
            return
        rows = np.concatenate([p[0] for p in parts])
        cols = np.concatenate([p[1] for p in parts])
        coeff = np.concatenate([p[2] for p in parts])
        param = np.concatenate([p[3] for p in parts])
        order = np.argsort(rows, kind="stable")
        error_slots.append((rows[order], cols[order], coeff[order], param[order]))
        step_kind.append(0)
        step_idx.append(len(error_slots) - 1)

    add_error(["prep"])
    for li, layer in enumerate(circuit.layers):
        perm, sign = _layer_perm(n, layer)
        perms.append(perm)
        psigns.append(sign)
        step_kind.append(1)
        step_idx.append(len(perms) - 1)
        gate_ids = [make_gate_id(a.gate, a.targets) for a in layer]
        for gid in gate_ids:
            if not model.has_gate(gid):
                raise ModelError(f"gate {gid!r} not in model")
        add_error(gate_ids)
    add_error(["meas"])

    n_csr = len(error_slots)
    indptr = np.zeros((max(n_csr, 1), dim + 1), dtype=np.int64)
    off = np.zeros(n_csr + 1, dtype=np.int64)
    cols_all, coeff_all, param_all = [], [], []
    for i, (rows, cols, coeff, param) in enumerate(error_slots):
        counts = np.bincount(rows, minlength=dim)
        indptr[i, 1:] = np.cumsum(counts)
        off[i + 1] = off[i] + len(rows)
        cols_all.append(cols)
        coeff_all.append(coeff)
        param_all.append(param)
    return _DensePlan(
        n=n,
        step_kind=np.asarray(step_kind, dtype=np.int8),
        step_idx=np.asarray(step_idx, dtype=np.int32),
        csr_indptr=indptr,
        csr_cols=np.concatenate(cols_all).astype(np.int32) if cols_all else np.empty(0, np.int32),
        csr_off=off,
        coeff=np.concatenate(coeff_all) if coeff_all else np.empty(0),
        param=np.concatenate(param_all).astype(np.int64) if param_all else np.empty(0, np.int64),
        perms=np.stack(perms) if perms else np.empty((0, dim), dtype=np.int64),
        psigns=np.stack(psigns) if psigns else np.empty((0, dim)),
    )


def evolve_dense(
    circuit: Circuit,
    model: ErrorModel,
    rates: RateVector,
    guard: int = DENSE_GUARD,
    plan: _DensePlan | None = None,
) -> np.ndarray:
    """Final PTM coefficient vector c_T = Tr[T rho_final], length 4^n."""
    if model.n > guard:
        raise BackendError(
            f"dense backend guarded at n <= {guard} (got n={model.n})"
        )
    if circuit.n != model.n:
        raise ModelError(f"circuit n={circuit.n} vs model n={model.n}")
    if plan is None:
        plan = _build_dense_plan(circuit, model)
    n = model.n
    dim = 1 << (2 * n)
    v = np.zeros(dim)
    v[: 1 << n] = 1.0  # rho_0: all Z-type subsets have coefficient +1
    data = plan.data_for(rates)
    norm1 = plan.norm1_for(data)
    return evolve_ptm(
        dim,
        plan.step_kind,
        plan.step_idx,
        plan.csr_indptr,
        plan.csr_cols,
        plan.csr_off,
        data,
        norm1,
        plan.perms,
        plan.psigns,
        v,
        EXP_THETA,
        EXP_MAX_TERMS,
    )


def simulate_dense(
    circuit: Circuit,
    model: ErrorModel,
    rates: RateVector,
    observables: list[PauliString],
    guard: int = DENSE_GUARD,
) -> np.ndarray:
    """Exact <Q> for each Z-type observable."""
    v = evolve_dense(circuit, model, rates, guard)
    out = np.empty(len(observables))
    for j, q in enumerate(observables):
        if not q.is_z_type or q.phase != 0:
            raise DataError("observables must be unsigned Z-type Paulis")
        out[j] = v[q.z]
    return out


def outcome_probabilities(v: np.ndarray, n: int) -> np.ndarray:
    """Exact computational-basis distribution from a PTM vector."""
    zsec = v[: 1 << n]
    b = np.arange(1 << n, dtype=np.int64)
    signs = 1.0 - 2.0 * (np.bitwise_count(b[:, None] & b[None, :]) & 1)
    p = signs @ zsec / (1 << n)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


# ---------------------------------------------------------------------------
# taylor backend
# ---------------------------------------------------------------------------


def simulate_taylor(
    circuit: Circuit,
    model: ErrorModel,
    rates: RateVector,
    k: int,
    observables: list[PauliString],
    guard: int = TAYLOR_GUARD,
) -> np.ndarray:
    """<Q> to exact total order k in the error rates."""
    if k < 1:
        raise BackendError("taylor order k must be >= 1")
    n = model.n
    if n > guard:
        raise BackendError(f"taylor backend guarded at n <= {guard} (got n={n})")
    frame = zero_frame(circuit, model)
    dim = 1 << (2 * n)
    obs_slot = np.zeros(dim, dtype=np.int32)
    isign = np.empty(len(observables))
    obs_bits = np.empty(len(observables), dtype=np.int64)
    for j, q in enumerate(observables):
        if not q.is_z_type or q.phase != 0:
            raise DataError("observables must be unsigned Z-type Paulis")
        qhat = frame.observable_hat(q)
        bits = (qhat.x << n) | qhat.z
        obs_bits[j] = bits
        obs_slot[bits] = j + 1
        isign[j] = 1.0 if qhat.phase == 0 else -1.0

    # merge duplicate labels within each factor (rates add; H rates signed)
    raw_rate = rates.values[frame.param] * np.where(frame.is_h, frame.sign, 1)
    mb, mr, mh, mptr = [], [], [], [0]
    for f in range(len(frame.slot_ptr) - 1):
        lo, hi = frame.slot_ptr[f], frame.slot_ptr[f + 1]
        acc: dict = {}
        for i in range(lo, hi):
            key = (int(frame.bits[i]), bool(frame.is_h[i]))
            acc[key] = acc.get(key, 0.0) + raw_rate[i]
        for (bits, ish), r in acc.items():
            if r != 0.0:
                mb.append(bits)
                mr.append(r)
                mh.append(ish)
        mptr.append(len(mb))
    g_bits = np.asarray(mb, dtype=np.int64)
    g_rate = np.asarray(mr, dtype=np.float64)
    g_is_h = np.asarray(mh, dtype=np.uint8)
    slot_ptr = np.asarray(mptr, dtype=np.int64)
    mask = (1 << n) - 1
    px = g_bits >> n
    pz = g_bits & mask

    # exact top-degree pruning: an entry at degree k-1 can only contribute if
    # it is an observable pattern or one generator XOR away from one
    reach = np.zeros(dim, dtype=np.uint8)
    reach[obs_bits] = 1
    if len(g_bits):
        reach[(obs_bits[:, None] ^ g_bits[None, :]).ravel()] = 1

    out = np.zeros(len(observables))
    taylor_propagate(
        n,
        k,
        slot_ptr,
        g_bits,
        (pz << n) | px,
        pz,
        np.bitwise_count(px & pz).astype(np.int64),
        g_rate,
        g_is_h,
        obs_slot,
        reach,
        out,
        POPTABLE,
    )
    return out * isign


def ideal_expectations(
    circuit: Circuit, observables: list[PauliString], model: ErrorModel | None = None
) -> np.ndarray:
    """Error-free <Q> in {-1, 0, +1} via the stabilizer zero frame."""
    from .paulis import CliffordTableau
    from .propagation import layer_inverse_tableau

    n = circuit.n
    frame = CliffordTableau.identity(n)
    for i in range(circuit.depth):
        frame = frame.compose(layer_inverse_tableau(circuit, i))
    out = np.zeros(len(observables))
    for j, q in enumerate(observables):
        qhat = frame.conjugate(q)
        if qhat.x == 0:
            out[j] = 1.0 if qhat.phase == 0 else -1.0
    return out


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass
class SimDataset:
    """Rows aligned with an ExperimentDesign (circuit-major, canonical
    observable order)."""

    circuit_ids: list
    obs_labels: list
    ideal: np.ndarray  # float64[K]
    value: np.ndarray  # float64[K]
    shots: np.ndarray  # float64[K], inf for the analytic limit
    meta: dict = field(default_factory=dict)
    probs: list | None = None  # per-circuit outcome distributions (dense only)

    def __post_init__(self):
        K = len(self.circuit_ids) * len(self.obs_labels)
        for arr in (self.ideal, self.value, self.shots):
            if arr.shape != (K,):
                raise DataError("dataset arrays must have length circuits*observables")

    @property
    def n_rows(self) -> int:
        return len(self.ideal)

    def delta(self) -> np.ndarray:
        return self.value - self.ideal

    def row_index(self, circuit_idx: int, obs_idx: int) -> int:
        return circuit_idx * len(self.obs_labels) + obs_idx

    def save(self, path, sidecar: str | None = None) -> None:
        path = str(path)
        m = len(self.obs_labels)
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["circuit_id", "observable", "ideal", "value", "shots"])
            for r in range(self.n_rows):
                wr.writerow(
                    [
                        self.circuit_ids[r // m],
                        self.obs_labels[r % m],
                        repr(float(self.ideal[r])),
                        repr(float(self.value[r])),
                        "inf" if math.isinf(self.shots[r]) else str(int(self.shots[r])),
                    ]
                )
        side = sidecar or (path + ".meta.json")
        with open(side, "w") as f:
            json.dump(self.meta, f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path, sidecar: str | None = None) -> "SimDataset":
        path = str(path)
        ids, labels = [], []
        ideal, value, shots = [], [], []
        with open(path, newline="") as f:
            rd = csv.reader(f)
            header = next(rd)
            if header[:5] != ["circuit_id", "observable", "ideal", "value", "shots"]:
                raise DataError(f"{path}: unexpected dataset header {header}")
            for row in rd:
                ids.append(row[0])
                labels.append(row[1])
                ideal.append(float(row[2]))
                value.append(float(row[3]))
                shots.append(float(row[4]))
        uniq_ids = list(dict.fromkeys(ids))
        uniq_labels = list(dict.fromkeys(labels))
        K = len(uniq_ids) * len(uniq_labels)
        if K != len(ids):
            raise DataError(f"{path}: rows do not form a complete grid")
        meta = {}
        side = sidecar or (path + ".meta.json")
        try:
            with open(side) as f:
                meta = json.load(f)
        except FileNotFoundError:
            pass
        return cls(
            uniq_ids,
            uniq_labels,
            np.asarray(ideal),
            np.asarray(value),
            np.asarray(shots),
            meta,
        )


def _simulate_circuits(args):
    design, model, rates, config, indices = args
    obs = design.observables
    vals = np.zeros((len(indices), len(obs)))
    ideals = np.zeros_like(vals)
    probs = [] if config.backend == "dense_exact" else None
    for row, ci in enumerate(indices):
        circuit = design.circuits[ci]
        ideals[row] = ideal_expectations(circuit, obs)
        if config.backend == "dense_exact":
            v = evolve_dense(circuit, model, rates, config.dense_guard)
            vals[row] = [v[q.z] for q in obs]
            probs.append(outcome_probabilities(v, model.n))
        else:
            vals[row] = simulate_taylor(circuit, model, rates, config.k, obs)
    return vals, ideals, probs


def generate_dataset(
    design: ExperimentDesign,
    model: ErrorModel,
    rates: RateVector,
    config: SimulatorConfig,
    n_jobs: int = 1,
) -> SimDataset:
    """Noiseless dataset (analytic expectations); add_shot_noise adds shots."""
    obs = design.observables
    nC = len(design.circuits)
    indices = list(range(nC))
    if n_jobs and n_jobs > 1 and nC > 2 * n_jobs:
        chunks = [indices[i::n_jobs] for i in range(n_jobs)]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(
                pool.map(
                    _simulate_circuits,
                    [(design, model, rates, config, ch) for ch in chunks],
                )
            )
        vals = np.zeros((nC, len(obs)))
        ideals = np.zeros_like(vals)
        probs = [None] * nC if config.backend == "dense_exact" else None
        for ch, (v, idl, pr) in zip(chunks, parts):
            for row, ci in enumerate(ch):
                vals[ci] = v[row]
                ideals[ci] = idl[row]
                if pr is not None:
                    probs[ci] = pr[row]
    else:
        vals, ideals, probs = _simulate_circuits(
            (design, model, rates, config, indices)
        )
    meta = {
        "backend": config.backend,
        "k": config.k if config.backend == "taylor" else None,
        "shots": "inf",
        "seed": config.seed,
        "model_ref": model.fingerprint(),
        "exp_tolerance": EXP_TOL,
    }
    return SimDataset(
        circuit_ids=[c.circuit_id for c in design.circuits],
        obs_labels=[o.to_label(with_sign=False) for o in obs],
        ideal=ideals.ravel(),
        value=vals.ravel(),
        shots=np.full(nC * len(obs), math.inf),
        meta=meta,
        probs=probs,
    )


def add_shot_noise(
    dataset: SimDataset,
    N: float,
    backend: str | None = None,
    rng: np.random.Generator | None = None,
) -> SimDataset:
    """Finite-shot dataset: bitstring sampling (dense) or Gaussian (taylor)."""
    if N == math.inf:
        return dataset
    if not (N == int(N) and N >= 1):
        raise DataError(f"invalid shot count {N}")
    N = int(N)
    if rng is None:
        rng = np.random.default_rng()
    backend = backend or dataset.meta.get("backend", "taylor")
    m = len(dataset.obs_labels)
    value = dataset.value.copy()
    if backend == "dense_exact":
        if dataset.probs is None:
            raise DataError(
                "dense bitstring sampling needs the in-memory outcome "
                "distributions; re-simulate or use the gaussian path"
            )
        nbits = int(round(math.log2(len(dataset.probs[0]))))
        zmasks = np.array(
            [PauliString.from_label(lbl).z for lbl in dataset.obs_labels],
            dtype=np.int64,
        )
        b = np.arange(1 << nbits, dtype=np.int64)
        signs = 1.0 - 2.0 * (np.bitwise_count(b[None, :] & zmasks[:, None]) & 1)
        for ci, p in enumerate(dataset.probs):
            counts = rng.multinomial(N, p)
            est = signs @ counts / N
            value[ci * m : (ci + 1) * m] = est
    else:
        q = np.clip(dataset.value, -1.0, 1.0)
        sd = np.sqrt(np.clip(1.0 - q**2, 0.0, None) / N)
        value = np.clip(q + rng.normal(0.0, 1.0, size=q.shape) * sd, -1.0, 1.0)
    meta = dict(dataset.meta)
    meta["shots"] = N
    meta["noise_path"] = "bitstring" if backend == "dense_exact" else "gaussian"
    return SimDataset(
        circuit_ids=dataset.circuit_ids,
        obs_labels=dataset.obs_labels,
        ideal=dataset.ideal.copy(),
        value=value,
        shots=np.full(dataset.n_rows, float(N)),
        meta=meta,
        probs=dataset.probs,
    )
