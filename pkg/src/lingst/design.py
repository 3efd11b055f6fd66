"""Experiment design: random shallow circuits, Z-type observables, and the
first-order design matrix with its H/S row partition and rank diagnostics.

Row order is circuit-major with observables in canonical order inside each
circuit, independent of any parallel execution order.  Rows with zero ideal
expectation are Hamiltonian-kind, rows with ideal +-1 are stochastic-kind;
each row touches only the matching parameter-kind columns.
"""

from __future__ import annotations

import base64
import itertools
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .circuits import Circuit, GateApp
from .errormodel import ErrorModel, ring_edges
from .errors import DesignError, ModelError
from .gates import gate_arity
from .paulis import PauliString
from .propagation import zero_frame

RANK_TOL_FACTOR = 2.0**-40  # singular values below max(K, kappa)*smax*this are zero


def enumerate_observables(n: int, w: int) -> list[PauliString]:
    """All Z-type Paulis of weight 1..w, in canonical (label-lexicographic) order."""
    if not 1 <= w <= n:
        raise DesignError(f"need 1 <= w <= n, got w={w}, n={n}")
    out = []
    for k in range(1, w + 1):
        for qs in itertools.combinations(range(n), k):
            z = 0
            for q in qs:
                z |= 1 << q
            out.append(PauliString(n, 0, z, 0))
    out.sort(key=PauliString.sort_key)
    return out


DEFAULT_P_CZ = 0.08
DEFAULT_P_SINGLE = 0.25


def sample_random_circuit(
    n: int,
    depth: int,
    connectivity=None,
    gate_set=("X90", "Y90", "Z90", "CZ"),
    rng: np.random.Generator | None = None,
    p_cz: float = DEFAULT_P_CZ,
    p_single: float = DEFAULT_P_SINGLE,
) -> Circuit:
    """Depth-`depth` random circuit: per layer, each eligible edge joins a CZ
    matching with probability p_cz (conflicts resolved in random edge order);
    each remaining qubit gets a uniform 1-qubit gate with probability
    p_single, else idles.

    The defaults keep layers sparse: with all-to-all crosstalk terms in the
    standard model, every added gate contributes ~n coherent generators, and
    the first-order approximation at the standard rate scales only holds for
    a limited per-circuit error budget.
    """
    if rng is None:
        rng = np.random.default_rng()
    if depth < 0:
        raise DesignError("depth must be >= 0")
    if not gate_set:
        raise DesignError("empty gate set")
    singles = [g for g in gate_set if g != "CZ" and gate_arity(g) == 1]
    use_cz = "CZ" in gate_set
    if connectivity is None:
        connectivity = ring_edges(n)
    edges = [tuple(sorted(e)) for e in connectivity]
    layers = []
    for _ in range(depth):
        busy = np.zeros(n, dtype=bool)
        apps = []
        if use_cz and edges:
            order = rng.permutation(len(edges))
            coins = rng.random(len(edges))
            for pos, k in enumerate(order):
                a, b = edges[k]
                if coins[pos] < p_cz and not busy[a] and not busy[b]:
                    busy[a] = busy[b] = True
                    apps.append(GateApp("CZ", (a, b)))
        if singles:
            gate_coins = rng.random(n)
            picks = rng.integers(0, len(singles), size=n)
            for q in range(n):
                if not busy[q] and gate_coins[q] < p_single:
                    apps.append(GateApp(singles[picks[q]], (q,)))
        apps.sort(key=lambda a: a.targets)
        layers.append(tuple(apps))
    return Circuit(n, tuple(layers))


@dataclass(frozen=True)
class ExperimentDesign:
    n: int
    w: int
    depth: int
    circuits: tuple[Circuit, ...]
    sampler: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def observables(self) -> list[PauliString]:
        return enumerate_observables(self.n, self.w)

    @property
    def rows_per_circuit(self) -> int:
        return len(self.observables)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "w": self.w,
            "depth": self.depth,
            "sampler": self.sampler,
            "seed": self.seed,
            "circuits": [c.to_dict() for c in self.circuits],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentDesign":
        return cls(
            n=int(d["n"]),
            w=int(d["w"]),
            depth=int(d["depth"]),
            circuits=tuple(Circuit.from_dict(c) for c in d["circuits"]),
            sampler=d.get("sampler", {}),
            seed=d.get("seed"),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ExperimentDesign":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def make_design(
    n: int,
    n_circuits: int,
    depth: int = 15,
    w: int = 2,
    seed: int = 0,
    connectivity=None,
    gate_set=("X90", "Y90", "Z90", "CZ"),
    p_cz: float = DEFAULT_P_CZ,
    p_single: float = DEFAULT_P_SINGLE,
) -> ExperimentDesign:
    rng = np.random.default_rng(seed)
    circuits = tuple(
        sample_random_circuit(n, depth, connectivity, gate_set, rng, p_cz, p_single)
        for _ in range(n_circuits)
    )
    sampler = {
        "name": "edge-matching+bernoulli-singles",
        "params": {"p_cz": p_cz, "p_single": p_single, "gate_set": list(gate_set)},
        "seed": seed,
    }
    return ExperimentDesign(n, w, depth, circuits, sampler, seed)


# ---------------------------------------------------------------------------
# design matrix
# ---------------------------------------------------------------------------


@dataclass
class DesignMatrix:
    matrix: sp.csr_matrix  # K x kappa
    row_circuit: np.ndarray  # int64[K]
    row_obs: np.ndarray  # int64[K]
    row_kind_h: np.ndarray  # bool[K]
    row_ideal: np.ndarray  # int8[K]
    h_cols: np.ndarray  # bool[kappa]
    circuit_ids: list
    obs_labels: list
    model_fingerprint: str

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def kappa(self) -> int:
        return self.matrix.shape[1]

    def h_block(self):
        """(rows, D_H) with columns restricted to Hamiltonian parameters."""
        rows = np.flatnonzero(self.row_kind_h)
        return rows, self.matrix[rows][:, np.flatnonzero(self.h_cols)]

    def s_block(self):
        rows = np.flatnonzero(~self.row_kind_h)
        return rows, self.matrix[rows][:, np.flatnonzero(~self.h_cols)]

    def subset_rows(self, rows: np.ndarray) -> "DesignMatrix":
        return DesignMatrix(
            matrix=self.matrix[rows],
            row_circuit=self.row_circuit[rows],
            row_obs=self.row_obs[rows],
            row_kind_h=self.row_kind_h[rows],
            row_ideal=self.row_ideal[rows],
            h_cols=self.h_cols,
            circuit_ids=self.circuit_ids,
            obs_labels=self.obs_labels,
            model_fingerprint=self.model_fingerprint,
        )

    def save(self, path) -> None:
        """Binary triplet cache: header line + packed (row, col, value) records."""
        m = self.matrix.tocoo()
        header = {
            "K": int(self.matrix.shape[0]),
            "kappa": int(self.matrix.shape[1]),
            "nnz": int(m.nnz),
            "partition_h_rows": base64.b64encode(
                np.packbits(self.row_kind_h).tobytes()
            ).decode(),
            "h_cols": base64.b64encode(np.packbits(self.h_cols).tobytes()).decode(),
            "row_ideal": base64.b64encode(
                self.row_ideal.astype(np.int8).tobytes()
            ).decode(),
            "row_circuit": base64.b64encode(
                self.row_circuit.astype(np.int64).tobytes()
            ).decode(),
            "row_obs": base64.b64encode(self.row_obs.astype(np.int64).tobytes()).decode(),
            "circuit_ids": self.circuit_ids,
            "obs_labels": self.obs_labels,
            "model_fingerprint": self.model_fingerprint,
        }
        with open(path, "wb") as f:
            f.write(b"LGSTD1\n")
            f.write((json.dumps(header, sort_keys=True) + "\n").encode())
            rec = struct.Struct("<qqd")
            for r, c, v in zip(m.row, m.col, m.data):
                f.write(rec.pack(int(r), int(c), float(v)))

    @classmethod
    def load(cls, path) -> "DesignMatrix":
        with open(path, "rb") as f:
            magic = f.readline()
            if magic != b"LGSTD1\n":
                raise DesignError(f"{path}: not a design-matrix cache")
            header = json.loads(f.readline().decode())
            raw = f.read()
        nnz = header["nnz"]
        K, kappa = header["K"], header["kappa"]
        arr = np.frombuffer(raw, dtype=[("r", "<i8"), ("c", "<i8"), ("v", "<f8")], count=nnz)
        mat = sp.coo_matrix(
            (arr["v"], (arr["r"], arr["c"])), shape=(K, kappa)
        ).tocsr()
        unpack = lambda s, dt: np.frombuffer(base64.b64decode(s), dtype=dt)
        kind = np.unpackbits(unpack(header["partition_h_rows"], np.uint8))[:K].astype(bool)
        hcols = np.unpackbits(unpack(header["h_cols"], np.uint8))[:kappa].astype(bool)
        return cls(
            matrix=mat,
            row_circuit=unpack(header["row_circuit"], np.int64).copy(),
            row_obs=unpack(header["row_obs"], np.int64).copy(),
            row_kind_h=kind,
            row_ideal=unpack(header["row_ideal"], np.int8).copy(),
            h_cols=hcols,
            circuit_ids=header["circuit_ids"],
            obs_labels=header["obs_labels"],
            model_fingerprint=header["model_fingerprint"],
        )


def _obs_arrays(n: int, observables, frame):
    """Zero-frame observable arrays (bits, i-power sign, x, z)."""
    qb = np.empty(len(observables), dtype=np.int64)
    qs = np.empty(len(observables), dtype=np.int8)
    for j, Q in enumerate(observables):
        qhat = frame.observable_hat(Q)
        qb[j] = qhat.x << n | qhat.z
        qs[j] = 1 if qhat.phase == 0 else -1
    return qb, qs


def _circuit_rows(circuit: Circuit, model: ErrorModel, observables):
    """COO triplets (obs_row, param, value) plus per-row (kind_h, ideal)."""
    n = model.n
    frame = zero_frame(circuit, model)
    mask = (1 << n) - 1
    px = (frame.bits >> n).astype(np.uint64)
    pz = (frame.bits & mask).astype(np.uint64)
    psign = frame.sign.astype(np.float64)
    pyc = np.bitwise_count(px & pz).astype(np.int64)
    qb, qs = _obs_arrays(n, observables, frame)
    qx = (qb >> n).astype(np.uint64)
    qz = (qb & mask).astype(np.uint64)

    is_h = frame.is_h
    h_idx = np.flatnonzero(is_h)
    s_idx = np.flatnonzero(~is_h)
    rows_j, cols, vals = [], [], []
    kind_h = np.zeros(len(observables), dtype=bool)
    ideal = np.zeros(len(observables), dtype=np.int8)
    for j in range(len(observables)):
        z_type = qx[j] == 0
        ideal[j] = qs[j] if z_type else 0
        kind_h[j] = not z_type
        if z_type:
            # stochastic row: -2 * ideal for every anticommuting S occurrence
            if len(s_idx) == 0:
                continue
            sx, szz = px[s_idx], pz[s_idx]
            anti = (np.bitwise_count(qx[j] & szz) + np.bitwise_count(qz[j] & sx)) & 1
            hit = np.flatnonzero(anti)
            if len(hit):
                cols.append(frame.param[s_idx[hit]])
                vals.append(np.full(len(hit), -2.0 * ideal[j]))
                rows_j.append(np.full(len(hit), j, dtype=np.int64))
        else:
            # Hamiltonian row: nonzero iff Q_hat * P_hat anticommute and the
            # product is Z-type; value +-2 from the exact product phase
            if len(h_idx) == 0:
                continue
            hx, hz = px[h_idx], pz[h_idx]
            match = hx == qx[j]
            if not match.any():
                continue
            mi = np.flatnonzero(match)
            hx, hz = hx[mi], hz[mi]
            anti = (np.bitwise_count(qx[j] & hz) + np.bitwise_count(qz[j] & hx)) & 1
            hit = np.flatnonzero(anti)
            if len(hit) == 0:
                continue
            hx, hz = hx[hit], hz[hit]
            sel = h_idx[mi[hit]]
            mz = qz[j] ^ hz
            # phase of Q_hat * P_hat (Q left): base phases + product correction
            g = (
                np.bitwise_count(qx[j] & qz[j]).astype(np.int64)
                + pyc[sel]
                - np.bitwise_count((qx[j] ^ hx) & mz).astype(np.int64)
                + 2 * np.bitwise_count(qz[j] & hx).astype(np.int64)
            )
            qphase = 0 if qs[j] == 1 else 2
            pphase = np.where(psign[sel] > 0, 0, 2).astype(np.int64)
            phase = (qphase + pphase + g) & 3
            val = np.where(phase == 1, 2.0, -2.0)
            cols.append(frame.param[sel])
            vals.append(val)
            rows_j.append(np.full(len(sel), j, dtype=np.int64))
    if rows_j:
        return (
            np.concatenate(rows_j),
            np.concatenate(cols),
            np.concatenate(vals),
            kind_h,
            ideal,
        )
    return (
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.float64),
        kind_h,
        ideal,
    )


def _rows_chunk(args):
    circuits, model, observables = args
    return [_circuit_rows(c, model, observables) for c in circuits]


def build_design(
    design: ExperimentDesign, model: ErrorModel, n_jobs: int = 1
) -> DesignMatrix:
    """K x kappa sensitivity matrix, K = circuits x observables."""
    if design.n != model.n:
        raise ModelError(f"design n={design.n} vs model n={model.n}")
    if model.n > 63:
        raise DesignError("vectorized design build supports n <= 63")
    observables = design.observables
    m = len(observables)
    results = []
    if n_jobs and n_jobs > 1 and len(design.circuits) > 4:
        chunks = [
            (list(design.circuits[i::n_jobs]), model, observables)
            for i in range(n_jobs)
        ]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_rows_chunk, chunks))
        results = [None] * len(design.circuits)
        for i, part in enumerate(parts):
            for k, res in enumerate(part):
                results[i + k * n_jobs] = res
    else:
        results = [_circuit_rows(c, model, observables) for c in design.circuits]

    K = len(design.circuits) * m
    rows, cols, vals = [], [], []
    kind_h = np.zeros(K, dtype=bool)
    ideal = np.zeros(K, dtype=np.int8)
    for ci, (rj, cc, vv, kh, idl) in enumerate(results):
        base = ci * m
        rows.append(rj + base)
        cols.append(cc)
        vals.append(vv)
        kind_h[base : base + m] = kh
        ideal[base : base + m] = idl
    mat = sp.coo_matrix(
        (
            np.concatenate(vals) if vals else np.empty(0),
            (
                np.concatenate(rows) if rows else np.empty(0, dtype=np.int64),
                np.concatenate(cols) if cols else np.empty(0, dtype=np.int64),
            ),
        ),
        shape=(K, model.kappa),
    ).tocsr()
    mat.sum_duplicates()
    return DesignMatrix(
        matrix=mat,
        row_circuit=np.repeat(np.arange(len(design.circuits), dtype=np.int64), m),
        row_obs=np.tile(np.arange(m, dtype=np.int64), len(design.circuits)),
        row_kind_h=kind_h,
        row_ideal=ideal,
        h_cols=model.h_mask(),
        circuit_ids=[c.circuit_id for c in design.circuits],
        obs_labels=[o.to_label(with_sign=False) for o in observables],
        model_fingerprint=model.fingerprint(),
    )


# ---------------------------------------------------------------------------
# rank diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankReport:
    kappa: int
    rank: int
    rank_h: int
    rank_s: int
    n_h_params: int
    n_s_params: int
    cond_h: float
    cond_s: float
    cond_joint: float
    threshold: float
    exact: bool = True  # False when the Gram fallback limited rank resolution

    @property
    def ratio(self) -> float:
        return self.rank / self.kappa if self.kappa else 1.0

    @property
    def full_rank(self) -> bool:
        return self.kappa == 0 or self.rank == self.kappa

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["ratio"] = self.ratio
        d["full_rank"] = self.full_rank
        return d


_SVD_DENSE_LIMIT = 6 * 10**7  # densify blocks up to this many elements


def block_singular_values(block) -> np.ndarray:
    """Exact singular values of a (sparse) block, descending.

    Densifies when affordable; otherwise reduces via QR of row chunks, which
    preserves singular values exactly (orthogonal reduction).
    """
    K, p = block.shape
    if K == 0 or p == 0:
        return np.zeros(0)
    if K * p <= _SVD_DENSE_LIMIT:
        dense = block.toarray() if sp.issparse(block) else np.asarray(block)
        return np.linalg.svd(dense, compute_uv=False)
    R = np.zeros((0, p))
    chunk = max(1, _SVD_DENSE_LIMIT // (2 * p))
    for s in range(0, K, chunk):
        part = block[s : s + chunk]
        dense = part.toarray() if sp.issparse(part) else np.asarray(part)
        R = np.linalg.qr(np.vstack([R, dense]), mode="r")
    return np.linalg.svd(R, compute_uv=False)


def _block_rank(svals: np.ndarray, K: int, p: int):
    if len(svals) == 0 or svals[0] == 0.0:
        return 0, float("inf"), 0.0
    smax = float(svals[0])
    tol = max(K, p) * smax * RANK_TOL_FACTOR
    keep = svals > tol
    rank = int(np.count_nonzero(keep))
    cond = float(smax / svals[keep].min()) if rank else float("inf")
    return rank, cond, smax


def rank_report(D: DesignMatrix) -> RankReport:
    K = D.matrix.shape[0]
    _, DH = D.h_block()
    _, DS = D.s_block()
    sv_h = block_singular_values(DH) if DH.shape[1] else np.zeros(0)
    sv_s = block_singular_values(DS) if DS.shape[1] else np.zeros(0)
    rank_h, cond_h, smax_h = _block_rank(sv_h, max(K, 1), max(DH.shape[1], 1))
    rank_s, cond_s, smax_s = _block_rank(sv_s, max(K, 1), max(DS.shape[1], 1))
    smax = max(smax_h, smax_s)
    mins = []
    for sv, r, pp in ((sv_h, rank_h, DH.shape[1]), (sv_s, rank_s, DS.shape[1])):
        if r:
            tol = max(K, pp) * sv[0] * RANK_TOL_FACTOR
            mins.append(sv[sv > tol].min())
    cond_joint = float(smax / min(mins)) if mins else float("inf")
    return RankReport(
        kappa=D.kappa,
        rank=rank_h + rank_s,
        rank_h=rank_h,
        rank_s=rank_s,
        n_h_params=int(D.h_cols.sum()),
        n_s_params=int((~D.h_cols).sum()),
        cond_h=cond_h,
        cond_s=cond_s,
        cond_joint=cond_joint,
        threshold=float(max(K, D.kappa) * smax * RANK_TOL_FACTOR),
    )


def grow_until_full_rank(
    model: ErrorModel,
    sampler,
    batch: int,
    max_circuits: int,
    w: int = 2,
    depth: int = 15,
    seed: int = 0,
):
    """Add circuits in batches until the design matrix reaches full rank.

    `sampler(rng, count) -> list[Circuit]`; defaults to the standard random
    sampler when None.  Returns (design, report, n_circuits_used); if the
    cap is reached the report is simply not full rank.
    """
    if batch < 1:
        raise DesignError("batch must be >= 1")
    rng = np.random.default_rng(seed)
    if sampler is None:
        sampler = lambda r, count: [
            sample_random_circuit(model.n, depth, rng=r) for _ in range(count)
        ]
    observables = enumerate_observables(model.n, w)
    circuits: list[Circuit] = []
    # R carries the exact singular values of the rows accumulated so far
    # (QR is an orthogonal reduction), so the spec rank threshold applies.
    R = np.zeros((0, model.kappa))
    while len(circuits) < max_circuits:
        new = sampler(rng, min(batch, max_circuits - len(circuits)))
        circuits.extend(new)
        rows = []
        for c in new:
            rj, cc, vv, _, _ = _circuit_rows(c, model, observables)
            m = sp.coo_matrix(
                (vv, (rj, cc)), shape=(len(observables), model.kappa)
            ).toarray()
            rows.append(m)
        R = np.linalg.qr(np.vstack([R] + rows), mode="r")
        sv = np.linalg.svd(R, compute_uv=False)
        rank, _, _ = _block_rank(sv, len(circuits) * len(observables), model.kappa)
        if rank == model.kappa:
            break
    design = ExperimentDesign(
        model.n, w, depth, tuple(circuits), {"name": "grow_until_full_rank"}, seed
    )
    D = build_design(design, model)
    return design, rank_report(D), len(circuits)
