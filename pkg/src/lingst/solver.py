"""Decoupled linear solves: minimum-norm pseudoinverse for Hamiltonian rates,
Lawson-Hanson non-negative least squares for stochastic rates, plus shot-noise
uncertainty estimation (linear propagation or circuit bootstrap).

Both solvers work from the normal equations (G = D^T D, b = D^T y), which is
exact for least squares and lets large sweeps reuse precomputed Grams; the
pseudo-solve uses the eigendecomposition of G (the right singular subspace of
D) with the same rank threshold as the design diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .design import RANK_TOL_FACTOR, DesignMatrix
from .errormodel import ErrorModel, RateVector
from .errors import DataError

NNLS_TOL_FACTOR = 1e-10  # KKT tolerance = this * ||D^T y||_inf
NNLS_ITER_FACTOR = 10  # iteration cap = this * (number of columns)


@dataclass(frozen=True)
class ObservationVector:
    """Per-row expectation changes aligned with a DesignMatrix's rows."""

    delta: np.ndarray  # measured minus ideal expectation, in [-2, 2]
    shots: np.ndarray  # per-row shot count, np.inf allowed
    ideal: np.ndarray  # ideal expectation per row, in {-1, 0, 1}

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float)
        s = np.asarray(self.shots, dtype=float)
        i = np.asarray(self.ideal, dtype=float)
        if not (d.shape == s.shape == i.shape):
            raise DataError("delta/shots/ideal must align")
        if np.any(np.abs(d) > 2 + 1e-12):
            raise DataError("delta outside [-2, 2]")
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "shots", s)
        object.__setattr__(self, "ideal", i)

    def __len__(self):
        return len(self.delta)


def _as_dense_gram(D, y):
    """(G, b, yty, K) from a dense or sparse matrix."""
    if sp.issparse(D):
        G = (D.T @ D).toarray()
        b = np.asarray(D.T @ y).ravel()
    else:
        D = np.asarray(D, dtype=float)
        G = D.T @ D
        b = D.T @ y
    return G, b, float(np.dot(y, y)), D.shape[0]


@dataclass(frozen=True)
class HSolution:
    x: np.ndarray
    residual: float
    rank: int
    nullspace_dim: int
    threshold: float
    singular_values: np.ndarray = field(repr=False, default=None)
    method: str = "svd"


# Gram eigenvalues below max(K,p)*lambda_max*this are numerically void: forming
# D^T D squares the spectrum, so true zeros surface at ~eps*lambda_max.
GRAM_EVAL_TOL = 1e-12
_SVD_DENSE_LIMIT = 2 * 10**7  # max K*p elements to densify for an exact SVD


def solve_hamiltonian_gram(
    G: np.ndarray, b: np.ndarray, yty: float, K: int
) -> HSolution:
    """Minimum-norm least-squares solution from normal equations.

    Rank discrimination is limited to ~sqrt(eps) relative singular values by
    Gram arithmetic; directions below that are treated as nullspace.
    """
    p = G.shape[0]
    if p == 0:
        return HSolution(np.zeros(0), float(np.sqrt(max(yty, 0.0))), 0, 0, 0.0, np.zeros(0), "gram")
    evals, vecs = np.linalg.eigh(G)
    evals = np.clip(evals, 0.0, None)
    svals = np.sqrt(evals)
    smax = svals[-1]
    tol = max(K, p) * smax * RANK_TOL_FACTOR
    keep = (svals > tol) & (evals > max(K, p) * evals[-1] * GRAM_EVAL_TOL)
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        x = np.zeros(p)
    else:
        V = vecs[:, keep]
        x = V @ ((V.T @ b) / evals[keep])
    resid_sq = max(yty - 2.0 * float(b @ x) + float(x @ (G @ x)), 0.0)
    return HSolution(
        x=x,
        residual=float(np.sqrt(resid_sq)),
        rank=rank,
        nullspace_dim=p - rank,
        threshold=float(tol),
        singular_values=svals[::-1].copy(),
        method="gram",
    )


def _solve_svd(D: np.ndarray, y: np.ndarray) -> HSolution:
    K, p = D.shape
    U, svals, Vt = np.linalg.svd(D, full_matrices=False)
    smax = svals[0] if len(svals) else 0.0
    tol = max(K, p) * smax * RANK_TOL_FACTOR
    keep = svals > tol
    rank = int(np.count_nonzero(keep))
    x = Vt[keep].T @ ((U[:, keep].T @ y) / svals[keep]) if rank else np.zeros(p)
    residual = float(np.linalg.norm(D @ x - y))
    return HSolution(x, residual, rank, p - rank, float(tol), svals.copy(), "svd")


def solve_hamiltonian(D_H, y_H) -> HSolution:
    """eps_H = pinv(D_H) @ y_H, minimum-norm, with the design rank threshold.

    Uses an exact thin SVD whenever densifying D_H is affordable, otherwise
    the Gram path (documented coarser rank cut).
    """
    y_H = np.asarray(y_H, dtype=float)
    if D_H.shape[0] != len(y_H):
        raise DataError(f"D rows {D_H.shape[0]} != y length {len(y_H)}")
    K, p = D_H.shape
    if p == 0 or K == 0:
        return HSolution(np.zeros(p), float(np.linalg.norm(y_H)), 0, p, 0.0, np.zeros(0), "svd")
    if K * p <= _SVD_DENSE_LIMIT:
        dense = D_H.toarray() if sp.issparse(D_H) else np.asarray(D_H, dtype=float)
        return _solve_svd(dense, y_H)
    G, b, yty, K = _as_dense_gram(D_H, y_H)
    return solve_hamiltonian_gram(G, b, yty, K)


@dataclass(frozen=True)
class SSolution:
    x: np.ndarray
    residual: float
    iterations: int
    converged: bool
    kkt_residual: float  # max KKT violation / ||D^T y||_inf
    active: np.ndarray = field(repr=False, default=None)  # x > 0 support


def nnls_gram(
    G: np.ndarray,
    b: np.ndarray,
    yty: float = 0.0,
    tol: float | None = None,
    max_iter: int | None = None,
) -> SSolution:
    """Lawson-Hanson active-set NNLS from normal equations.

    KKT at the solution: x >= 0, and the gradient g = Gx - b satisfies
    g_i >= -tol when x_i = 0 and |g_i| <= tol when x_i > 0.
    """
    p = G.shape[0]
    if p == 0:
        return SSolution(np.zeros(0), float(np.sqrt(max(yty, 0.0))), 0, True, 0.0, np.zeros(0, bool))
    scale = float(np.max(np.abs(b))) if np.any(b) else 0.0
    if scale == 0.0:
        return SSolution(np.zeros(p), float(np.sqrt(max(yty, 0.0))), 0, True, 0.0, np.zeros(p, bool))
    if tol is None:
        tol = NNLS_TOL_FACTOR * scale
    if max_iter is None:
        max_iter = NNLS_ITER_FACTOR * p

    x = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    iters = 0
    converged = False

    def passive_solve():
        idx = np.flatnonzero(passive)
        Gpp = G[np.ix_(idx, idx)]
        try:
            z = np.linalg.solve(Gpp, b[idx])
        except np.linalg.LinAlgError:
            z = np.linalg.lstsq(Gpp, b[idx], rcond=None)[0]
        return idx, z

    while iters < max_iter:
        w = b - G @ x
        w_free = np.where(~passive, w, -np.inf)
        j = int(np.argmax(w_free))
        if w_free[j] <= tol:
            converged = True
            break
        iters += 1
        passive[j] = True
        while True:
            idx, z = passive_solve()
            if np.all(z > 0):
                x = np.zeros(p)
                x[idx] = z
                break
            # classic inner step: move toward z until a coordinate hits zero
            neg = z <= 0
            alpha = np.min(x[idx[neg]] / (x[idx[neg]] - z[neg]))
            x[idx] = x[idx] + alpha * (z - x[idx])
            drop = idx[x[idx] <= 1e-15 * scale]
            x[drop] = 0.0
            passive[drop] = False
            if not passive.any():
                x = np.zeros(p)
                break

    w = b - G @ x
    viol = 0.0
    if np.any(~passive):
        viol = max(viol, float(np.max(w[~passive])))
    if np.any(passive):
        viol = max(viol, float(np.max(np.abs(w[passive]))))
    viol = max(viol, float(-np.min(x)) if len(x) else 0.0)
    resid_sq = max(yty - 2.0 * float(b @ x) + float(x @ (G @ x)), 0.0)
    return SSolution(
        x=x,
        residual=float(np.sqrt(resid_sq)),
        iterations=iters,
        converged=converged,
        kkt_residual=max(viol, 0.0) / scale,
        active=x > 0,
    )


def solve_stochastic(D_S, y_S, tol: float | None = None, max_iter: int | None = None) -> SSolution:
    """argmin ||D_S x - y_S||_2 subject to x >= 0 (Lawson-Hanson)."""
    y_S = np.asarray(y_S, dtype=float)
    if D_S.shape[0] != len(y_S):
        raise DataError(f"D rows {D_S.shape[0]} != y length {len(y_S)}")
    G, b, yty, _ = _as_dense_gram(D_S, y_S)
    return nnls_gram(G, b, yty, tol=tol, max_iter=max_iter)


# ---------------------------------------------------------------------------
# end-to-end fit
# ---------------------------------------------------------------------------


@dataclass
class Estimate:
    rates: np.ndarray  # full kappa vector in canonical parameter order
    h_solution: HSolution
    s_solution: SSolution
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_rate_vector(self, model: ErrorModel) -> RateVector:
        vals = self.rates.copy()
        vals[model.s_mask()] = np.maximum(vals[model.s_mask()], 0.0)
        return RateVector(model, vals)

    def to_dict(self, model: ErrorModel, model_ref: str = "") -> dict:
        entries = []
        for i, (gid, kind, label) in enumerate(model.param_keys()):
            e = {
                "gate": gid,
                "kind": kind,
                "pauli": label.to_label(with_sign=False),
                "value": float(self.rates[i]),
            }
            if self.stderr is not None:
                e["stderr"] = float(self.stderr[i])
            entries.append(e)
        return {
            "model_ref": model_ref,
            "rates": entries,
            "residuals": {
                "hamiltonian": self.h_solution.residual,
                "stochastic": self.s_solution.residual,
            },
            "solver_meta": {
                "h_rank": self.h_solution.rank,
                "h_nullspace_dim": self.h_solution.nullspace_dim,
                "h_rank_threshold": self.h_solution.threshold,
                "nnls_iterations": self.s_solution.iterations,
                "nnls_converged": self.s_solution.converged,
                "nnls_kkt_residual": self.s_solution.kkt_residual,
                **self.meta,
            },
        }


def fit(D: DesignMatrix, obs: ObservationVector) -> Estimate:
    """Solve the decoupled H/S systems of a design matrix against observations."""
    if len(obs) != D.matrix.shape[0]:
        raise DataError(f"observations ({len(obs)}) do not align with K={D.matrix.shape[0]}")
    h_rows, DH = D.h_block()
    s_rows, DS = D.s_block()
    hsol = solve_hamiltonian(DH, obs.delta[h_rows])
    ssol = solve_stochastic(DS, obs.delta[s_rows])
    rates = np.zeros(D.kappa)
    rates[np.flatnonzero(D.h_cols)] = hsol.x
    rates[np.flatnonzero(~D.h_cols)] = ssol.x
    return Estimate(rates=rates, h_solution=hsol, s_solution=ssol)


# ---------------------------------------------------------------------------
# uncertainty
# ---------------------------------------------------------------------------


def _row_variances(obs: ObservationVector) -> np.ndarray:
    """Shot-noise variance (1 - <Q>^2)/N per row; zero for N = inf."""
    q = np.clip(obs.ideal + obs.delta, -1.0, 1.0)
    var = (1.0 - q**2)
    out = np.zeros_like(var)
    finite = np.isfinite(obs.shots)
    out[finite] = var[finite] / np.maximum(obs.shots[finite], 1.0)
    return out


def _linear_propagation_stderr(D: DesignMatrix, obs: ObservationVector, est: Estimate):
    var = _row_variances(obs)
    stderr = np.zeros(D.kappa)

    h_rows, DH = D.h_block()
    if DH.shape[1]:
        G = (DH.T @ DH).toarray()
        evals, vecs = np.linalg.eigh(G)
        evals = np.clip(evals, 0, None)
        svals = np.sqrt(evals)
        keep = svals > (est.h_solution.threshold or 0.0)
        if keep.any():
            # pinv(D_H) = V diag(1/lambda) (D_H V)^T; se_i^2 = sum_r pinv_{ir}^2 var_r
            V = vecs[:, keep]
            W = DH @ V
            W = (W.toarray() if sp.issparse(W) else np.asarray(W)) / evals[keep]
            vh = var[h_rows]
            se2 = np.zeros(V.shape[0])
            chunk = 20000
            for s in range(0, W.shape[0], chunk):
                P = V @ W[s : s + chunk].T
                se2 += (P**2) @ vh[s : s + chunk]
            stderr[np.flatnonzero(D.h_cols)] = np.sqrt(se2)

    s_rows, DS = D.s_block()
    if DS.shape[1]:
        act = np.flatnonzero(est.s_solution.active)
        if len(act):
            DA = DS[:, act]
            GA = (DA.T @ DA).toarray()
            try:
                Ginv = np.linalg.inv(GA)
            except np.linalg.LinAlgError:
                Ginv = np.linalg.pinv(GA)
            DAd = DA.toarray() if sp.issparse(DA) else np.asarray(DA)
            P = Ginv @ DAd.T
            se2 = (P**2) @ var[s_rows]
            se_s = np.zeros(DS.shape[1])
            se_s[act] = np.sqrt(se2)
            stderr[np.flatnonzero(~D.h_cols)] = se_s
    return stderr


def _bootstrap_stderr(
    D: DesignMatrix, obs: ObservationVector, n_boot: int, seed: int
) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n_circ = int(D.row_circuit.max()) + 1 if len(D.row_circuit) else 0
    var = _row_variances(obs)
    samples = np.zeros((n_boot, D.kappa))
    # resample whole circuits with replacement, preserving cross-observable
    # correlations within a circuit
    rows_by_circuit = [np.flatnonzero(D.row_circuit == c) for c in range(n_circ)]
    for bi in range(n_boot):
        draw = rng.integers(0, n_circ, size=n_circ)
        rows = np.concatenate([rows_by_circuit[c] for c in draw])
        Db = D.subset_rows(rows)
        ob = ObservationVector(obs.delta[rows], obs.shots[rows], obs.ideal[rows])
        samples[bi] = fit(Db, ob).rates
    return samples.std(axis=0, ddof=1)


def estimate_uncertainty(
    D: DesignMatrix,
    obs: ObservationVector,
    est: Estimate,
    method: str = "linear_propagation",
    n_boot: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """Per-parameter standard errors from shot noise.

    linear_propagation pushes per-row variances (1-<Q>^2)/N through the
    pseudoinverse (H block) and through the NNLS active set held fixed
    (S block); bootstrap refits whole-circuit resamples.
    """
    if not np.any(np.isfinite(obs.shots)):
        return np.zeros(D.kappa)
    if method == "linear_propagation":
        return _linear_propagation_stderr(D, obs, est)
    if method == "bootstrap":
        return _bootstrap_stderr(D, obs, n_boot, seed)
    raise DataError(f"unknown uncertainty method {method!r}")
