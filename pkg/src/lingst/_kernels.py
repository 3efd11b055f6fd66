"""Numba kernels for the two hot paths.

Pauli-transfer-matrix (PTM) vector convention: a 4^n real vector indexed by
idx = (x << n) | z holding the coefficients c_T = Tr[T rho] of the canonical
Hermitian basis Paulis.  Elementary generators are sparse in this basis:
S_P is diagonal (0 or -2 where P anticommutes), H_P maps T to +-2 * (P T).
"""

from __future__ import annotations

import numpy as np
from numba import njit

POPTABLE = np.array(
    [bin(i).count("1") for i in range(1 << 16)], dtype=np.uint8
)


@njit(cache=True, inline="always")
def _pop32(v, table):
    # values here carry at most 2n <= 26 bits
    return table[v & 0xFFFF] + table[(v >> 16) & 0xFFFF]


@njit(cache=True)
def evolve_ptm(
    dim,
    step_kind,  # int8[S]: 0 = error exp, 1 = ideal-layer permutation
    step_idx,  # int32[S] into the respective pools
    csr_indptr,  # int64[n_csr, dim+1]
    csr_cols,  # int32[total_nnz]
    csr_off,  # int64[n_csr+1] offsets into csr_cols/data
    data,  # float64[total_nnz] (model-dependent values)
    norm1,  # float64[n_csr] max column abs sum per error factor
    perms,  # int64[n_perm, dim]
    psigns,  # float64[n_perm, dim]
    v,  # float64[dim], evolved in place (returned)
    theta,  # substep norm target
    max_terms,
):
    w = np.empty(dim)
    w2 = np.empty(dim)
    out = np.empty(dim)
    for s in range(step_kind.shape[0]):
        si = step_idx[s]
        if step_kind[s] == 1:
            p = perms[si]
            sg = psigns[si]
            for i in range(dim):
                out[p[i]] = sg[i] * v[i]
            for i in range(dim):
                v[i] = out[i]
        else:
            off = csr_off[si]
            indptr = csr_indptr[si]
            nsub = int(norm1[si] / theta) + 1
            inv_sub = 1.0 / nsub
            for _ in range(nsub):
                for i in range(dim):
                    w[i] = v[i]
                vmax = 0.0
                for i in range(dim):
                    av = abs(v[i])
                    if av > vmax:
                        vmax = av
                for t in range(1, max_terms + 1):
                    scale = inv_sub / t
                    for i in range(dim):
                        s2 = 0.0
                        for k in range(indptr[i], indptr[i + 1]):
                            s2 += data[off + k] * w[csr_cols[off + k]]
                        w2[i] = s2 * scale
                    wmax = 0.0
                    for i in range(dim):
                        w[i] = w2[i]
                        v[i] += w2[i]
                        aw = abs(w2[i])
                        if aw > wmax:
                            wmax = aw
                    if wmax <= 1e-16 * vmax:
                        break
    return v


@njit(cache=True)
def accumulate_gram(ptr, cols, vals, kind_h, ys, row_lo, row_hi, GH, GS, bH, bS):
    """Add rows [row_lo, row_hi) of a per-kind compact CSR into running normal
    equations; ys holds one observation vector per row (several datasets)."""
    nN = ys.shape[0]
    for r in range(row_lo, row_hi):
        lo = ptr[r]
        hi = ptr[r + 1]
        if hi == lo:
            continue
        if kind_h[r]:
            for a in range(lo, hi):
                ca = cols[a]
                va = vals[a]
                for b2 in range(lo, hi):
                    GH[ca, cols[b2]] += va * vals[b2]
                for t in range(nN):
                    bH[t, ca] += va * ys[t, r]
        else:
            for a in range(lo, hi):
                ca = cols[a]
                va = vals[a]
                for b2 in range(lo, hi):
                    GS[ca, cols[b2]] += va * vals[b2]
                for t in range(nN):
                    bS[t, ca] += va * ys[t, r]


@njit(cache=True)
def taylor_propagate(
    n,
    k,
    slot_ptr,  # int64[F+1]
    g_bits,  # int64[G] (x << n) | z of the zero-frame generator label
    g_swap,  # int64[G] (z << n) | x, for anticommutation parity
    g_zp,  # int64[G] z bits of the label
    g_yc,  # int64[G] y-count of the label
    g_rate,  # float64[G] rate with Hamiltonian sign folded in
    g_is_h,  # uint8[G]
    obs_slot,  # int32[dim]: observable index + 1, or 0
    reach,  # uint8[dim]: 1 if within one generator XOR of an observable
    out_obs,  # float64[n_obs], accumulates total coefficients (all degrees)
    table,  # POPTABLE
):
    """Order-k Taylor expansion of the zero-frame product of error-channel
    exponentials, applied forward to rho = |0..0><0..0|.

    State entries live on the canonical Pauli basis with real coefficients
    resolved by total degree in the rates; entries reaching degree k fold
    straight into the observables (later factors can only raise the degree).
    Entries at the top stored degree k-1 are kept only when `reach` marks
    them able to hit an observable, which is exact pruning.
    """
    dim = 1 << (2 * n)
    nmask = (1 << n) - 1
    F = slot_ptr.shape[0] - 1

    svals = np.zeros((k, dim))
    socc = np.empty((k, dim), dtype=np.int64)
    snocc = np.zeros(k, dtype=np.int64)
    sin = np.zeros((k, dim), dtype=np.uint8)
    wvals = np.zeros((k, dim))
    wocc = np.empty((k, dim), dtype=np.int64)
    wnocc = np.zeros(k, dtype=np.int64)
    win = np.zeros((k, dim), dtype=np.uint8)
    nvals = np.zeros((k, dim))
    nocc2 = np.empty((k, dim), dtype=np.int64)
    nnocc = np.zeros(k, dtype=np.int64)
    nin = np.zeros((k, dim), dtype=np.uint8)

    # seed: all Z-type subsets with coefficient 1 at degree 0
    for z in range(1 << n):
        svals[0, z] = 1.0
        socc[0, z] = z
        sin[0, z] = 1
    snocc[0] = 1 << n

    for f in range(F):
        gi0 = slot_ptr[f]
        gi1 = slot_ptr[f + 1]
        if gi1 == gi0:
            continue
        # w := state
        for d in range(k):
            wnocc[d] = snocc[d]
            for t in range(snocc[d]):
                idx = socc[d, t]
                wocc[d, t] = idx
                wvals[d, idx] = svals[d, idx]
                win[d, idx] = 1
        for m in range(1, k + 1):
            inv_m = 1.0 / m
            # clear wnew
            for d in range(k):
                for t in range(nnocc[d]):
                    idx = nocc2[d, t]
                    nvals[d, idx] = 0.0
                    nin[d, idx] = 0
                nnocc[d] = 0
            any_new = False
            for d in range(k):
                nw = d + 1  # target degree
                for t in range(wnocc[d]):
                    idx = wocc[d, t]
                    val = wvals[d, idx]
                    if val == 0.0:
                        continue
                    xT = idx >> n
                    zT = idx & nmask
                    ycT = _pop32(xT & zT, table)
                    for g in range(gi0, gi1):
                        if _pop32(idx & g_swap[g], table) & 1:
                            if g_is_h[g]:
                                tgt = idx ^ g_bits[g]
                                ph = (
                                    g_yc[g]
                                    + ycT
                                    - _pop32((tgt >> n) & (tgt & nmask), table)
                                    + 2 * _pop32(g_zp[g] & xT, table)
                                ) & 3
                                if ph == 1:
                                    c = 2.0 * g_rate[g] * val * inv_m
                                else:
                                    c = -2.0 * g_rate[g] * val * inv_m
                            else:
                                tgt = idx
                                c = -2.0 * g_rate[g] * val * inv_m
                            if nw < k:
                                if nw == k - 1 and k >= 2 and reach[tgt] == 0:
                                    continue
                                if nin[nw, tgt] == 0:
                                    nin[nw, tgt] = 1
                                    nocc2[nw, nnocc[nw]] = tgt
                                    nnocc[nw] += 1
                                    nvals[nw, tgt] = c
                                else:
                                    nvals[nw, tgt] += c
                                any_new = True
                            else:
                                j = obs_slot[tgt]
                                if j > 0:
                                    out_obs[j - 1] += c
            # w := wnew (swap buffers), then state += w
            for d in range(k):
                # clear w at degree d
                for t in range(wnocc[d]):
                    idx = wocc[d, t]
                    wvals[d, idx] = 0.0
                    win[d, idx] = 0
                wnocc[d] = nnocc[d]
                for t in range(nnocc[d]):
                    idx = nocc2[d, t]
                    wocc[d, t] = idx
                    c = nvals[d, idx]
                    wvals[d, idx] = c
                    win[d, idx] = 1
                    if sin[d, idx] == 0:
                        sin[d, idx] = 1
                        socc[d, snocc[d]] = idx
                        snocc[d] += 1
                        svals[d, idx] = c
                    else:
                        svals[d, idx] += c
            if not any_new:
                break

    # read degree-<k coefficients at the observables
    for d in range(k):
        for t in range(snocc[d]):
            idx = socc[d, t]
            j = obs_slot[idx]
            if j > 0:
                out_obs[j - 1] += svals[d, idx]
    return out_obs
