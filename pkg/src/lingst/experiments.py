"""The five standard simulation studies: estimator accuracy (with and without
shot noise), scaling with circuit count and shots, robustness to reduced
ansätze, breakdown of the linear approximation with error magnitude, and
design-matrix rank for random sparse models.

Each run_* function is a pure function of its config (seeds included) and
returns a result object; `emit` methods write CSV/JSON/SVG artifacts.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import accumulate_gram
from .design import DesignMatrix, ExperimentDesign, build_design, make_design, rank_report
from .errormodel import ErrorModel, RateVector, build_paper_model, build_random_model
from .manifest import RunManifest, write_csv, write_json
from .simulator import (
    SimulatorConfig,
    SimDataset,
    add_shot_noise,
    evolve_dense,
    generate_dataset,
    _build_dense_plan,
)
from .solver import (
    Estimate,
    ObservationVector,
    fit,
    nnls_gram,
    solve_hamiltonian_gram,
)
from .svgplot import boxplot_svg, histogram_svg, scatter_svg

CLASS_NAMES = ("H_w1", "H_w2", "S_w1", "S_w2")


def default_jobs() -> int:
    env = os.environ.get("LINGST_JOBS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def param_classes(model: ErrorModel) -> np.ndarray:
    """Class index per parameter: 0..3 for (H/S) x (weight 1/2), -1 otherwise."""
    out = np.full(model.kappa, -1, dtype=np.int64)
    for i, (_, kind, label) in enumerate(model.param_keys()):
        w = label.weight
        if w in (1, 2):
            out[i] = (0 if kind == "H" else 2) + (w - 1)
    return out


def class_stats(err: np.ndarray, truth: np.ndarray, classes: np.ndarray) -> dict:
    """Per-class median/mean absolute error and mean true magnitude."""
    stats = {}
    for ci, name in enumerate(CLASS_NAMES):
        m = classes == ci
        if not m.any():
            continue
        stats[name] = {
            "median_abs_err": float(np.median(np.abs(err[m]))),
            "mean_abs_err": float(np.mean(np.abs(err[m]))),
            "mean_true_magnitude": float(np.mean(np.abs(truth[m]))),
            "count": int(m.sum()),
        }
    return stats


# ---------------------------------------------------------------------------
# shared bundle: the standard n-qubit dataset every study reuses
# ---------------------------------------------------------------------------


@dataclass
class StandardBundle:
    model: ErrorModel
    rates: RateVector
    design: ExperimentDesign
    D: DesignMatrix
    dataset_inf: SimDataset  # analytic expectations (N = inf)

    def observation(self, dataset: SimDataset) -> ObservationVector:
        return ObservationVector(dataset.delta(), dataset.shots, dataset.ideal)


@dataclass
class BundleConfig:
    n: int = 10
    circuits: int = 1000
    depth: int = 15
    w: int = 2
    k: int = 3
    seed: int = 2024
    jobs: int = 0  # 0 -> default_jobs()

    def resolve_jobs(self) -> int:
        return self.jobs or default_jobs()


def build_bundle(cfg: BundleConfig) -> StandardBundle:
    """Model + design + design matrix + order-k dataset at N = inf."""
    model, rates = build_paper_model(cfg.n, seed=cfg.seed)
    design = make_design(
        cfg.n, cfg.circuits, depth=cfg.depth, w=cfg.w, seed=cfg.seed + 1
    )
    jobs = cfg.resolve_jobs()
    D = build_design(design, model, n_jobs=jobs)
    sim = SimulatorConfig(backend="taylor", k=cfg.k, seed=cfg.seed)
    dataset = generate_dataset(design, model, rates, sim, n_jobs=jobs)
    return StandardBundle(model, rates, design, D, dataset)


# ---------------------------------------------------------------------------
# accuracy study (true vs estimated rates, with and without shot noise)
# ---------------------------------------------------------------------------


@dataclass
class Fig2Config:
    bundle: BundleConfig = field(default_factory=BundleConfig)
    shots: int = 1000


@dataclass
class Fig2Result:
    truth: np.ndarray
    est_inf: np.ndarray
    est_shots: np.ndarray
    shots: int
    classes: np.ndarray
    stats_inf: dict
    stats_shots: dict
    rank: dict
    seed: int

    def emit(self, outdir, manifest: RunManifest) -> None:
        os.makedirs(outdir, exist_ok=True)
        rows = [
            (i, int(self.classes[i]), repr(float(self.truth[i])), repr(float(self.est_inf[i])), repr(float(self.est_shots[i])))
            for i in range(len(self.truth))
        ]
        write_csv(
            os.path.join(outdir, "accuracy_rates.csv"),
            ["param", "class", "true", "est_inf", f"est_N{self.shots}"],
            rows,
            manifest,
        )
        write_json(
            os.path.join(outdir, "accuracy_report.json"),
            {
                "stats_inf": self.stats_inf,
                "stats_shots": self.stats_shots,
                "rank": self.rank,
                "shots": self.shots,
                "seed": self.seed,
            },
            manifest,
        )
        hcls = self.classes < 2
        for tag, est in (("inf", self.est_inf), (f"N{self.shots}", self.est_shots)):
            svg = scatter_svg(
                self.truth,
                est,
                title=f"true vs estimated rates ({tag})",
                xlabel="true rate",
                ylabel="estimated rate",
                diagonal=True,
                colors=["steelblue" if h else "darkorange" for h in hcls],
                comment=f"manifest {manifest.hash}",
            )
            with open(os.path.join(outdir, f"accuracy_scatter_{tag}.svg"), "w") as f:
                f.write(svg)
            for kname, mask in (("H", hcls), ("S", ~hcls)):
                svg = histogram_svg(
                    np.abs(est - self.truth)[mask],
                    title=f"|estimate - truth| ({kname}, {tag})",
                    xlabel="absolute error",
                    comment=f"manifest {manifest.hash}",
                    log=True,
                )
                with open(
                    os.path.join(outdir, f"accuracy_hist_{kname}_{tag}.svg"), "w"
                ) as f:
                    f.write(svg)


def run_fig2(cfg: Fig2Config, bundle: StandardBundle | None = None) -> Fig2Result:
    if bundle is None:
        bundle = build_bundle(cfg.bundle)
    classes = param_classes(bundle.model)
    truth = bundle.rates.values

    est_inf = fit(bundle.D, bundle.observation(bundle.dataset_inf)).rates
    rng = np.random.default_rng(cfg.bundle.seed + 7)
    noisy = add_shot_noise(bundle.dataset_inf, cfg.shots, rng=rng)
    est_shots = fit(bundle.D, bundle.observation(noisy)).rates

    return Fig2Result(
        truth=truth,
        est_inf=est_inf,
        est_shots=est_shots,
        shots=cfg.shots,
        classes=classes,
        stats_inf=class_stats(est_inf - truth, truth, classes),
        stats_shots=class_stats(est_shots - truth, truth, classes),
        rank=rank_report(bundle.D).to_dict(),
        seed=cfg.bundle.seed,
    )


# ---------------------------------------------------------------------------
# scaling study (error vs circuit count and shots)
# ---------------------------------------------------------------------------


@dataclass
class Fig3Config:
    bundle: BundleConfig = field(default_factory=BundleConfig)
    sizes: tuple = (25, 50, 100, 200, 400, 700, 1000)
    shots_grid: tuple = (100, 1000, 10000, math.inf)
    subsets: int = 500
    seed: int = 77


@dataclass
class Fig3Result:
    sizes: tuple
    shots_grid: tuple
    mean_abs: np.ndarray  # [class, size, N] averaged over subset draws
    band: np.ndarray  # std over subset draws
    reference: np.ndarray  # mean |true| per class
    subsets: int

    def emit(self, outdir, manifest: RunManifest) -> None:
        os.makedirs(outdir, exist_ok=True)
        rows = []
        for ci, cname in enumerate(CLASS_NAMES):
            for si, size in enumerate(self.sizes):
                for ni, N in enumerate(self.shots_grid):
                    rows.append(
                        (
                            cname,
                            size,
                            "inf" if math.isinf(N) else int(N),
                            repr(float(self.mean_abs[ci, si, ni])),
                            repr(float(self.band[ci, si, ni])),
                        )
                    )
        write_csv(
            os.path.join(outdir, "scaling_mean_abs_error.csv"),
            ["class", "circuits", "shots", "mean_abs_err", "subset_std"],
            rows,
            manifest,
        )
        write_json(
            os.path.join(outdir, "scaling_report.json"),
            {
                "sizes": list(self.sizes),
                "shots_grid": ["inf" if math.isinf(N) else int(N) for N in self.shots_grid],
                "reference_mean_true_magnitude": [float(r) for r in self.reference],
                "subsets": self.subsets,
                "classes": list(CLASS_NAMES),
            },
            manifest,
        )


def _compact_csr(D: DesignMatrix):
    """Per-kind compact-column CSR views of the full matrix."""
    m = D.matrix.tocsr()
    h_compact = np.cumsum(D.h_cols) - 1
    s_compact = np.cumsum(~D.h_cols) - 1
    cols = m.indices.copy().astype(np.int64)
    colkind = D.h_cols[m.indices]
    cols[colkind] = h_compact[m.indices[colkind]]
    cols[~colkind] = s_compact[m.indices[~colkind]]
    return m.indptr.astype(np.int64), cols, m.data, int(D.h_cols.sum()), int((~D.h_cols).sum())


def _fig3_passes(args):
    (csr, kind_h, ys, sizes, m, nC, truths, clss, seed, pass_ids) = args
    ptr, cols, vals, pH, pS = csr
    truth_h, truth_s = truths
    cls_h, cls_s = clss
    nN = ys.shape[0]
    sum_err = np.zeros((4, len(sizes), nN))
    sum_sq = np.zeros_like(sum_err)
    for pass_i in pass_ids:
        prng = np.random.default_rng(seed + 1000 + pass_i)
        order = prng.permutation(nC)
        GH = np.zeros((pH, pH))
        GS = np.zeros((pS, pS))
        bH = np.zeros((nN, pH))
        bS = np.zeros((nN, pS))
        pos = 0
        for si, size in enumerate(sizes):
            for c in order[pos:size]:
                accumulate_gram(
                    ptr, cols, vals, kind_h, ys, c * m, (c + 1) * m, GH, GS, bH, bS
                )
            pos = size
            K_rows = size * m
            for ni in range(nN):
                hs = solve_hamiltonian_gram(GH, bH[ni], 0.0, K_rows)
                ss = nnls_gram(GS, bS[ni])
                err_h = np.abs(hs.x - truth_h)
                err_s = np.abs(ss.x - truth_s)
                for ci in range(4):
                    vals_c = err_h[cls_h == ci] if ci < 2 else err_s[cls_s == ci]
                    if len(vals_c):
                        mu = float(vals_c.mean())
                        sum_err[ci, si, ni] += mu
                        sum_sq[ci, si, ni] += mu * mu
    return sum_err, sum_sq


def run_fig3(cfg: Fig3Config, bundle: StandardBundle) -> Fig3Result:
    D = bundle.D
    truth = bundle.rates.values
    classes = param_classes(bundle.model)
    nC = len(bundle.design.circuits)
    m = len(bundle.design.observables)
    sizes = tuple(s for s in cfg.sizes if s <= nC)

    # one noisy dataset per N, shared by every subset (sub-sampling reuses data)
    rng = np.random.default_rng(cfg.seed)
    ys = []
    for N in cfg.shots_grid:
        ds = add_shot_noise(bundle.dataset_inf, N, rng=rng) if not math.isinf(N) else bundle.dataset_inf
        ys.append(ds.delta())
    ys = np.asarray(ys)

    csr = _compact_csr(D)
    hmask_params = D.h_cols
    truths = (truth[hmask_params], truth[~hmask_params])
    clss = (classes[hmask_params], classes[~hmask_params])

    jobs = cfg.bundle.resolve_jobs()
    pass_chunks = [list(range(cfg.subsets))[i::jobs] for i in range(jobs)]
    pass_chunks = [ch for ch in pass_chunks if ch]
    args = [
        (csr, D.row_kind_h, ys, sizes, m, nC, truths, clss, cfg.seed, ch)
        for ch in pass_chunks
    ]
    if len(args) > 1:
        with ProcessPoolExecutor(max_workers=len(args)) as pool:
            parts = list(pool.map(_fig3_passes, args))
    else:
        parts = [_fig3_passes(args[0])]
    sum_err = sum(p[0] for p in parts)
    sum_sq = sum(p[1] for p in parts)

    mean_abs = sum_err / cfg.subsets
    var = np.clip(sum_sq / cfg.subsets - mean_abs**2, 0.0, None)
    band = np.sqrt(var)
    reference = np.array(
        [np.abs(truth[classes == ci]).mean() if (classes == ci).any() else np.nan for ci in range(4)]
    )
    return Fig3Result(sizes, tuple(cfg.shots_grid), mean_abs, band, reference, cfg.subsets)


# ---------------------------------------------------------------------------
# reduced-ansatz robustness study
# ---------------------------------------------------------------------------


@dataclass
class Fig4Config:
    bundle: BundleConfig = field(default_factory=BundleConfig)
    etas: tuple = ("1/kappa", 0.25, 0.5, 0.75, 1.0)
    models_per_eta: int = 150
    seed: int = 99


@dataclass
class Fig4Result:
    etas: list  # resolved numeric etas
    eta_labels: list
    abs_errors: list  # per eta: pooled |est - truth| over retained params
    medians: list
    reference: float  # mean |true rate|
    models_per_eta: int

    def emit(self, outdir, manifest: RunManifest) -> None:
        os.makedirs(outdir, exist_ok=True)
        rows = []
        for lbl, med, errs in zip(self.eta_labels, self.medians, self.abs_errors):
            q1, q3 = np.percentile(errs, [25, 75])
            rows.append((lbl, repr(float(med)), repr(float(q1)), repr(float(q3)), len(errs)))
        write_csv(
            os.path.join(outdir, "reduced_ansatz_stats.csv"),
            ["eta", "median_abs_err", "q1", "q3", "n_values"],
            rows,
            manifest,
        )
        write_json(
            os.path.join(outdir, "reduced_ansatz_report.json"),
            {
                "etas": self.eta_labels,
                "medians": [float(v) for v in self.medians],
                "reference_mean_true_magnitude": self.reference,
                "models_per_eta": self.models_per_eta,
                "note": "model count per eta follows the figure caption (150); "
                "the body text mentions 100 in one sentence",
            },
            manifest,
        )
        svg = boxplot_svg(
            dict(zip(self.eta_labels, self.abs_errors)),
            title="estimation error vs retained parameter fraction",
            xlabel="eta",
            ylabel="|estimate - truth|",
            refline=self.reference,
            ylog=True,
            comment=f"manifest {manifest.hash}",
        )
        with open(os.path.join(outdir, "reduced_ansatz_box.svg"), "w") as f:
            f.write(svg)


def run_fig4(cfg: Fig4Config, bundle: StandardBundle) -> Fig4Result:
    D = bundle.D
    kappa = D.kappa
    truth = bundle.rates.values
    y = bundle.dataset_inf.delta()
    K = D.matrix.shape[0]

    # block-diagonal normal equations over all parameters (H rows touch only
    # H columns, so restricting columns restricts the blocks consistently)
    G = (D.matrix.T @ D.matrix).toarray()
    b = np.asarray(D.matrix.T @ y).ravel()
    hmask = D.h_cols

    etas = []
    labels = []
    for e in cfg.etas:
        if e == "1/kappa":
            etas.append(1.0 / kappa)
            labels.append(f"1/{kappa}")
        else:
            etas.append(float(e))
            labels.append(f"{e:g}")

    rng = np.random.default_rng(cfg.seed)
    abs_errors = []
    medians = []
    for eta in etas:
        size = max(1, round(eta * kappa))
        pooled = []
        n_models = 1 if size == kappa else cfg.models_per_eta
        for _ in range(n_models):
            subset = (
                np.arange(kappa)
                if size == kappa
                else np.sort(rng.choice(kappa, size=size, replace=False))
            )
            hsub = subset[hmask[subset]]
            ssub = subset[~hmask[subset]]
            est = np.zeros(kappa)
            if len(hsub):
                hs = solve_hamiltonian_gram(G[np.ix_(hsub, hsub)], b[hsub], 0.0, K)
                est[hsub] = hs.x
            if len(ssub):
                ss = nnls_gram(G[np.ix_(ssub, ssub)], b[ssub])
                est[ssub] = ss.x
            pooled.append(np.abs(est[subset] - truth[subset]))
        pooled = np.concatenate(pooled)
        abs_errors.append(pooled)
        medians.append(float(np.median(pooled)))
    return Fig4Result(
        etas=etas,
        eta_labels=labels,
        abs_errors=abs_errors,
        medians=medians,
        reference=float(np.abs(truth).mean()),
        models_per_eta=cfg.models_per_eta,
    )


# ---------------------------------------------------------------------------
# error-magnitude breakdown study (dense backend)
# ---------------------------------------------------------------------------


@dataclass
class Fig5Config:
    n: int = 5
    circuits: int = 150
    depth: int = 15
    w: int = 2
    c_values: tuple = tuple(range(1, 19))
    models_per_c: int = 50
    seed: int = 555
    jobs: int = 0

    def resolve_jobs(self) -> int:
        return self.jobs or default_jobs()


@dataclass
class Fig5Result:
    c_values: tuple
    medians: np.ndarray  # pooled median |est - truth| per c
    medians_h: np.ndarray
    medians_s: np.ndarray
    references: np.ndarray  # mean |true rate| per c
    abs_errors: list  # pooled per c (subsampled for plots)

    def emit(self, outdir, manifest: RunManifest) -> None:
        os.makedirs(outdir, exist_ok=True)
        rows = [
            (c, repr(float(self.medians[i])), repr(float(self.medians_h[i])), repr(float(self.medians_s[i])), repr(float(self.references[i])))
            for i, c in enumerate(self.c_values)
        ]
        write_csv(
            os.path.join(outdir, "breakdown_medians.csv"),
            ["c", "median_abs_err", "median_abs_err_H", "median_abs_err_S", "mean_true_magnitude"],
            rows,
            manifest,
        )
        write_json(
            os.path.join(outdir, "breakdown_report.json"),
            {
                "c_values": list(self.c_values),
                "medians": [float(v) for v in self.medians],
                "references": [float(v) for v in self.references],
            },
            manifest,
        )
        svg = boxplot_svg(
            {str(c): e for c, e in zip(self.c_values, self.abs_errors)},
            title="estimation error vs error-scale factor c",
            xlabel="c",
            ylabel="|estimate - truth|",
            ylog=True,
            comment=f"manifest {manifest.hash}",
        )
        with open(os.path.join(outdir, "breakdown_box.svg"), "w") as f:
            f.write(svg)


def _fig5_chunk(args):
    (cfg, c_list) = args
    model, _ = build_paper_model(cfg.n, seed=cfg.seed)
    design = make_design(cfg.n, cfg.circuits, depth=cfg.depth, w=cfg.w, seed=cfg.seed + 1)
    D = build_design(design, model)
    obs = design.observables
    plans = [_build_dense_plan(c, model) for c in design.circuits]
    ideal = np.array([D.row_ideal], dtype=float).ravel()
    ptr, cols, vals, pH, pS = _compact_csr(D)
    GH = np.zeros((pH, pH))
    GS = np.zeros((pS, pS))
    bH0 = np.zeros((1, pH))
    bS0 = np.zeros((1, pS))
    zero_y = np.zeros((1, D.matrix.shape[0]))
    accumulate_gram(ptr, cols, vals, D.row_kind_h, zero_y, 0, D.matrix.shape[0], GH, GS, bH0, bS0)
    hmask = D.h_cols
    m = len(obs)
    K = D.matrix.shape[0]
    zsel = np.array([q.z for q in obs], dtype=np.int64)

    out = {}
    for c in c_list:
        errs = []
        errs_h = []
        errs_s = []
        refs = []
        for inst in range(cfg.models_per_c):
            _, rates = build_paper_model(cfg.n, seed=cfg.seed + 100 + inst, scale_c=float(c))
            y = np.empty(K)
            for ci_, plan in enumerate(plans):
                v = evolve_dense(design.circuits[ci_], model, rates, plan=plan)
                y[ci_ * m : (ci_ + 1) * m] = v[zsel] - ideal[ci_ * m : (ci_ + 1) * m]
            bH = np.asarray((D.matrix.T @ y))[hmask]
            bS = np.asarray((D.matrix.T @ y))[~hmask]
            hs = solve_hamiltonian_gram(GH, bH, 0.0, K)
            ss = nnls_gram(GS, bS)
            truth = rates.values
            err = np.empty(len(truth))
            err[hmask] = hs.x - truth[hmask]
            err[~hmask] = ss.x - truth[~hmask]
            errs.append(np.abs(err))
            errs_h.append(np.abs(err[hmask]))
            errs_s.append(np.abs(err[~hmask]))
            refs.append(np.abs(truth).mean())
        out[c] = (
            np.concatenate(errs),
            np.concatenate(errs_h),
            np.concatenate(errs_s),
            float(np.mean(refs)),
        )
    return out


def run_fig5(cfg: Fig5Config) -> Fig5Result:
    jobs = cfg.resolve_jobs()
    cvals = list(cfg.c_values)
    chunks = [cvals[i::jobs] for i in range(jobs)] if jobs > 1 else [cvals]
    chunks = [ch for ch in chunks if ch]
    if len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(_fig5_chunk, [(cfg, ch) for ch in chunks]))
    else:
        parts = [_fig5_chunk((cfg, chunks[0]))]
    merged = {}
    for p in parts:
        merged.update(p)
    medians, medians_h, medians_s, refs, errors = [], [], [], [], []
    for c in cfg.c_values:
        e, eh, es, ref = merged[c]
        medians.append(float(np.median(e)))
        medians_h.append(float(np.median(eh)))
        medians_s.append(float(np.median(es)))
        refs.append(ref)
        errors.append(e[:: max(1, len(e) // 2000)])
    return Fig5Result(
        c_values=tuple(cfg.c_values),
        medians=np.asarray(medians),
        medians_h=np.asarray(medians_h),
        medians_s=np.asarray(medians_s),
        references=np.asarray(refs),
        abs_errors=errors,
    )


# ---------------------------------------------------------------------------
# rank / gauge-freedom study for random sparse models
# ---------------------------------------------------------------------------


@dataclass
class Fig6Config:
    n: int = 10
    kappas: tuple = (12, 25, 50, 100)
    instances: int = 12
    classes: tuple = ("H", "S", "HS")
    batch: int = 5
    max_circuits: int = 400
    depth: int = 15
    w: int = 2
    seed: int = 4242


@dataclass
class Fig6Result:
    records: list  # dicts: class, kappa, instance, circuits_needed, full_rank, ratio

    def emit(self, outdir, manifest: RunManifest) -> None:
        os.makedirs(outdir, exist_ok=True)
        write_csv(
            os.path.join(outdir, "rank_study.csv"),
            ["class", "kappa", "instance", "circuits_needed", "full_rank", "ratio"],
            [
                (r["class"], r["kappa"], r["instance"], r["circuits_needed"], r["full_rank"], repr(r["ratio"]))
                for r in self.records
            ],
            manifest,
        )
        write_json(
            os.path.join(outdir, "rank_study_report.json"),
            {"records": self.records},
            manifest,
        )

    def circuits_needed(self, klass: str, kappa: int) -> list:
        return [
            r["circuits_needed"]
            for r in self.records
            if r["class"] == klass and r["kappa"] == kappa
        ]


def run_fig6(cfg: Fig6Config) -> Fig6Result:
    from .design import grow_until_full_rank

    records = []
    for kappa in cfg.kappas:
        for inst in range(cfg.instances):
            # one circuit stream per (kappa, instance), shared across classes
            circuit_seed = cfg.seed + 17 * kappa + inst
            for klass in cfg.classes:
                model, _ = build_random_model(
                    cfg.n,
                    kappa,
                    klass,
                    seed=cfg.seed + 1000 * (1 + cfg.classes.index(klass)) + 31 * kappa + inst,
                    include_spam=(klass == "HS"),
                )
                _, report, used = grow_until_full_rank(
                    model,
                    None,
                    batch=cfg.batch,
                    max_circuits=cfg.max_circuits,
                    w=cfg.w,
                    depth=cfg.depth,
                    seed=circuit_seed,
                )
                records.append(
                    {
                        "class": klass,
                        "kappa": int(kappa),
                        "instance": int(inst),
                        "circuits_needed": int(used),
                        "full_rank": bool(report.full_rank),
                        "ratio": float(report.ratio),
                    }
                )
    return Fig6Result(records)
