"""Batch command-line front end.

Subcommands: model-gen, design-gen, simulate, fit, rank, and
experiment {fig2;fig3;fig4;fig5;fig6}.  Every run is deterministic under its
seeds and emits a RunManifest; outputs embed the manifest hash.  Exit codes:
0 success, 2 validation failure, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import experiments as exp
from .design import (
    DesignMatrix,
    ExperimentDesign,
    build_design,
    make_design,
    rank_report,
)
from .errormodel import ErrorModel, RateVector, build_paper_model, build_random_model
from .errors import LingstError
from .manifest import RunManifest, write_json
from .simulator import SimDataset, SimulatorConfig, add_shot_noise, generate_dataset
from .solver import ObservationVector, estimate_uncertainty, fit as solver_fit

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGED = 3


def _parse_shots(s: str) -> float:
    if s in ("inf", "Inf", "INF"):
        return math.inf
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("shots must be >= 1 or 'inf'")
    return float(v)


def cmd_model_gen(args) -> int:
    man = RunManifest(
        "model-gen",
        seeds={"seed": args.seed},
        config={
            "n": args.n,
            "kind": args.kind,
            "scale_c": args.scale_c,
            "kappa": args.kappa,
        },
    )
    if args.kind == "standard":
        model, rates = build_paper_model(args.n, seed=args.seed, scale_c=args.scale_c)
    else:
        model, rates = build_random_model(
            args.n,
            args.kappa,
            args.kind.split("-")[1],
            seed=args.seed,
            include_spam=args.spam,
        )
    model.save(args.out, rates if args.with_rates else None)
    if args.manifest:
        man.save(args.manifest)
    print(f"wrote {args.out}: n={model.n} kappa={model.kappa} gates={len(model.specs)}")
    return EXIT_OK


def cmd_design_gen(args) -> int:
    design = make_design(
        args.n,
        args.circuits,
        depth=args.depth,
        w=args.w,
        seed=args.seed,
        p_cz=args.p_cz,
    )
    design.save(args.out)
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "cmd")}
    man = RunManifest("design-gen", seeds={"seed": args.seed}, config=cfg)
    if args.manifest:
        man.save(args.manifest)
    print(
        f"wrote {args.out}: {len(design.circuits)} circuits, depth {design.depth}, "
        f"{len(design.observables)} observables per circuit"
    )
    return EXIT_OK


def _load_model(path) -> tuple[ErrorModel, RateVector | None]:
    return ErrorModel.load(path)


def cmd_simulate(args) -> int:
    model, rates = _load_model(args.model)
    if rates is None:
        print("error: model file carries no rates; cannot simulate", file=sys.stderr)
        return EXIT_VALIDATION
    design = ExperimentDesign.load(args.design)
    backend = "dense_exact" if args.backend == "dense" else "taylor"
    cfg = SimulatorConfig(backend=backend, k=args.k, seed=args.seed)
    dataset = generate_dataset(design, model, rates, cfg, n_jobs=args.jobs or exp.default_jobs())
    if not math.isinf(args.shots):
        rng = np.random.default_rng(args.seed)
        dataset = add_shot_noise(dataset, args.shots, rng=rng)
    man = RunManifest(
        "simulate",
        seeds={"seed": args.seed},
        config={"backend": backend, "k": args.k, "shots": args.shots},
    )
    man.add_input(args.model)
    man.add_input(args.design)
    dataset.meta["manifest_hash"] = man.hash
    dataset.save(args.out)
    if args.manifest:
        man.save(args.manifest)
    print(f"wrote {args.out}: {dataset.n_rows} rows, backend {backend}")
    return EXIT_OK


def read_dataset_records(path):
    """Rows of a dataset CSV as (circuit_id, observable, ideal, value, shots)."""
    out = []
    with open(path, newline="") as f:
        rd = csv.reader(f)
        header = next(rd)
        if header[:5] != ["circuit_id", "observable", "ideal", "value", "shots"]:
            raise LingstError(f"{path}: unexpected dataset header")
        for row in rd:
            out.append((row[0], row[1], float(row[2]), float(row[3]), float(row[4])))
    return out


def cmd_fit(args) -> int:
    model, _ = _load_model(args.model)
    design = ExperimentDesign.load(args.design)
    if args.matrix and os.path.exists(args.matrix):
        D = DesignMatrix.load(args.matrix)
        if D.model_fingerprint != model.fingerprint():
            print("error: cached matrix belongs to a different model", file=sys.stderr)
            return EXIT_VALIDATION
    else:
        D = build_design(design, model, n_jobs=args.jobs or exp.default_jobs())
        if args.matrix:
            D.save(args.matrix)

    records = read_dataset_records(args.dataset)
    index = {}
    for ci, cid in enumerate(D.circuit_ids):
        for oi, lbl in enumerate(D.obs_labels):
            index[(cid, lbl)] = ci * len(D.obs_labels) + oi
    K = D.matrix.shape[0]
    value = np.full(K, np.nan)
    shots = np.full(K, math.inf)
    unknown = 0
    for cid, lbl, _ideal, val, sh in records:
        r = index.get((cid, lbl))
        if r is None:
            unknown += 1
            continue
        value[r] = val
        shots[r] = sh
    have = ~np.isnan(value)
    dropped = int(K - have.sum())
    if dropped:
        print(f"warning: {dropped} design rows have no data and were dropped", file=sys.stderr)
    if unknown:
        print(f"warning: {unknown} dataset rows matched no design row", file=sys.stderr)
    if not have.any():
        print("error: no dataset rows align with the design", file=sys.stderr)
        return EXIT_VALIDATION
    rows = np.flatnonzero(have)
    Dfit = D.subset_rows(rows)
    obs = ObservationVector(
        value[rows] - D.row_ideal[rows].astype(float),
        shots[rows],
        D.row_ideal[rows].astype(float),
    )
    est = solver_fit(Dfit, obs)
    if args.uncertainty != "none":
        method = "bootstrap" if args.uncertainty.startswith("bootstrap") else "linear_propagation"
        n_boot = 100
        if ":" in args.uncertainty:
            n_boot = int(args.uncertainty.split(":")[1])
        est.stderr = estimate_uncertainty(
            Dfit, obs, est, method=method, n_boot=n_boot, seed=args.seed
        )
    man = RunManifest("fit", seeds={"seed": args.seed}, config={"uncertainty": args.uncertainty})
    for p in (args.model, args.design, args.dataset):
        man.add_input(p)
    report = rank_report(Dfit)
    payload = est.to_dict(model, model_ref=os.path.basename(args.model))
    payload["rank_report"] = report.to_dict()
    payload["dropped_rows"] = dropped
    write_json(args.out, payload, man)
    if args.manifest:
        man.save(args.manifest)
    print(
        f"wrote {args.out}: rank {report.rank}/{report.kappa}"
        + (" (rank deficient)" if not report.full_rank else "")
    )
    if not est.s_solution.converged:
        print("warning: NNLS hit its iteration cap", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_rank(args) -> int:
    model, _ = _load_model(args.model)
    design = ExperimentDesign.load(args.design)
    D = build_design(design, model, n_jobs=args.jobs or exp.default_jobs())
    report = rank_report(D)
    man = RunManifest("rank", config={})
    man.add_input(args.model)
    man.add_input(args.design)
    if args.out:
        write_json(args.out, report.to_dict(), man)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK if report.full_rank else EXIT_OK


def cmd_experiment(args) -> int:
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    jobs = args.jobs or exp.default_jobs()
    man = RunManifest(
        f"experiment-{args.which}",
        seeds={"seed": args.seed},
        config={
            k: v
            for k, v in vars(args).items()
            if k not in ("func", "which", "cmd") and v is not None
        },
    )
    n = args.n if args.n is not None else (5 if args.which == "fig5" else 10)
    circuits = args.circuits if args.circuits is not None else (
        150 if args.which == "fig5" else 1000
    )
    models = args.models if args.models is not None else (
        50 if args.which == "fig5" else 150
    )
    if args.which in ("fig2", "fig3", "fig4"):
        bcfg = exp.BundleConfig(
            n=n, circuits=circuits, depth=args.depth, k=args.k,
            seed=args.seed, jobs=jobs,
        )
        bundle = exp.build_bundle(bcfg)
        if args.which == "fig2":
            res = exp.run_fig2(exp.Fig2Config(bundle=bcfg, shots=int(args.shots)), bundle)
            res.emit(outdir, man)
            print(json.dumps({"stats_inf": res.stats_inf, "rank": res.rank}, indent=1))
        elif args.which == "fig3":
            res = exp.run_fig3(
                exp.Fig3Config(bundle=bcfg, subsets=args.subsets, seed=args.seed + 3),
                bundle,
            )
            res.emit(outdir, man)
            print(f"scaling study done: sizes {res.sizes}")
        else:
            res = exp.run_fig4(
                exp.Fig4Config(bundle=bcfg, models_per_eta=models, seed=args.seed + 4),
                bundle,
            )
            res.emit(outdir, man)
            print(json.dumps(dict(zip(res.eta_labels, res.medians)), indent=1))
    elif args.which == "fig5":
        cfg = exp.Fig5Config(
            n=n,
            circuits=circuits,
            depth=args.depth,
            c_values=tuple(range(args.c_min, args.c_max + 1)),
            models_per_c=models,
            seed=args.seed,
            jobs=jobs,
        )
        res = exp.run_fig5(cfg)
        res.emit(outdir, man)
        print(json.dumps({"c": list(res.c_values), "median": [float(v) for v in res.medians]}))
    elif args.which == "fig6":
        cfg = exp.Fig6Config(
            n=n,
            kappas=tuple(int(k) for k in args.kappas.split(",")),
            instances=args.instances,
            max_circuits=args.max_circuits,
            seed=args.seed,
        )
        res = exp.run_fig6(cfg)
        res.emit(outdir, man)
        ok = all(r["full_rank"] for r in res.records)
        print(f"rank study: {len(res.records)} instances, all full rank: {ok}")
    man.save(os.path.join(outdir, "manifest.json"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lingst",
        description="Sparse error-generator tomography for Clifford gate sets.",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    mg = sub.add_parser("model-gen", help="generate an error-model file")
    mg.add_argument("--n", type=int, required=True)
    mg.add_argument("--kind", default="standard",
                    choices=["standard", "random-H", "random-S", "random-HS"])
    mg.add_argument("--kappa", type=int, default=50, help="parameters for random models")
    mg.add_argument("--spam", action="store_true", help="add SPAM S_X errors to random models")
    mg.add_argument("--seed", type=int, default=0)
    mg.add_argument("--scale-c", type=float, default=1.0)
    mg.add_argument("--with-rates", action="store_true", default=True)
    mg.add_argument("--out", required=True)
    mg.add_argument("--manifest")
    mg.set_defaults(func=cmd_model_gen)

    dg = sub.add_parser("design-gen", help="sample a random-circuit experiment design")
    dg.add_argument("--n", type=int, required=True)
    dg.add_argument("--circuits", type=int, default=1000)
    dg.add_argument("--depth", type=int, default=15)
    dg.add_argument("--w", type=int, default=2)
    dg.add_argument("--p-cz", type=float, default=0.25)
    dg.add_argument("--seed", type=int, default=0)
    dg.add_argument("--out", required=True)
    dg.add_argument("--manifest")
    dg.set_defaults(func=cmd_design_gen)

    sm = sub.add_parser("simulate", help="generate a synthetic dataset")
    sm.add_argument("--model", required=True)
    sm.add_argument("--design", required=True)
    sm.add_argument("--backend", default="auto", choices=["auto", "dense", "taylor"])
    sm.add_argument("--k", type=int, default=3)
    sm.add_argument("--shots", type=_parse_shots, default=math.inf)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--jobs", type=int, default=0)
    sm.add_argument("--out", required=True)
    sm.add_argument("--manifest")
    sm.set_defaults(func=cmd_simulate)

    ft = sub.add_parser("fit", help="fit error rates to a dataset")
    ft.add_argument("--model", required=True)
    ft.add_argument("--design", required=True)
    ft.add_argument("--dataset", required=True)
    ft.add_argument("--matrix", help="design-matrix cache path (read or write)")
    ft.add_argument("--uncertainty", default="none",
                    help="none | linear | bootstrap[:B]")
    ft.add_argument("--seed", type=int, default=0)
    ft.add_argument("--jobs", type=int, default=0)
    ft.add_argument("--out", required=True)
    ft.add_argument("--manifest")
    ft.set_defaults(func=cmd_fit)

    rk = sub.add_parser("rank", help="design-matrix rank diagnostics")
    rk.add_argument("--model", required=True)
    rk.add_argument("--design", required=True)
    rk.add_argument("--jobs", type=int, default=0)
    rk.add_argument("--out")
    rk.set_defaults(func=cmd_rank)

    ex = sub.add_parser("experiment", help="run one of the standard studies")
    ex.add_argument("which", choices=["fig2", "fig3", "fig4", "fig5", "fig6"])
    ex.add_argument("--n", type=int, default=None)
    ex.add_argument("--circuits", type=int, default=None)
    ex.add_argument("--depth", type=int, default=15)
    ex.add_argument("--k", type=int, default=3)
    ex.add_argument("--shots", type=_parse_shots, default=1000)
    ex.add_argument("--subsets", type=int, default=500)
    ex.add_argument("--models", type=int, default=None)
    ex.add_argument("--c-min", type=int, default=1)
    ex.add_argument("--c-max", type=int, default=18)
    ex.add_argument("--kappas", default="12,25,50,100")
    ex.add_argument("--instances", type=int, default=12)
    ex.add_argument("--max-circuits", type=int, default=400)
    ex.add_argument("--seed", type=int, default=2024)
    ex.add_argument("--jobs", type=int, default=0)
    ex.add_argument("--out", required=True)
    ex.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LingstError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
