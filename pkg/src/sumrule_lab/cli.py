"""Command-line front end: ``sumrule-lab <command> ...``.

Exit status: 0 success, 2 bad input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import EnsembleConfig, empirical_diagnostics, run_sampler
from .equilibrium import equilibrium_measure
from .errors import NumericalError, ValidationError
from .files import (RunManifest, as_model, env_seed, fmt, read_jacobi, read_json, read_measure,
                    read_potential, write_csv, write_json)
from .jacobi import jacobi_to_measure, measure_to_jacobi, trace_poly
from .sumrule import gem_check, pseudorate_gap, quartic_alternation, verify_sum_rule

log = logging.getLogger("sumrule_lab")


def _manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def _finish(man: RunManifest, outputs, manifest_path=None) -> None:
    for p in outputs:
        man.add(p)
    man.write(manifest_path or _manifest_path(outputs[0]))


# ------------------------------------------------------------- commands

def cmd_equilibrium(args) -> int:
    V = read_potential(args.potential)
    domain = tuple(args.domain) if args.domain else None
    eq = equilibrium_measure(V, method=args.method, gridsize=args.grid, domain=domain)
    man = RunManifest.start({"potential": V.to_json(), "method": args.method, "grid": args.grid,
                             "domain": domain})
    out = write_json(args.out, eq.measure.to_json())
    print("support:", " U ".join(f"[{fmt(l)}, {fmt(r)}]" for l, r in eq.support.intervals))
    if eq.A is not None:
        print("A:", " ".join(fmt(c) for c in eq.A.coeffs))
    _finish(man, [out])
    return 0


def cmd_jacobi(args) -> int:
    if args.action == "from-measure":
        mu = read_measure(args.measure)
        r = measure_to_jacobi(mu, args.N)
        if len(r) < args.N:
            print(f"note: measure has finite support; sequence stops at length {len(r)}")
        man = RunManifest.start({"measure": read_json(args.measure), "N": args.N})
        out = write_json(args.out, r.to_json())
        _finish(man, [out])
    elif args.action == "to-measure":
        r = read_jacobi(args.jacobi)
        mu = jacobi_to_measure(r)
        man = RunManifest.start({"jacobi": r.to_json()})
        out = write_json(args.out, mu.to_json())
        _finish(man, [out])
    else:
        r = read_jacobi(args.jacobi)
        V = read_potential(args.potential)
        N = len(r) if args.N is None else args.N
        print(fmt(trace_poly(r, N, V)))
    return 0


def cmd_sumrule(args) -> int:
    if args.action == "quartic-gap":
        demo = quartic_alternation(args.v, args.N)
        print(f"pseudorate gap (abar^2 = l2 labeling): {fmt(pseudorate_gap(args.v))}")
        print(f"odd-index limit of mu_V coefficients: {demo.odd_limit}")
        print(f"predicted gap for that parity: {fmt(demo.predicted_gap)}")
        print(f"finite-N estimate U_{demo.N} - U_{demo.N - 1}: {fmt(demo.finite_N_gap)}")
        return 0
    V = read_potential(args.potential)
    mu = as_model(read_measure(args.measure))
    if args.action == "verify":
        rep = verify_sum_rule(mu, V, args.N, args.K, jobs=args.jobs)
        man = RunManifest.start({"measure": mu.to_json(), "potential": V.to_json(), "N": args.N,
                                 "K": args.K})
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(rep.to_csv())
        js = write_json(out.with_suffix(".json"), rep.to_json())
        print(f"verdict: {rep.verdict}")
        print(f"U_N at N={args.N}: {fmt(rep.U[-1])}; spectral side: {fmt(rep.spectral_total)}")
        _finish(man, [out, js])
    else:
        rep = gem_check(mu, V, N_max=args.N, threshold=args.threshold)
        body = {"in_S1": rep.in_S1, "outlier_sum": rep.outlier_sum, "kl": rep.kl,
                "sup_U": rep.sup_U, "spectral_finite": rep.spectral_finite,
                "coefficient_bounded": rep.coefficient_bounded, "consistent": rep.consistent,
                "threshold": rep.threshold}
        for k, v in body.items():
            print(f"{k}: {v}")
        if args.out:
            man = RunManifest.start({"measure": mu.to_json(), "potential": V.to_json(),
                                     "N": args.N, "threshold": args.threshold})
            _finish(man, [write_json(args.out, body)])
    return 0


def _run_chain(cfg: EnsembleConfig):
    return cfg, run_sampler(cfg)


def cmd_sample(args) -> int:
    raw = read_json(args.config)
    if not isinstance(raw, dict):
        raise ValidationError(f"{args.config}: config must be a JSON object")
    cfg = EnsembleConfig.from_json(raw)
    cfg = replace(cfg, seed=env_seed(cfg.seed))
    cfgs = [replace(cfg, seed=cfg.seed + i) for i in range(args.chains)]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as ex:
        results = list(ex.map(_run_chain, cfgs))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    man = RunManifest.start(cfg.to_json(), seed=cfg.seed)
    states = []
    for ci, (c, ms) in enumerate(results):
        for k, m in enumerate(ms):
            man.add(write_json(outdir / f"chain{ci:02d}_state{k:05d}.json", m.to_json()))
            states.append(m)
    if len(states) >= 10:
        muV = equilibrium_measure(cfg.V).measure
        diag = empirical_diagnostics(states, muV)
        man.add(write_csv(outdir / "diagnostics.csv", ["metric", "value"], [
            ("ks", diag.ks), ("ks_pvalue", diag.ks_pvalue), ("n_points", diag.n_points),
            ("edge", diag.edge), ("rightmost_near_edge", diag.rightmost_near_edge),
            ("gap_fraction", "not-applicable" if diag.gap_fraction is None
             else fmt(diag.gap_fraction))]))
        counts, edges = diag.rightmost_hist
        man.add(write_csv(outdir / "rightmost_hist.csv", ["left", "right", "count"],
                          [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))]))
        print(f"KS distance to mu_V: {fmt(diag.ks)}")
    print(f"{len(states)} states written to {outdir}")
    man.write(outdir / "manifest.json")
    return 0


def cmd_quartic_demo(args) -> int:
    demo = quartic_alternation(args.v, args.N)
    outdir = Path(args.out)
    man = RunManifest.start({"v": args.v, "N": args.N})
    files = [
        write_csv(outdir / "coefficients.csv", ["k", "a_k_mu_V", "a_k_swapped"],
                  [(k + 1, demo.rV.a[k], demo.r_swapped.a[k]) for k in range(demo.N)]),
        write_csv(outdir / "U.csv", ["N", "U_N"],
                  [(k + 1, u) for k, u in enumerate(demo.U)]),
        write_csv(outdir / "parity_gaps.csv", ["N", "U_2N_minus_U_2N-1"],
                  [(k + 1, g) for k, g in enumerate(demo.parity_gaps)]),
        write_json(outdir / "summary.json", {
            "v": demo.v, "N": demo.N, "ell": list(demo.ell), "odd_limit": demo.odd_limit,
            "predicted_gap": demo.predicted_gap, "gap_abar_larger": demo.spec_label_gap,
            "finite_N_gap": demo.finite_N_gap,
            "min_oscillation_last_half": float(np.min(demo.oscillation[demo.N // 2:]))}),
    ]
    print(f"odd-index limit: {demo.odd_limit}; predicted gap {fmt(demo.predicted_gap)}; "
          f"finite-N gap {fmt(demo.finite_N_gap)}")
    for p in files:
        man.add(p)
    man.write(outdir / "manifest.json")
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sumrule-lab", description=__doc__.splitlines()[0],
                                allow_abbrev=False)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("equilibrium", help="equilibrium measure of a potential")
    e.add_argument("--potential", required=True, help="JSON array of coefficients, lowest first")
    e.add_argument("--method", choices=("auto", "onecut", "grid"), default="auto")
    e.add_argument("--grid", type=int, default=1200, help="grid size for the grid solver")
    e.add_argument("--domain", type=float, nargs=2, metavar=("A", "B"))
    e.add_argument("--out", default="measure.json")
    e.set_defaults(func=cmd_equilibrium)

    j = sub.add_parser("jacobi", help="Jacobi coefficients <-> spectral measures")
    js = j.add_subparsers(dest="action", required=True)
    f = js.add_parser("from-measure", help="recurrence coefficients of a measure")
    f.add_argument("--measure", required=True)
    f.add_argument("--N", type=int, required=True)
    f.add_argument("--out", default="jacobi.json")
    t = js.add_parser("to-measure", help="spectral measure of a finite Jacobi matrix")
    t.add_argument("--jacobi", required=True)
    t.add_argument("--out", default="measure.json")
    tr = js.add_parser("trace", help="tr V of the N x N truncation")
    tr.add_argument("--jacobi", required=True)
    tr.add_argument("--potential", required=True)
    tr.add_argument("--N", type=int)
    j.set_defaults(func=cmd_jacobi)

    s = sub.add_parser("sumrule", help="sum rule and gem checks")
    ss = s.add_subparsers(dest="action", required=True)
    v = ss.add_parser("verify", help="coefficient side vs spectral side")
    v.add_argument("--measure", required=True)
    v.add_argument("--potential", required=True)
    v.add_argument("--N", type=int, default=400)
    v.add_argument("--K", type=float, required=True)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--out", default="report.csv")
    g = ss.add_parser("gem", help="finiteness of both sides")
    g.add_argument("--measure", required=True)
    g.add_argument("--potential", required=True)
    g.add_argument("--N", type=int, default=400)
    g.add_argument("--threshold", type=float, default=10.0)
    g.add_argument("--out")
    q = ss.add_parser("quartic-gap", help="alternation gap of the swapped quartic sequence")
    q.add_argument("--v", type=float, default=3.0)
    q.add_argument("--N", type=int, default=300)
    s.set_defaults(func=cmd_sumrule)

    sa = sub.add_parser("sample", help="sample the ensemble")
    sa.add_argument("--config", required=True)
    sa.add_argument("--out", default="samples")
    sa.add_argument("--chains", type=int, default=1, help="independent chains, seeds seed+i")
    sa.add_argument("--jobs", type=int, default=1)
    sa.set_defaults(func=cmd_sample)

    qd = sub.add_parser("quartic-demo", help="two-cut quartic reproduction data")
    qd.add_argument("--v", type=float, default=3.0)
    qd.add_argument("--N", type=int, default=300)
    qd.add_argument("--out", default="quartic_demo")
    qd.set_defaults(func=cmd_quartic_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
