"""Command-line front end.

Exit codes: 0 the checked property holds, 1 a violation was found (a witness
file is written), 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .currents import (ChainError, energy, energy_via_gaussian_image, gaussian_image,
                       load_chain, mass, verify_aue)
from .integrands import BUILTINS, ClassicalIntegrand, QIntegrand, builtin, load
from .polyconvexity import (COUNTEREXAMPLE_TOL, ORIENTATION_MODES, Decomposition,
                            certify_sampled, search_counterexample, verify_instance)
from .qvalued import (area_formula_mass, load_multigraph, load_q_function,
                      make_graph_test_pair, q_energy, q_energy_via_graph,
                      random_affine_multigraph, random_q_function, verify_uqc)
from .rational_approx import approximate_decomposition
from .suite import equivalence_suite

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# serialisation


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_plain(report), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _summary_row(report: dict) -> dict:
    row = {}
    for key, value in report.items():
        if isinstance(value, (dict, list)) or value is None:
            if key == "summary" and isinstance(value, dict):
                row.update({k: v for k, v in value.items() if not isinstance(v, (dict, list))})
            continue
        row[key] = value
    return row


def to_csv(report: dict) -> str:
    row = _plain(_summary_row(report))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
    writer.writeheader()
    writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return buf.getvalue()


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None


def _integrand(args, n=None, k=None):
    source = args.integrand
    if source in BUILTINS and not Path(source).exists():
        n = args.n if args.n is not None else n
        k = args.k if args.k is not None else k
        if n is None or k is None:
            raise InputError(f"built-in integrand {source!r} needs --n and --k")
        return builtin(source, {"n": n, "k": k})
    _read_json(source)  # surface file and JSON errors as input errors
    return load(source)


def _decomposition(path) -> Decomposition:
    obj = _read_json(path)
    if isinstance(obj, dict) and "decomposition" in obj:
        obj = obj["decomposition"]  # witness bundles
    dec = Decomposition.from_json(obj)
    dec.validate()
    return dec


# ---------------------------------------------------------------------------
# commands; each returns (report, exit code, witness or None)


def cmd_upc_verify(args):
    dec = _decomposition(args.decomposition)
    psi = _integrand(args, dec.n, dec.k)
    rep = verify_instance(psi, args.c, dec, args.mode)
    out = {"command": "upc verify", **rep.to_json()}
    out["witness"] = None
    if rep.mode == "counterexample":
        return out, EXIT_VIOLATION, {"decomposition": dec.to_json(), "gap": rep.worst_gap}
    return out, EXIT_OK, None


def cmd_upc_search(args):
    psi = _integrand(args)
    params = {"d_min": args.d_min, "d_max": args.d_max, "orientation_mode": args.mode}
    found = search_counterexample(psi, args.c, args.budget, params, args.seed)
    out = {"command": "upc search", "c": args.c, "seed": args.seed, "budget": args.budget,
           "integrand": psi.to_config(), "found": found is not None,
           "worst_gap": None if found is None else found[1]}
    if found is not None:
        return out, EXIT_VIOLATION, {"decomposition": found[0].to_json(), "gap": found[1]}
    return out, EXIT_OK, None


def cmd_upc_certify(args):
    psi = _integrand(args)
    rep = certify_sampled(psi, args.c, args.dirs, args.atoms, args.seed, args.mode, args.threads)
    out = {"command": "upc certify", "integrand": psi.to_config(), **rep.to_json()}
    out["witness"] = None
    if rep.mode == "counterexample":
        return out, EXIT_VIOLATION, {"decomposition": rep.witness.to_json(), "gap": rep.worst_gap}
    return out, EXIT_OK, None


def cmd_approx_rational(args):
    dec = _decomposition(args.decomposition)
    rd = approximate_decomposition(dec, args.eps)
    out = {"command": "approx rational", **rd.to_json(),
           "summary": {"N": rd.N, "d": rd.d_original, "identity_exact": rd.identity_holds(),
                       "all_bounds_hold": rd.all_bounds_hold()}}
    if not rd.all_bounds_hold():
        return out, EXIT_VIOLATION, {"decomposition": dec.to_json(), "bounds": rd.bounds}
    return out, EXIT_OK, None


def cmd_energy_polyhedral(args):
    chain = load_chain(args.chain)
    psi = _integrand(args, chain.n, chain.k)
    e1, e2 = energy(psi, chain), energy_via_gaussian_image(psi, chain)
    out = {"command": "energy polyhedral", "integrand": psi.to_config(),
           "energy": e1, "energy_gaussian_image": e2, "mass": mass(chain),
           "n_cells": len(chain), "n_gaussian_atoms": len(gaussian_image(chain).atoms)}
    return out, EXIT_OK, None


def cmd_testpair_check(args):
    s, d = load_chain(args.S), load_chain(args.D)
    psi = _integrand(args, s.n, s.k)
    gap = verify_aue(psi, args.c, s, d)
    out = {"command": "testpair check", "c": args.c, "integrand": psi.to_config(), "gap": gap,
           "energy_S": energy(psi, s), "energy_D": energy(psi, d),
           "mass_S": mass(s), "mass_D": mass(d)}
    if gap < -COUNTEREXAMPLE_TOL:
        return out, EXIT_VIOLATION, {"S": s.to_json(), "D": d.to_json(), "gap": gap}
    return out, EXIT_OK, None


def _q_integrand(args, f):
    psi = _integrand(args, f.k + f.m, f.k)
    return psi, QIntegrand(f.Q, ClassicalIntegrand(psi))


def cmd_qgraph_energy(args):
    f = load_q_function(args.f)
    psi, F = _q_integrand(args, f)
    out = {"command": "qgraph energy", "integrand": psi.to_config(),
           "q_energy": q_energy(F, f), "graph_energy": q_energy_via_graph(F, f),
           "area_formula_mass": area_formula_mass(f)}
    return out, EXIT_OK, None


def cmd_uqc_verify(args):
    f, h = load_q_function(args.f), load_multigraph(args.h)
    psi, F = _q_integrand(args, f)
    pair = make_graph_test_pair(f, h, strict=args.strict)
    gap = verify_uqc(F, args.c, pair)
    out = {"command": "uqc verify", "c": args.c, "integrand": psi.to_config(), "gap": gap,
           "boundary_defect": pair.boundary_defect,
           "mass_f": area_formula_mass(f), "mass_h": area_formula_mass(pair.h_piecewise)}
    if gap < -COUNTEREXAMPLE_TOL:
        return out, EXIT_VIOLATION, {"f": f.to_json(), "h": h.to_json(), "gap": gap}
    return out, EXIT_OK, None


def cmd_uqc_sample(args):
    k, m = args.k_dom, args.m
    if args.integrand is None:
        args.integrand = "area"
    psi = _integrand(args, k + m, k)
    if (psi.n, psi.k) != (k + m, k):
        raise InputError(f"integrand is on (n={psi.n}, k={psi.k}); sampling needs (n={k + m}, k={k})")
    rng = np.random.default_rng(args.seed)
    qs = list(range(1, args.Q + 1))
    gaps, worst, worst_pair = [], None, None
    for t in range(args.trials):
        q = qs[t % len(qs)]
        h = random_affine_multigraph(k, m, q, rng)
        f = random_q_function(k, m, q, args.level, args.lipschitz, h, rng)
        pair = make_graph_test_pair(f, h)
        g = verify_uqc(QIntegrand(q, ClassicalIntegrand(psi)), args.c, pair)
        gaps.append(g)
        if worst is None or g < worst:
            worst, worst_pair = g, (f, h)
    n_neg = sum(g < -COUNTEREXAMPLE_TOL for g in gaps)
    out = {"command": "uqc sample", "c": args.c, "seed": args.seed, "Q_max": args.Q,
           "level": args.level, "trials": args.trials, "integrand": psi.to_config(),
           "summary": {"min_gap": worst, "n_negative": n_neg, "mean_gap": float(np.mean(gaps))}}
    if n_neg:
        return out, EXIT_VIOLATION, {"f": worst_pair[0].to_json(), "h": worst_pair[1].to_json(),
                                     "gap": worst}
    return out, EXIT_OK, None


def cmd_suite_equivalence(args):
    if args.integrand is None:
        args.integrand = "area"
        if args.n is None and args.k is None:
            args.n, args.k = 2, 1
    psi = _integrand(args)
    rep = equivalence_suite(psi, args.c, args.seed, args.trials, level=args.level,
                            threads=args.threads)
    out = {"command": "suite equivalence", **rep}
    if rep["verdict"] != "holds":
        return out, EXIT_VIOLATION, rep["witness"] | {"verdict": rep["verdict"],
                                                      "defects": rep["defects"]}
    return out, EXIT_OK, None


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, integrand_required: bool = True):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", help="report path (default: standard output)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $ANISO_THREADS or CPU count)")
    p.add_argument("--witness", help="witness path on violation (default: <out>.witness.json)")
    p.add_argument("--integrand", required=integrand_required,
                   help=f"integrand JSON file or built-in name ({', '.join(BUILTINS)})")
    p.add_argument("--n", type=int, help="ambient dimension for built-in integrands")
    p.add_argument("--k", type=int, help="plane dimension for built-in integrands")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aniso", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    groups = parser.add_subparsers(dest="group", required=True)

    upc = groups.add_parser("upc", help="polyconvexity inequality checks").add_subparsers(
        dest="action", required=True)
    p = upc.add_parser("verify", help="check one decomposition")
    _common(p)
    p.add_argument("--decomposition", required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--mode", choices=ORIENTATION_MODES, default="any")
    p.set_defaults(func=cmd_upc_verify)

    p = upc.add_parser("search", help="random search for a violating decomposition")
    _common(p)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--d-min", type=int, default=2)
    p.add_argument("--d-max", type=int, default=4)
    p.add_argument("--mode", choices=ORIENTATION_MODES, default="any")
    p.set_defaults(func=cmd_upc_search)

    p = upc.add_parser("certify", help="sampled LP certificate")
    _common(p)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--dirs", type=int, default=50)
    p.add_argument("--atoms", type=int, default=200)
    p.add_argument("--mode", choices=ORIENTATION_MODES, default="any")
    p.set_defaults(func=cmd_upc_certify)

    approx = groups.add_parser("approx", help="rational approximation").add_subparsers(
        dest="action", required=True)
    p = approx.add_parser("rational", help="exact rational-slope approximation of a decomposition")
    _common(p, integrand_required=False)
    p.add_argument("--decomposition", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_approx_rational)

    en = groups.add_parser("energy", help="energies of polyhedral chains").add_subparsers(
        dest="action", required=True)
    p = en.add_parser("polyhedral")
    _common(p)
    p.add_argument("--chain", required=True)
    p.set_defaults(func=cmd_energy_polyhedral)

    tp = groups.add_parser("testpair", help="polyhedral test pairs").add_subparsers(
        dest="action", required=True)
    p = tp.add_parser("check")
    _common(p)
    p.add_argument("--S", required=True)
    p.add_argument("--D", required=True)
    p.add_argument("--c", type=float, required=True)
    p.set_defaults(func=cmd_testpair_check)

    qg = groups.add_parser("qgraph", help="energies of Q-valued graphs").add_subparsers(
        dest="action", required=True)
    p = qg.add_parser("energy")
    _common(p)
    p.add_argument("--f", required=True)
    p.set_defaults(func=cmd_qgraph_energy)

    uqc = groups.add_parser("uqc", help="Q-graph energy gap checks").add_subparsers(
        dest="action", required=True)
    p = uqc.add_parser("verify")
    _common(p)
    p.add_argument("--f", required=True)
    p.add_argument("--h", required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--strict", action="store_true", help="require per-sheet boundary matching")
    p.set_defaults(func=cmd_uqc_verify)

    p = uqc.add_parser("sample")
    _common(p, integrand_required=False)
    p.add_argument("--Q", type=int, default=3, help="sheets cycle through 1..Q")
    p.add_argument("--level", type=int, default=2)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--k-dom", type=int, default=1, help="domain dimension")
    p.add_argument("--m", type=int, default=1, help="target dimension")
    p.add_argument("--lipschitz", type=float, default=1.0)
    p.set_defaults(func=cmd_uqc_sample)

    suite = groups.add_parser("suite", help="cross-check suites").add_subparsers(
        dest="action", required=True)
    p = suite.add_parser("equivalence")
    _common(p, integrand_required=False)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--level", type=int, default=2)
    p.set_defaults(func=cmd_suite_equivalence)
    return parser


def _write(path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    if args.threads is None and os.environ.get("ANISO_THREADS"):
        try:
            args.threads = int(os.environ["ANISO_THREADS"])
        except ValueError:
            print("error: ANISO_THREADS must be an integer", file=sys.stderr)
            return EXIT_INPUT
    started = time.time()
    try:
        report, code, witness = args.func(args)
    except (InputError, ValueError, KeyError, TypeError, ChainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report.setdefault("seed", args.seed)
    text = dumps(report) if args.format == "json" else to_csv(report)
    if args.out:
        _write(args.out, text)
        meta = {"argv": argv, "version": __version__, "started": started,
                "elapsed_s": time.time() - started, "exit_code": code}
        _write(f"{args.out}.meta.json", dumps(meta))
    else:
        sys.stdout.write(text)
    if witness is not None:
        path = args.witness or (f"{args.out}.witness.json" if args.out else "witness.json")
        _write(path, dumps(witness))
        print(f"violation: witness written to {path}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
