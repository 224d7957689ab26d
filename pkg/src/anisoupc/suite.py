"""Cross-checks of the polyconvexity, polyhedral-ellipticity and Q-graph gaps.

For one integrand and constant c, each trial draws a decomposition and
evaluates (a) its polyconvexity gap, (b) for k = 1, the energy gap of the
polyline test pair built from it, which must equal (a), and (c) the gap of a
random Q-valued graph test pair. An integrand that passes the sampled
polyconvexity certificate must never produce negative (b) or (c) gaps.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .currents import make_test_pair_k1, verify_aue
from .integrands import ClassicalIntegrand, GeometricIntegrand, QIntegrand
from .polyconvexity import (COUNTEREXAMPLE_TOL, certify_sampled, check_instance,
                            default_threads, random_decomposition)
from .qvalued import (make_graph_test_pair, random_affine_multigraph, random_q_function,
                      verify_uqc)

GAP_MATCH_TOL = 1e-10

CHECKS = {
    "upc": "sum m_i Psi(eta_i) - Psi(eta0) - c (sum m_i - 1) over a decomposition of eta0",
    "aue": "E(S) - E(D) - c (M(S) - M(D)) for the polyline S through the partial sums and D = [0, eta0]",
    "uqc": "E(f) - E(h) - c (M(G_f) - M(G_h)) for a Q-valued f agreeing with an affine multigraph h on the boundary",
}


def _trial(psi: GeometricIntegrand, c: float, seq: np.random.SeedSequence, q: int, level: int,
           d_max: int, lipschitz: float) -> dict:
    rng = np.random.default_rng(seq)
    n, k = psi.n, psi.k
    d = int(rng.integers(2, d_max + 1))
    dec = random_decomposition(n, k, d, rng)
    out = {"d": d, "gap_upc": check_instance(psi, c, dec), "gap_aue": None, "Q": q}
    if k == 1:
        s, dd = make_test_pair_k1(dec)
        out["gap_aue"] = verify_aue(psi, c, s, dd)
    h = random_affine_multigraph(k, n - k, q, rng)
    f = random_q_function(k, n - k, q, level, lipschitz, h, rng)
    pair = make_graph_test_pair(f, h)
    out["gap_uqc"] = verify_uqc(QIntegrand(q, ClassicalIntegrand(psi)), c, pair)
    out["_dec"], out["_f"], out["_h"] = dec, f, h
    return out


def equivalence_suite(psi: GeometricIntegrand, c: float, seed: int = 0, trials: int = 200,
                      q_values=(1, 2, 3), level: int = 2, d_max: int = 4, lipschitz: float = 1.0,
                      cert_dirs: int = 20, cert_atoms: int = 100, threads: int | None = 1) -> dict:
    """Run the three gap checks on ``trials`` seeded trials; returns a JSON-ready report.

    ``verdict`` is "holds" when every gap is >= -1e-9, "violation" when some
    gap is negative but all cross-checks agree, and "defect" when (a) and (b)
    disagree or a certified integrand produces a negative (b) or (c) gap.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if psi.n - psi.k < 1:
        raise ValueError("need n > k")
    root = np.random.SeedSequence(seed)
    cert_seed, trial_seed = root.spawn(2)
    cert = certify_sampled(psi, c, cert_dirs, cert_atoms,
                           int(cert_seed.generate_state(1)[0]), "any", threads=1)
    certified = cert.mode == "sampled_certificate"
    seqs = trial_seed.spawn(trials)
    qs = [q_values[i % len(q_values)] for i in range(trials)]
    args = [(psi, c, s, q, level, d_max, lipschitz) for s, q in zip(seqs, qs)]
    threads = default_threads() if threads is None else max(1, threads)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda a: _trial(*a), args))
    else:
        results = [_trial(*a) for a in args]

    defects = []
    mismatch = 0.0
    for i, r in enumerate(results):
        if r["gap_aue"] is not None:
            diff = abs(r["gap_aue"] - r["gap_upc"])
            mismatch = max(mismatch, diff)
            scale = max(1.0, abs(r["gap_upc"]))
            neg_a = r["gap_upc"] < -COUNTEREXAMPLE_TOL
            neg_b = r["gap_aue"] < -COUNTEREXAMPLE_TOL
            if diff > GAP_MATCH_TOL * scale or neg_a != neg_b:
                defects.append({"trial": i, "kind": "upc_aue_mismatch",
                                "gap_upc": r["gap_upc"], "gap_aue": r["gap_aue"]})
        if certified:
            for key in ("gap_aue", "gap_uqc"):
                if r[key] is not None and r[key] < -COUNTEREXAMPLE_TOL:
                    defects.append({"trial": i, "kind": f"certified_integrand_negative_{key[4:]}",
                                    "gap": r[key]})

    def worst(key):
        vals = [(r[key], i) for i, r in enumerate(results) if r[key] is not None]
        return min(vals) if vals else (None, None)

    summary = {}
    for key in ("gap_upc", "gap_aue", "gap_uqc"):
        w, idx = worst(key)
        name = key[4:]
        summary[f"min_{key}"] = w
        summary[f"worst_trial_{name}"] = idx
        summary[f"n_negative_{name}"] = sum(
            1 for r in results if r[key] is not None and r[key] < -COUNTEREXAMPLE_TOL)
    summary["max_upc_aue_mismatch"] = mismatch if psi.k == 1 else None
    summary["sign_consistent"] = not any(d["kind"] == "upc_aue_mismatch" for d in defects)
    negative = any(summary[f"n_negative_{x}"] for x in ("upc", "aue", "uqc"))
    verdict = "defect" if defects else ("violation" if negative else "holds")

    witness = None
    if verdict != "holds":
        w_upc, i_upc = worst("gap_upc")
        w_uqc, i_uqc = worst("gap_uqc")
        witness = {"upc_trial": i_upc, "decomposition": results[i_upc]["_dec"].to_json(),
                   "uqc_trial": i_uqc, "f": results[i_uqc]["_f"].to_json(),
                   "h": results[i_uqc]["_h"].to_json()}
        if psi.k == 1:
            s, dd = make_test_pair_k1(results[i_upc]["_dec"])
            witness["S"], witness["D"] = s.to_json(), dd.to_json()

    rows = [{k: v for k, v in r.items() if not k.startswith("_")} | {"trial": i}
            for i, r in enumerate(results)]
    return {
        "integrand": psi.to_config(),
        "c": c,
        "seed": seed,
        "trials": trials,
        "q_values": list(q_values),
        "level": level,
        "checks": CHECKS,
        "certificate": cert.to_json(),
        "certified": certified,
        "summary": summary,
        "defects": defects,
        "verdict": verdict,
        "witness": witness,
        "results": rows,
    }
