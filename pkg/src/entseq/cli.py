"""Command-line interface: experiment orchestration, persistence, and reports.

Commands
--------
optimize    cascade-optimize a list of sequence lengths, write per-length
            solution JSON files and a summary CSV
contour     evaluate a stored solution on a log-spaced grid of local/nonlocal
            noise amplitudes, write a CSV of (sigma_local, sigma_nonlocal, eps)
evaluate    re-evaluate a stored solution under an arbitrary noise config
decompose   print the Cartan decomposition report of a stored solution
calibrate   bisect the nonlocal amplitude to a target uncorrected error

All randomness flows from a single root seed (``--seed`` overrides the config
seed) which is recorded in every output artifact.  Reruns with the same seed
reproduce all results bit-for-bit; the only non-reproducible output field is
the wall_time_s column of the optimize summary CSV.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .noise_model import NoiseConfig, calibrate_amplitude, make_ensemble
from .optimizer import OptimizerConfig, SolutionStore, cascade_optimize
from .sequence_engine import SequenceParams, evaluate_solution, target_gate, uncorrected_error
from .weyl_geometry import (
    cartan_decompose,
    _kron_factor,
    makhlin_invariants,
    pe_fidelity,
    pe_functional_D,
    su2_pauli_vector,
)

SCHEMA_VERSION = 1


class ConfigError(Exception):
    pass


def _fmt(v):
    """Deterministic shortest-roundtrip float formatting for CSV cells."""
    return repr(float(v))


def load_spec(path):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError("unsupported experiment schema version")
    return doc


def noise_from_spec(doc, seed_override=None):
    try:
        cfg = NoiseConfig.from_dict(doc.get("noise", {})) if doc.get("noise") else NoiseConfig()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad noise config: {exc}") from exc
    if seed_override is not None:
        cfg = cfg.with_seed(seed_override)
    return cfg


def optimizer_from_spec(doc):
    try:
        return (
            OptimizerConfig.from_dict(doc["optimizer"])
            if doc.get("optimizer")
            else OptimizerConfig()
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad optimizer config: {exc}") from exc


def load_solution(path):
    try:
        doc = json.loads(Path(path).read_text())
        params = SequenceParams(int(doc["N"]), np.asarray(doc["angles"], dtype=float))
    except FileNotFoundError as exc:
        raise ConfigError(f"solution file not found: {path}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad solution file {path}: {exc}") from exc
    return params, doc


def cmd_optimize(args):
    doc = load_spec(args.config)
    noise = noise_from_spec(doc, args.seed)
    opt = optimizer_from_spec(doc)
    n_list = doc.get("N_list")
    if not n_list:
        raise ConfigError("optimize requires N_list in the experiment config")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store = SolutionStore(out, kind=noise.kind)

    def progress(msg):
        print(msg, flush=True)

    results = cascade_optimize(sorted(n_list), noise, opt, store=store, progress=progress)
    rows = []
    for res in results:
        N = res.params.N
        eps_unc = uncorrected_error(noise, N, opt.ensemble_size, seed=res.seeds["ensemble_seed"])
        rows.append(
            (
                N,
                eps_unc,
                res.final_metrics.epsilon,
                res.final_metrics.epsilon_pe,
                res.iterations,
                res.wall_time_s,
            )
        )
    csv_path = out / "optimize_summary.csv"
    with csv_path.open("w") as fh:
        fh.write("N,epsilon_uncorrected,epsilon_optimized,epsilon_pe,iterations,wall_time_s\n")
        for N, e0, e1, epe, nit, wall in rows:
            fh.write(f"{N},{_fmt(e0)},{_fmt(e1)},{_fmt(epe)},{nit},{wall:.3f}\n")
    print(f"wrote {csv_path} and {len(results)} solution files to {out}")
    if len(results) != len(n_list):
        return 2
    return 0


def _grid_axis(spec, default):
    lo, hi, n = spec if spec is not None else default
    return np.geomspace(lo, hi, int(n))


def cmd_contour(args):
    doc = load_spec(args.config)
    noise = noise_from_spec(doc, args.seed)
    params, _ = load_solution(args.solution)
    grid = doc.get("grid", {})
    sig_loc = _grid_axis(grid.get("sigma_local"), (1e-3, 0.1, 5))
    sig_nl = _grid_axis(grid.get("sigma_nonlocal"), (1e-2, 0.4, 5))
    M = int(grid.get("M", 100))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    points = [(i, j) for i in range(sig_loc.size) for j in range(sig_nl.size)]

    def eval_point(idx):
        i, j = idx
        from dataclasses import replace

        from .optimizer import derived_seed

        cfg = replace(noise, sigma_local=float(sig_loc[i]), sigma_nonlocal=float(sig_nl[j]))
        ensemble = make_ensemble(cfg, params.N, M, seed=derived_seed(noise.seed, i, j))
        return evaluate_solution(params, ensemble).epsilon

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            eps = list(pool.map(eval_point, points))
    else:
        eps = [eval_point(p) for p in points]

    csv_path = out / "contour.csv"
    with csv_path.open("w") as fh:
        fh.write("sigma_local,sigma_nonlocal,epsilon\n")
        for (i, j), e in zip(points, eps):
            fh.write(f"{_fmt(sig_loc[i])},{_fmt(sig_nl[j])},{_fmt(e)}\n")
    print(f"wrote {csv_path}")
    return 0


def cmd_evaluate(args):
    params, sol_doc = load_solution(args.solution)
    if args.config:
        doc = load_spec(args.config)
        noise = noise_from_spec(doc, args.seed)
        M = int(doc.get("M", 100))
    else:
        noise = NoiseConfig.from_dict(sol_doc["config"]["noise"])
        if args.seed is not None:
            noise = noise.with_seed(args.seed)
        M = int(sol_doc["config"]["optimizer"]["ensemble_size"])
    seed = sol_doc["seeds"]["ensemble_seed"] if args.stored_seeds else noise.seed
    ensemble = make_ensemble(noise, params.N, M, seed=seed)
    metrics = evaluate_solution(params, ensemble)
    payload = {
        "N": params.N,
        "noise": noise.to_dict(),
        "M": M,
        "ensemble_seed": seed,
        **metrics.to_dict(),
    }
    text = json.dumps(payload, indent=1, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluation.json").write_text(text)
    print(text)
    return 0


def _pauli_vector_line(k):
    a, b, resid = _kron_factor(k)
    na = su2_pauli_vector(a)
    nb = su2_pauli_vector(b)

    def one(n):
        return f"exp[-i({n[0]:+.3f} X {n[1]:+.3f} Y {n[2]:+.3f} Z)]"

    return f"{one(na)} (x) {one(nb)}", resid


def cmd_decompose(args):
    params, _ = load_solution(args.solution)
    U = target_gate(params)
    try:
        k1, c, k2 = cartan_decompose(U)
    except RuntimeError as exc:
        print(f"decomposition failed: {exc}", file=sys.stderr)
        return 2
    g = makhlin_invariants(U)
    line1, r1 = _pauli_vector_line(k1)
    line2, r2 = _pauli_vector_line(k2)
    report = {
        "N": params.N,
        "weyl_coordinates": [float(v) for v in c],
        "makhlin_invariants": [float(v) for v in g],
        "pe_fidelity": pe_fidelity(U),
        "pe_functional_D": pe_functional_D(U),
        "k1_pauli_vectors": line1,
        "k2_pauli_vectors": line2,
        "kron_residuals": [float(r1), float(r2)],
    }
    print(f"U = k1 exp[-i/2 ({c[0]:.3f} XX + {c[1]:.3f} YY + {c[2]:.3f} ZZ)] k2")
    print(f"k1 = {line1}")
    print(f"k2 = {line2}")
    print(f"Makhlin invariants: g1={g[0]:+.6f} g2={g[1]:+.6f} g3={g[2]:+.6f}")
    print(f"F_PE = {report['pe_fidelity']:.9f}   D = {report['pe_functional_D']:.3e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "decomposition.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    return 0


def cmd_calibrate(args):
    doc = load_spec(args.config) if args.config else {}
    noise = noise_from_spec(doc, args.seed)
    target = args.target if args.target is not None else float(doc.get("target_error", 0.1))
    if not 0 < target < 0.5:
        raise ConfigError("target error must lie in (0, 0.5)")
    N = int(doc.get("N", 4))
    M = int(doc.get("M", 200))
    try:
        sigma = calibrate_amplitude(target, noise, N, M)
    except RuntimeError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 2
    from dataclasses import replace

    eps = uncorrected_error(replace(noise, sigma_nonlocal=sigma), N, M)
    payload = {
        "target_uncorrected_error": target,
        "calibrated_sigma_nonlocal": sigma,
        "achieved_uncorrected_error": eps,
        "mc_rel_std_estimate": 1.0 / np.sqrt(M),
        "N": N,
        "M": M,
        "seed": noise.seed,
        "kind": noise.kind,
    }
    text = json.dumps(payload, indent=1, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "calibration.json").write_text(text)
    print(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="entseq", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True, out_default="out"):
        sp.add_argument("--config", required=config_required, help="experiment spec JSON")
        sp.add_argument("--seed", type=int, default=None, help="override the root seed")
        sp.add_argument("--out", default=out_default,
                        help="output directory" if out_default else
                        "output directory (reports go to stdout when omitted)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads (performance only; results invariant)")

    sp = sub.add_parser("optimize", help="cascade-optimize sequence lengths")
    common(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("contour", help="noise-strength grid sweep of a solution")
    common(sp)
    sp.add_argument("--solution", required=True)
    sp.set_defaults(func=cmd_contour)

    sp = sub.add_parser("evaluate", help="evaluate a solution under a noise config")
    common(sp, config_required=False, out_default=None)
    sp.add_argument("--solution", required=True)
    sp.add_argument("--stored-seeds", action="store_true",
                    help="reuse the ensemble seed recorded in the solution file")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("decompose", help="Cartan-decomposition report of a solution")
    common(sp, config_required=False, out_default=None)
    sp.add_argument("--solution", required=True)
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("calibrate", help="calibrate sigma_nonlocal to a target error")
    common(sp, config_required=False, out_default=None)
    sp.add_argument("--target", type=float, default=None,
                    help="target uncorrected error in (0, 0.5)")
    sp.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
