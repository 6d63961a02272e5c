"""Batch command-line front end.

    python3 -m galerkin_control <experiment> --config run.json [--out DIR] [--seed N]

Exit status: 0 success, 1 usage or configuration error, 2 a checked bound or
tolerance failed, 3 an optimizer did not converge.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .bases import build_circle_basis, build_sphere_basis, build_zonal_sl_basis
from .control import OptimizeOptions, control_to_csv, optimize
from .convergence import (
    control_error_bound_check,
    j_gap_bound_check,
    trajectory_convergence_sweep,
    uniform_convergence_estimate,
    value_convergence_sweep,
    value_gap_bound_check,
    write_bound_reports,
)
from .dynamics import apriori_bound, integrate
from .ebm import EbmModel, Emissions, build_ebm_problem, ebm_error_prefactor
from .errors import GalerkinError
from .fixtures import Fixture, cubic_circle, lq_circle
from .spectral import SpectralField, analyze, synthesize

EXPERIMENTS = ("simulate", "optimize", "traj-sweep", "uniform-sweep", "value-sweep",
               "verify-bounds", "transform-test")
OUT_ENV = "GALERKIN_CONTROL_OUT"

EXIT_OK, EXIT_CONFIG, EXIT_BOUND, EXIT_NONCONV = 0, 1, 2, 3

HEADERS = {
    "trajectory": "Galerkin trajectory y_N(t) of dy/dt = L_N y + P_N F(y) + P_N C(u)",
    "apriori": "a priori bound ||y(t)|| <= e^{Lt}||x|| + int g + L int g e^{L(t-s)}, "
               "g = ||F(0)|| + Lip(C)||u||_V",
    "traj-sweep": "trajectory convergence sup_t ||y_N(t; P_N x, u) - y(t; x, u)|| -> 0",
    "uniform-sweep": "uniform-in-control convergence sup_u sup_t ||y_N - y|| -> 0 "
                     "(Monte Carlo surrogate for the sup over admissible controls)",
    "value-sweep": "value-function convergence sup_t |v_N(t, P_N x) - v(t, x)| -> 0",
    "control": "optimal control u*_N minimizing the Galerkin cost J_N",
    "transform": "transform fidelity: analyze(synthesize(a)) = a and Gram matrix = identity",
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_int_list = {"type": "array", "items": _int_pos, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "horizon"],
            "properties": {
                "kind": {"enum": ["cubic_circle", "lq_circle", "ebm"]},
                "horizon": _pos,
                "geometry": {"enum": ["sphere", "zonal"]},
                "band_limit": _int_pos,
                "diffusivity": _pos,
                "coefficient": _num,
                "mu": {"type": "number", "minimum": 0},
                "bound": _pos,
                "model": {"type": "object"},
                "emissions_csv": {"type": "string"},
                "emissions_scenario": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {"kind": {"enum": ["constant", "ramp"]},
                                   "value": _num, "rate": _num},
                },
            },
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _pos,
                "n_intervals": _int_pos,
                "N": _int_pos,
                "N_values": _int_list,
                "N_ref": _int_pos,
                "tol": _pos,
                "max_iters": _int_pos,
                "samples": _int_pos,
                "n_random": {"type": "integer", "minimum": 0},
                "t_values": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "control_value": _num,
                "transform_band_limit": _int_pos,
            },
        },
    },
}


class ConfigError(Exception):
    pass


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{path}: at '{where}': {e.message}")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_fixture(cfg: dict) -> Fixture:
    p, num = cfg["problem"], cfg.get("numerics", {})
    kind, T = p["kind"], p["horizon"]
    if kind == "cubic_circle":
        f = cubic_circle(K=p.get("band_limit", 64), horizon=T, dt=num.get("dt", 1e-3),
                         diffusivity=p.get("diffusivity", 0.05),
                         n_intervals=num.get("n_intervals", 10), seed=cfg.get("seed", 0))
    elif kind == "lq_circle":
        f = lq_circle(K=p.get("band_limit", 16), c=p.get("coefficient", 0.5),
                      mu=p.get("mu", 0.1), horizon=T, n_intervals=num.get("n_intervals", 100),
                      dt=num.get("dt", 1e-3), bound=p.get("bound", 50.0))
    else:
        try:
            model = EbmModel.from_dict(p.get("model", {}))
        except (TypeError, GalerkinError) as exc:
            raise ConfigError(f"problem/model: {exc}") from exc
        if "emissions_csv" in p:
            model = replace(model, emissions=Emissions.from_csv(p["emissions_csv"]))
        elif "emissions_scenario" in p:
            sc = p["emissions_scenario"]
            em = (Emissions.constant(sc.get("value", 0.0)) if sc["kind"] == "constant"
                  else Emissions.ramp(sc.get("rate", 0.0), T))
            model = replace(model, emissions=em)
        if "mu" in p:
            model = replace(model, mu=p["mu"])
        geometry = p.get("geometry", "sphere")
        L = p.get("band_limit", 16 if geometry == "sphere" else 40)
        pr, cost = build_ebm_problem(model, geometry, L, T, num.get("dt", 0.02),
                                     num.get("n_intervals", 10))
        if geometry == "sphere":
            f = Fixture(pr, cost, (9, 25, 81), pr.basis.size)
        else:
            f = Fixture(pr, cost, (3, 5, 9), pr.basis.size)
    N_values = tuple(num.get("N_values", f.N_values))
    N_ref = num.get("N_ref", min(f.N_ref, f.problem.basis.size))
    if N_ref > f.problem.basis.size:
        raise ConfigError(f"numerics/N_ref: {N_ref} exceeds the basis size {f.problem.basis.size}")
    if max(N_values) > N_ref:
        raise ConfigError("numerics/N_values: entries must not exceed N_ref")
    return Fixture(f.problem, f.cost, N_values, N_ref)


def _options(cfg) -> OptimizeOptions:
    num = cfg.get("numerics", {})
    return OptimizeOptions(tol=num.get("tol", 1e-6), max_iters=num.get("max_iters", 500))


# ------------------------------------------------------------------ experiments


def run_simulate(cfg, fx: Fixture, out: Path, seed: int) -> int:
    num = cfg.get("numerics", {})
    pr = fx.problem
    u = pr.control(num.get("control_value", 0.0))
    N = num.get("N", fx.N_ref)
    tr = integrate(pr, N, u)
    tr.to_csv(out / "trajectory.csv", header=HEADERS["trajectory"])
    tr.summary_to_csv(out / "summary.csv", [n for n in fx.N_values if n <= N],
                      header=HEADERS["trajectory"])
    status = EXIT_OK
    if pr.nonlinearity.lipschitz is not None:
        bound = apriori_bound(pr, tr, u, pr.nonlinearity.lipschitz)
        norms = tr.norms()
        with open(out / "apriori.csv", "w") as fh:
            fh.write(f"# {HEADERS['apriori']}\n")
            fh.write("time,norm,bound,holds\n")
            for t, n, b in zip(tr.times, norms, bound):
                fh.write(f"{float(t)!r},{float(n)!r},{float(b)!r},{bool(n <= b)}\n")
        if np.any(norms > bound):
            status = EXIT_BOUND
    return status


def run_optimize(cfg, fx: Fixture, out: Path, seed: int) -> int:
    num = cfg.get("numerics", {})
    pr = fx.problem
    N = num.get("N", fx.N_values[-1])
    u0 = pr.control(0.0)
    u0 = u0.with_values(np.clip(u0.values, u0.lower, u0.upper))
    sol = optimize(pr, N, fx.cost, u0, _options(cfg))
    (out / "solution.json").write_text(sol.to_json() + "\n")
    control_to_csv(sol.control, out / "control.csv", pr)
    _prepend(out / "control.csv", HEADERS["control"])
    sol.trajectory.summary_to_csv(out / "summary.csv", [n for n in fx.N_values if n <= N],
                                  header=HEADERS["trajectory"])
    return EXIT_OK if sol.converged else EXIT_NONCONV


def run_traj_sweep(cfg, fx: Fixture, out: Path, seed: int) -> int:
    num = cfg.get("numerics", {})
    u = fx.problem.control(num.get("control_value", 0.0))
    rep = trajectory_convergence_sweep(fx.problem, u, fx.N_values, fx.N_ref)
    rep.to_csv(out / "traj_sweep.csv", header=HEADERS["traj-sweep"])
    (out / "traj_sweep.json").write_text(rep.to_json() + "\n")
    return EXIT_OK


def run_uniform_sweep(cfg, fx: Fixture, out: Path, seed: int) -> int:
    num = cfg.get("numerics", {})
    rep = uniform_convergence_estimate(fx.problem, fx.N_values, fx.N_ref,
                                       num.get("samples", 32), seed)
    rep.to_csv(out / "uniform_sweep.csv", header=HEADERS["uniform-sweep"])
    (out / "uniform_sweep.json").write_text(rep.to_json() + "\n")
    return EXIT_OK


def run_value_sweep(cfg, fx: Fixture, out: Path, seed: int) -> int:
    num = cfg.get("numerics", {})
    t_values = num.get("t_values", [0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = value_convergence_sweep(fx.problem, fx.cost, t_values, None, fx.N_values,
                                      fx.N_ref, n_random=num.get("n_random", 4), seed=seed,
                                      options=_options(cfg))
    rep.to_csv(out / "value_sweep.csv", header=HEADERS["value-sweep"])
    (out / "value_sweep.json").write_text(rep.to_json() + "\n")
    return EXIT_NONCONV if rep.info["flagged"] else EXIT_OK


def run_verify_bounds(cfg, fx: Fixture, out: Path, seed: int) -> int:
    pr, cost = fx.problem, fx.cost
    opts = _options(cfg)
    u = pr.random_control(np.random.default_rng(seed))
    caveat = not pr.nonlinearity.affine
    reports = []
    for N in fx.N_values:
        reports.append(j_gap_bound_check(pr, cost, u, N, fx.N_ref))
        vg = value_gap_bound_check(pr, cost, 0.0, None, N, fx.N_ref, options=opts)
        reports.append(vg)
        pref = None
        if caveat and cfg["problem"]["kind"] == "ebm":
            pref = ebm_error_prefactor(vg.constants["sup_norm"], cost.target.norm(), cost.mu)
        if cost.mu > 0:
            reports.append(control_error_bound_check(pr, cost, N, fx.N_ref, caveat=caveat,
                                                     prefactor=pref, options=opts))
    write_bound_reports(reports, out / "bounds.csv", out / "bounds.json")
    if any(r.passed is None for r in reports):
        return EXIT_NONCONV
    return EXIT_OK if all(r.passed for r in reports) else EXIT_BOUND


def run_transform_test(cfg, fx: Fixture | None, out: Path, seed: int) -> int:
    num = cfg.get("numerics", {})
    p = cfg["problem"]
    L = num.get("transform_band_limit", 20)
    if p["kind"] == "ebm" and p.get("geometry") == "zonal":
        b = build_zonal_sl_basis(1.0, L, max(2000, 4 * L))
    elif p["kind"] == "ebm":
        b = build_sphere_basis(L, 1.0)
    else:
        b = build_circle_basis(L, 1.0)
    rng = np.random.default_rng(seed)
    a = SpectralField(b.basis_id, rng.standard_normal(b.size))
    rt = float(np.max(np.abs(analyze(synthesize(a, b), b, b.size).coeffs - a.coeffs)))
    gram = float(np.max(np.abs(b.gram() - np.eye(b.size))))
    ok_rt, ok_gram = rt < 1e-10, gram < 1e-8
    with open(out / "transform.csv", "w") as fh:
        fh.write(f"# {HEADERS['transform']}\n")
        fh.write("basis,check,value,tolerance,passed\n")
        fh.write(f"{b.basis_id},roundtrip_max_abs,{rt!r},1e-10,{ok_rt}\n")
        fh.write(f"{b.basis_id},gram_max_abs,{gram!r},1e-08,{ok_gram}\n")
    return EXIT_OK if ok_rt and ok_gram else EXIT_BOUND


RUNNERS = {
    "simulate": run_simulate,
    "optimize": run_optimize,
    "traj-sweep": run_traj_sweep,
    "uniform-sweep": run_uniform_sweep,
    "value-sweep": run_value_sweep,
    "verify-bounds": run_verify_bounds,
    "transform-test": run_transform_test,
}


def _prepend(path: Path, header: str) -> None:
    text = path.read_text()
    path.write_text(f"# {header}\n{text}")


def write_manifest(out: Path, cfg: dict, experiment: str, seed: int, status: int) -> None:
    files = {}
    for f in sorted(out.iterdir()):
        if f.is_file() and f.name != "manifest.json":
            files[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    manifest = {
        "experiment": experiment,
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "exit_status": status,
        "versions": {"galerkin_control": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="galerkin_control",
                                 description="Spectral Galerkin optimal-control experiments")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help=f"output directory (else config output_dir, ${OUT_ENV}, or ./out)")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--threads", type=int, default=1,
                    help="accepted for interface compatibility; runs are sequential")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if cfg.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"{args.config}: at 'experiment': config says "
                              f"{cfg['experiment']!r}, command line says {args.experiment!r}")
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg["seed"] = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        seed = cfg.get("seed", 0)
        out = Path(args.out or cfg.get("output_dir") or os.environ.get(OUT_ENV) or "out")
        fx = None if args.experiment == "transform-test" else build_fixture(cfg)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GalerkinError as exc:
        print(f"error: {args.config}: problem: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = RUNNERS[args.experiment](cfg, fx, out, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_manifest(out, cfg, args.experiment, seed, status)
    print(f"{args.experiment}: exit {status}, outputs in {out}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
