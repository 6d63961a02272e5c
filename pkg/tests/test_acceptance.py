"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import json
import subprocess
import sys

import numpy as np
import pytest

from galerkin_control.bases import build_circle_basis, build_sphere_basis, build_zonal_sl_basis
from galerkin_control.control import (
    evaluate_cost,
    galerkin_lq_data,
    gradient,
    lq_riccati_oracle,
    optimize,
    value_function_estimate,
)
from galerkin_control.convergence import (
    control_error_bound_check,
    j_gap_bound_check,
    trajectory_convergence_sweep,
    value_convergence_sweep,
    value_gap_bound_check,
)
from galerkin_control.control import CostFunctional
from galerkin_control.dynamics import apriori_bound, integrate, tail_bound
from galerkin_control.ebm import ebm_error_prefactor
from galerkin_control.fixtures import gradient_check_problems
from galerkin_control.spectral import SpectralField, analyze, synthesize, tail_norms


def test_criterion_1_transform_fidelity(verdict):
    b = build_sphere_basis(20, 1.0)
    a = SpectralField(b.basis_id, np.random.default_rng(0).standard_normal(b.size))
    rt = np.max(np.abs(analyze(synthesize(a, b), b, b.size).coeffs - a.coeffs))
    gram = np.max(np.abs(b.gram() - np.eye(b.size)))
    ok = rt < 1e-10 and gram < 1e-8
    assert verdict("criterion 1", ok, f"roundtrip {rt:.2e} < 1e-10, Gram {gram:.2e} < 1e-8")


def test_criterion_2_zonal_spectrum(verdict):
    b = build_zonal_sl_basis(1.0, 10, 2000)
    l = np.arange(10)
    exact = l * (l + 1.0)
    lam = b.eigenvalues[:10]
    rel = np.abs(lam[1:] - exact[1:]) / exact[1:]
    ok = abs(lam[0]) < 1e-8 and rel.max() < 0.01
    assert verdict("criterion 2", ok,
                   f"|lambda_0| = {abs(lam[0]):.1e}, max rel err l=1..9 {rel.max():.2e} < 1e-2")


def _sphere_degree(size):
    return np.floor(np.sqrt(np.arange(size))).astype(int)


def test_criterion_3_stability_and_consistency(verdict):
    rng = np.random.default_rng(3)
    bases = [build_circle_basis(40, 1.0), build_sphere_basis(12, 0.6),
             build_zonal_sl_basis(lambda s: 0.5 + 0.3 * s * s, 40, 400)]
    worst = -np.inf
    for _ in range(100):
        b = bases[rng.integers(3)]
        N = int(rng.integers(1, b.size + 1))
        t = float(rng.uniform(0, 5))
        f = rng.standard_normal(b.size)
        semi = np.exp(-b.eigenvalues[:N] * t) * f[:N]
        worst = max(worst, np.linalg.norm(semi) - np.linalg.norm(f))
    contraction = worst <= 0

    # consistency with an analytic spectrum l(l+1) on the unit sphere, D = 1
    b = build_sphere_basis(40, 1.0)
    deg = _sphere_degree(b.size)
    lam_exact = deg * (deg + 1.0)
    assert np.allclose(b.eigenvalues, lam_exact, atol=1e-9 * lam_exact.max())
    phi = (1.0 + np.arange(b.size)) ** -4.0
    Lphi = -lam_exact * phi
    errs = {}
    for N in (16, 36, 64):
        LN = np.zeros(b.size)
        LN[:N] = -b.eigenvalues[:N] * phi[:N]
        errs[N] = float(np.linalg.norm(LN - Lphi))
    consistent = errs[64] < 1e-6
    detail = (f"contraction max(||e^(L_N t) P_N f|| - ||f||) = {worst:.2e} <= 0 over 100 draws; "
              f"consistency ||L_N phi - L phi|| at N=16,36,64: "
              + ", ".join(f"{v:.2e}" for v in errs.values()) + " vs 1e-6")
    assert verdict("criterion 3", contraction and consistent, detail)


def test_criterion_4_trajectory_convergence(cubic, verdict):
    pr = cubic.problem
    rep = trajectory_convergence_sweep(pr, pr.control(0.5), (4, 8, 16, 32), 128)
    e = rep.metric("sup_error")
    ok = bool(np.all(np.diff(e) <= 0)) and e[3] <= e[1] / 4
    assert verdict("criterion 4", ok, "sup errors " + ", ".join(f"{v:.3e}" for v in e)
                   + f"; error(8)/error(32) = {e[1] / e[3]:.2f} >= 4")


def test_criterion_5_gradient_oracle(verdict):
    worst = {}
    rng = np.random.default_rng(5)
    for name, (pr, N) in gradient_check_problems(seed=5).items():
        target = SpectralField(pr.basis.basis_id, 0.3 * rng.standard_normal(pr.basis.size))
        cost = CostFunctional(target, mu=0.1)
        u = pr.random_control(rng).with_values(rng.uniform(-1.5, 1.5, (5, pr.control_op.n_dofs)))
        g = gradient(pr, N, u, cost)
        eps, rel = 1e-5, []
        for _ in range(20):
            d = rng.standard_normal(u.values.shape)
            fd = (evaluate_cost(pr, N, u.with_values(u.values + eps * d), cost)
                  - evaluate_cost(pr, N, u.with_values(u.values - eps * d), cost)) / (2 * eps)
            an = u.inner(g, d)
            rel.append(abs(fd - an) / max(abs(fd), abs(an)))
        worst[name] = max(rel)
    ok = max(worst.values()) < 1e-5
    assert verdict("criterion 5", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                   + " (max rel err over 20 directions) < 1e-5")


def test_criterion_6_lq_riccati(lq, verdict):
    pr, cost = lq.problem, lq.cost
    rows, ok = [], True
    for N in (4, 8):
        A, B, Q, R, d, f, const = galerkin_lq_data(pr, N, cost)
        ric = lq_riccati_oracle(A, B, Q, R, d, pr.horizon, 1e-3, f)
        J_ric = ric.value(pr.initial.coeffs[:N]) + const * pr.horizon
        sol = optimize(pr, N, cost, pr.control(0.0))
        v = value_function_estimate(pr, N, cost, 0.0, n_random=2).value
        r1, r2 = abs(sol.cost - J_ric) / J_ric, abs(v - J_ric) / J_ric
        ok &= sol.converged and r1 <= 1e-4 and r2 <= 1e-4
        rows.append(f"N={N}: J rel {r1:.1e}, v(0,x) rel {r2:.1e}")
    assert verdict("criterion 6", ok, "; ".join(rows) + " (<= 1e-4)")


def test_criterion_7_value_convergence(ebm, verdict):
    rep = value_convergence_sweep(ebm.problem, ebm.cost, [0.0, 0.5], None, (9, 25, 81), 289,
                                  n_random=2)
    g = rep.metric("max_value_gap")
    ok = bool(np.all(np.isfinite(g))) and g[0] > g[1] > g[2] and not rep.info["flagged"]
    assert verdict("criterion 7", ok, "max-over-t gaps for L=2,4,8: "
                   + ", ".join(f"{v:.3e}" for v in g)
                   + f"; non-converged entries {len(rep.info['flagged'])}")


def test_criterion_8_inequality_suite(lq, ebm, verdict):
    reports = []
    pr, cost = lq.problem, lq.cost
    for N in (4, 8, 16):
        u = pr.random_control(np.random.default_rng(N))
        reports += [j_gap_bound_check(pr, cost, u, N, lq.N_ref),
                    value_gap_bound_check(pr, cost, 0.0, None, N, lq.N_ref),
                    control_error_bound_check(pr, cost, N, lq.N_ref)]
    pr, cost = ebm.problem, ebm.cost
    for N in (9, 25, 81):
        u = pr.random_control(np.random.default_rng(N))
        vg = value_gap_bound_check(pr, cost, 0.0, None, N, ebm.N_ref)
        pref = ebm_error_prefactor(vg.constants["sup_norm"], cost.target.norm(), cost.mu)
        reports += [j_gap_bound_check(pr, cost, u, N, ebm.N_ref), vg,
                    control_error_bound_check(pr, cost, N, ebm.N_ref, caveat=True,
                                              prefactor=pref)]
    failed = [f"{r.inequality_id}@N={r.N}" for r in reports if r.passed is not True]
    worst = min(r.margin / max(1.0, r.rhs) for r in reports)
    assert verdict("criterion 8", not failed,
                   f"{len(reports)} checks, min relative margin {worst:.3e}"
                   + (f", failing {failed}" if failed else ""))


def test_criterion_9_apriori_and_tail(ebm, ebm_z, verdict):
    rng = np.random.default_rng(9)
    n_steps, violations = 0, 0
    for fx, Ns in ((ebm, (9, 25, 81, 289)), (ebm_z, (3, 9, 20, 40))):
        pr = fx.problem
        controls = [pr.control(0.0), pr.control(10.0), pr.control(-10.0)]
        controls += [pr.random_control(rng) for _ in range(3)]
        for N in Ns:
            for u in controls:
                tr = integrate(pr, N, u)
                bound = apriori_bound(pr, tr, u, pr.nonlinearity.lipschitz)
                n_steps += len(bound)
                violations += int(np.sum(tr.norms() > bound))
    pr = ebm.problem
    u = pr.random_control(np.random.default_rng(90))
    ref = integrate(pr, ebm.N_ref, u)
    C = float(ref.norms().max())
    tail_ok, margins = True, []
    for N in (4, 8, 16, 32):
        rhs = tail_bound(pr, ref, u, N, pr.nonlinearity.lipschitz, C)
        lhs = tail_norms(ref.coeffs, [N])[0]
        tail_ok &= bool(np.all(lhs <= rhs))
        margins.append(float(np.min(rhs - lhs)))
    ok = violations == 0 and tail_ok
    assert verdict("criterion 9", ok,
                   f"a priori: {violations} violations in {n_steps} stored steps; "
                   "tail min margins N=4,8,16,32: " + ", ".join(f"{m:.2e}" for m in margins))


def _run_cli(config, out):
    r = subprocess.run([sys.executable, "-m", "galerkin_control",
                        json.loads(config.read_text())["experiment"], "--config", str(config),
                        "--out", str(out), "--seed", "11"], capture_output=True, text=True)
    return r.returncode, {f.name: f.read_bytes() for f in sorted(out.iterdir())}


def test_criterion_10_determinism(tmp_path, verdict):
    cfg = tmp_path / "verify.json"
    cfg.write_text(json.dumps({
        "experiment": "verify-bounds",
        "problem": {"kind": "lq_circle", "horizon": 1.0},
        "numerics": {"dt": 0.005, "n_intervals": 20, "N_values": [4, 8], "N_ref": 33}}))
    cfg2 = tmp_path / "uniform.json"
    cfg2.write_text(json.dumps({
        "experiment": "uniform-sweep",
        "problem": {"kind": "cubic_circle", "horizon": 0.5, "band_limit": 32},
        "numerics": {"dt": 0.005, "N_values": [4, 8, 16], "N_ref": 65, "samples": 4}}))
    same, files = True, 0
    for c in (cfg, cfg2):
        s1, a = _run_cli(c, tmp_path / f"{c.stem}_1")
        s2, b = _run_cli(c, tmp_path / f"{c.stem}_2")
        same &= s1 == s2 == 0 and a == b
        files += len(a)
    assert verdict("criterion 10", same, f"{files} output files byte-identical across two runs")
