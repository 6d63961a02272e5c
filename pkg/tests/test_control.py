import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from galerkin_control.bases import build_circle_basis
from galerkin_control.control import (
    CostFunctional,
    OptimizeOptions,
    adjoint_solve,
    cost_and_gradient,
    evaluate_cost,
    galerkin_lq_data,
    gradient,
    lq_riccati_oracle,
    optimize,
    project_control,
    value_function,
    value_function_estimate,
)
from galerkin_control.dynamics import ControlOperator, PointwiseMap, SemilinearProblem, integrate
from galerkin_control.errors import OracleError
from galerkin_control.spectral import SpectralField

B = build_circle_basis(4, 1.0)
TH = B.grid.nodes[:, 0]
ONE_MODE = 3


def single_mode_problem(F, a0=0.8, dt=1e-3):
    x = np.zeros(B.size)
    x[ONE_MODE] = a0
    op = ControlOperator(B.grid.weights, [TH < 2.0], "nodal")
    return SemilinearProblem(B, F, op, SpectralField(B.basis_id, x), 1.0, dt=dt, n_intervals=4)


def target_on_mode(d):
    t = np.zeros(B.size)
    t[ONE_MODE] = d
    return SpectralField(B.basis_id, t)


def test_cost_zero_on_target():
    pr = single_mode_problem(PointwiseMap.zero(), a0=0.0)
    cost = CostFunctional(SpectralField(B.basis_id, np.zeros(B.size)), mu=1.0)
    assert evaluate_cost(pr, B.size, pr.control(0.0), cost) == 0.0


def test_cost_matches_analytic_integral():
    lam, a0, d = B.eigenvalues[ONE_MODE], 0.8, 0.25
    pr = single_mode_problem(PointwiseMap.zero(), a0, dt=1e-4)
    J = evaluate_cost(pr, B.size, pr.control(0.0), CostFunctional(target_on_mode(d)))
    exact = 0.5 * (a0**2 * (1 - np.exp(-2 * lam)) / (2 * lam)
                   - 2 * a0 * d * (1 - np.exp(-lam)) / lam + d * d)
    assert J == pytest.approx(exact, abs=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.01, 5.0), st.integers(0, 2**31))
def test_cost_linear_in_mu(mu, seed):
    pr = single_mode_problem(PointwiseMap.cubic(), dt=0.01)
    u = pr.random_control(np.random.default_rng(seed))
    c0 = CostFunctional(target_on_mode(0.1), mu=0.0)
    c1 = CostFunctional(target_on_mode(0.1), mu=mu)
    diff = evaluate_cost(pr, 5, u, c1) - evaluate_cost(pr, 5, u, c0)
    assert diff == pytest.approx(0.5 * mu * u.norm() ** 2, rel=1e-12)


def test_adjoint_zero_when_tracking_off():
    pr = single_mode_problem(PointwiseMap.cubic(), dt=0.01)
    u = pr.control(0.3)
    tr = integrate(pr, B.size, u, keep_stages=True)
    p = adjoint_solve(pr, B.size, tr, CostFunctional(target_on_mode(1.0), tracking_weight=0.0))
    assert np.all(p.coeffs == 0)


def test_adjoint_linear_closed_form():
    c, a0, d = 0.4, 0.8, 0.25
    lam = B.eigenvalues[ONE_MODE]
    kappa = lam - c
    pr = single_mode_problem(PointwiseMap.linear(c), a0, dt=1e-4)
    u = pr.control(0.0)
    tr = integrate(pr, B.size, u, keep_stages=True)
    p = adjoint_solve(pr, B.size, tr, CostFunctional(target_on_mode(d)))

    def oracle(t):
        f = lambda s: np.exp(-kappa * (s - t)) * (a0 * np.exp(-kappa * s) - d)
        return quad(f, t, 1.0, epsabs=1e-14, epsrel=1e-14)[0]

    for i in range(0, len(tr.times), 1000):
        assert p.coeffs[i, ONE_MODE] == pytest.approx(oracle(tr.times[i]), abs=1e-8)
    others = np.delete(p.coeffs, ONE_MODE, axis=1)
    assert np.max(np.abs(others)) < 1e-14


def test_adjoint_of_zero_trajectory_is_linear_backward_solution():
    c = -0.3
    pr = single_mode_problem(PointwiseMap.linear(c), a0=0.0, dt=1e-3)
    target = SpectralField(B.basis_id, np.linspace(0.1, 0.5, B.size))
    tr = integrate(pr, B.size, pr.control(0.0), keep_stages=True)
    p = adjoint_solve(pr, B.size, tr, CostFunctional(target))
    kappa = B.eigenvalues - c
    t = tr.times[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = -target.coeffs * np.where(kappa > 0, (1 - np.exp(-kappa * (1 - t))) / kappa, 1 - t)
    assert np.max(np.abs(p.coeffs - exact)) < 1e-6


def test_gradient_tracking_off_is_mu_u():
    pr = single_mode_problem(PointwiseMap.cubic(), dt=0.01)
    u = pr.random_control(np.random.default_rng(1))
    g = gradient(pr, B.size, u, CostFunctional(target_on_mode(1.0), mu=0.7, tracking_weight=0.0))
    assert np.allclose(g, 0.7 * u.values, atol=1e-15)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    F = PointwiseMap(lambda t, v: np.sin(v) - 0.5 * v, lambda t, v: np.cos(v) - 0.5, 1.5)
    op = ControlOperator(B.grid.weights, [TH < 2.0, TH > 4.0], ["nodal", "uniform"])
    x = SpectralField(B.basis_id, rng.standard_normal(B.size) * 0.5)
    pr = SemilinearProblem(B, F, op, x, 1.0, dt=0.02, n_intervals=5, lower=-3, upper=3)
    cost = CostFunctional(SpectralField(B.basis_id, rng.standard_normal(B.size) * 0.2), mu=0.2)
    u = pr.random_control(rng).with_values(rng.uniform(-1, 1, (5, op.n_dofs)))
    g = gradient(pr, 7, u, cost)
    eps = 1e-5
    for _ in range(5):
        d = rng.standard_normal(u.values.shape)
        fd = (evaluate_cost(pr, 7, u.with_values(u.values + eps * d), cost)
              - evaluate_cost(pr, 7, u.with_values(u.values - eps * d), cost)) / (2 * eps)
        an = u.inner(g, d)
        assert abs(fd - an) <= 1e-5 * max(abs(fd), abs(an))


def test_gradient_small_at_unconstrained_minimizer(lq_small):
    pr, cost = lq_small.problem, lq_small.cost
    sol = optimize(pr, 4, cost, pr.control(0.0), OptimizeOptions(tol=1e-8))
    assert sol.converged
    g = gradient(pr, 4, sol.control, cost)
    assert sol.control.norm(g) < 1e-6


def test_projection_examples():
    pr = single_mode_problem(PointwiseMap.zero())
    like = pr.control(0.0)
    raw = np.full(like.values.shape, 3.0)
    assert np.all(project_control(raw, like).values == 1.0)
    inside = np.random.default_rng(0).uniform(-1, 1, like.values.shape)
    assert np.array_equal(project_control(inside, like).values, inside)


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_projection_idempotent_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    pr = single_mode_problem(PointwiseMap.zero())
    like = pr.control(0.0)
    a = rng.normal(0, 3, like.values.shape)
    b = rng.normal(0, 3, like.values.shape)
    pa, pb = project_control(a, like), project_control(b, like)
    assert np.array_equal(project_control(pa.values, like).values, pa.values)
    assert like.norm(pa.values - pb.values) <= like.norm(a - b) * (1 + 1e-15)


def test_optimizer_monotone_and_consistent(lq_small):
    pr, cost = lq_small.problem, lq_small.cost
    sol = optimize(pr, 8, cost, pr.random_control(np.random.default_rng(0)))
    assert sol.converged
    assert np.all(np.diff(sol.history) <= 0)
    assert sol.cost == pytest.approx(evaluate_cost(pr, 8, sol.control, cost), abs=1e-10)
    assert np.all(sol.control.values >= sol.control.lower)
    payload = json.loads(sol.to_json())
    assert payload["converged"] is True and payload["iterations"] == sol.iterations


def test_optimizer_reports_nonconvergence(lq_small):
    pr, cost = lq_small.problem, lq_small.cost
    sol = optimize(pr, 4, cost, pr.control(0.0), OptimizeOptions(max_iters=1, tol=1e-14))
    assert not sol.converged and sol.message == "iteration limit reached"


def test_large_mu_drives_control_to_zero(lq_small):
    pr = lq_small.problem
    target = lq_small.cost.target
    J0 = evaluate_cost(pr, 4, pr.control(0.0), CostFunctional(target))
    norms, gaps = [], []
    for mu in (1.0, 10.0, 100.0):
        sol = optimize(pr, 4, CostFunctional(target, mu=mu), pr.control(0.0))
        norms.append(sol.control.norm())
        gaps.append(J0 - evaluate_cost(pr, 4, sol.control, CostFunctional(target)))
    assert norms[0] > norms[1] > norms[2]
    assert abs(gaps[0]) > abs(gaps[1]) > abs(gaps[2])


def test_value_function_terminal_and_trivial(lq_small):
    pr = lq_small.problem
    assert value_function(pr, 4, lq_small.cost, pr.horizon) == 0.0
    cost = CostFunctional(lq_small.cost.target, mu=0.5, tracking_weight=0.0)
    est = value_function_estimate(pr, 4, cost, 0.0, n_random=2)
    assert est.value == pytest.approx(0.0, abs=1e-12)
    assert np.max(np.abs(est.best.control.values)) < 1e-6


def test_value_function_nonincreasing_in_box(lq_small):
    pr, cost = lq_small.problem, lq_small.cost
    vals = [value_function(pr, 4, cost, 0.0, n_random=0, lower=-b, upper=b)
            for b in (0.5, 2.0, 50.0)]
    assert vals[0] >= vals[1] >= vals[2] - 1e-12


def test_value_function_later_start(lq_small):
    pr, cost = lq_small.problem, lq_small.cost
    v = value_function(pr, 4, cost, 0.5, n_random=1)
    assert 0 <= v < value_function(pr, 4, cost, 0.0, n_random=0)


def test_growth_condition_lq(lq_small):
    pr, cost = lq_small.problem, lq_small.cost
    sol = optimize(pr, 4, cost, pr.control(0.0), OptimizeOptions(tol=1e-8))
    sigma = cost.mu / 2
    rng = np.random.default_rng(7)
    for _ in range(50):
        v = pr.random_control(rng)
        d = v.values - sol.control.values
        assert sigma * sol.control.inner(d, d) <= evaluate_cost(pr, 4, v, cost) - sol.cost


# ------------------------------------------------------------------ Riccati oracle


def test_riccati_trivial():
    r = lq_riccati_oracle(np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), 0.3 * np.eye(2),
                          np.zeros(2), 1.0, dt=1e-2)
    assert np.all(r.P == 0) and r.value(np.array([1.0, -2.0])) == 0.0


def test_riccati_algebraic_limit():
    r = lq_riccati_oracle([[-1.0]], [[1.0]], [[1.0]], [[1.0]], [0.0], 20.0, dt=1e-3)
    assert r.P[0, 0, 0] == pytest.approx(np.sqrt(2) - 1, abs=1e-10)


def test_riccati_resolution():
    args = ([[-1.0, 0.3], [0.0, -2.0]], [[1.0], [0.5]], np.eye(2), [[0.5]], [0.2, -0.1], 2.0)
    x = np.array([1.0, 0.5])
    v1 = lq_riccati_oracle(*args, dt=2e-3).value(x)
    v2 = lq_riccati_oracle(*args, dt=1e-3).value(x)
    assert abs(v1 - v2) < 1e-8


def test_riccati_rejects_singular_R():
    with pytest.raises(OracleError):
        lq_riccati_oracle([[0.0]], [[1.0]], [[1.0]], [[0.0]], [0.0], 1.0)


def test_riccati_blowup_detected():
    with pytest.raises(OracleError):
        lq_riccati_oracle([[0.0]], [[1.0]], [[-50.0]], [[1.0]], [0.0], 5.0, dt=1e-3)


def test_lq_cost_matches_riccati(lq):
    pr, cost = lq.problem, lq.cost
    sol = optimize(pr, 4, cost, pr.control(0.0))
    A, Bm, Q, R, d, f, const = galerkin_lq_data(pr, 4, cost)
    ric = lq_riccati_oracle(A, Bm, Q, R, d, pr.horizon, 1e-3, f)
    J = ric.value(pr.initial.coeffs[:4]) + const * pr.horizon
    assert abs(sol.cost - J) / J <= 1e-4


def test_control_csv(tmp_path, lq_small):
    pr = lq_small.problem
    u = pr.control(0.25)
    from galerkin_control.control import control_to_csv
    control_to_csv(u, tmp_path / "u.csv", pr)
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "interval_start,region,dof,value"
    assert len(lines) == 1 + u.n_intervals * u.n_dofs


def test_optimizer_stops_when_tolerance_below_roundoff(lq_small):
    pr, cost = lq_small.problem, lq_small.cost
    sol = optimize(pr, 4, cost, pr.control(0.0), OptimizeOptions(tol=1e-13))
    assert not sol.converged
    assert sol.iterations < 500
