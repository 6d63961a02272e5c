"""Costs, adjoint gradients, projected-gradient optimization and value functions.

Gradients are obtained by differentiating the discrete ETD2RK scheme exactly
(discretize-then-optimize), so finite-difference checks agree to round-off
level rather than to the time-discretization error.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ControlSignal,
    GalerkinSystem,
    SemilinearProblem,
    Trajectory,
    _steps_per_interval,
    integrate,
    phi1,
    phi2,
)
from .errors import DimensionError, NonConvergenceError, OracleError, PreconditionError
from .spectral import SpectralField


@dataclass(frozen=True)
class CostFunctional:
    """``int_t^T  w/2 ||y - T_d||^2 + mu/2 ||u||_V^2  ds``."""

    target: SpectralField
    mu: float = 0.0
    tracking_weight: float = 1.0

    def __post_init__(self):
        if self.mu < 0 or self.tracking_weight < 0:
            raise ValueError("cost weights must be nonnegative")

    def target_split(self, N: int) -> tuple[np.ndarray, float]:
        """Projected target and the constant ``1/2 ||(Id - P_N) T_d||^2``."""
        d = np.zeros(N)
        n = min(N, len(self.target))
        d[:n] = self.target.coeffs[:n]
        tail = 0.5 * float(np.sum(self.target.coeffs[n:] ** 2))
        return d, tail

    def tracking_lipschitz(self, radius: float) -> float:
        """Lipschitz constant of the tracking integrand on the ball of ``radius``."""
        return self.tracking_weight * (radius + self.target.norm())


@dataclass
class OCPSolution:
    control: ControlSignal
    trajectory: Trajectory
    cost: float
    iterations: int
    converged: bool
    gradient_norm: float
    history: list = field(default_factory=list)
    message: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "cost": self.cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "message": self.message,
            "time_grid": self.control.time_grid.tolist(),
            "control_values": self.control.values.tolist(),
            "cost_history": list(self.history),
        }, indent=2, sort_keys=True)

    def control_to_csv(self, path, problem: SemilinearProblem) -> None:
        control_to_csv(self.control, path, problem)


def control_to_csv(u: ControlSignal, path, problem: SemilinearProblem) -> None:
    op = problem.control_op
    reg, dof = op.region_of_dof(), op.dof_within_region()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval_start", "region", "dof", "value"])
        for i, t in enumerate(u.time_grid[:-1]):
            for j in range(u.n_dofs):
                w.writerow([repr(float(t)), op.names[reg[j]], int(dof[j]), repr(float(u.values[i, j]))])


# ------------------------------------------------------------------ cost and adjoint


def _trapezoid_weights(n_steps: int, h: float) -> np.ndarray:
    w = np.full(n_steps + 1, h)
    w[0] = w[-1] = h / 2
    return w


def _tracking(traj: Trajectory, cost: CostFunctional) -> tuple[np.ndarray, np.ndarray, float]:
    d, tail = cost.target_split(traj.N)
    r = traj.coeffs - d[None, :]
    return r, 0.5 * np.sum(r * r, axis=1) + tail, tail


def _check_admissible(u: ControlSignal, problem: SemilinearProblem) -> None:
    if u.n_dofs != problem.control_op.n_dofs:
        raise DimensionError(
            f"control has {u.n_dofs} dofs, operator expects {problem.control_op.n_dofs}"
        )


def cost_of_trajectory(traj: Trajectory, u: ControlSignal, cost: CostFunctional) -> float:
    h = traj.times[1] - traj.times[0]
    _, g, _ = _tracking(traj, cost)
    w = _trapezoid_weights(len(traj.times) - 1, h)
    track = cost.tracking_weight * float(np.dot(w, g))
    return track + 0.5 * cost.mu * u.norm() ** 2


def evaluate_cost(problem: SemilinearProblem, N: int, u: ControlSignal, cost: CostFunctional,
                  x: SpectralField | None = None, dt: float | None = None) -> float:
    """Trapezoid-in-time Galerkin cost ``J_N`` of the control ``u``."""
    _check_admissible(u, problem)
    traj = integrate(problem, N, u, dt, x=x)
    return cost_of_trajectory(traj, u, cost)


def _discrete_adjoint(problem: SemilinearProblem, traj: Trajectory, u: ControlSignal,
                      cost: CostFunctional):
    """Backward sweep of the transposed ETD2RK step.

    Returns the discrete costates ``lam_n`` and the sensitivities
    ``dJ/dc_n = P1 * mu1_n`` of the cost to the constant forcing of step n.
    """
    if traj.stages is None:
        raise PreconditionError("trajectory was integrated without stored stages")
    N = traj.N
    sys = GalerkinSystem(problem, N)
    n_steps = len(traj.times) - 1
    h = (traj.times[-1] - traj.times[0]) / n_steps
    z = -sys.lam * h
    E, P1, P2 = np.exp(z), h * phi1(z), h * phi2(z)
    r, _, _ = _tracking(traj, cost)
    grad_g = cost.tracking_weight * r
    w = _trapezoid_weights(n_steps, h)
    lam = np.empty((n_steps + 1, N))
    sens = np.empty((n_steps, N))
    lam[-1] = w[-1] * grad_g[-1]
    for n in range(n_steps - 1, -1, -1):
        lnext = lam[n + 1]
        t = traj.times[n]
        mu1 = lnext + sys.DF_T(t + h, traj.stages[n], P2 * lnext)
        sens[n] = P1 * mu1
        back = E * mu1 + sys.DF_T(t, traj.coeffs[n], P1 * mu1 - P2 * lnext)
        lam[n] = w[n] * grad_g[n] + back
    return lam, sens, grad_g, h


def adjoint_solve(problem: SemilinearProblem, N: int, trajectory: Trajectory,
                  cost: CostFunctional, u: ControlSignal | None = None) -> Trajectory:
    """Adjoint state ``p`` with ``p' = -L_N p - DF_N(y)^T p - grad G(y)``, ``p(T) = 0``.

    ``p`` is recovered from the discrete costates by removing the local
    trapezoid half-weight, which gives a second-order approximation of the
    continuous adjoint.  If ``trajectory`` lacks stages it is recomputed from
    ``u``.
    """
    traj = trajectory
    if traj.stages is None:
        if u is None:
            raise PreconditionError("need the control to rebuild stage states")
        h = traj.times[1] - traj.times[0]
        traj = integrate(problem, N, u, h, x=SpectralField(traj.basis_id, traj.coeffs[0]),
                         keep_stages=True)
    lam, _, grad_g, h = _discrete_adjoint(problem, traj, u, cost)
    w = _trapezoid_weights(len(traj.times) - 1, h)
    p = lam - (w - h / 2)[:, None] * grad_g
    p[-1] = 0.0
    return Trajectory(traj.times, p, traj.basis_id)


def cost_and_gradient(problem: SemilinearProblem, N: int, u: ControlSignal,
                      cost: CostFunctional, x: SpectralField | None = None,
                      dt: float | None = None):
    """Cost, gradient (Riesz representative in L2(t,T;V)) and forward trajectory."""
    _check_admissible(u, problem)
    traj = integrate(problem, N, u, dt, x=x, keep_stages=True)
    J = cost_of_trajectory(traj, u, cost)
    _, sens, _, h = _discrete_adjoint(problem, traj, u, cost)
    m = _steps_per_interval(u, h)
    sys = GalerkinSystem(problem, N)
    tau = u.interval_length
    vw = u.vweights
    grad = np.empty_like(u.values)
    per_interval = sens.reshape(u.n_intervals, m, N).sum(axis=1)
    for i in range(u.n_intervals):
        grad[i] = sys.forcing_adjoint(u.values[i], per_interval[i]) / (tau * vw)
    grad += cost.mu * u.values
    return J, grad, traj


def gradient(problem: SemilinearProblem, N: int, u: ControlSignal, cost: CostFunctional,
             x: SpectralField | None = None, dt: float | None = None) -> np.ndarray:
    """``grad J_N(u)`` per control interval and dof, as a V-valued step function."""
    return cost_and_gradient(problem, N, u, cost, x, dt)[1]


def project_control(u_raw: np.ndarray, like: ControlSignal) -> ControlSignal:
    """Componentwise clamp of raw values onto the box of ``like``."""
    vals = np.asarray(u_raw, dtype=float).reshape(like.values.shape)
    return like.with_values(np.clip(vals, like.lower, like.upper))


# ------------------------------------------------------------------ optimizer


@dataclass(frozen=True)
class OptimizeOptions:
    tol: float = 1e-6
    max_iters: int = 500
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    initial_step: float | None = None
    stall_window: int = 10


def _projected_gradient_norm(u: ControlSignal, g: np.ndarray) -> float:
    pg = u.values - np.clip(u.values - g, u.lower, u.upper)
    return u.norm(pg)


def optimize(problem: SemilinearProblem, N: int, cost: CostFunctional, u0: ControlSignal,
             options: OptimizeOptions | None = None, x: SpectralField | None = None,
             dt: float | None = None) -> OCPSolution:
    """Projected gradient with Armijo backtracking and Barzilai-Borwein steps.

    Accepted iterates never increase the cost.  Failure to reach the
    tolerance is reported through ``converged=False``.
    """
    opt = options or OptimizeOptions()
    u = u0
    J, g, traj = cost_and_gradient(problem, N, u, cost, x, dt)
    history = [J]
    gnorm = _projected_gradient_norm(u, g)
    step = opt.initial_step or 1.0 / max(u.norm(g), 1e-12)
    for it in range(opt.max_iters):
        if gnorm < opt.tol:
            return OCPSolution(u, traj, J, it, True, gnorm, history, "tolerance reached")
        alpha = step
        for _ in range(opt.max_backtracks):
            cand = u.with_values(np.clip(u.values - alpha * g, u.lower, u.upper))
            Jc, gc, trc = cost_and_gradient(problem, N, cand, cost, x, dt)
            if Jc <= J + opt.armijo_c * u.inner(g, cand.values - u.values):
                break
            alpha *= opt.shrink
        else:
            return OCPSolution(u, traj, J, it, False, gnorm, history,
                               "line search failed to decrease the cost")
        s = cand.values - u.values
        y = gc - g
        sy = u.inner(s, y)
        step = u.inner(s, s) / sy if sy > 0 else alpha / opt.shrink
        u, J, g, traj = cand, Jc, gc, trc
        history.append(J)
        gnorm = _projected_gradient_norm(u, g)
        if (len(history) > opt.stall_window
                and history[-opt.stall_window - 1] - J <= 1e-15 * max(abs(J), 1.0)
                and gnorm >= opt.tol):
            return OCPSolution(u, traj, J, it + 1, False, gnorm, history,
                               "cost stagnated at round-off level")
    converged = gnorm < opt.tol
    return OCPSolution(u, traj, J, opt.max_iters, converged, gnorm, history,
                       "tolerance reached" if converged else "iteration limit reached")


@dataclass
class ValueEstimate:
    value: float
    best: OCPSolution | None
    costs: list
    disagreement: bool

    def __float__(self) -> float:
        return self.value


def value_function_estimate(problem: SemilinearProblem, N: int, cost: CostFunctional,
                            t: float, x: SpectralField | None = None, n_random: int = 4,
                            seed: int = 0, options: OptimizeOptions | None = None,
                            dt: float | None = None, lower=None, upper=None,
                            require_converged: bool = False) -> ValueEstimate:
    """Multistart estimate of ``v_N(t, P_N x)`` (an upper bound on the infimum).

    ``t`` must lie on the problem's control grid.  Starts are the projected
    zero control plus ``n_random`` seeded uniform samples of the box.
    """
    if t > problem.horizon or t < 0:
        raise PreconditionError("t must lie in [0, T]")
    if np.isclose(t, problem.horizon):
        return ValueEstimate(0.0, None, [0.0], False)
    if lower is not None or upper is not None:
        problem = problem.with_(lower=problem.lower if lower is None else lower,
                                upper=problem.upper if upper is None else upper)
    base = problem.control(0.0)
    base = base.with_values(np.clip(base.values, base.lower, base.upper))
    rng = np.random.default_rng(seed)
    starts = [base]
    for _ in range(n_random):
        starts.append(base.with_values(rng.uniform(base.lower, base.upper, base.values.shape)))
    starts = [s.restrict(t) if t > 0 else s for s in starts]
    sols = []
    for s in starts:
        sol = optimize(problem, N, cost, s, options, x=x, dt=dt)
        sols.append(sol)
    ok = [s for s in sols if s.converged] or ([] if require_converged else sols)
    if not ok:
        raise NonConvergenceError(f"no multistart run converged for v_N(t={t})")
    costs = [s.cost for s in sols]
    best = min(ok, key=lambda s: s.cost)
    spread = max(s.cost for s in ok) - best.cost
    return ValueEstimate(best.cost, best, costs, spread > 1e-6 * max(1.0, abs(best.cost)))


def value_function(problem: SemilinearProblem, N: int, cost: CostFunctional, t: float,
                   x: SpectralField | None = None, **kwargs) -> float:
    return value_function_estimate(problem, N, cost, t, x, **kwargs).value


# ------------------------------------------------------------------ LQ oracle


@dataclass
class RiccatiSolution:
    times: np.ndarray
    P: np.ndarray
    s: np.ndarray
    r: np.ndarray
    B: np.ndarray
    R_inv: np.ndarray

    def value(self, x: np.ndarray, k: int = 0) -> float:
        return float(0.5 * x @ self.P[k] @ x + self.s[k] @ x + self.r[k])

    def law(self, k: int, x: np.ndarray) -> np.ndarray:
        """Optimal feedback ``u = -R^{-1} B^T (P x + s)`` at stored time index ``k``."""
        return -self.R_inv @ self.B.T @ (self.P[k] @ x + self.s[k])


def lq_riccati_oracle(A, B, Q_w, R_w, target, T: float, dt: float = 1e-4,
                      f=None) -> RiccatiSolution:
    """Finite-horizon LQ tracking via backward RK4 on the Riccati system.

    Minimizes ``int_0^T 1/2 (x-d)^T Q (x-d) + 1/2 u^T R u`` subject to
    ``x' = A x + B u + f``, with the value ``1/2 x^T P x + s^T x + r``.
    """
    A, B, Q, R = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q_w, R_w))
    n = A.shape[0]
    d = np.asarray(target, dtype=float).reshape(n)
    f = np.zeros(n) if f is None else np.asarray(f, dtype=float).reshape(n)
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise OracleError("R_w must be positive definite") from exc
    R_inv = np.linalg.inv(R)
    S = B @ R_inv @ B.T
    Qd = Q @ d
    dQd = float(d @ Qd)

    def rhs(P, s, r):
        # time derivatives in reversed time tau = T - t
        dP = A.T @ P + P @ A - P @ S @ P + Q
        ds = (A - S @ P).T @ s + P @ f - Qd
        dr = 0.5 * dQd + s @ f - 0.5 * s @ S @ s
        return dP, ds, dr

    n_steps = max(1, int(np.ceil(T / dt - 1e-9)))
    h = T / n_steps
    P = np.zeros((n_steps + 1, n, n))
    s = np.zeros((n_steps + 1, n))
    r = np.zeros(n_steps + 1)
    Pk, sk, rk = P[-1].copy(), s[-1].copy(), 0.0
    for k in range(n_steps, 0, -1):
        k1 = rhs(Pk, sk, rk)
        k2 = rhs(Pk + h / 2 * k1[0], sk + h / 2 * k1[1], rk + h / 2 * k1[2])
        k3 = rhs(Pk + h / 2 * k2[0], sk + h / 2 * k2[1], rk + h / 2 * k2[2])
        k4 = rhs(Pk + h * k3[0], sk + h * k3[1], rk + h * k3[2])
        Pk = Pk + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Pk = 0.5 * (Pk + Pk.T)
        sk = sk + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        rk = rk + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if not (np.all(np.isfinite(Pk)) and np.abs(Pk).max() < 1e12):
            raise OracleError(f"Riccati solution blew up at t={(k - 1) * h:.6g}")
        P[k - 1], s[k - 1], r[k - 1] = Pk, sk, rk
    return RiccatiSolution(np.linspace(0.0, T, n_steps + 1), P, s, r, B, R_inv)


def galerkin_lq_data(problem: SemilinearProblem, N: int, cost: CostFunctional):
    """Matrices of the N-mode system when F is affine and the coupling linear.

    Returns ``(A, B, Q, R, d, f, const)`` where ``const`` is the projected-out
    target energy ``1/2 ||(Id - P_N) T_d||^2`` that enters the cost per unit time.
    """
    if not getattr(problem.control_op.coupling, "linear", False):
        raise PreconditionError("LQ data needs a linear coupling")
    sys = GalerkinSystem(problem, N)
    zero = np.zeros(problem.basis.grid.size)
    slope = problem.nonlinearity.derivative(0.0, zero)
    A = -np.diag(sys.lam) + sys.Phi_w @ (slope[:, None] * sys.Phi.T)
    f = sys.to_coeffs(problem.nonlinearity.value(0.0, zero))
    op = problem.control_op
    B = np.column_stack([sys.to_coeffs(op.field(e)) for e in np.eye(op.n_dofs)])
    d, tail = cost.target_split(N)
    Q = cost.tracking_weight * np.eye(N)
    R = cost.mu * np.diag(op.vweights)
    return A, B, Q, R, d, f, cost.tracking_weight * tail
