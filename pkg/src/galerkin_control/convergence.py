"""Convergence sweeps and a posteriori checks of the Galerkin error estimates.

The reference ("truth") solution is the Galerkin system at ``N_ref`` modes.
Suprema over time are maxima over stored steps; suprema over admissible
controls are maxima over seeded Monte Carlo samples, which can only
underestimate the true supremum.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .control import (
    CostFunctional,
    OptimizeOptions,
    cost_of_trajectory,
    optimize,
    value_function_estimate,
)
from .dynamics import (
    ControlSignal,
    SemilinearProblem,
    Trajectory,
    integrate,
    lipschitz_of,
)
from .errors import PreconditionError
from .spectral import SpectralField, tail_norms

MARGIN_RTOL = 1e-9
SUP_INFLATION = 1.2

J_GAP = "J-gap"
VALUE_GAP = "value-gap"
CONTROL_ERROR = "control-error"

DESCRIPTIONS = {
    J_GAP: "|J(u) - J_N(u)| <= Lip(G)[sqrt(T-t) + gamma (T-t)] ||(Id-P_N) y(.;u)||_{L2(t,T;H)}",
    VALUE_GAP: "|v(t,x) - v_N(t,P_N x)| <= Lip(G)[sqrt(T-t) + gamma (T-t)]"
               " (||(Id-P_N) y(.;u*)|| + ||(Id-P_N) y(.;u*_N)||)",
    CONTROL_ERROR: "||u* - u*_N||^2 <= (1/sigma) Lip(G)[sqrt(T) + gamma T]"
                   " (||(Id-P_N) y(.;u*)|| + 2 ||(Id-P_N) y(.;u*_N)||)",
}


def gamma_constant(beta1: float, lipF: float, T: float) -> float:
    """``gamma = (exp(2 (beta1 + 3/2 Lip F) T) Lip F)^{1/2}``."""
    if lipF < 0 or T <= 0:
        raise ValueError("need lipF >= 0 and T > 0")
    with np.errstate(over="ignore"):
        return float(np.sqrt(np.exp(2 * (beta1 + 1.5 * lipF) * T) * lipF))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


@dataclass
class ConvergenceReport:
    kind: str
    N_values: list
    metrics: dict
    sample_count: int = 0
    seed: int | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.N_values, self.N_values[1:])):
            raise ValueError("N_values must be increasing")
        for name, vals in self.metrics.items():
            if any(v is not None and v < 0 for v in vals):
                raise ValueError(f"metric {name} has negative entries")

    def metric(self, name: str) -> np.ndarray:
        return np.array([np.nan if v is None else v for v in self.metrics[name]])

    def nonincreasing(self, name: str) -> bool:
        v = self.metric(name)
        v = v[np.isfinite(v)]
        return bool(np.all(np.diff(v) <= 0))

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "metric", "value"])
            for name in sorted(self.metrics):
                for N, v in zip(self.N_values, self.metrics[name]):
                    w.writerow([N, name, "nan" if v is None else repr(float(v))])

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), indent=2, sort_keys=True)


@dataclass
class BoundCheckReport:
    inequality_id: str
    lhs: float
    rhs: float
    constants: dict
    N: int
    mode: str = "proved"
    conclusive: bool = True
    note: str = ""

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool | None:
        if not self.conclusive:
            return None
        return bool(self.margin >= -MARGIN_RTOL * max(1.0, self.rhs))

    @property
    def description(self) -> str:
        return DESCRIPTIONS[self.inequality_id]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(margin=self.margin, passed=self.passed, description=self.description)
        return _jsonable(d)


def write_bound_reports(reports, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            for ineq in sorted({r.inequality_id for r in reports}):
                fh.write(f"# {ineq}: {DESCRIPTIONS[ineq]}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["inequality", "N", "mode", "lhs", "rhs", "margin", "passed"])
            for r in reports:
                w.writerow([r.inequality_id, r.N, r.mode, repr(float(r.lhs)), repr(float(r.rhs)),
                            repr(float(r.margin)), r.passed])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
            fh.write("\n")


# ------------------------------------------------------------------ sweeps


def _sup_error(traj_N: Trajectory, ref: Trajectory) -> float:
    """Sup over the times of ``traj_N`` of ``||y_N - y_ref||``; ``ref`` may be finer in time."""
    sub = ref.at_times(traj_N.times) if len(ref.times) != len(traj_N.times) else ref
    diff = sub.coeffs.copy()
    diff[:, : traj_N.N] -= traj_N.coeffs
    return float(np.linalg.norm(diff, axis=1).max())


def _l2_time(times: np.ndarray, values: np.ndarray) -> float:
    """``(int |v|^2 dt)^{1/2}`` by the trapezoid rule."""
    return float(np.sqrt(np.trapezoid(values**2, times)))


def trajectory_convergence_sweep(problem: SemilinearProblem, u: ControlSignal, N_values,
                                 N_ref: int, dt: float | None = None,
                                 dt_ref: float | None = None,
                                 x: SpectralField | None = None) -> ConvergenceReport:
    """Sup-in-time error of the N-mode Galerkin trajectories against the reference."""
    N_values = sorted(N_values)
    if max(N_values) > N_ref / 2:
        raise PreconditionError("largest tested N must not exceed N_ref/2")
    dt = problem.dt if dt is None else dt
    dt_ref = dt / 4 if dt_ref is None else dt_ref
    ref = integrate(problem, N_ref, u, dt_ref, x=x)
    errs, tails = [], []
    for N in N_values:
        tr = integrate(problem, N, u, dt, x=x)
        errs.append(_sup_error(tr, ref))
    tails = tail_norms(ref.coeffs, N_values).max(axis=1).tolist()
    rep = ConvergenceReport("trajectory", N_values,
                            {"sup_error": errs, "sup_residual_energy": tails},
                            sample_count=1,
                            info={"N_ref": N_ref, "dt": dt, "dt_ref": dt_ref})
    rep.info["nonincreasing"] = rep.nonincreasing("sup_error")
    return rep


def uniform_convergence_estimate(problem: SemilinearProblem, N_values, N_ref: int,
                                 K_samples: int = 32, seed: int = 0,
                                 dt: float | None = None, dt_ref: float | None = None,
                                 x: SpectralField | None = None) -> ConvergenceReport:
    """Monte Carlo surrogate for the sup over admissible controls.

    Controls are drawn uniformly in the box per interval and dof from one
    seeded stream, so the first k samples of a larger run coincide with a run
    of k samples.
    """
    if K_samples < 1:
        raise PreconditionError("K_samples must be at least 1")
    N_values = sorted(N_values)
    dt = problem.dt if dt is None else dt
    dt_ref = dt / 4 if dt_ref is None else dt_ref
    rng = np.random.default_rng(seed)
    per_sample_err = np.zeros((K_samples, len(N_values)))
    per_sample_tail = np.zeros((K_samples, len(N_values)))
    for k in range(K_samples):
        u = problem.random_control(rng)
        ref = integrate(problem, N_ref, u, dt_ref, x=x)
        for j, N in enumerate(N_values):
            per_sample_err[k, j] = _sup_error(integrate(problem, N, u, dt, x=x), ref)
        per_sample_tail[k] = tail_norms(ref.coeffs, N_values).max(axis=1)
    return ConvergenceReport(
        "uniform", N_values,
        {"max_sup_error": per_sample_err.max(axis=0).tolist(),
         "max_sup_residual_energy": per_sample_tail.max(axis=0).tolist()},
        sample_count=K_samples, seed=seed,
        info={"N_ref": N_ref, "dt": dt, "dt_ref": dt_ref,
              "per_sample_sup_error": per_sample_err.tolist(),
              "per_sample_sup_residual_energy": per_sample_tail.tolist()},
    )


def value_convergence_sweep(problem: SemilinearProblem, cost: CostFunctional, t_values, x,
                            N_values, N_ref: int, n_random: int = 4, seed: int = 0,
                            options: OptimizeOptions | None = None,
                            dt: float | None = None) -> ConvergenceReport:
    """``max_t |v_N(t, P_N x) - v_{N_ref}(t, x)|`` per N.

    Entries whose optimizations did not converge are excluded from the max
    and listed in ``info["flagged"]``.
    """
    N_values = sorted(N_values)
    t_values = list(t_values)
    kw = dict(n_random=n_random, seed=seed, options=options, dt=dt)
    flagged = []

    def est(N, t):
        e = value_function_estimate(problem, N, cost, t, x, **kw)
        ok = e.best is None or e.best.converged
        if not ok:
            flagged.append({"N": N, "t": t})
        return e.value, ok

    ref = {t: est(N_ref, t) for t in t_values}
    gaps, table = [], {}
    for N in N_values:
        worst = None
        for t in t_values:
            v, ok = est(N, t)
            vr, okr = ref[t]
            g = abs(v - vr)
            table[f"{N}@{t!r}"] = {"v_N": v, "v_ref": vr, "gap": g}
            if ok and okr:
                worst = g if worst is None else max(worst, g)
        gaps.append(worst)
    if flagged:
        warnings.warn(f"{len(flagged)} value-function entries did not converge; excluded")
    rep = ConvergenceReport("value", N_values, {"max_value_gap": gaps}, seed=seed,
                            info={"N_ref": N_ref, "t_values": t_values, "table": table,
                                  "flagged": flagged, "n_random": n_random})
    return rep


# ------------------------------------------------------------------ bound checks


def _constants(problem: SemilinearProblem, cost: CostFunctional, trajs, T_span: float):
    sup = max(float(tr.norms().max()) for tr in trajs)
    C = SUP_INFLATION * sup
    lipF = lipschitz_of(problem, trajs)
    beta1 = -float(problem.basis.eigenvalues[0])
    gamma = gamma_constant(beta1, lipF, T_span)
    lipG = cost.tracking_lipschitz(C)
    return {"sup_norm": C, "lipF": lipF, "beta1": beta1, "gamma": gamma, "lipG": lipG,
            "T_span": T_span}


def _tail_l2(traj: Trajectory, N: int) -> float:
    return _l2_time(traj.times, tail_norms(traj.coeffs, [N])[0])


def j_gap_bound_check(problem: SemilinearProblem, cost: CostFunctional, u: ControlSignal,
                      N: int, N_ref: int, x: SpectralField | None = None,
                      dt: float | None = None) -> BoundCheckReport:
    """Check of the cost-gap estimate for one control on ``[u.t0, T]``.

    Both costs use the same time step so that the comparison isolates the
    spatial truncation error.
    """
    ref = integrate(problem, N_ref, u, dt, x=x)
    trN = integrate(problem, N, u, dt, x=x)
    lhs = abs(cost_of_trajectory(ref, u, cost) - cost_of_trajectory(trN, u, cost))
    span = u.T - u.t0
    c = _constants(problem, cost, [ref, trN], span)
    tail = _tail_l2(ref, N)
    rhs = c["lipG"] * (np.sqrt(span) + c["gamma"] * span) * tail
    c["residual_energy_L2"] = tail
    return BoundCheckReport(J_GAP, lhs, float(rhs), c, N)


def _optimal_pair(problem, cost, N, N_ref, t, x, options, dt, u0=None):
    base = problem.control(0.0)
    base = base.with_values(np.clip(base.values, base.lower, base.upper))
    if t > 0:
        base = base.restrict(t)
    u0 = base if u0 is None else u0
    star = optimize(problem, N_ref, cost, u0, options, x=x, dt=dt)
    starN = optimize(problem, N, cost, u0, options, x=x, dt=dt)
    return star, starN


def value_gap_bound_check(problem: SemilinearProblem, cost: CostFunctional, t: float,
                          x: SpectralField | None, N: int, N_ref: int,
                          options: OptimizeOptions | None = None,
                          dt: float | None = None) -> BoundCheckReport:
    """Check of the value-function gap estimate at time ``t``."""
    if np.isclose(t, problem.horizon):
        return BoundCheckReport(VALUE_GAP, 0.0, 0.0, {}, N, note="terminal time")
    star, starN = _optimal_pair(problem, cost, N, N_ref, t, x, options, dt)
    ref_star = star.trajectory
    ref_starN = integrate(problem, N_ref, starN.control, dt, x=x)
    lhs = abs(star.cost - starN.cost)
    span = problem.horizon - t
    c = _constants(problem, cost, [ref_star, ref_starN, starN.trajectory], span)
    t1, t2 = _tail_l2(ref_star, N), _tail_l2(ref_starN, N)
    rhs = c["lipG"] * (np.sqrt(span) + c["gamma"] * span) * (t1 + t2)
    c.update(residual_energy_L2_ustar=t1, residual_energy_L2_ustarN=t2,
             v_ref=star.cost, v_N=starN.cost)
    conclusive = star.converged and starN.converged
    return BoundCheckReport(VALUE_GAP, lhs, float(rhs), c, N, conclusive=conclusive,
                            note="" if conclusive else "optimizer did not converge")


def control_error_bound_check(problem: SemilinearProblem, cost: CostFunctional, N: int,
                              N_ref: int, caveat: bool = False,
                              prefactor: float | None = None,
                              x: SpectralField | None = None,
                              options: OptimizeOptions | None = None,
                              dt: float | None = None) -> BoundCheckReport:
    """Check of the optimal-control error estimate with growth constant ``mu/2``.

    For affine F (``caveat=False``) the growth condition holds by strong
    convexity.  For nonlinear F set ``caveat=True``: the growth condition is
    assumed and the report says so.  ``prefactor`` overrides ``Lip(G)/sigma``.
    """
    if cost.mu <= 0:
        raise PreconditionError("control error estimate needs mu > 0")
    if not problem.nonlinearity.affine and not caveat:
        raise PreconditionError("nonlinear F requires caveat mode")
    star, starN = _optimal_pair(problem, cost, N, N_ref, 0.0, x, options, dt)
    ref_starN = integrate(problem, N_ref, starN.control, dt, x=x)
    diff = star.control.values - starN.control.values
    lhs = star.control.inner(diff, diff)
    T = problem.horizon
    c = _constants(problem, cost, [star.trajectory, ref_starN, starN.trajectory], T)
    sigma = cost.mu / 2
    pref = c["lipG"] / sigma if prefactor is None else prefactor
    t1, t2 = _tail_l2(star.trajectory, N), _tail_l2(ref_starN, N)
    rhs = pref * (np.sqrt(T) + c["gamma"] * T) * (t1 + 2 * t2)
    c.update(sigma=sigma, prefactor=pref, residual_energy_L2_ustar=t1,
             residual_energy_L2_ustarN=t2)
    conclusive = star.converged and starN.converged
    return BoundCheckReport(CONTROL_ERROR, float(lhs), float(rhs), c, N,
                            mode="caveat" if caveat else "proved", conclusive=conclusive,
                            note=("growth condition assumed, not proved" if caveat else "")
                            + ("" if conclusive else "; optimizer did not converge"))
