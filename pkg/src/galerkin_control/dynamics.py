"""Galerkin systems of controlled semilinear evolution equations.

The state equation is ``y' = L y + F(t, y) + C(u(t))`` with ``L`` diagonal in an
eigenbasis (eigenvalues ``-lambda_k``), ``F`` a Nemytskii operator evaluated on
the quadrature grid, and ``C`` a region-structured control operator.  The
N-mode Galerkin system is integrated with second-order exponential time
differencing (ETD2RK, Cox & Matthews 2002), which is exact for the linear flow
and for constant forcing.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bases import EigenBasis
from .errors import DimensionError, DivergenceError, ModelError, PreconditionError
from .spectral import SpectralField, _frozen, tail_norms

OVERFLOW_GUARD = 1e8
LIPSCHITZ_INFLATION = 1.2
LIPSCHITZ_RANGE_FACTOR = 1.5


# ------------------------------------------------------------------ phi functions


def phi1(z):
    """(e^z - 1)/z, with phi1(0) = 1."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    small = np.abs(z) < 1e-4
    zs = z[small]
    out[small] = 1 + zs / 2 + zs * zs / 6 + zs**3 / 24
    zl = z[~small]
    out[~small] = np.expm1(zl) / zl
    return out


def phi2(z):
    """(e^z - 1 - z)/z^2, with phi2(0) = 1/2.

    The direct formula cancels badly for moderate |z|, so the Taylor series is
    used below |z| = 0.2 (truncation error < 1e-17).
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 0.2
    zs = z[small]
    acc = np.zeros_like(zs)
    term = np.full_like(zs, 0.5)
    for k in range(16):
        acc += term
        term = term * zs / (k + 3)
    out[small] = acc
    zl = z[~small]
    out[~small] = (np.expm1(zl) - zl) / (zl * zl)
    return out


# ------------------------------------------------------------------ building blocks


@dataclass(frozen=True)
class PointwiseMap:
    """A nonlinearity acting node by node on grid values.

    ``value(t, v)`` and ``derivative(t, v)`` take an array whose last axis
    runs over the grid nodes; any dependence on the node position is captured
    by the closure and must broadcast along that axis.
    """

    value: Callable[[float, np.ndarray], np.ndarray]
    derivative: Callable[[float, np.ndarray], np.ndarray]
    lipschitz: float | None = None
    time_dependent: bool = False
    name: str = "F"
    affine: bool = False

    @staticmethod
    def zero(name: str = "zero") -> "PointwiseMap":
        return PointwiseMap(lambda t, v: np.zeros_like(v), lambda t, v: np.zeros_like(v),
                            lipschitz=0.0, name=name, affine=True)

    @staticmethod
    def linear(c: float, offset=0.0, name: str = "linear") -> "PointwiseMap":
        """``F(v) = c v + offset``; ``offset`` may be a grid array."""
        return PointwiseMap(lambda t, v: c * v + offset, lambda t, v: np.full_like(v, c),
                            lipschitz=abs(c), name=name, affine=True)

    @staticmethod
    def cubic(name: str = "cubic") -> "PointwiseMap":
        """Allen-Cahn type ``F(v) = v - v^3`` (locally Lipschitz only)."""
        return PointwiseMap(lambda t, v: v - v**3, lambda t, v: 1 - 3 * v * v, name=name)


class LinearSum:
    """Default coupling ``G(zeta_1, ..., zeta_M) = sum_i zeta_i``."""

    linear = True

    def value(self, zeta: np.ndarray) -> np.ndarray:
        return zeta.sum(axis=0)

    def grad(self, zeta: np.ndarray) -> np.ndarray:
        return np.ones_like(zeta)


@dataclass(frozen=True)
class SmoothCoupling:
    """User-supplied nonlinear coupling; ``grad`` returns dG/dzeta_i per node."""

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    linear: bool = False


class ControlOperator:
    """Region-structured control operator ``C(v)[xi] = G(v~_1(xi), ..., v~_M(xi))``.

    Each region is a boolean node mask.  A ``nodal`` region carries one degree
    of freedom per grid node inside it (the values of ``v_i`` in L2(Omega_i));
    a ``uniform`` region carries a single amplitude multiplying its indicator.
    Outside its region each input is extended by zero.
    """

    def __init__(self, weights: np.ndarray, regions: Sequence[np.ndarray],
                 modes: Sequence[str] | str = "nodal", coupling=None, names=None):
        self.weights = np.asarray(weights, dtype=float)
        n = len(self.weights)
        self.regions = [np.asarray(r, dtype=bool) for r in regions]
        if not self.regions:
            raise ModelError("at least one control region is required")
        if isinstance(modes, str):
            modes = [modes] * len(self.regions)
        self.modes = list(modes)
        self.names = list(names) if names is not None else [f"region{i}" for i in range(len(self.regions))]
        self.coupling = coupling if coupling is not None else LinearSum()
        self._slices = []
        self._node_idx = []
        vw = []
        start = 0
        for r, mode in zip(self.regions, self.modes):
            if r.shape != (n,):
                raise DimensionError(f"region mask has shape {r.shape}, grid has {n} nodes")
            if not r.any():
                raise ModelError("empty control region")
            idx = np.flatnonzero(r)
            self._node_idx.append(idx)
            if mode == "nodal":
                d = len(idx)
                vw.append(self.weights[idx])
            elif mode == "uniform":
                d = 1
                vw.append(np.array([self.weights[idx].sum()]))
            else:
                raise ValueError(f"unknown region mode {mode!r}")
            self._slices.append(slice(start, start + d))
            start += d
        self.n_dofs = start
        self.vweights = np.concatenate(vw)
        if np.linalg.norm(self.field(np.zeros(self.n_dofs))) != 0.0:
            raise ModelError("control operator must map 0 to 0")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def region_of_dof(self) -> np.ndarray:
        out = np.empty(self.n_dofs, dtype=int)
        for i, s in enumerate(self._slices):
            out[s] = i
        return out

    def dof_within_region(self) -> np.ndarray:
        out = np.empty(self.n_dofs, dtype=int)
        for s in self._slices:
            out[s] = np.arange(s.stop - s.start)
        return out

    def inputs(self, u: np.ndarray) -> np.ndarray:
        """Zero-extended regional inputs, shape (M, n_nodes)."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_dofs,):
            raise DimensionError(f"control has shape {u.shape}, expected ({self.n_dofs},)")
        zeta = np.zeros((self.n_regions, len(self.weights)))
        for i, (s, idx, mode) in enumerate(zip(self._slices, self._node_idx, self.modes)):
            zeta[i, idx] = u[s] if mode == "nodal" else u[s][0]
        return zeta

    def field(self, u: np.ndarray) -> np.ndarray:
        """Grid values of ``C(u)``."""
        return self.coupling.value(self.inputs(u))

    def adjoint(self, u: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Gradient in dof space of ``u -> sum_j q_j C(u)_j`` (plain node sum)."""
        dG = self.coupling.grad(self.inputs(u)) * q[None, :]
        out = np.empty(self.n_dofs)
        for i, (s, idx, mode) in enumerate(zip(self._slices, self._node_idx, self.modes)):
            out[s] = dG[i, idx] if mode == "nodal" else dG[i, idx].sum()
        return out

    def norm_sq(self, u: np.ndarray) -> float:
        return float(np.dot(self.vweights, np.asarray(u) ** 2))

    def lipschitz(self, rng: np.random.Generator | None = None, samples: int = 200,
                  box: tuple | None = None) -> float:
        """Lipschitz constant of ``C: V -> H``.

        Exact operator norm for a linear coupling (largest generalized
        eigenvalue of the H-Gram against the V-Gram).  For a nonlinear coupling
        the largest sampled difference quotient over ``box`` is inflated by 1.2.
        """
        if getattr(self.coupling, "linear", False):
            E = np.zeros((len(self.weights), self.n_dofs))
            for j in range(self.n_dofs):
                e = np.zeros(self.n_dofs)
                e[j] = 1.0
                E[:, j] = self.field(e)
            A = E.T @ (self.weights[:, None] * E)
            s = 1.0 / np.sqrt(self.vweights)
            return float(np.sqrt(max(np.linalg.eigvalsh(s[:, None] * A * s[None, :])[-1], 0.0)))
        rng = rng or np.random.default_rng(0)
        lo, hi = box if box is not None else (-np.ones(self.n_dofs), np.ones(self.n_dofs))
        best = 0.0
        for _ in range(samples):
            a = rng.uniform(lo, hi)
            b = rng.uniform(lo, hi)
            d = np.sqrt(self.norm_sq(a - b))
            if d > 0:
                diff = self.field(a) - self.field(b)
                best = max(best, np.sqrt(np.dot(self.weights, diff**2)) / d)
        return LIPSCHITZ_INFLATION * best


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant control on a uniform partition of [t0, T].

    ``values`` has shape (n_intervals, n_dofs); ``lower``/``upper`` define the
    compact convex box U; ``vweights`` give the V-norm of one interval value.
    """

    time_grid: np.ndarray
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    vweights: np.ndarray

    def __post_init__(self):
        tg = _frozen(self.time_grid)
        vals = _frozen(np.atleast_2d(self.values))
        n_dofs = vals.shape[1]
        lo = _frozen(np.broadcast_to(self.lower, (n_dofs,)))
        hi = _frozen(np.broadcast_to(self.upper, (n_dofs,)))
        vw = _frozen(np.broadcast_to(self.vweights, (n_dofs,)))
        for name, v in (("time_grid", tg), ("values", vals), ("lower", lo), ("upper", hi),
                        ("vweights", vw)):
            object.__setattr__(self, name, v)
        if len(tg) != vals.shape[0] + 1:
            raise DimensionError("time_grid must have n_intervals + 1 points")
        steps = np.diff(tg)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps.mean():
            raise ValueError("time_grid must be a uniform increasing partition")
        if np.any(lo > hi):
            raise ValueError("lower bounds exceed upper bounds")
        if np.any(vals < lo) or np.any(vals > hi):
            raise ValueError("control values outside admissible bounds")

    @property
    def n_intervals(self) -> int:
        return self.values.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.values.shape[1]

    @property
    def interval_length(self) -> float:
        return float(self.time_grid[1] - self.time_grid[0])

    @property
    def t0(self) -> float:
        return float(self.time_grid[0])

    @property
    def T(self) -> float:
        return float(self.time_grid[-1])

    def with_values(self, values) -> "ControlSignal":
        return ControlSignal(self.time_grid, values, self.lower, self.upper, self.vweights)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """L2(t0, T; V) inner product of two value arrays on this partition."""
        return float(self.interval_length * np.sum(a * b * self.vweights[None, :]))

    def norm(self, a: np.ndarray | None = None) -> float:
        a = self.values if a is None else a
        return float(np.sqrt(self.inner(a, a)))

    def pointwise_norms(self) -> np.ndarray:
        """``||u(s)||_V`` on each interval."""
        return np.sqrt(np.sum(self.values**2 * self.vweights[None, :], axis=1))

    def bound_norm(self) -> float:
        """``C_U = sup_{w in U} ||w||_V`` for the box."""
        return float(np.sqrt(np.sum(self.vweights * np.maximum(self.lower**2, self.upper**2))))

    def restrict(self, t: float) -> "ControlSignal":
        """The tail of this control on [t, T]; ``t`` must be a grid point."""
        k = int(np.argmin(np.abs(self.time_grid - t)))
        if abs(self.time_grid[k] - t) > 1e-9 * max(1.0, abs(t)) or k >= self.n_intervals:
            raise PreconditionError(f"t={t} is not an interior control grid point")
        return ControlSignal(self.time_grid[k:], self.values[k:], self.lower, self.upper,
                             self.vweights)


@dataclass(frozen=True)
class SemilinearProblem:
    basis: EigenBasis
    nonlinearity: PointwiseMap
    control_op: ControlOperator
    initial: SpectralField
    horizon: float
    dt: float = 0.01
    n_intervals: int = 10
    lower: np.ndarray | float = -1.0
    upper: np.ndarray | float = 1.0
    name: str = "problem"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.initial.basis_id != self.basis.basis_id:
            raise DimensionError(
                f"initial state lives on {self.initial.basis_id}, problem basis is "
                f"{self.basis.basis_id}"
            )
        if len(self.initial) != self.basis.size:
            object.__setattr__(self, "initial", self.initial.padded(self.basis.size))
        if len(self.control_op.weights) != self.basis.grid.size:
            raise DimensionError("control operator built on a different grid")

    def control(self, value: float | np.ndarray = 0.0, t0: float = 0.0,
                n_intervals: int | None = None) -> ControlSignal:
        """Constant admissible control on [t0, T] with the problem's bounds."""
        n = n_intervals or self.n_intervals
        if t0 > 0:
            full = self.control(value, 0.0, n)
            return full.restrict(t0)
        vals = np.broadcast_to(np.asarray(value, dtype=float), (n, self.control_op.n_dofs))
        return ControlSignal(np.linspace(0.0, self.horizon, n + 1), vals, self.lower,
                             self.upper, self.control_op.vweights)

    def random_control(self, rng: np.random.Generator, t0: float = 0.0,
                       n_intervals: int | None = None) -> ControlSignal:
        """Uniform sample in the box, independently per interval and dof."""
        u = self.control(0.0, 0.0, n_intervals)
        vals = rng.uniform(u.lower, u.upper, size=u.values.shape)
        u = u.with_values(vals)
        return u.restrict(t0) if t0 > 0 else u

    def with_(self, **changes) -> "SemilinearProblem":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class Trajectory:
    """Stored states ``coeffs[i]`` (length-N coefficient vectors) at ``times[i]``."""

    times: np.ndarray
    coeffs: np.ndarray
    basis_id: str
    stages: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.coeffs.shape[0] != len(self.times):
            raise DimensionError("one state per time required")

    @property
    def N(self) -> int:
        return self.coeffs.shape[1]

    @property
    def states(self) -> list[SpectralField]:
        return [SpectralField(self.basis_id, c) for c in self.coeffs]

    def final(self) -> SpectralField:
        return SpectralField(self.basis_id, self.coeffs[-1])

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=1)

    def padded(self, K: int) -> np.ndarray:
        out = np.zeros((len(self.times), K))
        out[:, : self.N] = self.coeffs
        return out

    def at_times(self, times: np.ndarray) -> "Trajectory":
        """Subsample at stored times (matched to 1e-9)."""
        idx = np.searchsorted(self.times, np.asarray(times) - 1e-9)
        idx = np.minimum(idx, len(self.times) - 1)
        if np.any(np.abs(self.times[idx] - times) > 1e-9):
            raise ValueError("requested times are not stored in this trajectory")
        return Trajectory(self.times[idx], self.coeffs[idx], self.basis_id)

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "mode_index", "coefficient"])
            for t, c in zip(self.times, self.coeffs):
                for k, a in enumerate(c):
                    w.writerow([repr(float(t)), k, repr(float(a))])

    def summary_to_csv(self, path, Ns: Sequence[int], header: str | None = None) -> None:
        tails = tail_norms(self.coeffs, [min(N, self.N) for N in Ns])
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "norm"] + [f"residual_energy@{N}" for N in Ns])
            for i, (t, nrm) in enumerate(zip(self.times, self.norms())):
                w.writerow([repr(float(t)), repr(float(nrm))]
                           + [repr(float(v)) for v in tails[:, i]])


# ------------------------------------------------------------------ Galerkin system


class GalerkinSystem:
    """Cached matrices of the N-mode Galerkin system of a problem."""

    def __init__(self, problem: SemilinearProblem, N: int):
        b = problem.basis
        if not 1 <= N <= b.size:
            raise DimensionError(f"N={N} outside 1..{b.size}")
        self.problem = problem
        self.N = N
        self.lam = b.eigenvalues[:N]
        self.Phi = b.table[:N]
        self.Phi_w = self.Phi * b.grid.weights[None, :]

    def to_grid(self, a: np.ndarray) -> np.ndarray:
        return a @ self.Phi

    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        return self.Phi_w @ values

    def F(self, t: float, a: np.ndarray) -> np.ndarray:
        """``P_N F(t, y)`` for coefficient vector ``a``."""
        return self.to_coeffs(self.problem.nonlinearity.value(t, self.to_grid(a)))

    def DF_T(self, t: float, a: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``(D P_N F(y))^T v``; self-adjoint for pointwise maps."""
        d = self.problem.nonlinearity.derivative(t, self.to_grid(a))
        return self.to_coeffs(d * self.to_grid(v))

    def forcing(self, u_values: np.ndarray) -> np.ndarray:
        """``P_N C(u)`` for every interval, shape (n_intervals, N)."""
        op = self.problem.control_op
        return np.array([self.to_coeffs(op.field(v)) for v in np.atleast_2d(u_values)])

    def forcing_adjoint(self, u_value: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Dof-space gradient of ``u -> <g, P_N C(u)>``."""
        op = self.problem.control_op
        return op.adjoint(u_value, self.problem.basis.grid.weights * self.to_grid(g))


def _steps_per_interval(u: ControlSignal, dt: float) -> int:
    m = u.interval_length / dt
    mi = int(round(m))
    if mi < 1 or abs(m - mi) > 1e-8 * max(1.0, m):
        raise PreconditionError(
            f"dt={dt} does not divide the control interval {u.interval_length}"
        )
    return mi


def galerkin_rhs(problem: SemilinearProblem, N: int, t: float, state_N: SpectralField,
                 u_value) -> SpectralField:
    """``L_N y + P_N F(t, y) + P_N C(u)`` for a state supported on the first N modes."""
    sys = GalerkinSystem(problem, N)
    a = np.asarray(state_N.coeffs, dtype=float)
    if len(a) < N:
        raise DimensionError(f"state has {len(a)} coefficients, N={N}")
    if np.any(a[N:] != 0):
        raise PreconditionError("state is not supported on the first N modes")
    u_value = np.asarray(u_value, dtype=float)
    if u_value.shape != (problem.control_op.n_dofs,):
        raise DimensionError(
            f"control value has shape {u_value.shape}, expected ({problem.control_op.n_dofs},)"
        )
    aN = a[:N]
    rhs = -sys.lam * aN + sys.F(t, aN) + sys.forcing(u_value)[0]
    out = np.zeros(len(a))
    out[:N] = rhs
    return SpectralField(state_N.basis_id, out)


def integrate(problem: SemilinearProblem, N: int, u: ControlSignal, dt: float | None = None,
              x: SpectralField | None = None, overflow: float = OVERFLOW_GUARD,
              keep_stages: bool = False) -> Trajectory:
    """ETD2RK integration of the N-mode Galerkin system driven by ``u``.

    Starts at ``u.t0`` from ``P_N x`` (``x`` defaults to the problem's initial
    state) and stores every step.  ``keep_stages`` retains the intermediate
    stage states needed by the discrete adjoint.
    """
    dt = problem.dt if dt is None else dt
    m = _steps_per_interval(u, dt)
    h = u.interval_length / m
    sys = GalerkinSystem(problem, N)
    x = problem.initial if x is None else x
    if x.basis_id != problem.basis.basis_id:
        raise DimensionError("initial state belongs to another basis")
    y = np.zeros(N)
    n0 = min(N, len(x))
    y[:n0] = x.coeffs[:n0]
    z = -sys.lam * h
    E, P1, P2 = np.exp(z), h * phi1(z), h * phi2(z)
    forcing = sys.forcing(u.values)
    n_steps = m * u.n_intervals
    times = u.t0 + h * np.arange(n_steps + 1)
    times[-1] = u.T
    states = np.empty((n_steps + 1, N))
    states[0] = y
    stages = np.empty((n_steps, N)) if keep_stages else None
    for n in range(n_steps):
        t = times[n]
        c = forcing[n // m]
        N0 = sys.F(t, y) + c
        a = E * y + P1 * N0
        N1 = sys.F(t + h, a) + c
        y = a + P2 * (N1 - N0)
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > overflow:
            raise DivergenceError(
                f"state norm exceeded {overflow:g} at t={times[n + 1]:.6g} (N={N})"
            )
        states[n + 1] = y
        if keep_stages:
            stages[n] = a
    return Trajectory(times, states, problem.basis.basis_id, stages)


def solve_reference(problem: SemilinearProblem, u: ControlSignal, N_ref: int | None = None,
                    dt_ref: float | None = None, x: SpectralField | None = None) -> Trajectory:
    """High-resolution surrogate of the mild solution (defaults: all modes, dt/4)."""
    N_ref = problem.basis.size if N_ref is None else N_ref
    dt_ref = problem.dt / 4 if dt_ref is None else dt_ref
    return integrate(problem, N_ref, u, dt_ref, x=x)


# ------------------------------------------------------------------ Lipschitz and bounds


def nonlinearity_at_zero_norm(problem: SemilinearProblem, times) -> np.ndarray:
    """``||F(t, 0)||_H`` evaluated by quadrature at each time."""
    b = problem.basis
    zero = np.zeros(b.grid.size)
    return np.array([
        np.sqrt(b.grid.integrate(problem.nonlinearity.value(t, zero) ** 2)) for t in times
    ])


def grid_values(problem: SemilinearProblem, traj: Trajectory) -> np.ndarray:
    return traj.coeffs @ problem.basis.table[: traj.N]


def _level_slopes(pmap: PointwiseMap, levels: np.ndarray, t: float, n_nodes: int) -> float:
    """Largest difference quotient of ``pmap`` between consecutive uniform levels."""
    V = np.repeat(levels[:, None], n_nodes, axis=1)
    FV = np.broadcast_to(pmap.value(t, V), V.shape)
    return float(np.max(np.abs(np.diff(FV, axis=0)) / np.diff(levels)[:, None]))


def estimate_lipschitz(pmap: PointwiseMap, value_range: float, times=(0.0,),
                       n_nodes: int = 1, n_samples: int = 801) -> float:
    """Sampled Lipschitz surrogate of a pointwise map on [-R, R].

    ``R = 1.5 * value_range``; the largest absolute slope over the samples
    (difference quotients and derivative values, at every node) is inflated
    by 1.2.
    """
    R = LIPSCHITZ_RANGE_FACTOR * max(value_range, 1e-12)
    levels = np.linspace(-R, R, n_samples)
    best = 0.0
    for t in times:
        V = np.repeat(levels[:, None], n_nodes, axis=1)
        d = np.abs(np.broadcast_to(pmap.derivative(t, V), V.shape)).max()
        best = max(best, _level_slopes(pmap, levels, t, n_nodes), float(d))
    return LIPSCHITZ_INFLATION * best


def lipschitz_of(problem: SemilinearProblem, trajs: Sequence[Trajectory] = ()) -> float:
    """Declared Lipschitz bound, else the sampled surrogate over the observed range."""
    if problem.nonlinearity.lipschitz is not None:
        return float(problem.nonlinearity.lipschitz)
    vr = max([np.abs(grid_values(problem, tr)).max() for tr in trajs] + [1.0])
    times = (0.0,)
    if problem.nonlinearity.time_dependent:
        times = np.linspace(0.0, problem.horizon, 11)
    return estimate_lipschitz(problem.nonlinearity, vr, times, problem.basis.grid.size)


def check_declared_lipschitz(problem: SemilinearProblem, traj: Trajectory,
                             n_samples: int = 401) -> bool:
    """A posteriori check that a declared bound dominates sampled slopes."""
    L = problem.nonlinearity.lipschitz
    if L is None:
        return True
    vals = grid_values(problem, traj)
    lo, hi = vals.min(), vals.max()
    pad = 0.5 * (hi - lo) + 1.0
    levels = np.linspace(lo - pad, hi + pad, n_samples)
    n = problem.basis.grid.size
    for t in traj.times[:: max(1, len(traj.times) // 10)]:
        if _level_slopes(problem.nonlinearity, levels, t, n) > L * (1 + 1e-12):
            return False
    return True


def apriori_bound(problem: SemilinearProblem, traj: Trajectory, u: ControlSignal,
                  lipF: float, x_norm: float | None = None,
                  lipC: float | None = None) -> np.ndarray:
    """Gronwall bound on ``||y(t)||`` at each stored time of ``traj``.

    ``e^{Lt}||x|| + int_0^t g + L int_0^t g(s) e^{L(t-s)} ds`` with
    ``g(s) = ||F(s, 0)|| + Lip(C)||u(s)||_V``.  ``g`` is bounded above on each
    step by its larger endpoint value, so the integrals are exact for the
    resulting step function.
    """
    # the Galerkin system starts from its stored initial coefficients P_N x
    x_norm = float(traj.norms()[0]) if x_norm is None else x_norm
    lipC = problem.control_op.lipschitz() if lipC is None else lipC
    t = traj.times
    F0 = nonlinearity_at_zero_norm(problem, t) if problem.nonlinearity.time_dependent \
        else np.full(len(t), nonlinearity_at_zero_norm(problem, [t[0]])[0])
    un = u.pointwise_norms()
    k = np.minimum(((t[:-1] - u.t0 + 1e-12 * u.interval_length) // u.interval_length)
                   .astype(int), u.n_intervals - 1)
    g = np.maximum(F0[:-1], F0[1:]) + lipC * un[k]
    L = lipF
    out = np.empty(len(t))
    out[0] = x_norm
    for i in range(1, len(t)):
        tt = t[i]
        a, b = t[:i] - t[0], t[1 : i + 1] - t[0]
        s = tt - t[0]
        lin = np.sum(g[:i] * (b - a))
        if L > 0:
            ex = np.sum(g[:i] * (np.exp(L * (s - a)) - np.exp(L * (s - b))))
        else:
            ex = 0.0
        out[i] = np.exp(L * s) * x_norm + lin + ex
    return out


def tail_bound(problem: SemilinearProblem, traj: Trajectory, u: ControlSignal, N: int,
               lipF: float, sup_norm: float, x: SpectralField | None = None,
               lipC: float | None = None) -> np.ndarray:
    """Upper bound on ``||(Id - P_N) y(t)||`` from the high-mode Duhamel formula.

    ``e^{-lam_{N+1} t}||x_{N>}|| + max(Lip(F)(C + ||F(0)||), Lip(F) C + ||F(0)||)/lam_{N+1}
    + Lip(C) C_U T^{1/2} / (2 lam_{N+1})^{1/2}``   (q = q' = 2).
    """
    lam = problem.basis.eigenvalues
    if N >= len(lam):
        raise PreconditionError("tail bound needs an eigenvalue beyond N")
    lamN1 = lam[N]
    if lamN1 <= 0:
        raise PreconditionError("tail bound needs lambda_{N+1} > 0")
    x = problem.initial if x is None else x
    lipC = problem.control_op.lipschitz() if lipC is None else lipC
    tx = float(np.linalg.norm(x.coeffs[N:]))
    F0 = float(np.max(nonlinearity_at_zero_norm(problem, traj.times[:: max(1, len(traj.times) // 50)])))
    T = u.T - u.t0
    s = traj.times - traj.times[0]
    # the stated product form dominates ||F(0)|| + Lip(F) C only when Lip(F) >= 1
    forcing = max(lipF * (sup_norm + F0), lipF * sup_norm + F0)
    return (np.exp(-lamN1 * s) * tx + forcing / lamN1
            + lipC * u.bound_norm() * np.sqrt(T) / np.sqrt(2 * lamN1))
