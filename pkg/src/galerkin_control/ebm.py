"""Energy balance climate model with regional radiative-forcing controls.

Temperatures are in degrees Celsius; outgoing longwave radiation is the
linearization ``a + b T``.  The absorbed shortwave flux is ``Q S(x, t)
(1 - alpha(T))`` with a piecewise-linear ice-albedo ramp, so the reaction
term is globally Lipschitz.  Time is scaled so that the heat capacity is 1.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import root

from .bases import EigenBasis, build_sphere_basis, build_zonal_sl_basis, sphere_mode_index
from .control import CostFunctional
from .dynamics import ControlOperator, PointwiseMap, SemilinearProblem, integrate
from .errors import ModelError, NumericError, PreconditionError, UnsupportedConfigurationError
from .spectral import SpectralField

FOUR_PI_SQRT = float(np.sqrt(4 * np.pi))


@dataclass(frozen=True)
class AlbedoRamp:
    alpha_max: float = 0.62
    alpha_min: float = 0.3
    T_lo: float = -10.0
    T_hi: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha_min < self.alpha_max < 1:
            raise ModelError("need 0 < alpha_min < alpha_max < 1")
        if not self.T_lo < self.T_hi:
            raise ModelError("need T_lo < T_hi")

    @property
    def lipschitz(self) -> float:
        return (self.alpha_max - self.alpha_min) / (self.T_hi - self.T_lo)

    def __call__(self, T):
        s = np.clip((np.asarray(T, dtype=float) - self.T_lo) / (self.T_hi - self.T_lo), 0, 1)
        return self.alpha_max + (self.alpha_min - self.alpha_max) * s

    def derivative(self, T):
        T = np.asarray(T, dtype=float)
        inside = (T > self.T_lo) & (T < self.T_hi)
        return np.where(inside, -self.lipschitz, 0.0)


@dataclass(frozen=True)
class Region:
    """Latitude/longitude box in degrees, or an explicit list of node indices.

    Longitude boxes with ``lo > hi`` wrap through 0.  On the zonal interval
    only the latitude box is used.
    """

    name: str
    lat: tuple | None = None
    lon: tuple | None = None
    nodes: tuple | None = None
    lower: float = -10.0
    upper: float = 10.0

    def mask(self, basis: EigenBasis) -> np.ndarray:
        n = basis.grid.size
        if self.nodes is not None:
            idx = np.asarray(self.nodes, dtype=int)
            if np.any(idx < 0) or np.any(idx >= n):
                raise ModelError(f"region {self.name}: node index out of range")
            m = np.zeros(n, dtype=bool)
            m[idx] = True
            return m
        z = basis.grid.nodes[:, 0]
        lat = np.degrees(np.arcsin(np.clip(z, -1, 1)))
        m = np.ones(n, dtype=bool)
        if self.lat is not None:
            m &= (lat >= self.lat[0]) & (lat <= self.lat[1])
        if self.lon is not None and basis.domain_kind == "sphere":
            lon = np.degrees(basis.grid.nodes[:, 1]) % 360
            lo, hi = self.lon[0] % 360, self.lon[1] % 360
            m &= (lon >= lo) & (lon <= hi) if lo <= hi else (lon >= lo) | (lon <= hi)
        return m


@dataclass(frozen=True)
class Emissions:
    """Piecewise-linear-in-time forcing entries (W m^-2).

    Each entry is ``(key, times, values)`` with ``key`` either ``"l:m"`` (a
    mode coefficient; on the zonal interval ``l`` is the mode index) or a node
    index.  ``uniform`` adds a spatially constant field ``uniform(t)``.
    """

    entries: tuple = ()
    uniform_times: tuple = ()
    uniform_values: tuple = ()

    @staticmethod
    def constant(value: float) -> "Emissions":
        return Emissions(uniform_times=(0.0,), uniform_values=(float(value),))

    @staticmethod
    def ramp(rate: float, horizon: float, start: float = 0.0) -> "Emissions":
        return Emissions(uniform_times=(0.0, float(horizon)),
                         uniform_values=(float(start), float(start + rate * horizon)))

    @staticmethod
    def from_csv(path) -> "Emissions":
        table: dict = {}
        with open(path, newline="") as fh:
            rows = [r for r in fh if not r.startswith("#")]
        reader = csv.DictReader(rows)
        if reader.fieldnames != ["t", "mode_or_node", "value"]:
            raise ModelError(f"emissions CSV header must be t,mode_or_node,value, got {reader.fieldnames}")
        for row in reader:
            table.setdefault(row["mode_or_node"].strip(), []).append(
                (float(row["t"]), float(row["value"])))
        entries = []
        for key in sorted(table):
            pts = sorted(table[key])
            entries.append((key, tuple(p[0] for p in pts), tuple(p[1] for p in pts)))
        return Emissions(entries=tuple(entries))

    @property
    def time_dependent(self) -> bool:
        return any(len(set(v)) > 1 for _, _, v in self.entries) or len(set(self.uniform_values)) > 1

    def field_function(self, basis: EigenBasis) -> Callable[[float], np.ndarray]:
        n = basis.grid.size
        shapes, series = [], []
        for key, ts, vs in self.entries:
            shape = np.zeros(n)
            if ":" in key:
                l, m = (int(p) for p in key.split(":"))
                k = sphere_mode_index(l, m) if basis.domain_kind == "sphere" else l
                if not 0 <= k < basis.size:
                    raise ModelError(f"emission mode {key} outside the basis")
                shape = basis.table[k]
            else:
                j = int(key)
                if not 0 <= j < n:
                    raise ModelError(f"emission node {key} outside the grid")
                shape[j] = 1.0
            shapes.append(shape)
            series.append((np.asarray(ts), np.asarray(vs)))
        ut, uv = np.asarray(self.uniform_times), np.asarray(self.uniform_values)

        def E(t: float) -> np.ndarray:
            out = np.zeros(n)
            if len(ut):
                out += np.interp(t, ut, uv)
            for shape, (ts, vs) in zip(shapes, series):
                out += np.interp(t, ts, vs) * shape
            return out

        return E


@dataclass(frozen=True)
class EbmModel:
    Q: float = 340.0
    a: float = 210.0
    b: float = 1.9
    s2: float = 0.482
    seasonal_amplitude: float = 0.0
    seasonal_period: float = 1.0
    albedo: AlbedoRamp = field(default_factory=AlbedoRamp)
    D: float | tuple = 0.6
    emissions: Emissions | None = None
    regions: tuple = (Region("arctic", lat=(60.0, 90.0)),)
    mu: float = 0.05
    target_offset: float = -1.0
    zonal_grid: int = 1000

    def __post_init__(self):
        if self.Q <= 0 or self.b <= 0:
            raise ModelError("need Q > 0 and b > 0")
        if np.ndim(self.D) == 0:
            if self.D <= 0:
                raise ModelError("diffusivity must be positive")
        elif np.any(np.asarray(self.D) <= 0):
            raise ModelError("diffusivity must be positive everywhere")
        if self.S_min < 0:
            raise ModelError("insolation distribution must be nonnegative")
        if not self.regions:
            raise ModelError("at least one control region is required")

    @property
    def S_max(self) -> float:
        return max(1 + 0.5 * self.s2, 1 - self.s2) + abs(self.seasonal_amplitude)

    @property
    def S_min(self) -> float:
        return min(1 + 0.5 * self.s2, 1 - self.s2) - abs(self.seasonal_amplitude)

    @property
    def constant_D(self) -> bool:
        return np.ndim(self.D) == 0 or len(np.unique(np.asarray(self.D))) == 1

    def insolation(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        P2 = 0.5 * (3 * x * x - 1)
        S = 1 - self.s2 * P2
        if self.seasonal_amplitude:
            S = S + self.seasonal_amplitude * x * np.cos(2 * np.pi * t / self.seasonal_period)
        return S

    @property
    def lipschitz(self) -> float:
        return self.b + self.Q * self.S_max * self.albedo.lipschitz

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regions"] = [{k: v for k, v in asdict(r).items() if v is not None} for r in self.regions]
        d["D"] = self.D if np.ndim(self.D) == 0 else list(self.D)
        if self.emissions is None:
            d.pop("emissions")
        return d

    @staticmethod
    def from_dict(d: dict) -> "EbmModel":
        d = dict(d)
        allowed = {f for f in EbmModel.__dataclass_fields__}
        extra = set(d) - allowed
        if extra:
            raise ModelError(f"unknown model keys: {sorted(extra)}")
        if "albedo" in d:
            d["albedo"] = AlbedoRamp(**d["albedo"])
        if "regions" in d:
            d["regions"] = tuple(
                Region(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in r.items()})
                for r in d["regions"])
        if "emissions" in d and isinstance(d["emissions"], dict):
            e = d["emissions"]
            d["emissions"] = Emissions(
                entries=tuple((k, tuple(ts), tuple(vs)) for k, ts, vs in e.get("entries", ())),
                uniform_times=tuple(e.get("uniform_times", ())),
                uniform_values=tuple(e.get("uniform_values", ())))
        if isinstance(d.get("D"), list):
            d["D"] = tuple(d["D"])
        return EbmModel(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _node_x(basis: EigenBasis) -> np.ndarray:
    return basis.grid.nodes[:, 0]


def ebm_nonlinearity(model: EbmModel, basis: EigenBasis) -> PointwiseMap:
    """``F(t, T) = Q S (1 - alpha(T)) - (a + b T) + E(t)`` on the grid of ``basis``."""
    x = _node_x(basis)
    E = model.emissions.field_function(basis) if model.emissions is not None else None
    seasonal = bool(model.seasonal_amplitude)
    S0 = model.insolation(x, 0.0)
    time_dep = seasonal or (model.emissions is not None and model.emissions.time_dependent)

    def S(t):
        return model.insolation(x, t) if seasonal else S0

    def value(t, v):
        out = model.Q * S(t) * (1 - model.albedo(v)) - (model.a + model.b * v)
        if E is not None:
            out = out + E(t)
        return out

    def derivative(t, v):
        return -model.Q * S(t) * model.albedo.derivative(v) - model.b

    return PointwiseMap(value, derivative, lipschitz=model.lipschitz, time_dependent=time_dep,
                        name="ebm")


def ebm_control_operator(model: EbmModel, basis: EigenBasis) -> ControlOperator:
    masks = [r.mask(basis) for r in model.regions]
    for r, m in zip(model.regions, masks):
        if not m.any():
            raise ModelError(f"region {r.name} contains no grid nodes")
    return ControlOperator(basis.grid.weights, masks, "nodal",
                           names=[r.name for r in model.regions])


def ebm_basis(model: EbmModel, geometry: str, band_limit: int) -> EigenBasis:
    if geometry == "sphere":
        if not model.constant_D:
            raise UnsupportedConfigurationError(
                "variable diffusivity is only supported on the zonal interval")
        D = float(np.ravel(model.D)[0])
        return build_sphere_basis(band_limit, D)
    if geometry == "zonal":
        return build_zonal_sl_basis(model.D, band_limit, max(model.zonal_grid, 4 * band_limit))
    raise UnsupportedConfigurationError(f"unknown geometry {geometry!r}")


def uniform_field(basis: EigenBasis, value: float) -> SpectralField:
    """Coefficients of the constant field ``value`` (mode 0 is the constant)."""
    c = np.zeros(basis.size)
    c[0] = value * FOUR_PI_SQRT
    return SpectralField(basis.basis_id, c)


def steady_state(problem: SemilinearProblem, N: int | None = None, T0: float = 15.0,
                 tol: float = 1e-10, max_time: float = 200.0, dt: float = 0.05) -> SpectralField:
    """Uncontrolled steady state of the N-mode system, started from a uniform ``T0``.

    Relaxes by time integration, then polishes with a Newton-type root solve.
    """
    from .dynamics import GalerkinSystem

    N = problem.basis.size if N is None else N
    sys = GalerkinSystem(problem, N)
    rhs = lambda a: -sys.lam * a + sys.F(0.0, a)
    jac = lambda a: -np.diag(sys.lam) + sys.Phi_w @ (
        problem.nonlinearity.derivative(0.0, sys.to_grid(a))[:, None] * sys.Phi.T)
    y = uniform_field(problem.basis, T0)
    chunk = problem.with_(horizon=10.0, initial=y, nonlinearity=_frozen_time(problem.nonlinearity))
    t = 0.0
    a = y.coeffs[:N].copy()
    while t < max_time:
        x = SpectralField(problem.basis.basis_id, np.pad(a, (0, problem.basis.size - N)))
        tr = integrate(chunk, N, chunk.control(0.0, n_intervals=1), dt, x=x)
        a = tr.coeffs[-1]
        t += 10.0
        if np.linalg.norm(rhs(a)) < 1e-6:
            break
    sol = root(rhs, a, jac=jac, method="hybr", tol=1e-14)
    if np.linalg.norm(rhs(sol.x)) < np.linalg.norm(rhs(a)):
        a = sol.x
    if np.linalg.norm(rhs(a)) > max(tol, 1e-6):
        raise NumericError(f"steady state not reached: residual {np.linalg.norm(rhs(a)):.3g}")
    return SpectralField(problem.basis.basis_id, np.pad(a, (0, problem.basis.size - N)))


def _frozen_time(pmap: PointwiseMap) -> PointwiseMap:
    return PointwiseMap(lambda t, v: pmap.value(0.0, v), lambda t, v: pmap.derivative(0.0, v),
                        pmap.lipschitz, False, pmap.name)


def build_ebm_problem(model: EbmModel, geometry: str, band_limit: int, horizon: float = 2.0,
                      dt: float = 0.01, n_intervals: int = 10,
                      initial: SpectralField | None = None,
                      target: SpectralField | None = None) -> tuple[SemilinearProblem, CostFunctional]:
    """Controlled EBM on the sphere (constant D) or the zonal interval.

    By default the initial state is the uncontrolled steady state and the
    target is that state shifted uniformly by ``model.target_offset``.
    """
    basis = ebm_basis(model, geometry, band_limit)
    F = ebm_nonlinearity(model, basis)
    op = ebm_control_operator(model, basis)
    lower = np.concatenate([np.full(m.sum(), r.lower) for r, m in zip(model.regions, op.regions)])
    upper = np.concatenate([np.full(m.sum(), r.upper) for r, m in zip(model.regions, op.regions)])
    zero = SpectralField(basis.basis_id, np.zeros(basis.size))
    problem = SemilinearProblem(basis, F, op, initial if initial is not None else zero, horizon,
                                dt=dt, n_intervals=n_intervals, lower=lower, upper=upper,
                                name=f"ebm-{geometry}")
    if initial is None:
        problem = problem.with_(initial=steady_state(problem))
    if target is None:
        target = problem.initial + uniform_field(basis, model.target_offset)
    return problem, CostFunctional(target, mu=model.mu)


def ebm_error_prefactor(observed_sup_norm: float, target_norm: float, mu: float) -> float:
    """``(4 C + 4 ||T_d||) / mu`` for the default tracking cost."""
    if mu <= 0:
        raise PreconditionError("prefactor needs mu > 0")
    return (4 * observed_sup_norm + 4 * target_norm) / mu
