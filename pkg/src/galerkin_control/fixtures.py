"""Reusable problem instances for tests, scripts and the command line."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bases import build_circle_basis, build_sphere_basis, build_zonal_sl_basis
from .control import CostFunctional
from .dynamics import ControlOperator, PointwiseMap, SemilinearProblem
from .ebm import EbmModel, Region, build_ebm_problem
from .spectral import SpectralField


def circle_wavenumbers(size: int) -> np.ndarray:
    """Wavenumber of each circle mode in the ordering (1, cos1, sin1, cos2, ...)."""
    return (np.arange(size) + 1) // 2


def algebraic_coeffs(wavenumbers: np.ndarray, power: float, scale: float,
                     seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=len(wavenumbers))
    return scale * signs * (1.0 + wavenumbers) ** (-power)


@dataclass(frozen=True)
class Fixture:
    problem: SemilinearProblem
    cost: CostFunctional
    N_values: tuple
    N_ref: int


def cubic_circle(K: int = 64, horizon: float = 1.0, dt: float = 1e-3, diffusivity: float = 0.05,
                 n_intervals: int = 10, seed: int = 0) -> Fixture:
    """Allen-Cahn type ``v - v^3`` on the circle with algebraically decaying data."""
    b = build_circle_basis(K, diffusivity)
    th = b.grid.nodes[:, 0]
    op = ControlOperator(b.grid.weights, [th < np.pi], "nodal", names=["half"])
    x = SpectralField(b.basis_id, algebraic_coeffs(circle_wavenumbers(b.size), 2.0, 0.6, seed))
    pr = SemilinearProblem(b, PointwiseMap.cubic(), op, x, horizon, dt=dt,
                           n_intervals=n_intervals, lower=-1.0, upper=1.0, name="cubic-circle")
    target = SpectralField(b.basis_id, np.zeros(b.size))
    return Fixture(pr, CostFunctional(target, mu=0.1), (4, 8, 16, 32), 128)


def lq_circle(K: int = 16, c: float = 0.5, mu: float = 0.1, horizon: float = 1.0,
              n_intervals: int = 100, dt: float = 1e-3, bound: float = 50.0) -> Fixture:
    """Linear-quadratic tracking on the circle; the box is large enough to stay inactive."""
    b = build_circle_basis(K, 1.0)
    th = b.grid.nodes[:, 0]
    op = ControlOperator(b.grid.weights, [(th > 0.5) & (th < 2.5)], "nodal", names=["arc"])
    k = np.arange(b.size)
    x = SpectralField(b.basis_id, 1.0 / (1.0 + k) ** 2)
    target = SpectralField(b.basis_id, np.where(k % 3 == 0, -0.3 / (1.0 + k), 0.0))
    pr = SemilinearProblem(b, PointwiseMap.linear(c), op, x, horizon, dt=dt,
                           n_intervals=n_intervals, lower=-bound, upper=bound, name="lq-circle")
    return Fixture(pr, CostFunctional(target, mu=mu), (4, 8, 16), b.size)


EBM_FIXTURE_MODEL = EbmModel(a=203.3, mu=0.05,
                             regions=(Region("arctic", lat=(60.0, 90.0), lower=-10.0,
                                             upper=10.0),))


def ebm_sphere(L_ref: int = 16, horizon: float = 1.0, dt: float = 0.02,
               n_intervals: int = 10, model: EbmModel = EBM_FIXTURE_MODEL) -> Fixture:
    """Sphere EBM at its uncontrolled steady state, target cooled uniformly by 1 K."""
    pr, cost = build_ebm_problem(model, "sphere", L_ref, horizon, dt, n_intervals)
    return Fixture(pr, cost, (9, 25, 81), (L_ref + 1) ** 2)


def ebm_zonal(K: int = 40, horizon: float = 1.0, dt: float = 0.02, n_intervals: int = 10,
              model: EbmModel = EBM_FIXTURE_MODEL) -> Fixture:
    pr, cost = build_ebm_problem(model, "zonal", K, horizon, dt, n_intervals)
    return Fixture(pr, cost, (3, 5, 9), K)


def _smooth_map(amp: float = 1.0) -> PointwiseMap:
    return PointwiseMap(lambda t, v: amp * np.sin(v) + 0.1 * t,
                        lambda t, v: amp * np.cos(v), lipschitz=amp, time_dependent=True,
                        name="sin")


def gradient_check_problems(seed: int = 0) -> dict:
    """Smooth nonlinear problems on each geometry for finite-difference checks."""
    rng = np.random.default_rng(seed)
    out = {}

    b = build_circle_basis(12, 0.5)
    th = b.grid.nodes[:, 0]
    op = ControlOperator(b.grid.weights, [th < 2.0, (th > 1.5) & (th < 4.0)],
                         ["nodal", "uniform"], names=["west", "band"])
    x = SpectralField(b.basis_id, algebraic_coeffs(circle_wavenumbers(b.size), 2.0, 0.8, seed))
    out["circle"] = (SemilinearProblem(b, _smooth_map(), op, x, 1.0, dt=0.02, n_intervals=5,
                                       lower=-2.0, upper=2.0, name="grad-circle"),
                     b.size)

    b = build_sphere_basis(10, 0.3)
    z, lon = b.grid.nodes[:, 0], b.grid.nodes[:, 1]
    op = ControlOperator(b.grid.weights, [z > 0.5, (np.abs(z) < 0.4) & (lon < 2.0)],
                         ["nodal", "uniform"], names=["cap", "patch"])
    x = SpectralField(b.basis_id, 0.5 * rng.standard_normal(b.size) / (1 + np.arange(b.size)))
    out["sphere"] = (SemilinearProblem(b, _smooth_map(), op, x, 1.0, dt=0.02, n_intervals=5,
                                       lower=-2.0, upper=2.0, name="grad-sphere"),
                     b.size)

    b = build_zonal_sl_basis(lambda s: 0.5 + 0.2 * s * s, 12, 200)
    xz = b.grid.nodes[:, 0]
    op = ControlOperator(b.grid.weights, [xz > 0.3, xz < -0.5], "nodal", names=["n", "s"])
    x = SpectralField(b.basis_id, 0.5 * rng.standard_normal(b.size) / (1 + np.arange(b.size)))
    out["zonal"] = (SemilinearProblem(b, _smooth_map(), op, x, 1.0, dt=0.02, n_intervals=5,
                                      lower=-2.0, upper=2.0, name="grad-zonal"),
                    b.size)
    return out
