"""Concrete eigenbases of nonnegative self-adjoint diffusion operators.

Three domains are supported:

* ``circle`` -- Fourier modes of ``-D d^2/dtheta^2`` on [0, 2 pi).
* ``sphere`` -- real spherical harmonics, eigenfunctions of ``-D Delta`` on the
  unit sphere (constant diffusivity only).
* ``zonal_interval`` -- finite-difference Sturm-Liouville modes of
  ``-d/dx[D(x)(1 - x^2) d/dx]`` on x = sin(latitude) in [-1, 1].  Zonal fields
  are identified with zonally symmetric fields on the unit sphere, so the
  quadrature measure is ``2 pi dx`` and norms agree with the sphere basis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ModelError, NumericError
from .spectral import QuadratureGrid, _frozen

GAUSS_NEWTON_TOL = 1e-14


@dataclass(frozen=True)
class EigenBasis:
    domain_kind: str
    eigenvalues: np.ndarray
    table: np.ndarray = field(repr=False)  # (K, n_nodes); row k is e_k at the nodes
    grid: QuadratureGrid = field(repr=False)
    band_limit: int
    params: dict = field(default_factory=dict)
    labels: tuple = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "table", _frozen(self.table))
        if self.table.shape != (len(self.eigenvalues), self.grid.size):
            raise ValueError("eigenfunction table shape does not match basis/grid")
        if np.any(np.diff(self.eigenvalues) < -1e-12 * max(1.0, self.eigenvalues.max())):
            raise ValueError("eigenvalues must be nondecreasing")

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    @property
    def basis_id(self) -> str:
        parts = ",".join(f"{k}={_short(v)}" for k, v in sorted(self.params.items()))
        return f"{self.domain_kind}[{parts}]"

    @property
    def generator_eigenvalues(self) -> np.ndarray:
        """Eigenvalues ``beta_k = -lambda_k`` of the generator L."""
        return -self.eigenvalues

    def gram(self, K: int | None = None) -> np.ndarray:
        E = self.table[: K or self.size]
        return (E * self.grid.weights) @ E.T

    def to_descriptor(self) -> dict:
        return {"kind": self.domain_kind, "params": dict(self.params)}

    def to_json(self) -> str:
        return json.dumps(self.to_descriptor(), sort_keys=True)

    @staticmethod
    def from_descriptor(desc: dict) -> "EigenBasis":
        kind, p = desc["kind"], dict(desc["params"])
        if kind == "circle":
            return build_circle_basis(p["K"], p["diffusivity"], n_nodes=p.get("n_nodes"))
        if kind == "sphere":
            return build_sphere_basis(
                p["L_max"], p["diffusivity"], n_lat=p.get("n_lat"), n_lon=p.get("n_lon")
            )
        if kind == "zonal_interval":
            return build_zonal_sl_basis(p["D"], p["K"], p["M_grid"])
        raise ValueError(f"unknown basis kind {kind!r}")

    @staticmethod
    def from_json(text: str) -> "EigenBasis":
        return EigenBasis.from_descriptor(json.loads(text))


def _short(v):
    if isinstance(v, (list, tuple)):
        return f"samples{len(v)}"
    return v


# ---------------------------------------------------------------- circle


def build_circle_basis(K: int, diffusivity: float, n_nodes: int | None = None) -> EigenBasis:
    """Fourier basis {1, cos j theta, sin j theta}, j = 1..K, orthonormal on [0, 2 pi)."""
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    if diffusivity <= 0:
        raise ValueError("diffusivity must be positive")
    K = int(K)
    n = int(n_nodes) if n_nodes is not None else 4 * K
    if n < 2 * K + 1:
        raise ValueError(f"need at least {2 * K + 1} nodes, got {n}")
    theta = 2 * np.pi * np.arange(n) / n
    rows = [np.full(n, 1 / np.sqrt(2 * np.pi))]
    lam = [0.0]
    labels = [("c", 0)]
    for j in range(1, K + 1):
        rows.append(np.cos(j * theta) / np.sqrt(np.pi))
        rows.append(np.sin(j * theta) / np.sqrt(np.pi))
        lam += [diffusivity * j * j] * 2
        labels += [("c", j), ("s", j)]
    grid = QuadratureGrid(theta, np.full(n, 2 * np.pi / n), exactness_degree=n - 1,
                          measure=2 * np.pi)
    params = {"K": K, "diffusivity": float(diffusivity)}
    if n_nodes is not None:
        params["n_nodes"] = n
    return EigenBasis("circle", np.array(lam), np.array(rows), grid, K, params, tuple(labels))


# ---------------------------------------------------------------- sphere


def gauss_legendre(n: int, tol: float = GAUSS_NEWTON_TOL, max_iter: int = 100):
    """Gauss-Legendre nodes (ascending) and weights on [-1, 1] by Newton iteration."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.zeros(1), np.full(1, 2.0)
    k = np.arange(1, n + 1)
    # Tricomi initial guess, descending order
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(max_iter):
        p0, p1 = np.ones_like(x), x.copy()
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        dp = n * (x * p1 - p0) / (x * x - 1)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise NumericError("Gauss-Legendre Newton iteration did not converge")
    # recompute derivative at the converged nodes
    p0, p1 = np.ones_like(x), x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    dp = n * (x * p1 - p0) / (x * x - 1)
    w = 2 / ((1 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def normalized_legendre(L_max: int, z: np.ndarray) -> np.ndarray:
    """Orthonormal associated Legendre functions ``Pbar[l, m, :]``, 0 <= m <= l <= L_max.

    Normalized so that ``2 pi * int_{-1}^{1} Pbar_lm(z)^2 dz = 1``, i.e.
    ``Pbar_lm(cos colat) * exp(i m lon)`` has unit L2 norm on the sphere.
    Computed with the standard stable three-term recurrence in l.
    """
    z = np.asarray(z, dtype=float)
    s = np.sqrt(np.maximum(0.0, 1 - z * z))
    P = np.zeros((L_max + 1, L_max + 1, z.size))
    P[0, 0] = np.sqrt(1 / (4 * np.pi))
    for m in range(1, L_max + 1):
        P[m, m] = np.sqrt((2 * m + 1) / (2 * m)) * s * P[m - 1, m - 1]
    for m in range(0, L_max):
        P[m + 1, m] = np.sqrt(2 * m + 3) * z * P[m, m]
    for m in range(0, L_max + 1):
        for l in range(m + 2, L_max + 1):
            a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            P[l, m] = a * (z * P[l - 1, m] - b * P[l - 2, m])
    return P


def sphere_mode_labels(L_max: int) -> list[tuple[int, int]]:
    return [(l, m) for l in range(L_max + 1) for m in range(-l, l + 1)]


def sphere_mode_index(l: int, m: int) -> int:
    return l * l + l + m


def real_sph_harm(L_max: int, z: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Real spherical harmonics Y_lm at points (z = cos colatitude, lon), (l, m) order."""
    P = normalized_legendre(L_max, z)
    rows = []
    for l, m in sphere_mode_labels(L_max):
        if m == 0:
            rows.append(P[l, 0])
        elif m > 0:
            rows.append(np.sqrt(2) * P[l, m] * np.cos(m * lon))
        else:
            rows.append(np.sqrt(2) * P[l, -m] * np.sin(-m * lon))
    return np.array(rows)


def build_sphere_basis(
    L_max: int, diffusivity: float, n_lat: int | None = None, n_lon: int | None = None
) -> EigenBasis:
    """Real spherical harmonics up to degree ``L_max`` on a Gauss x uniform grid.

    The default grid is oversampled by half a band (3/2 rule) so that quadratic
    products in pseudo-spectral nonlinearities are integrated without aliasing.
    """
    if int(L_max) != L_max or L_max < 0:
        raise ValueError(f"L_max must be a nonnegative integer, got {L_max!r}")
    if diffusivity <= 0:
        raise ValueError("diffusivity must be positive")
    L_max = int(L_max)
    params: dict = {"L_max": L_max, "diffusivity": float(diffusivity)}
    if n_lat is None:
        n_lat = L_max + 1 + (L_max + 1) // 2
    else:
        params["n_lat"] = int(n_lat)
    if n_lon is None:
        n_lon = 2 * n_lat
    else:
        params["n_lon"] = int(n_lon)
    if n_lat < L_max + 1 or n_lon < 2 * L_max + 1:
        raise ValueError(
            f"grid {n_lat}x{n_lon} too coarse for L_max={L_max} "
            f"(need >= {L_max + 1}x{2 * L_max + 1})"
        )
    zg, wg = gauss_legendre(n_lat)
    lon = 2 * np.pi * np.arange(n_lon) / n_lon
    Z, LON = np.meshgrid(zg, lon, indexing="ij")
    W = np.outer(wg, np.full(n_lon, 2 * np.pi / n_lon))
    nodes = np.column_stack([Z.ravel(), LON.ravel()])
    grid = QuadratureGrid(nodes, W.ravel(), exactness_degree=min(2 * n_lat - 1, n_lon - 1),
                          measure=4 * np.pi)
    labels = sphere_mode_labels(L_max)
    lam = np.array([diffusivity * l * (l + 1) for l, _ in labels], dtype=float)
    table = real_sph_harm(L_max, nodes[:, 0], nodes[:, 1])
    return EigenBasis("sphere", lam, table, grid, L_max, params, tuple(labels))


def shell_size(L: int) -> int:
    """Number of sphere modes of degree <= L."""
    return (L + 1) ** 2


# ---------------------------------------------------------------- zonal


def _diffusivity_function(D) -> Callable[[np.ndarray], np.ndarray]:
    if callable(D):
        return lambda x: np.asarray(D(x), dtype=float) * np.ones_like(x)
    arr = np.atleast_1d(np.asarray(D, dtype=float))
    if arr.size == 1:
        return lambda x: np.full_like(x, float(arr[0]))
    xs = np.linspace(-1, 1, arr.size)
    return lambda x: np.interp(x, xs, arr)


def build_zonal_sl_basis(D, K: int, M_grid: int) -> EigenBasis:
    """First ``K`` eigenpairs of the finite-difference zonal diffusion operator.

    ``D`` is a constant, a sequence of samples on a uniform grid over [-1, 1]
    (linearly interpolated), or a callable.  The flux ``D(x)(1 - x^2)`` is
    evaluated at cell faces and vanishes at x = +-1, so no boundary condition
    is imposed.
    """
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    if M_grid < 4 * K:
        raise ValueError(f"need M_grid >= 4K, got M_grid={M_grid}, K={K}")
    M = int(M_grid)
    h = 2.0 / M
    x = -1 + (np.arange(M) + 0.5) * h
    faces = -1 + np.arange(1, M) * h
    Df = _diffusivity_function(D)
    probe = np.linspace(-1, 1, 4 * M + 1)
    if np.any(Df(probe) <= 0) or np.any(Df(faces) <= 0):
        raise ModelError("diffusivity must be strictly positive on [-1, 1]")
    p = Df(faces) * (1 - faces**2)
    diag = np.zeros(M)
    diag[:-1] += p
    diag[1:] += p
    diag /= h * h
    off = -p / (h * h)
    try:
        lam, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, K - 1))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericError(f"tridiagonal eigensolve failed: {exc}") from exc
    lam = np.maximum(lam, 0.0)
    w = np.full(M, 2 * np.pi * h)
    vecs = vecs / np.sqrt(w[:, None])
    # fix signs: positive value at the north-most node
    sgn = np.sign(vecs[-1, :])
    vecs *= np.where(sgn == 0, 1.0, sgn)[None, :]
    grid = QuadratureGrid(x, w, exactness_degree=1, measure=4 * np.pi)
    if callable(D):
        dparam = "callable"
    elif np.ndim(D) == 0:
        dparam = float(D)
    else:
        dparam = [float(v) for v in D]
    params = {"D": dparam, "K": int(K), "M_grid": M}
    return EigenBasis("zonal_interval", lam, vecs.T, grid, int(K), params,
                      tuple(range(int(K))))
