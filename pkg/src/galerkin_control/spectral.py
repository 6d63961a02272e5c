"""States as coefficient vectors against an orthonormal eigenbasis.

A field is stored densely up to the band limit of its basis.  All norms are
the L2 norm of the underlying Hilbert space, which for an orthonormal basis is
the Euclidean norm of the coefficients.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionError, RangeError

if TYPE_CHECKING:
    from .bases import EigenBasis

ROUNDTRIP_TOL = 1e-10
PARSEVAL_RTOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and positive weights realizing the L2 inner product of a domain.

    ``nodes`` has one row per node; the column meaning depends on the domain
    (angle on the circle, (z, longitude) on the sphere, x on the interval).
    """

    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    measure: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", _frozen(nodes.reshape(len(nodes), -1)))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.weights.ndim != 1 or len(self.weights) != self.nodes.shape[0]:
            raise DimensionError("one weight per node required")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be strictly positive")
        if abs(self.weights.sum() - self.measure) > 1e-12 * self.measure:
            raise ValueError(
                f"weights sum to {self.weights.sum()!r}, domain measure is {self.measure!r}"
            )

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True, eq=False)
class SpectralField:
    basis_id: str
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _frozen(np.ravel(self.coeffs))
        if not np.all(np.isfinite(arr)):
            raise ValueError("spectral coefficients must be finite")
        object.__setattr__(self, "coeffs", arr)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpectralField):
            return NotImplemented
        return self.basis_id == other.basis_id and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def padded(self, K: int) -> "SpectralField":
        """Zero-extend (or validate) to length ``K``."""
        if K < len(self.coeffs):
            raise RangeError(f"cannot pad {len(self.coeffs)} coefficients down to {K}")
        out = np.zeros(K)
        out[: len(self.coeffs)] = self.coeffs
        return SpectralField(self.basis_id, out)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_basis(self, other)
        return SpectralField(self.basis_id, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_basis(self, other)
        return SpectralField(self.basis_id, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "SpectralField":
        return SpectralField(self.basis_id, c * self.coeffs)

    __rmul__ = __mul__

    def to_json(self) -> str:
        return json.dumps({"basis_id": self.basis_id, "coeffs": self.coeffs.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "SpectralField":
        d = json.loads(text)
        if set(d) != {"basis_id", "coeffs"}:
            raise ValueError(f"unexpected keys in SpectralField JSON: {sorted(d)}")
        return cls(d["basis_id"], d["coeffs"])


def _check_same_basis(a: SpectralField, b: SpectralField) -> None:
    if a.basis_id != b.basis_id:
        raise DimensionError(f"basis mismatch: {a.basis_id} vs {b.basis_id}")
    if len(a) != len(b):
        raise DimensionError(f"length mismatch: {len(a)} vs {len(b)}")


def _check_N(field: SpectralField, N: int) -> None:
    if N < 1 or N > len(field.coeffs):
        raise RangeError(f"N={N} outside 1..{len(field.coeffs)}")


def project(field: SpectralField, N: int) -> SpectralField:
    """Orthogonal projection onto the span of the first ``N`` modes."""
    _check_N(field, N)
    out = np.array(field.coeffs)
    out[N:] = 0.0
    return SpectralField(field.basis_id, out)


def residual_energy(field: SpectralField, N: int) -> float:
    """Norm of the unresolved part, ``||(Id - P_N) field||``."""
    _check_N(field, N)
    return float(np.linalg.norm(field.coeffs[N:]))


def tail_norms(coeffs: np.ndarray, Ns) -> np.ndarray:
    """Residual energies of each row of ``coeffs`` for every N in ``Ns``.

    Returns an array of shape (len(Ns), n_rows).
    """
    c = np.atleast_2d(coeffs)
    sq = c**2
    # reverse cumulative sums give all tails in one pass
    rev = np.cumsum(sq[:, ::-1], axis=1)[:, ::-1]
    rev = np.concatenate([rev, np.zeros((c.shape[0], 1))], axis=1)
    return np.sqrt(np.array([rev[:, N] for N in Ns]))


def synthesize(field: SpectralField, basis: "EigenBasis") -> np.ndarray:
    """Grid values ``sum_k a_k e_k(node)``."""
    K = len(field.coeffs)
    if K > basis.size:
        raise DimensionError(f"field has {K} coefficients, basis only {basis.size}")
    return field.coeffs @ basis.table[:K]


def analyze(values, basis: "EigenBasis", K: int) -> SpectralField:
    """Quadrature inner products ``<values, e_k>`` for ``k < K``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (basis.grid.size,):
        raise DimensionError(
            f"expected {basis.grid.size} grid values, got shape {values.shape}"
        )
    if K > basis.size or K < 0:
        raise DimensionError(f"K={K} outside 0..{basis.size}")
    return SpectralField(basis.basis_id, basis.table[:K] @ (basis.grid.weights * values))


def quadrature_norm(field: SpectralField, basis: "EigenBasis") -> float:
    v = synthesize(field, basis)
    return float(np.sqrt(basis.grid.integrate(v * v)))
