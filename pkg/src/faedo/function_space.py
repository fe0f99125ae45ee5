"""Spatial domain, quadrature, sine Galerkin bases and the projections Q_n / P_n.

Everything lives on an interval ``[0, L]`` discretized by composite
Gauss-Legendre panels.  Functions are represented either as samples at the
quadrature nodes (:class:`FieldSample`) or as coefficients in a
:class:`GalerkinBasis` that is orthonormal in the H^1_0 inner product

    (f, g)_{H^1_0} = int f conj(g) + int f' conj(g').

Because the basis is H^1_0-orthonormal, the H^1_0 norm of a coefficient vector
is its Euclidean norm.  Trajectories store one coefficient vector per orbital
per time sample, and the C(J; H^1_0) norm is the maximum over samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss


@dataclass(frozen=True)
class SpatialDomain:
    """Interval ``[0, length]`` with a composite Gauss-Legendre rule.

    Parameters
    ----------
    length : float
        Interval length L.
    n_nodes : int
        Total number of quadrature nodes M; must be a multiple of `order`.
    order : int
        Nodes per panel.
    """

    length: float = 1.0
    n_nodes: int = 512
    order: int = 16

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"domain length must be positive, got {self.length}")
        if self.n_nodes < 1 or self.order < 1:
            raise ValueError("n_nodes and order must be positive")
        if self.n_nodes % self.order:
            raise ValueError(
                f"n_nodes={self.n_nodes} is not a multiple of the panel order {self.order}"
            )

    @property
    def panels(self) -> int:
        return self.n_nodes // self.order

    @cached_property
    def _rule(self):
        ref_x, ref_w = leggauss(self.order)
        h = self.length / self.panels
        left = h * np.arange(self.panels)
        x = (left[:, None] + 0.5 * h * (ref_x[None, :] + 1.0)).ravel()
        w = np.tile(0.5 * h * ref_w, self.panels)
        x.setflags(write=False)
        w.setflags(write=False)
        return x, w

    @property
    def nodes(self) -> np.ndarray:
        return self._rule[0]

    @property
    def weights(self) -> np.ndarray:
        return self._rule[1]

    def integrate(self, values):
        """Quadrature of `values` (last axis = nodes)."""
        return np.asarray(values) @ self.weights


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Samples of a (possibly complex) function at the quadrature nodes.

    `grad` holds the first derivative at the same nodes when it is known
    analytically; otherwise :meth:`with_fd_gradient` fills it by centered
    finite differences on the node set.
    """

    domain: SpatialDomain
    values: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape[-1] != self.domain.n_nodes:
            raise ValueError(
                f"field has {values.shape[-1]} samples, domain has {self.domain.n_nodes} nodes"
            )
        object.__setattr__(self, "values", values)
        if self.grad is not None:
            grad = np.asarray(self.grad)
            if grad.shape != values.shape:
                raise ValueError("gradient samples do not match value samples")
            object.__setattr__(self, "grad", grad)

    @classmethod
    def from_function(cls, domain, f, df=None):
        x = domain.nodes
        return cls(domain, f(x), None if df is None else df(x))

    def with_fd_gradient(self) -> "FieldSample":
        return FieldSample(self.domain, self.values, fd_gradient(self.domain, self.values))

    def _require_grad(self):
        return self.grad if self.grad is not None else fd_gradient(self.domain, self.values)


def fd_gradient(domain: SpatialDomain, values) -> np.ndarray:
    """Second-order centered differences on the (non-uniform) node set."""
    return np.gradient(np.asarray(values), domain.nodes, axis=-1, edge_order=2)


def _check_same_domain(a: FieldSample, b: FieldSample):
    if a.domain != b.domain:
        raise ValueError("fields live on different quadrature grids")


def l2_inner(f: FieldSample, g: FieldSample) -> complex:
    """(f, g)_{L^2}, summed over leading (orbital) axes."""
    _check_same_domain(f, g)
    return complex(np.sum(f.domain.integrate(f.values * np.conj(g.values))))


def h10_inner(f: FieldSample, g: FieldSample) -> complex:
    """(f, g)_{H^1_0} = (f, g)_{L^2} + int f' conj(g'), summed over orbitals."""
    _check_same_domain(f, g)
    dom = f.domain
    grad_part = dom.integrate(f._require_grad() * np.conj(g._require_grad()))
    return complex(np.sum(dom.integrate(f.values * np.conj(g.values)) + grad_part))


def h10_norm(f: FieldSample) -> float:
    return float(np.sqrt(max(h10_inner(f, f).real, 0.0)))


@dataclass(frozen=True, eq=False)
class GalerkinBasis:
    """First ``dim`` sine modes on the domain, orthonormalized in H^1_0.

    Attributes
    ----------
    values, grads : ndarray, shape (dim, M)
        Basis functions and their derivatives at the quadrature nodes.
    mass : ndarray, shape (dim, dim)
        L^2 Gram matrix.
    stiffness : ndarray, shape (dim, dim)
        ``A_ij = int f_i' f_j'``.
    """

    domain: SpatialDomain
    dim: int
    values: np.ndarray
    grads: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray

    @property
    def gram_h1(self) -> np.ndarray:
        return self.mass + self.stiffness

    def synthesize(self, coeffs) -> np.ndarray:
        """Grid values of ``sum_i c_i f_i``; `coeffs` has the basis index last."""
        return np.asarray(coeffs) @ self.values

    def synthesize_grad(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self.grads

    def field(self, coeffs) -> FieldSample:
        return FieldSample(self.domain, self.synthesize(coeffs), self.synthesize_grad(coeffs))

    def galerkin_matrix(self, potential) -> np.ndarray:
        """``G_ij = int V f_i f_j`` for real potential samples `V` (shape (..., M))."""
        vw = np.asarray(potential) * self.domain.weights
        return np.einsum("im,...m,jm->...ij", self.values, vw, self.values, optimize=True)


def build_basis(domain: SpatialDomain, n: int) -> GalerkinBasis:
    """Build the H^1_0-orthonormal basis spanned by ``sin(i pi x / L)``, i = 1..n.

    Orthonormalization is Gram-Schmidt done through a Cholesky factor of the
    discrete H^1_0 Gram matrix, so the leading ``m`` functions of an ``n``-basis
    span the ``m``-basis (bases are nested).
    """
    if n < 1:
        raise ValueError(f"basis dimension must be >= 1, got {n}")
    if domain.n_nodes < 4 * n:
        raise ValueError(
            f"quadrature resolution M={domain.n_nodes} is below 4*n={4 * n}; products "
            "of basis functions would be aliased"
        )
    x, w = domain.nodes, domain.weights
    k = np.arange(1, n + 1)[:, None] * np.pi / domain.length
    raw = np.sin(k * x)
    raw_grad = k * np.cos(k * x)
    gram = (raw * w) @ raw.T + (raw_grad * w) @ raw_grad.T
    chol = np.linalg.cholesky(gram)
    # f = chol^{-1} raw, row by row: lower triangular keeps the span nested
    values = np.linalg.solve(chol, raw)
    grads = np.linalg.solve(chol, raw_grad)
    mass = (values * w) @ values.T
    stiffness = (grads * w) @ grads.T
    mass = 0.5 * (mass + mass.T)
    stiffness = 0.5 * (stiffness + stiffness.T)
    for arr in (values, grads, mass, stiffness):
        arr.setflags(write=False)
    return GalerkinBasis(domain, n, values, grads, mass, stiffness)


def transfer_matrix(coarse: GalerkinBasis, fine: GalerkinBasis) -> np.ndarray:
    """``R[j, i] = (f_i^coarse, f_j^fine)_{H^1_0}``, shape (fine.dim, coarse.dim).

    ``R @ c`` injects coarse coefficients into the fine basis and ``R.T @ c``
    is the orthogonal projection Q_n of a fine-basis element onto the coarse
    subspace.
    """
    if coarse.domain != fine.domain:
        raise ValueError("bases must share a quadrature grid")
    w = fine.domain.weights
    return (fine.values * w) @ coarse.values.T + (fine.grads * w) @ coarse.grads.T


def project_Qn(basis: GalerkinBasis, f: FieldSample) -> np.ndarray:
    """Coefficients ``alpha_i = (f, f_i)_{H^1_0}`` of the orthogonal projection.

    `f` may carry leading orbital axes; the result then has shape
    ``f.values.shape[:-1] + (dim,)``.
    """
    if f.domain != basis.domain:
        raise ValueError("field and basis live on different quadrature grids")
    w = basis.domain.weights
    return (f.values * w) @ basis.values.T + (f._require_grad() * w) @ basis.grads.T


@dataclass(frozen=True)
class TimeGrid:
    """Uniform samples ``t_j = j * horizon / samples``, j = 0..samples."""

    horizon: float = 0.5
    samples: int = 32

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("time horizon must be positive")
        if self.samples < 1:
            raise ValueError("need at least one sample interval")

    @property
    def dt(self) -> float:
        return self.horizon / self.samples

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples + 1) * self.dt


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Coefficients ``coeffs[j, k, i]`` of orbital k at time sample j in `basis`."""

    grid: TimeGrid
    basis: GalerkinBasis
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[0] != self.grid.samples + 1 or c.shape[2] != self.basis.dim:
            raise ValueError(
                f"coefficient array of shape {c.shape} does not match "
                f"({self.grid.samples + 1}, N, {self.basis.dim})"
            )
        object.__setattr__(self, "coeffs", c)

    @property
    def orbitals(self) -> int:
        return self.coeffs.shape[1]

    def values(self) -> np.ndarray:
        """Grid values, shape (S+1, N, M)."""
        return self.basis.synthesize(self.coeffs)

    def replace(self, coeffs) -> "Trajectory":
        return Trajectory(self.grid, self.basis, coeffs)

    def __add__(self, other):
        _check_compatible(self, other)
        return self.replace(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self.replace(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.replace(scalar * self.coeffs)

    __rmul__ = __mul__


def _check_compatible(a: Trajectory, b: Trajectory):
    if a.grid != b.grid:
        raise ValueError("trajectories use different time grids")
    if a.basis is not b.basis and (
        a.basis.domain != b.basis.domain or a.basis.dim != b.basis.dim
    ):
        raise ValueError("trajectories use different bases")
    if a.coeffs.shape != b.coeffs.shape:
        raise ValueError("trajectories have different shapes")


def sample_norms(coeffs) -> np.ndarray:
    """H^1_0 norm per time sample of a coefficient array (S+1, N, k)."""
    c = np.asarray(coeffs)
    return np.sqrt(np.sum(np.abs(c) ** 2, axis=(-2, -1)))


def traj_norm(a: Trajectory, b: Trajectory | None = None) -> float:
    """Computational C(J; H^1_0) norm of ``a`` or of ``a - b``."""
    c = a.coeffs if b is None else (a - b).coeffs
    return float(np.max(sample_norms(c)))


def project_Pn(basis: GalerkinBasis, source: Trajectory) -> Trajectory:
    """Apply Q_n at every time sample and orbital.

    `source` must live on a basis over the same quadrature grid (typically a
    finer, nested one).
    """
    if source.basis is basis:
        return source.replace(source.coeffs.copy())
    R = transfer_matrix(basis, source.basis)
    return Trajectory(source.grid, basis, source.coeffs @ R)


def project_Pn_field(basis: GalerkinBasis, grid: TimeGrid, fields) -> Trajectory:
    """P_n of a trajectory given by grid samples: a sequence of FieldSample, one per time."""
    if len(fields) != grid.samples + 1:
        raise ValueError("one field per time sample is required")
    return Trajectory(grid, basis, np.stack([project_Qn(basis, f) for f in fields]))


def inject(source: Trajectory, fine: GalerkinBasis) -> Trajectory:
    """Express a trajectory on `fine` (whose span contains the source basis)."""
    if source.basis is fine:
        return source
    R = transfer_matrix(source.basis, fine)
    return Trajectory(source.grid, fine, source.coeffs @ R.T)
