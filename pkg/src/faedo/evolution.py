"""Galerkin Hamiltonian and the discrete Faedo-Galerkin evolution operator.

The linear Faedo-Galerkin equation in coordinates of the H^1_0-orthonormal
basis reads

    i hbar M c'(t) = G(t) c(t),    G = (hbar^2 / 2m) A + [int V_e f_i f_j],

with M the L^2 Gram matrix and A the stiffness matrix.  It is advanced by
Crank-Nicolson substeps with G frozen at the substep midpoint; the density
entering V_e is linearly interpolated between time samples.  The scheme
preserves ``c^H M c`` exactly for Hermitian G.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .function_space import GalerkinBasis, TimeGrid, Trajectory
from .potentials import (
    DensityTrajectory,
    ExternalPotentialSpec,
    FieldSample,
    HartreeKernel,
    density_from_trajectory,
    effective_potential,
)


@dataclass(frozen=True)
class PropagatorConfig:
    substeps: int = 4
    hbar: float = 1.0
    mass: float = 1.0
    interpolation: str = "linear"

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.interpolation != "linear":
            raise ValueError("only linear density interpolation is supported")
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be positive")

    @property
    def kinetic_factor(self) -> float:
        return self.hbar**2 / (2.0 * self.mass)


@dataclass(frozen=True, eq=False)
class GalerkinProblem:
    """Everything that defines the linear and nonlinear Faedo-Galerkin problems on F_n."""

    basis: GalerkinBasis
    grid: TimeGrid
    potential: ExternalPotentialSpec = field(default_factory=ExternalPotentialSpec)
    kernel: HartreeKernel = field(default_factory=HartreeKernel)
    config: PropagatorConfig = field(default_factory=PropagatorConfig)

    def with_basis(self, basis: GalerkinBasis) -> "GalerkinProblem":
        return GalerkinProblem(basis, self.grid, self.potential, self.kernel, self.config)

    def with_grid(self, grid: TimeGrid, substeps: int | None = None) -> "GalerkinProblem":
        cfg = self.config
        if substeps is not None:
            cfg = PropagatorConfig(substeps, cfg.hbar, cfg.mass, cfg.interpolation)
        return GalerkinProblem(self.basis, grid, self.potential, self.kernel, cfg)

    @cached_property
    def kinetic(self) -> np.ndarray:
        return self.config.kinetic_factor * self.basis.stiffness

    @cached_property
    def external_profile(self) -> np.ndarray:
        return self.basis.galerkin_matrix(self.potential.profile(self.basis.domain))

    def hartree_matrices(self, rho_values) -> np.ndarray:
        """Galerkin matrices of ``W * rho`` for density samples of shape (..., M)."""
        conv = np.asarray(rho_values) @ self.kernel.matrix(self.basis.domain).T
        return self.basis.galerkin_matrix(conv)


@dataclass(frozen=True, eq=False)
class GalerkinHamiltonian:
    basis: GalerkinBasis
    matrix: np.ndarray
    hbar: float = 1.0
    mass: float = 1.0


def assemble(
    basis: GalerkinBasis,
    spec: ExternalPotentialSpec,
    kernel: HartreeKernel,
    rho_t: FieldSample,
    t: float,
    hbar: float = 1.0,
    mass: float = 1.0,
) -> GalerkinHamiltonian:
    """Matrix of the Galerkin form ``G(t)[f_j, f_i]`` for the density `rho_t` at time `t`."""
    ve = effective_potential(spec, kernel, rho_t, t).values
    g = hbar**2 / (2.0 * mass) * basis.stiffness + basis.galerkin_matrix(ve)
    return GalerkinHamiltonian(basis, 0.5 * (g + g.T), hbar, mass)


class Propagator:
    """Crank-Nicolson flow of the linear Faedo-Galerkin equation for a fixed density.

    All substep matrices are built once at construction, so repeated
    propagations, interval flow maps and tangent sweeps share them.

    Parameters
    ----------
    problem : GalerkinProblem
    rho : DensityTrajectory or ndarray
        Density samples on the problem's time grid, shape (S+1, M).
    """

    def __init__(self, problem: GalerkinProblem, rho):
        self.problem = problem
        grid, cfg = problem.grid, problem.config
        values = rho.values if isinstance(rho, DensityTrajectory) else np.asarray(rho, dtype=float)
        if values.shape != (grid.samples + 1, problem.basis.domain.n_nodes):
            raise ValueError("density samples do not match the problem's time grid")
        self.substeps = cfg.substeps
        self.hartree = problem.hartree_matrices(values)
        self.tau = grid.dt / cfg.substeps / (2.0 * cfg.hbar)
        self.theta = (np.arange(cfg.substeps) + 0.5) / cfg.substeps
        mass = problem.basis.mass
        steps, inverses = [], []
        for j in range(grid.samples):
            for th in self.theta:
                g = self.hamiltonian(j, th)
                left = mass + 1j * self.tau * g
                right = mass - 1j * self.tau * g
                inv = np.linalg.inv(left)
                if not np.all(np.isfinite(inv)):
                    raise np.linalg.LinAlgError("singular Crank-Nicolson step matrix")
                inverses.append(inv)
                steps.append(inv @ right)
        # step m maps c_m -> c_{m+1} as a row operation: c_{m+1} = c_m @ step_T[m]
        self.step_T = np.ascontiguousarray(np.transpose(np.array(steps), (0, 2, 1)))
        self.inv_T = np.ascontiguousarray(np.transpose(np.array(inverses), (0, 2, 1)))

    def hamiltonian(self, j: int, theta: float) -> np.ndarray:
        """G at time ``t_j + theta * dt`` with the density interpolated linearly."""
        p = self.problem
        t = (j + theta) * p.grid.dt
        g = (
            p.kinetic
            + p.potential.drive(t) * p.external_profile
            + (1.0 - theta) * self.hartree[j]
            + theta * self.hartree[j + 1]
        )
        return 0.5 * (g + g.T)

    def propagate(self, psi0, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Coefficients at samples ``start..stop`` starting from `psi0` at ``t_start``.

        Returns an array of shape (stop - start + 1, N, k); entry 0 is `psi0`.
        """
        grid = self.problem.grid
        stop = grid.samples if stop is None else stop
        if not 0 <= start <= stop <= grid.samples:
            raise ValueError(f"invalid sample range {start}..{stop}")
        c = np.array(psi0, dtype=complex)
        out = np.empty((stop - start + 1,) + c.shape, dtype=complex)
        out[0] = c
        for j in range(start, stop):
            for m in range(j * self.substeps, (j + 1) * self.substeps):
                c = c @ self.step_T[m]
            out[j - start + 1] = c
        return out

    def substep_states(self, psi0) -> np.ndarray:
        """All substep states from t = 0, shape (S * substeps + 1, N, k)."""
        c = np.array(psi0, dtype=complex)
        out = np.empty((len(self.step_T) + 1,) + c.shape, dtype=complex)
        out[0] = c
        for m, st in enumerate(self.step_T):
            c = c @ st
            out[m + 1] = c
        return out

    @cached_property
    def interval_flows(self) -> np.ndarray:
        """Row-operation flow over each sample interval, shape (S, k, k)."""
        k = self.problem.basis.dim
        flows = np.empty((self.problem.grid.samples, k, k), dtype=complex)
        for j in range(self.problem.grid.samples):
            phi = np.eye(k, dtype=complex)
            for m in range(j * self.substeps, (j + 1) * self.substeps):
                phi = phi @ self.step_T[m]
            flows[j] = phi
        return flows

    def flow(self, b: int, a: int) -> np.ndarray:
        """Matrix of U(t_b, t_a) acting on coefficient columns."""
        if a > b:
            raise ValueError("flow only runs forward in time")
        k = self.problem.basis.dim
        phi = np.eye(k, dtype=complex)
        for j in range(a, b):
            phi = phi @ self.interval_flows[j]
        return phi.T

    def tangent(self, states, dH, first: int = 0) -> np.ndarray:
        """Exact first variation of the discrete flow under a Hamiltonian perturbation.

        Parameters
        ----------
        states : ndarray, shape (S * substeps + 1, N, k)
            Substep states of the unperturbed flow (:meth:`substep_states`).
        dH : sequence of length S + 1
            ``dH[j]`` is an array (B, k, k) with the perturbation of the
            sample-j Hartree matrix for each of B directions, or None when zero.
        first : int
            Index of the first sample at which `dH` may be nonzero.

        Returns
        -------
        ndarray, shape (S + 1, B, N, k)
            Variation of the coefficients at every sample.
        """
        grid = self.problem.grid
        sub = self.substeps
        B = next(d.shape[0] for d in dH if d is not None)
        N, k = states.shape[1:]
        zero = np.zeros((B, k, k))
        out = np.zeros((grid.samples + 1, B, N, k), dtype=complex)
        dc = np.zeros((B, N, k), dtype=complex)
        for j in range(max(first - 1, 0), grid.samples):
            d0 = zero if dH[j] is None else dH[j]
            d1 = zero if dH[j + 1] is None else dH[j + 1]
            for q, th in enumerate(self.theta):
                m = j * sub + q
                dg = (1.0 - th) * d0 + th * d1
                src = states[m] + states[m + 1]
                forcing = np.einsum("bij,nj->bni", dg, src)
                dc = dc @ self.step_T[m] - 1j * self.tau * (forcing @ self.inv_T[m])
            out[j + 1] = dc
        return out


def propagate(
    problem: GalerkinProblem,
    rho: DensityTrajectory,
    psi0,
    start: int = 0,
    stop: int | None = None,
) -> np.ndarray:
    """Solve ``i hbar M c' = G(t) c`` from sample `start` to `stop`.

    Returns the coefficient samples, shape (stop - start + 1, N, k).
    """
    return Propagator(problem, rho).propagate(psi0, start, stop)


def evolve(problem: GalerkinProblem, rho: DensityTrajectory, psi0) -> Trajectory:
    """Full trajectory ``U_G^rho(t, 0) psi0`` over the problem's time grid."""
    return Trajectory(problem.grid, problem.basis, Propagator(problem, rho).propagate(psi0))


def l2_norms(problem: GalerkinProblem, coeffs) -> np.ndarray:
    """``sqrt(c^H M c)`` summed over orbitals, per leading sample."""
    c = np.asarray(coeffs)
    mc = c @ problem.basis.mass
    return np.sqrt(np.real(np.sum(np.conj(c) * mc, axis=(-2, -1))))


def _as_density(problem, rho):
    if isinstance(rho, Trajectory):
        return density_from_trajectory(rho)
    return rho


def evolution_identity_residual(
    problem: GalerkinProblem,
    rho1: DensityTrajectory,
    rho2: DensityTrajectory,
    psi0,
    t: float,
) -> float:
    """H^1_0 norm of the defect in the two-density Duhamel identity at time `t`.

    Compares ``U^{rho1}(t,0) psi0 - U^{rho2}(t,0) psi0`` with

        -(i / hbar) int_0^t U^{rho1}(t, s) Pi[(V_e(rho1) - V_e(rho2)) U^{rho2}(s, 0) psi0] ds

    where Pi is the L^2 projection onto F_n and the integral uses the
    trapezoid rule on the sample times.  The defect vanishes as the time
    discretization is refined.
    """
    grid = problem.grid
    J = int(round(t / grid.dt))
    if not (0 <= J <= grid.samples and abs(J * grid.dt - t) <= 1e-12 * max(grid.horizon, 1.0)):
        raise ValueError(f"t={t} is not a sample time of the grid")
    rho1, rho2 = _as_density(problem, rho1), _as_density(problem, rho2)
    p1, p2 = Propagator(problem, rho1), Propagator(problem, rho2)
    u1 = p1.propagate(psi0, 0, J)
    u2 = p2.propagate(psi0, 0, J)
    lhs = u1[-1] - u2[-1]
    if J == 0:
        return float(np.linalg.norm(lhs))
    dG = p1.hartree[: J + 1] - p2.hartree[: J + 1]  # external parts cancel
    mass = problem.basis.mass
    rhs = np.zeros_like(lhs)
    weights = np.full(J + 1, grid.dt)
    weights[0] = weights[-1] = 0.5 * grid.dt
    for l in range(J + 1):
        bracket = np.linalg.solve(mass, dG[l] @ u2[l].T)  # (k, N)
        rhs += weights[l] * (p1.flow(J, l) @ bracket).T
    rhs *= -1j / problem.config.hbar
    return float(np.linalg.norm(lhs - rhs))
