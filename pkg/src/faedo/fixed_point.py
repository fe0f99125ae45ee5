"""The numerical fixed-point map K_n, Picard iteration and the reference solution."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .evolution import GalerkinProblem, Propagator
from .function_space import (
    FieldSample,
    SpatialDomain,
    Trajectory,
    build_basis,
    inject,
    project_Qn,
    traj_norm,
)
from .potentials import DensityTrajectory, density_values

log = logging.getLogger(__name__)

INITIAL_PRESETS = ("sine-modes", "bump")


class NonContraction(RuntimeError):
    """Picard residuals stopped decreasing; the regime is not contractive."""


class MaxIterations(RuntimeError):
    """Picard iteration hit the iteration cap before reaching tolerance."""


@dataclass(frozen=True)
class FixedPointConfig:
    tolerance: float = 1e-10
    max_iter: int = 50
    damping: float = 1.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def initial_state(preset: str, domain: SpatialDomain, orbitals: int) -> FieldSample:
    """Initial datum Psi_0 with each orbital normalized to unit L^2 norm.

    ``sine-modes``
        Orbital k is ``s_1 + w_k s_2`` with ``w_k = (k + 1) / (N + 1)``,
        ``s_i = sin(i pi x / L)``.
    ``bump``
        Orbital k is ``x^2 (L - x)^2 p_k(x)`` with ``p_0 = 1`` and
        ``p_k = cos(k pi x / L)`` for k >= 1.

    Both lie in H^2 and vanish on the boundary.  Values and exact derivatives
    are returned as a FieldSample with an orbital axis.
    """
    if orbitals < 1:
        raise ValueError("need at least one orbital")
    x, L = domain.nodes, domain.length
    vals, grads = [], []
    for k in range(orbitals):
        if preset == "sine-modes":
            wk = (k + 1) / (orbitals + 1)
            a, b = np.pi / L, 2 * np.pi / L
            v = np.sin(a * x) + wk * np.sin(b * x)
            g = a * np.cos(a * x) + wk * b * np.cos(b * x)
        elif preset == "bump":
            q = x**2 * (L - x) ** 2
            dq = 2 * x * (L - x) ** 2 - 2 * x**2 * (L - x)
            c = k * np.pi / L
            p, dp = np.cos(c * x), -c * np.sin(c * x)
            v, g = q * p, dq * p + q * dp
        else:
            raise ValueError(f"unknown initial preset {preset!r}; expected one of {INITIAL_PRESETS}")
        scale = 1.0 / np.sqrt(domain.integrate(v**2))
        vals.append(scale * v)
        grads.append(scale * g)
    return FieldSample(domain, np.array(vals, dtype=complex), np.array(grads, dtype=complex))


def apply_Kn(problem: GalerkinProblem, psi_star: Trajectory, psi0) -> Trajectory:
    """One application of K_n: density of `psi_star`, then the linear Galerkin flow from `psi0`."""
    if psi_star.grid != problem.grid:
        raise ValueError("trajectory time grid differs from the problem's")
    if psi_star.basis is not problem.basis and psi_star.basis.dim != problem.basis.dim:
        raise ValueError("trajectory basis differs from the problem's")
    rho = density_values(psi_star.basis, psi_star.coeffs)
    return Trajectory(problem.grid, problem.basis, Propagator(problem, rho).propagate(psi0))


def free_evolution(problem: GalerkinProblem, psi0) -> Trajectory:
    """Evolution under the external potential alone (zero density)."""
    rho = DensityTrajectory.zeros(problem.grid, problem.basis.domain)
    return Trajectory(problem.grid, problem.basis, Propagator(problem, rho).propagate(psi0))


@dataclass
class IterationLog:
    residuals: list = field(default_factory=list)
    ratios: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    @property
    def contraction(self) -> float:
        """Geometric mean of the recorded residual ratios (0 if none)."""
        r = [x for x in self.ratios if x > 0]
        return float(np.exp(np.mean(np.log(r)))) if r else 0.0


def solve_fixed_point(
    problem: GalerkinProblem,
    psi0,
    config: FixedPointConfig | None = None,
    initial: Trajectory | None = None,
) -> tuple[Trajectory, IterationLog]:
    """Damped Picard iteration ``psi <- (1 - theta) psi + theta K_n psi``.

    The starting guess is K_n applied to the external-only evolution.  The
    loop stops once ``||psi^{k+1} - psi^k||_{C(J;H^1_0)} <= tolerance``.

    Raises
    ------
    NonContraction
        If the residual ratio is >= 1 for three consecutive iterations.
    MaxIterations
        If the tolerance is not met within ``max_iter`` iterations.
    """
    cfg = config or FixedPointConfig()
    psi0 = np.asarray(psi0, dtype=complex)
    psi = apply_Kn(problem, initial if initial is not None else free_evolution(problem, psi0), psi0)
    log_ = IterationLog()
    growing = 0
    for _ in range(cfg.max_iter):
        k_psi = apply_Kn(problem, psi, psi0)
        new = k_psi.coeffs if cfg.damping == 1.0 else (1 - cfg.damping) * psi.coeffs + cfg.damping * k_psi.coeffs
        new[0] = psi0
        nxt = psi.replace(new)
        res = traj_norm(nxt, psi)
        if log_.residuals:
            prev = log_.residuals[-1]
            ratio = res / prev if prev > 0 else 0.0
            log_.ratios.append(ratio)
            growing = growing + 1 if ratio >= 1.0 else 0
        log_.residuals.append(res)
        log.debug("picard iter %d residual %.3e", log_.iterations, res)
        psi = nxt
        if res <= cfg.tolerance:
            return psi, log_
        if growing >= 3:
            raise NonContraction(
                f"residual ratio >= 1 for 3 consecutive iterations (last residual {res:.3e})"
            )
    raise MaxIterations(f"no convergence in {cfg.max_iter} iterations (residual {log_.residuals[-1]:.3e})")


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """Fixed point on a fine basis, standing in for the continuum solution."""

    problem: GalerkinProblem
    trajectory: Trajectory
    psi0: np.ndarray
    residual: float
    iterations: int

    @property
    def n_ref(self) -> int:
        return self.problem.basis.dim

    @property
    def substeps(self) -> int:
        return self.problem.config.substeps


def reference_solution(
    problem: GalerkinProblem,
    initial: FieldSample,
    config: FixedPointConfig | None = None,
) -> ReferenceSolution:
    """Solve the fixed point on ``problem.basis`` (the fine reference basis)."""
    psi0 = project_Qn(problem.basis, initial)
    traj, it = solve_fixed_point(problem, psi0, config)
    residual = traj_norm(apply_Kn(problem, traj, psi0), traj)
    return ReferenceSolution(problem, traj, psi0, residual, it.iterations)


def reference_problem(problem: GalerkinProblem, n_ref: int, substeps: int | None = None) -> GalerkinProblem:
    """Same physics and time grid on the n_ref-dimensional basis."""
    ref = problem.with_basis(build_basis(problem.basis.domain, n_ref))
    return ref if substeps is None else ref.with_grid(problem.grid, substeps)


def apply_K_ref(ref: ReferenceSolution, psi: Trajectory) -> Trajectory:
    """Continuum map K realized on the reference basis: inject `psi`, apply K_{n_ref}."""
    return apply_Kn(ref.problem, inject(psi, ref.problem.basis), ref.psi0)
