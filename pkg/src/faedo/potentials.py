"""External potential, soft-core Hartree kernel, densities and V_e."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .function_space import (
    FieldSample,
    SpatialDomain,
    TimeGrid,
    Trajectory,
    fd_gradient,
    sample_norms,
    traj_norm,
)

PRESETS = ("zero", "static-well", "driven-well")


@dataclass(frozen=True)
class ExternalPotentialSpec:
    """External potential ``V(x, t) = profile(x) * drive(t)``.

    Presets
    -------
    zero
        V = 0.
    static-well
        ``V0 * sin(pi x / L)**shape``.
    driven-well
        ``V0 * sin(pi x / L)**shape * (1 + alpha * sin(omega t))``.

    With ``shape >= 1`` every preset is C^1 on the closed space-time domain.
    """

    preset: str = "zero"
    amplitude: float = 0.0
    drive_amplitude: float = 0.0
    drive_frequency: float = 0.0
    shape: float = 2.0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown potential preset {self.preset!r}; expected one of {PRESETS}")
        if self.shape < 1:
            raise ValueError("well shape exponent must be >= 1 for a C^1 potential")

    def profile(self, domain: SpatialDomain) -> np.ndarray:
        if self.preset == "zero":
            return np.zeros(domain.n_nodes)
        s = np.sin(np.pi * domain.nodes / domain.length)
        return self.amplitude * s**self.shape

    def drive(self, t: float) -> float:
        if self.preset == "driven-well":
            return 1.0 + self.drive_amplitude * np.sin(self.drive_frequency * t)
        return 1.0

    def __call__(self, domain: SpatialDomain, t: float) -> FieldSample:
        return FieldSample(domain, self.profile(domain) * self.drive(t))

    @property
    def time_dependent(self) -> bool:
        return self.preset == "driven-well" and self.drive_amplitude != 0.0


def smooth_cutoff(r):
    """C-infinity cutoff: 1 on [0, 1], 0 on [2, inf), smooth transition between."""
    r = np.asarray(r, dtype=float)

    def bump(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    s = r - 1.0
    up, down = bump(1.0 - s), bump(s)
    return up / (up + down)


@dataclass(frozen=True)
class HartreeKernel:
    """``W(xi) = coupling / sqrt(xi^2 + softening^2) * chi(|xi| / truncation)``.

    `truncation` must be at least the domain length so the cutoff never acts
    on distances that occur inside the domain.
    """

    softening: float = 0.1
    truncation: float = 1.0
    coupling: float = 0.0

    def __post_init__(self):
        if not self.softening > 0:
            raise ValueError("kernel softening must be positive")
        if not self.truncation > 0:
            raise ValueError("kernel truncation radius must be positive")
        if self.coupling < 0:
            raise ValueError("coupling must be nonnegative")

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        base = self.coupling / np.sqrt(xi**2 + self.softening**2)
        return base * smooth_cutoff(np.abs(xi) / self.truncation)

    def check_domain(self, domain: SpatialDomain):
        if self.truncation < domain.length:
            raise ValueError(
                f"truncation radius {self.truncation} is below diam(domain)={domain.length}"
            )

    def matrix(self, domain: SpatialDomain) -> np.ndarray:
        """Quadrature matrix ``Q[i, j] = w_j W(x_i - x_j)`` (read-only, cached)."""
        return _kernel_matrix(self, domain)


@lru_cache(maxsize=16)
def _kernel_matrix(kernel: HartreeKernel, domain: SpatialDomain) -> np.ndarray:
    kernel.check_domain(domain)
    x = domain.nodes
    mat = kernel(x[:, None] - x[None, :]) * domain.weights[None, :]
    mat.setflags(write=False)
    return mat


def hartree_convolve(kernel: HartreeKernel, rho: FieldSample) -> FieldSample:
    """``(W * rho)(x_i) = sum_j w_j W(x_i - y_j) rho(y_j)`` with rho zero outside the domain."""
    values = np.asarray(rho.values)
    if np.iscomplexobj(values):
        raise ValueError("density must be real")
    return FieldSample(rho.domain, values @ kernel.matrix(rho.domain).T)


@dataclass(frozen=True, eq=False)
class DensityTrajectory:
    """Density samples ``rho[j, m]`` at time sample j and node m."""

    grid: TimeGrid
    domain: SpatialDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.samples + 1, self.domain.n_nodes):
            raise ValueError(f"density array shape {v.shape} does not match grid/domain")
        object.__setattr__(self, "values", v)

    def at(self, j: int) -> FieldSample:
        return FieldSample(self.domain, self.values[j])

    @classmethod
    def zeros(cls, grid: TimeGrid, domain: SpatialDomain):
        return cls(grid, domain, np.zeros((grid.samples + 1, domain.n_nodes)))

    @classmethod
    def from_function(cls, grid: TimeGrid, domain: SpatialDomain, rho):
        """Sample ``rho(x, t)`` on the node set at every grid time."""
        return cls(grid, domain, np.stack([rho(domain.nodes, t) for t in grid.times]))


def density_values(basis, coeffs) -> np.ndarray:
    """``sum_k |psi_k|^2`` on the grid for coefficients of shape (..., N, k)."""
    psi = basis.synthesize(coeffs)
    return np.sum(psi.real**2 + psi.imag**2, axis=-2)


def density_from_trajectory(psi: Trajectory) -> DensityTrajectory:
    return DensityTrajectory(psi.grid, psi.basis.domain, density_values(psi.basis, psi.coeffs))


def effective_potential(spec: ExternalPotentialSpec, kernel: HartreeKernel, rho: FieldSample, t: float) -> FieldSample:
    """``V_e(x, t, rho) = V(x, t) + (W * rho)(x)``."""
    ext = spec(rho.domain, t).values
    return FieldSample(rho.domain, ext + hartree_convolve(kernel, rho).values)


def lipschitz_ratio(kernel: HartreeKernel, psi1: Trajectory, psi2: Trajectory, probe: Trajectory) -> float:
    """Diagnostic ratio behind the local Lipschitz bound on V_e.

    Returns ``sup_t ||(V_e(rho1) - V_e(rho2)) probe||_{H^1}`` divided by
    ``||psi1 - psi2||_{C(J;H^1_0)} * sup_t ||probe(t)||_{H^1_0}``.  Gradients
    of the products use finite differences on the node set.
    """
    dist = traj_norm(psi1, psi2)
    if dist == 0.0:
        raise ZeroDivisionError("psi1 and psi2 coincide; the ratio is undefined")
    probe_norm = float(np.max(sample_norms(probe.coeffs)))
    if probe_norm == 0.0:
        raise ZeroDivisionError("probe trajectory is zero")
    domain = psi1.basis.domain
    drho = density_values(psi1.basis, psi1.coeffs) - density_values(psi2.basis, psi2.coeffs)
    dv = drho @ kernel.matrix(domain).T  # (S+1, M); the external part cancels
    prod = dv[:, None, :] * probe.values()
    grad = fd_gradient(domain, prod)
    dens = np.abs(prod) ** 2 + np.abs(grad) ** 2
    num = np.sqrt(np.max(np.sum(domain.integrate(dens), axis=-1)))
    return float(num / (dist * probe_norm))
