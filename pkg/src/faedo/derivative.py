"""Derivative K_n' of the fixed-point map, its matrix realization and related estimates.

For a trajectory psi with density rho = |psi|^2 the derivative in direction
omega is the Duhamel integral

    K_n'[psi](omega)(t) = -(2i / hbar) int_0^t U(t, s) Pi[(Re(conj(psi) omega) * W) u(s)] ds,

with ``u = U(., 0) Q_n Psi_0`` and Pi the L^2 projection onto F_n.  The
default ``quadrature="discrete"`` evaluates it as the exact tangent of the
Crank-Nicolson flow (a midpoint-type Duhamel sum over substeps), so finite
differences of :func:`faedo.fixed_point.apply_Kn` converge to it at first
order in the step.  ``quadrature="trapezoid"`` uses the trapezoid rule over
the sample times with cached interval flow maps; it agrees with the discrete
form up to O(dt^2).

The map is real-linear only: omega enters through Re(conj(psi) omega).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .evolution import GalerkinProblem, Propagator
from .fixed_point import ReferenceSolution
from .function_space import GalerkinBasis, Trajectory, sample_norms, transfer_matrix
from .potentials import density_values

DEFAULT_DIM_CAP = 8192


class DimensionCapExceeded(ValueError):
    pass


def realify(coeffs) -> np.ndarray:
    """Complex coefficients -> real vector with interleaved real/imaginary parts."""
    return np.ascontiguousarray(coeffs, dtype=complex).reshape(-1).view(float).copy()


def complexify(vec, shape) -> np.ndarray:
    return np.ascontiguousarray(vec, dtype=float).view(complex).reshape(shape)


class Linearization:
    """K_n' at a fixed trajectory `psi`, with the flow and states cached.

    Parameters
    ----------
    problem : GalerkinProblem
    psi : Trajectory
        Linearization point on ``problem.basis``.
    psi0 : array_like, shape (N, k)
        Initial coefficients Q_n Psi_0.
    """

    def __init__(self, problem: GalerkinProblem, psi: Trajectory, psi0):
        if psi.grid != problem.grid:
            raise ValueError("trajectory time grid differs from the problem's")
        if psi.basis.dim != problem.basis.dim:
            raise ValueError("trajectory basis differs from the problem's")
        self.problem = problem
        self.psi = psi
        self.psi0 = np.asarray(psi0, dtype=complex)
        self.psi_values = problem.basis.synthesize(psi.coeffs)  # (S+1, N, M)
        self.prop = Propagator(problem, density_values(problem.basis, psi.coeffs))
        self.states = self.prop.substep_states(self.psi0)

    @property
    def shape(self):
        return self.psi.coeffs.shape

    @property
    def dim(self) -> int:
        return 2 * int(np.prod(self.shape))

    def density_variation(self, omega_coeffs) -> np.ndarray:
        """``2 sum_k Re(conj(psi_k) omega_k)`` on the grid; omega has shape (B, S+1, N, k)."""
        w = self.problem.basis.synthesize(omega_coeffs)
        return 2.0 * np.sum((np.conj(self.psi_values) * w).real, axis=-2)

    def apply(self, omega_coeffs, quadrature: str = "discrete") -> np.ndarray:
        """K_n'[psi] applied to a batch of directions, shape (B, S+1, N, k) -> same."""
        omega = np.asarray(omega_coeffs, dtype=complex)
        if omega.shape[1:] != self.shape:
            raise ValueError(f"direction shape {omega.shape[1:]} does not match {self.shape}")
        drho = self.density_variation(omega)  # (B, S+1, M)
        dH = self.problem.hartree_matrices(drho)  # (B, S+1, k, k)
        if quadrature == "discrete":
            out = self.prop.tangent(self.states, list(np.swapaxes(dH, 0, 1)))
            return np.swapaxes(out, 0, 1)
        if quadrature == "trapezoid":
            return self._trapezoid(dH)
        raise ValueError(f"unknown quadrature {quadrature!r}")

    def _trapezoid(self, dH) -> np.ndarray:
        grid, sub = self.problem.grid, self.prop.substeps
        u = self.states[::sub]  # (S+1, N, k)
        mass = self.problem.basis.mass
        # bracket[b, l] = M^{-1} dH[b, l] u_l as columns (k, N)
        bracket = np.linalg.solve(mass, np.einsum("blij,lnj->blin", dH, u))
        B = dH.shape[0]
        out = np.zeros((B,) + self.shape, dtype=complex)
        # acc[l] = U(t_J, t_l) bracket_l, advanced one interval at a time
        flows = self.prop.interval_flows  # row-form
        acc = np.zeros((B, 0) + bracket.shape[2:], dtype=complex)
        h = grid.dt
        for J in range(1, grid.samples + 1):
            phi = flows[J - 1].T
            acc = np.concatenate([acc, bracket[:, J - 1 : J]], axis=1)
            acc = np.einsum("ij,bljn->blin", phi, acc)
            w = np.full(J + 1, h)
            w[0] = w[-1] = 0.5 * h
            total = np.einsum("l,blin->bin", w[:-1], acc) + w[-1] * bracket[:, J]
            out[:, J] = np.swapaxes(total, 1, 2)
        return -1j / self.problem.config.hbar * out

    def matvec(self, vec) -> np.ndarray:
        """Real-ified action on a vector of length `dim` (or matrix of columns)."""
        v = np.asarray(vec, dtype=float)
        cols = v.reshape(self.dim, -1).T
        omega = np.stack([complexify(c, self.shape) for c in cols])
        out = self.apply(omega)
        res = np.stack([realify(o) for o in out], axis=1)
        return res.reshape(v.shape)

    def unit_columns(self, j: int) -> np.ndarray:
        """Images of all real-ified unit directions supported at sample `j`, shape (S+1, 2Nk, N, k)."""
        basis = self.problem.basis
        N, k = self.shape[1:]
        psi = self.psi_values[j]  # (N, M)
        f = basis.values  # (k, M)
        drho = np.empty((N, k, 2, basis.domain.n_nodes))
        drho[:, :, 0] = 2.0 * psi.real[:, None, :] * f[None]
        drho[:, :, 1] = 2.0 * psi.imag[:, None, :] * f[None]
        dHj = self.problem.hartree_matrices(drho.reshape(2 * N * k, -1))
        dH = [None] * (self.problem.grid.samples + 1)
        dH[j] = dHj
        return self.prop.tangent(self.states, dH, first=j)


def apply_Kn_prime(
    problem: GalerkinProblem,
    psi: Trajectory,
    omega: Trajectory,
    psi0,
    quadrature: str = "discrete",
) -> Trajectory:
    """K_n'[psi](omega) as a trajectory on the problem's basis."""
    lin = Linearization(problem, psi, psi0)
    out = lin.apply(omega.coeffs[None], quadrature)[0]
    return Trajectory(problem.grid, problem.basis, out)


@dataclass(frozen=True, eq=False)
class RealLinearOperator:
    """Dense real matrix acting on real-ified trajectory coordinates."""

    matrix: np.ndarray
    basis: GalerkinBasis
    shape: tuple

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, traj: Trajectory) -> Trajectory:
        return traj.replace(complexify(self.matrix @ realify(traj.coeffs), self.shape))


def build_operator(problem: GalerkinProblem, psi: Trajectory, psi0, cap: int = DEFAULT_DIM_CAP) -> RealLinearOperator:
    """Assemble K_n'[psi] column by column from real-ified unit directions."""
    lin = Linearization(problem, psi, psi0)
    if lin.dim > cap:
        raise DimensionCapExceeded(f"operator dimension {lin.dim} exceeds the cap {cap}")
    S1, N, k = lin.shape
    mat = np.empty((lin.dim, lin.dim))
    block = 2 * N * k
    for j in range(S1):
        out = lin.unit_columns(j)  # (S+1, block, N, k)
        cols = np.ascontiguousarray(np.moveaxis(out, 1, 0)).reshape(block, -1).view(float)
        mat[:, j * block : (j + 1) * block] = cols.T
    return RealLinearOperator(mat, problem.basis, lin.shape)


def operator_norm(op: RealLinearOperator, method: str = "power", iterations: int = 20, tol: float = 1e-8, seed: int = 0) -> float:
    """Spectral norm of the assembled matrix (Euclidean on real-ified coordinates)."""
    if method == "exact":
        return float(np.linalg.norm(op.matrix, 2))
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.dim)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iterations):
        w = op.matrix.T @ (op.matrix @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = np.sqrt(nw)
        v = w / nw
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return float(sigma)


def invertibility_margin(op: RealLinearOperator, exact_limit: int = 2500) -> float:
    """Smallest singular value of ``I - K_n'``.

    Dense SVD up to `exact_limit` unknowns; above that, the largest singular
    value of ``(I - K_n')^{-1}`` is found by Lanczos on an LU factorization.
    """
    a = np.eye(op.dim) - op.matrix
    try:
        if op.dim <= exact_limit:
            return float(np.linalg.svd(a, compute_uv=False)[-1])
        lu = scipy.linalg.lu_factor(a)
        inv = scipy.sparse.linalg.LinearOperator(
            a.shape,
            matvec=lambda v: scipy.linalg.lu_solve(lu, v),
            rmatvec=lambda v: scipy.linalg.lu_solve(lu, v, trans=1),
            dtype=float,
        )
        s = scipy.sparse.linalg.svds(inv, k=1, tol=1e-12, return_singular_vectors=False, random_state=0)
        return float(1.0 / s[0])
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError) as exc:
        raise np.linalg.LinAlgError("singular value computation failed") from exc


def random_unit_trajectories(rng: np.random.Generator, count: int, shape) -> np.ndarray:
    """Gaussian coefficient draws normalized to unit H^1_0 norm at every time sample."""
    z = rng.standard_normal((count,) + tuple(shape)) + 1j * rng.standard_normal((count,) + tuple(shape))
    return z / sample_norms(z)[..., None, None]


def sup_norms(coeffs) -> np.ndarray:
    """C(J; H^1_0) norm of each trajectory in a batch (B, S+1, N, k)."""
    return np.max(sample_norms(coeffs), axis=-1)


def sampled_operator_norm(apply_batch, probes) -> float:
    """``max_b ||A omega_b|| / ||omega_b||`` in C(J; H^1_0): a lower bound on ||A||."""
    out = apply_batch(probes)
    return float(np.max(sup_norms(out) / sup_norms(probes)))


def dispersion_estimate(ref: ReferenceSolution, bases, samples: int = 16, seed: int = 0):
    """Sampled maximal dispersion of ``K'(Psi_ref)`` applied to the unit ball from each E_n.

    Draws `samples` trajectories with unit H^1_0 norm at every sample time
    on the reference basis, maps them through the reference derivative and
    returns ``[(n, max_draws ||phi - P_n phi||_{C(J;H^1_0)}), ...]``.  Being a
    maximum over finitely many draws, each estimate is a lower bound on the
    true supremum.
    """
    rng = np.random.default_rng(seed)
    lin = Linearization(ref.problem, ref.trajectory, ref.psi0)
    omega = random_unit_trajectories(rng, samples, lin.shape)
    phi = lin.apply(omega)
    fine = ref.problem.basis
    result = []
    for basis in bases:
        if basis is fine:
            resid = np.zeros_like(phi)
        else:
            R = transfer_matrix(basis, fine)
            resid = phi - (phi @ R) @ R.T
        result.append((basis.dim, float(np.max(sup_norms(resid)))))
    return result


def restrict_batch(coeffs, basis: GalerkinBasis, fine: GalerkinBasis) -> np.ndarray:
    """P_n for a batch of fine-basis coefficient arrays."""
    return np.asarray(coeffs) @ transfer_matrix(basis, fine)


def inject_batch(coeffs, basis: GalerkinBasis, fine: GalerkinBasis) -> np.ndarray:
    return np.asarray(coeffs) @ transfer_matrix(basis, fine).T
