"""Faedo-Galerkin approximation of a closed quantum system with Hartree coupling.

Submodules
----------
function_space  domain, quadrature, H^1_0-orthonormal sine bases, projections
potentials      external potential, soft-core Hartree kernel, densities
evolution       Galerkin Hamiltonian and Crank-Nicolson evolution operator
fixed_point     the map K_n, Picard iteration, reference solution
derivative      K_n' (Duhamel form), matrix realization, dispersion
harness         configuration, convergence sweeps, reports
cli             ``faedo`` command line
"""
from .derivative import apply_Kn_prime, build_operator, dispersion_estimate, invertibility_margin
from .evolution import GalerkinProblem, Propagator, PropagatorConfig, assemble, evolution_identity_residual, propagate
from .fixed_point import FixedPointConfig, apply_Kn, initial_state, reference_solution, solve_fixed_point
from .function_space import (
    FieldSample,
    GalerkinBasis,
    SpatialDomain,
    TimeGrid,
    Trajectory,
    build_basis,
    h10_inner,
    project_Pn,
    project_Qn,
    traj_norm,
)
from .potentials import (
    DensityTrajectory,
    ExternalPotentialSpec,
    HartreeKernel,
    density_from_trajectory,
    effective_potential,
    hartree_convolve,
    lipschitz_ratio,
)

__version__ = "0.1.0"
