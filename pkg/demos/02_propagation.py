"""
Crank-Nicolson propagation
==========================

Propagate the lowest sine mode with no potential and compare against the
exact phase rotation, then propagate the default initial datum through a
driven well and check that the L^2 norm is conserved.
"""
import numpy as np

from faedo import DensityTrajectory, FieldSample, GalerkinProblem, PropagatorConfig, build_basis, project_Qn, propagate
from faedo.evolution import l2_norms
from faedo.function_space import sample_norms
from faedo.harness import default_config

cfg = default_config()
domain, grid = cfg.domain, cfg.grid
basis = build_basis(domain, 8)

# free particle: psi(t) = exp(-i E_1 t) sin(pi x) with E_1 = pi^2 / 2
mode = FieldSample.from_function(domain, lambda x: np.sqrt(2) * np.sin(np.pi * x), lambda x: np.sqrt(2) * np.pi * np.cos(np.pi * x))
c0 = project_Qn(basis, mode)[None]
exact = np.exp(-0.5j * np.pi**2 * grid.times)[:, None, None] * c0
zero = DensityTrajectory.zeros(grid, domain)
prev = None
for sub in (1, 2, 4, 8):
    p = GalerkinProblem(basis, grid, config=PropagatorConfig(substeps=sub))
    err = np.max(sample_norms(propagate(p, zero, c0) - exact))
    print(f"substeps={sub}  phase error {err:.3e}" + (f"  ratio {prev / err:.2f}" if prev else ""))
    prev = err

# driven well, default initial datum, zero density
p = cfg.problem(8)
psi0 = project_Qn(p.basis, cfg.initial_field())
coeffs = propagate(p, zero, psi0)
norms = l2_norms(p, coeffs)
print("L2 norm drift over [0, T0]:", np.abs(norms**2 - norms[0] ** 2).max())
print("H1_0 norm range:", sample_norms(coeffs).min(), sample_norms(coeffs).max())
