"""
Picard iteration and the derivative of K_n
==========================================

Solve the Galerkin fixed point in the default scenario, then compare the
derivative K_n' against finite differences and compute the smallest singular
value of I - K_n'.
"""
import numpy as np

from faedo import apply_Kn, build_operator, invertibility_margin, project_Qn, solve_fixed_point
from faedo.derivative import Linearization, random_unit_trajectories
from faedo.function_space import sample_norms
from faedo.harness import default_config

cfg = default_config()
p = cfg.problem(8)
psi0 = project_Qn(p.basis, cfg.initial_field())

psi, log = solve_fixed_point(p, psi0, cfg.fixed_point)
print("Picard residuals:", ", ".join(f"{r:.2e}" for r in log.residuals))
print("residual ratios:", ", ".join(f"{r:.3f}" for r in log.ratios))

# directional finite differences: the error should fall 10x per decade of eps
rng = np.random.default_rng(0)
omega = random_unit_trajectories(rng, 1, psi.coeffs.shape)[0]
deriv = Linearization(p, psi, psi0).apply(omega[None])[0]
base = apply_Kn(p, psi, psi0).coeffs
for eps in (1e-2, 1e-3, 1e-4):
    fd = (apply_Kn(p, psi.replace(psi.coeffs + eps * omega), psi0).coeffs - base) / eps
    print(f"eps={eps:.0e}  ||FD - K_n'|| = {np.max(sample_norms(fd - deriv)):.3e}")

# I - K_n' at the fixed point
op = build_operator(p, psi, psi0)
print(f"operator dimension {op.dim}, smallest singular value of I - K_n': {invertibility_margin(op):.4f}")
