"""
Sine bases orthonormal in H^1_0
===============================

Build nested Galerkin bases, check that they are orthonormal, and watch the
projection error of a smooth function shrink as the basis grows.
"""
import numpy as np

from faedo import FieldSample, SpatialDomain, build_basis, project_Qn
from faedo.function_space import h10_norm

domain = SpatialDomain(length=1.0, n_nodes=512)

# the H^1_0 Gram matrix of every basis is the identity
basis = build_basis(domain, 16)
print("max |Gram - I| =", np.abs(basis.gram_h1 - np.eye(16)).max())

# a smooth function vanishing at both ends, with its exact derivative
f = FieldSample.from_function(
    domain,
    lambda x: x**2 * (1 - x) ** 2 * np.exp(x),
    lambda x: (2 * x * (1 - x) ** 2 - 2 * x**2 * (1 - x) + x**2 * (1 - x) ** 2) * np.exp(x),
)

# projection error in H^1_0 for growing n
for n in (2, 4, 8, 16, 32):
    b = build_basis(domain, n)
    c = project_Qn(b, f)
    resid = FieldSample(domain, f.values - b.synthesize(c), f.grad - b.synthesize_grad(c))
    print(f"n={n:3d}  ||f - Q_n f|| = {h10_norm(resid):.3e}")
