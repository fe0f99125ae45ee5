"""
Convergence sweep
=================

Run the full default sweep: a reference fixed point on n_ref = 64 modes,
then every report column for n = 4, 8, 12, 16, followed by the dispersion
estimate of K'(Psi).  Takes about 15 seconds on one core.
"""
import numpy as np

from faedo import harness

cfg = harness.default_config()
ref = harness.build_reference(cfg)
print(f"reference: n_ref={ref.n_ref}, residual {ref.residual:.1e} after {ref.iterations} iterations")

report = harness.run_convergence_sweep(cfg, ref)
print(report.to_csv())

# e_total should follow e_proj + e_init with slope close to one
slope = harness.least_squares_slope(report.column("e_proj") + report.column("e_init"), report.column("e_total"))
print(f"log-log slope of e_total against e_proj + e_init: {slope:.3f}")
q = report.column("e_fp") / report.column("c_n")
print(f"e_fp / c_n ranges over [{q.min():.3f}, {q.max():.3f}]")

for n, est in harness.run_dispersion(cfg, ref):
    print(f"n={n:3d}  dispersion (lower bound) {est:.3e}")
