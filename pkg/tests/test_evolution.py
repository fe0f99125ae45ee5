import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faedo.evolution import (
    GalerkinProblem,
    Propagator,
    PropagatorConfig,
    assemble,
    evolution_identity_residual,
    evolve,
    l2_norms,
    propagate,
)
from faedo.function_space import FieldSample, TimeGrid, build_basis, project_Qn, sample_norms
from faedo.potentials import DensityTrajectory, ExternalPotentialSpec, HartreeKernel


def random_density(rng, grid, domain):
    a = rng.random(3)
    return DensityTrajectory.from_function(
        grid, domain, lambda x, t: (1 + a[0] * np.sin(3 * t)) * np.sin(np.pi * x) ** 2 + a[1] * x * (1 - x) * (1 + t)
    )


def random_state(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def lowest_mode(domain):
    k = np.pi / domain.length
    s = np.sqrt(2 / domain.length)
    return FieldSample.from_function(domain, lambda x: s * np.sin(k * x), lambda x: s * k * np.cos(k * x))


def test_config_validation():
    with pytest.raises(ValueError):
        PropagatorConfig(substeps=0)
    with pytest.raises(ValueError):
        PropagatorConfig(interpolation="cubic")
    assert PropagatorConfig(hbar=2.0, mass=0.5).kinetic_factor == 4.0


def test_assemble_kinetic_only(domain):
    b = build_basis(domain, 5)
    rho = FieldSample(domain, np.zeros(domain.n_nodes))
    h = assemble(b, ExternalPotentialSpec(), HartreeKernel(), rho, 0.0)
    np.testing.assert_allclose(h.matrix, b.stiffness / 2, atol=1e-15)
    h = assemble(b, ExternalPotentialSpec(), HartreeKernel(), rho, 0.0, hbar=1.0, mass=0.5)
    np.testing.assert_allclose(h.matrix, b.stiffness, atol=1e-15)


def test_constant_potential_gives_mass_matrix(domain):
    b = build_basis(domain, 5)
    np.testing.assert_allclose(b.galerkin_matrix(np.full(domain.n_nodes, 2.5)), 2.5 * b.mass, atol=1e-12)


def test_assemble_against_nodewise_oracle(domain, rng):
    b = build_basis(domain, 6)
    spec = ExternalPotentialSpec("driven-well", 3.0, 0.4, 5.0)
    kernel = HartreeKernel(0.1, 1.0, 0.7)
    rho = FieldSample(domain, rng.random(domain.n_nodes))
    t = 0.21
    h = assemble(b, spec, kernel, rho, t).matrix
    x, w = domain.nodes, domain.weights
    ve = 3.0 * np.sin(np.pi * x) ** 2 * (1 + 0.4 * np.sin(5.0 * t))
    ve = ve + np.array([np.sum(w * kernel(xi - x) * rho.values) for xi in x])
    oracle = np.zeros((6, 6))
    for i in range(6):
        for j in range(6):
            oracle[i, j] = np.sum(w * (0.5 * b.grads[i] * b.grads[j] + ve * b.values[i] * b.values[j]))
    np.testing.assert_allclose(h, oracle, atol=1e-10)
    np.testing.assert_allclose(h, h.conj().T, atol=1e-12)


def test_propagator_hamiltonian_matches_assemble(small_problem, rng):
    p = small_problem
    rho = random_density(rng, p.grid, p.basis.domain)
    prop = Propagator(p, rho)
    for j in (0, 3):
        h = assemble(p.basis, p.potential, p.kernel, rho.at(j), p.grid.times[j]).matrix
        np.testing.assert_allclose(prop.hamiltonian(j, 0.0), h, atol=1e-12)
        g = prop.hamiltonian(j, 0.37)
        np.testing.assert_allclose(g, g.conj().T, atol=1e-12)


def test_identity_on_empty_range(small_problem, rng):
    rho = random_density(rng, small_problem.grid, small_problem.basis.domain)
    c = random_state(rng, (2, 4))
    out = propagate(small_problem, rho, c, 3, 3)
    assert out.shape == (1, 2, 4)
    np.testing.assert_array_equal(out[0], c)


def test_eigenmode_phase_second_order(domain):
    b = build_basis(domain, 6)
    grid = TimeGrid(0.5, 8)
    c0 = project_Qn(b, lowest_mode(domain))[None]
    rho = DensityTrajectory.zeros(grid, domain)
    exact = np.exp(-1j * np.pi**2 / 2 * grid.times)[:, None, None] * c0
    errs = []
    for sub in (4, 8):
        p = GalerkinProblem(b, grid, config=PropagatorConfig(substeps=sub))
        errs.append(np.max(sample_norms(propagate(p, rho, c0) - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_l2_conservation(small_problem, rng):
    p = small_problem
    rho = random_density(rng, p.grid, p.basis.domain)
    c = propagate(p, rho, random_state(rng, (2, 4)))
    n2 = l2_norms(p, c) ** 2
    assert np.max(np.abs(n2 - n2[0])) / p.grid.horizon <= 1e-10


def test_h1_norm_stays_bounded(small_problem, rng):
    p = small_problem
    c0 = random_state(rng, (2, 4))
    traj = evolve(p, random_density(rng, p.grid, p.basis.domain), c0)
    norms = sample_norms(traj.coeffs)
    assert norms.max() <= 10 * norms[0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 8), st.integers(0, 8), st.integers(0, 8), st.integers(0, 2**32 - 1))
def test_cocycle(small_problem, a, b, c, seed):
    a, b, c = sorted((a, b, c))
    r = np.random.default_rng(seed)
    p = small_problem
    prop = Propagator(p, random_density(r, p.grid, p.basis.domain))
    psi = random_state(r, (2, 4))
    direct = prop.propagate(psi, a, c)[-1]
    mid = prop.propagate(psi, a, b)[-1]
    np.testing.assert_allclose(prop.propagate(mid, b, c)[-1], direct, atol=1e-10)
    np.testing.assert_allclose(prop.flow(c, a) @ psi.T, direct.T, atol=1e-10)


def test_invalid_range(small_problem, rng):
    prop = Propagator(small_problem, random_density(rng, small_problem.grid, small_problem.basis.domain))
    with pytest.raises(ValueError):
        prop.propagate(np.zeros((1, 4)), 5, 2)
    with pytest.raises(ValueError):
        Propagator(small_problem, np.zeros((3, small_problem.basis.domain.n_nodes)))


def test_identity_residual_vanishes_for_equal_density(small_problem, rng):
    p = small_problem
    rho = random_density(rng, p.grid, p.basis.domain)
    c = random_state(rng, (2, 4))
    assert evolution_identity_residual(p, rho, rho, c, p.grid.horizon) <= 1e-12


def test_identity_residual_vanishes_without_coupling(small_problem, rng):
    p = GalerkinProblem(small_problem.basis, small_problem.grid, small_problem.potential, HartreeKernel(0.1, 1.0, 0.0), small_problem.config)
    r1 = random_density(rng, p.grid, p.basis.domain)
    r2 = random_density(rng, p.grid, p.basis.domain)
    assert evolution_identity_residual(p, r1, r2, random_state(rng, (2, 4)), p.grid.horizon) <= 1e-12


def test_identity_residual_second_order(domain):
    # refinement in the asymptotic regime: dt * max |E| well below 1
    b = build_basis(domain, 4)
    spec = ExternalPotentialSpec("static-well", 5.0)
    kernel = HartreeKernel(0.1, 1.0, 0.1)
    base = lambda x, t: np.sin(np.pi * x) ** 2 * (1 + 0.3 * np.sin(4 * t))
    pert = lambda x, t: base(x, t) * (1 + 1e-3 * np.sin(2 * np.pi * x))
    c0 = np.ones((1, 4))
    res = []
    for S, sub in ((128, 8), (256, 16)):
        grid = TimeGrid(0.5, S)
        p = GalerkinProblem(b, grid, spec, kernel, PropagatorConfig(substeps=sub))
        r1 = DensityTrajectory.from_function(grid, domain, base)
        r2 = DensityTrajectory.from_function(grid, domain, pert)
        res.append(evolution_identity_residual(p, r1, r2, c0, 0.5))
    assert 2.5 <= res[0] / res[1] <= 6.0


def test_identity_residual_requires_sample_time(small_problem, rng):
    rho = random_density(rng, small_problem.grid, small_problem.basis.domain)
    with pytest.raises(ValueError):
        evolution_identity_residual(small_problem, rho, rho, np.zeros((1, 4)), 0.1234)
