import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from faedo.function_space import FieldSample, SpatialDomain, Trajectory, build_basis
from faedo.potentials import (
    DensityTrajectory,
    ExternalPotentialSpec,
    HartreeKernel,
    density_from_trajectory,
    effective_potential,
    hartree_convolve,
    lipschitz_ratio,
    smooth_cutoff,
)


def random_traj(rng, grid, basis, orbitals=2, scale=1.0):
    shape = (grid.samples + 1, orbitals, basis.dim)
    return Trajectory(grid, basis, scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape)))


def test_presets_and_validation(domain):
    assert np.all(ExternalPotentialSpec("zero").profile(domain) == 0)
    well = ExternalPotentialSpec("static-well", 3.0)
    np.testing.assert_allclose(well(domain, 0.7).values, 3.0 * np.sin(np.pi * domain.nodes) ** 2)
    driven = ExternalPotentialSpec("driven-well", 2.0, 0.5, 3.0)
    t = 0.3
    np.testing.assert_allclose(
        driven(domain, t).values, 2.0 * np.sin(np.pi * domain.nodes) ** 2 * (1 + 0.5 * np.sin(3.0 * t))
    )
    assert driven.time_dependent and not well.time_dependent
    with pytest.raises(ValueError):
        ExternalPotentialSpec("harmonic")
    with pytest.raises(ValueError):
        ExternalPotentialSpec("static-well", 1.0, shape=0.5)


def test_cutoff_shape():
    r = np.linspace(0, 3, 301)
    chi = smooth_cutoff(r)
    assert np.all(chi[r <= 1] == 1.0) and np.all(chi[r >= 2] == 0.0)
    assert np.all(np.diff(chi) <= 0)


def test_kernel_properties():
    k = HartreeKernel(0.1, 1.0, 0.7)
    xi = np.linspace(-3, 3, 601)
    w = k(xi)
    np.testing.assert_array_equal(w, k(-xi))
    assert np.all(w >= 0)
    assert np.all(w[np.abs(xi) >= 2] == 0)
    inside = np.abs(xi) <= 1
    np.testing.assert_allclose(w[inside], 0.7 / np.sqrt(xi[inside] ** 2 + 0.01), rtol=1e-15)
    with pytest.raises(ValueError):
        HartreeKernel(0.0)
    with pytest.raises(ValueError):
        HartreeKernel(0.1, 1.0, -1.0)


def test_truncation_below_diameter_is_rejected(domain):
    with pytest.raises(ValueError):
        HartreeKernel(0.1, 0.5, 1.0).matrix(domain)


def test_density_examples(domain, grid, rng):
    b = build_basis(domain, 5)
    zero = Trajectory(grid, b, np.zeros((grid.samples + 1, 2, 5)))
    assert np.all(density_from_trajectory(zero).values == 0)
    c = rng.normal(size=(grid.samples + 1, 1, 5)) + 1j * rng.normal(size=(grid.samples + 1, 1, 5))
    pair = Trajectory(grid, b, np.concatenate([c, 1j * c], axis=1))
    f = b.synthesize(c[:, 0])
    np.testing.assert_allclose(density_from_trajectory(pair).values, 2 * np.abs(f) ** 2, atol=1e-12)
    t = random_traj(rng, grid, b)
    oracle = np.sum(np.abs(np.einsum("jki,im->jkm", t.coeffs, b.values)) ** 2, axis=1)
    rho = density_from_trajectory(t).values
    np.testing.assert_allclose(rho, oracle, atol=1e-12)
    assert rho.min() >= 0


def test_hartree_examples(domain):
    k = HartreeKernel(0.1, 1.0, 1.0)
    zero = FieldSample(domain, np.zeros(domain.n_nodes))
    assert np.all(hartree_convolve(k, zero).values == 0)
    even = FieldSample(domain, np.cos(2 * np.pi * (domain.nodes - 0.5)) ** 2)
    v = hartree_convolve(k, even).values
    np.testing.assert_allclose(v, v[::-1], atol=1e-10)
    with pytest.raises(ValueError):
        hartree_convolve(k, FieldSample(domain, np.ones(domain.n_nodes) + 0j))


def test_hartree_constant_density_adaptive_oracle():
    # x = 0.5 is not a node, so evaluate the same quadrature sum there directly
    d = SpatialDomain(1.0, 512)
    k = HartreeKernel(0.1, 1.0, 1.0)
    oracle = quad(lambda y: 1.0 / np.sqrt((0.5 - y) ** 2 + 0.01), 0, 1, epsabs=1e-13, epsrel=1e-13)[0]
    value = np.sum(d.weights * k(0.5 - d.nodes))
    assert value == pytest.approx(oracle, rel=1e-6)
    # closed form of the same integral at every node
    rho = FieldSample(d, np.ones(d.n_nodes))
    conv = hartree_convolve(k, rho).values
    exact = lambda x: np.arcsinh((1 - x) / 0.1) + np.arcsinh(x / 0.1)
    np.testing.assert_allclose(conv, exact(d.nodes), rtol=1e-6)
    assert exact(0.5) == pytest.approx(oracle, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.integers(0, 2**32 - 1))
def test_hartree_linear_and_positive(domain, a, b, seed):
    r = np.random.default_rng(seed)
    k = HartreeKernel(0.1, 1.0, 0.3)
    r1 = FieldSample(domain, r.random(domain.n_nodes))
    r2 = FieldSample(domain, r.random(domain.n_nodes))
    lhs = hartree_convolve(k, FieldSample(domain, a * r1.values + b * r2.values)).values
    rhs = a * hartree_convolve(k, r1).values + b * hartree_convolve(k, r2).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(rhs).max()))
    assert np.all(hartree_convolve(k, r1).values >= 0)


def test_hartree_doubles_with_coupling(domain):
    rho = FieldSample(domain, np.sin(np.pi * domain.nodes) ** 2)
    v1 = hartree_convolve(HartreeKernel(0.1, 1.0, 0.25), rho).values
    v2 = hartree_convolve(HartreeKernel(0.1, 1.0, 0.5), rho).values
    np.testing.assert_array_equal(v2, 2 * v1)


def test_effective_potential_examples(domain):
    rho = FieldSample(domain, np.full(domain.n_nodes, 0.8))
    ve = effective_potential(ExternalPotentialSpec(), HartreeKernel(0.1, 1.0, 0.0), rho, 0.2)
    assert np.all(ve.values == 0) and not np.iscomplexobj(ve.values)
    well = ExternalPotentialSpec("static-well", 4.0)
    ve = effective_potential(well, HartreeKernel(0.1, 1.0, 0.0), rho, 0.2)
    np.testing.assert_array_equal(ve.values, well(domain, 0.2).values)
    k = HartreeKernel(0.1, 1.0, 0.5)
    ve = effective_potential(well, k, rho, 0.2)
    x = domain.nodes
    hartree = 0.5 * 0.8 * (np.arcsinh((1 - x) / 0.1) + np.arcsinh(x / 0.1))
    np.testing.assert_allclose(ve.values, 4.0 * np.sin(np.pi * x) ** 2 + hartree, rtol=1e-6)


def test_density_trajectory_from_function(domain, grid):
    d = DensityTrajectory.from_function(grid, domain, lambda x, t: (1 + t) * x)
    np.testing.assert_allclose(d.at(grid.samples).values, (1 + grid.horizon) * domain.nodes)
    with pytest.raises(ValueError):
        DensityTrajectory(grid, domain, np.zeros((2, domain.n_nodes)))


def test_lipschitz_ratio_examples(domain, grid, rng):
    b = build_basis(domain, 4)
    k = HartreeKernel(0.1, 1.0, 0.2)
    psi = random_traj(rng, grid, b, scale=0.3)
    probe = random_traj(rng, grid, b)
    ratios = [lipschitz_ratio(k, psi * (1 + eps), psi, probe) for eps in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert np.all(np.isfinite(ratios))
    assert max(ratios) / min(ratios) < 2
    other = random_traj(rng, grid, b, scale=0.3)
    base = lipschitz_ratio(k, psi, other, probe)
    assert lipschitz_ratio(k, psi, other, probe * 3.7) == pytest.approx(base, rel=1e-10)
    assert lipschitz_ratio(HartreeKernel(0.1, 1.0, 0.0), psi, other, probe) == 0
    with pytest.raises(ZeroDivisionError):
        lipschitz_ratio(k, psi, psi, probe)


def test_lipschitz_ratio_bounded_on_a_ball(domain, grid):
    r = np.random.default_rng(7)
    b = build_basis(domain, 4)
    k = HartreeKernel(0.1, 1.0, 0.2)
    ratios = []
    for _ in range(100):
        ratios.append(lipschitz_ratio(k, random_traj(r, grid, b, scale=0.2), random_traj(r, grid, b, scale=0.2), random_traj(r, grid, b)))
    # finite, and of the same order throughout the ball
    assert np.all(np.isfinite(ratios))
    assert max(ratios) < 10 * np.median(ratios)
