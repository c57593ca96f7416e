import numpy as np
import pytest

from crystalhydro.fourier import FourierField
from crystalhydro.harmonic import (
    HarmonicError,
    ScalingMap,
    diffusion_matrix,
    dirichlet_energy,
    harmonicity_residual,
    laplacian_convergence_check,
    realize,
    solve_harmonic,
    torus_difference,
)
from crystalhydro.lattice import load_lattice

DIFFUSION = {
    "line": [[0.5]],
    "line2": [[0.125]],
    "square": [[0.5, 0], [0, 0.5]],
    "square-skew": [[0.625, 0.25], [0.25, 0.5]],
    "hexagonal": [[0.375, 0], [0, 0.375]],
    "kagome": [[0.375, 0], [0, 0.375]],
}


@pytest.mark.parametrize("name", sorted(DIFFUSION))
def test_diffusion_values(name):
    real = realize(load_lattice(name))
    assert real.is_harmonic
    np.testing.assert_allclose(real.diffusion, DIFFUSION[name], atol=1e-12)
    np.testing.assert_allclose(diffusion_matrix(real), DIFFUSION[name], atol=1e-12)


def test_exact_and_float_modes_agree():
    spec = load_lattice("kagome")
    ex = realize(spec, exact=True)
    fl = realize(spec, exact=False)
    assert ex.exact is not None and fl.exact is None
    np.testing.assert_allclose(ex.positions, fl.positions, atol=1e-12)
    assert str(diffusion_matrix(ex, exact=True)[0, 0]) == "3/8"


def test_lattice_coordinates():
    skew = realize(load_lattice("square-skew"))
    np.testing.assert_allclose(skew.lattice_diffusion, np.eye(2) / 2, atol=1e-12)
    hexa = realize(load_lattice("hexagonal"))
    np.testing.assert_allclose(hexa.lattice_diffusion, [[1 / 6, -1 / 12], [-1 / 12, 1 / 6]], atol=1e-12)


def test_override_positions_flagged():
    real = realize(load_lattice("line2-printed"))
    assert real.override and not real.is_harmonic
    assert real.diffusion[0, 0] == pytest.approx(1.25)
    np.testing.assert_allclose(real.residual[0], [-3.0])


def test_square_1c_residual():
    real = realize(load_lattice("square-1c"))
    np.testing.assert_allclose(real.residual[0], [2.0, 0.0])


def test_dependent_basis_rejected():
    spec = load_lattice("square")
    with pytest.raises(HarmonicError):
        solve_harmonic(spec.graph, [[1, 0], [2, 0]])


def test_bad_pin():
    spec = load_lattice("square")
    with pytest.raises(HarmonicError):
        solve_harmonic(spec.graph, spec.basis, pin=3)


@pytest.mark.parametrize("name", ["line2", "hexagonal", "kagome", "square-1c"])
def test_dirichlet_energy_gradient_is_residual(name):
    spec = load_lattice(name)
    real = solve_harmonic(spec.graph, spec.basis, exact=False)
    rng = np.random.default_rng(0)
    P = real.positions + 0.1 * rng.normal(size=real.positions.shape)
    h = 1e-6
    grad = np.zeros_like(P)
    for idx in np.ndindex(P.shape):
        e = np.zeros_like(P)
        e[idx] = h
        grad[idx] = (dirichlet_energy(P + e, spec.graph, real.basis) - dirichlet_energy(P - e, spec.graph, real.basis)) / (2 * h)
    # each unoriented edge appears twice in the oriented sum
    np.testing.assert_allclose(grad, -2 * harmonicity_residual(P, spec.graph, real.basis), atol=1e-6)
    # the harmonic positions minimise the energy
    assert dirichlet_energy(real.positions, spec.graph, real.basis) <= dirichlet_energy(P, spec.graph, real.basis)


@pytest.mark.parametrize("name", ["hexagonal", "kagome", "square-skew"])
def test_scaling_map(name):
    real = realize(load_lattice(name))
    smap = ScalingMap.build(real, 6)
    g = smap.graph
    assert np.all((smap.coords >= 0) & (smap.coords < 1))
    step = torus_difference(smap.coords[g.heads], smap.coords[g.tails])
    np.testing.assert_allclose(step, torus_difference(smap.edge_displacements(), 0), atol=1e-12)
    np.testing.assert_allclose(smap.physical(), smap.coords @ real.basis.T)


def test_scaling_map_rejects_foreign_graph():
    a = realize(load_lattice("square"))
    b = ScalingMap.build(realize(load_lattice("square")), 4)
    with pytest.raises(ValueError):
        ScalingMap(a, b.graph)


def test_laplacian_convergence_kagome():
    J = FourierField.from_modes(2, [((1, 0), 1, 0)])
    rows = laplacian_convergence_check(realize(load_lattice("kagome")), J, [16, 32, 64])
    devs = [r["max_deviation"] for r in rows]
    assert devs[0] > devs[1] > devs[2]
