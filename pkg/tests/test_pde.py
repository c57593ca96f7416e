import math

import numpy as np
import pytest

from crystalhydro.fourier import DriftSpec, FourierField
from crystalhydro.harmonic import realize
from crystalhydro.lattice import load_lattice
from crystalhydro.pde import StabilityError, initial_grid, solve, stability_bounds, step

RHO0_2D = FourierField.from_modes(2, [((0, 0), "1/2", 0), ((1, 0), 0, "3/10")])
H_2D = DriftSpec(FourierField.from_modes(2, [((1, 1), "1/5", 0), ((1, -1), "1/5", 0)]))


def test_heat_kernel_1d():
    real = realize(load_lattice("line"))
    rho0 = FourierField.from_modes(1, [((0,), "1/2", 0), ((2,), "1/5", 0)])
    sol = solve(rho0, DriftSpec.zero(1), 0.05, 256, real)
    y = sol[-1].centers()[..., 0]
    exact = 0.5 + 0.2 * math.exp(-16 * math.pi**2 * 0.5 * 0.05) * np.cos(4 * math.pi * y)
    assert np.abs(sol[-1].values - exact).max() < 1e-4


def test_mass_and_range_with_drift():
    real = realize(load_lattice("square-skew"))
    sol = solve(RHO0_2D, H_2D, 0.1, 48, real, times=[0, 0.05, 0.1])
    assert [g.t for g in sol] == [0.0, 0.05, 0.1]
    for g in sol:
        assert abs(g.mass() - sol[0].mass()) < 1e-12
        assert g.values.min() >= 0 and g.values.max() <= 1
    assert sol[-1].meta["H"] == H_2D.digest()


def test_time_dependent_envelope():
    real = realize(load_lattice("square"))
    H = DriftSpec(H_2D.profile, 1, -5)
    sol = solve(RHO0_2D, H, 0.1, 32, real)
    assert abs(sol[-1].mass() - 0.5) < 1e-12


def test_hexagonal_and_kagome_share_solution():
    a = solve(RHO0_2D, H_2D, 0.05, 32, realize(load_lattice("hexagonal")))[-1]
    b = solve(RHO0_2D, H_2D, 0.05, 32, realize(load_lattice("kagome")))[-1]
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_edge_sum_form_matches():
    real = realize(load_lattice("kagome"))
    a = solve(RHO0_2D, H_2D, 0.02, 32, real, form="divergence")[-1]
    b = solve(RHO0_2D, H_2D, 0.02, 32, real, form="edge-sum")[-1]
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)
    with pytest.raises(ValueError):
        solve(RHO0_2D, H_2D, 0.02, 32, real, form="bogus")


def test_stability_rejected():
    real = realize(load_lattice("square"))
    grid = initial_grid(RHO0_2D, real, 32)
    limit = min(stability_bounds(grid, H_2D, 0.1))
    with pytest.raises(StabilityError):
        step(grid, H_2D, 2 * limit)
    with pytest.raises(StabilityError):
        solve(RHO0_2D, H_2D, 0.1, 32, real, dt=2 * limit)
    assert step(grid, H_2D, 0.5 * limit).t == pytest.approx(0.5 * limit)


def test_gradient_energy_decays_without_drift():
    real = realize(load_lattice("square"))
    sol = solve(RHO0_2D, DriftSpec.zero(2), 0.05, 32, real, times=[0, 0.025, 0.05])
    e = [g.gradient_energy() for g in sol]
    assert e[0] > e[1] > e[2]


def test_csv_output():
    real = realize(load_lattice("square"))
    g = solve(RHO0_2D, DriftSpec.zero(2), 0.01, 8, real)[-1]
    lines = g.to_csv().splitlines()
    assert lines[0] == "# M=8"
    assert lines[3] == "t,y1,y2,rho"
    assert len(lines) == 4 + 64
