import math

import numpy as np
import pytest

from crystalhydro.fourier import DriftSpec, FourierField
from crystalhydro.harmonic import ScalingMap, realize
from crystalhydro.lattice import load_lattice
from crystalhydro.sim import (
    Configuration,
    SimulationError,
    TrajectoryRecorder,
    drift_oscillation,
    drift_oscillation_bound,
    enumerate_states,
    generator_matrix,
    jump_rate,
    make_rng,
    sample_initial,
    simulate,
    state_index,
)


@pytest.fixture(scope="module")
def square8():
    return ScalingMap.build(realize(load_lattice("square")), 8)


def _H2():
    return DriftSpec(FourierField.from_modes(2, [((1, 0), "1/2", 0), ((0, 1), 0, "3/10")]))


def test_rng_streams():
    a = make_rng((1, 2, 3)).random(4)
    assert np.array_equal(a, make_rng((1, 2, 3)).random(4))
    assert not np.array_equal(a, make_rng((1, 2, 4)).random(4))


def test_configuration_checks(square8):
    g = square8.graph
    c = Configuration(np.zeros(g.num_vertices, dtype=np.uint8))
    assert c.particle_count == 0
    with pytest.raises(ValueError):
        Configuration(np.array([0, 2]))
    with pytest.raises(ValueError):
        Configuration(np.array([1, 0]), particle_count=2)
    d = Configuration(np.array([1, 0, 0])).exchanged(0, 2)
    assert d.occupancy.tolist() == [0, 0, 1]


def test_simulation_is_reproducible_and_conservative(square8):
    g = square8.graph
    eta = sample_initial(FourierField.constant(2, "1/2"), g, square8, 11)
    a = simulate(eta, g, square8, _H2(), 0.05, (1, 0), snapshot_times=np.linspace(0, 0.05, 11))
    b = simulate(eta, g, square8, _H2(), 0.05, (1, 0), snapshot_times=np.linspace(0, 0.05, 11))
    assert np.array_equal(a.snapshots, b.snapshots)
    assert a.events > 0 and a.candidates >= a.events
    assert np.all(a.particle_counts == eta.particle_count)
    assert np.array_equal(a.snapshots[0], eta.occupancy)
    assert a.jumps_forward.sum() + a.jumps_backward.sum() == a.events


def test_snapshot_times_validated(square8):
    g = square8.graph
    eta = Configuration(np.zeros(g.num_vertices, dtype=np.uint8))
    with pytest.raises(ValueError):
        TrajectoryRecorder(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        simulate(eta, g, square8, _H2(), 0.1, 0, snapshot_times=[0.2])
    with pytest.raises(ValueError):
        simulate(eta, g, square8, _H2(), 0.0, 0)


def test_event_budget_truncates(square8):
    g = square8.graph
    eta = sample_initial(FourierField.constant(2, "1/2"), g, square8, 3)
    rec = simulate(eta, g, square8, DriftSpec.zero(2), 1.0, 0, max_events=10)
    assert rec.truncated and rec.candidates == 10
    assert rec.final_time < 1.0
    assert np.all(rec.particle_counts == eta.particle_count)


def test_refuses_nonharmonic():
    smap = ScalingMap.build(realize(load_lattice("line2-printed")), 4)
    eta = Configuration(np.zeros(smap.graph.num_vertices, dtype=np.uint8))
    with pytest.raises(SimulationError):
        simulate(eta, smap.graph, smap, DriftSpec.zero(1), 0.1, 0)


def test_oscillation_bounds(square8):
    H = _H2()
    exact = drift_oscillation(H, square8, 1.0)
    assert 0 < exact <= drift_oscillation_bound(H, square8, 1.0) + 1e-12
    g = square8.graph
    h = H(0.0, square8.coords)
    assert exact == pytest.approx(np.abs(h[g.heads] - h[g.tails]).max())


def test_jump_rate_matches_generator():
    smap = ScalingMap.build(realize(load_lattice("line")), 4)
    H = DriftSpec(FourierField.from_modes(1, [(1, "1/2", 0)]))
    Q = generator_matrix(smap, H)
    eta = Configuration(np.array([1, 0, 0, 0], dtype=np.uint8))
    g = smap.graph
    for e in range(g.num_edges):
        rate = jump_rate(e, eta, 0.0, H, smap)
        if g.tails[e] == 0:
            nxt = eta.exchanged(0, g.heads[e]).occupancy
            assert Q[state_index(eta.occupancy), state_index(nxt)] == pytest.approx(0.5 * 16 * rate)
        else:
            assert rate == 0.0


@pytest.mark.parametrize("name,N", [("line", 5), ("line2", 3)])
def test_generator_reversible_measure(name, N):
    # the weakly asymmetric chain is reversible for exp(2 sum eta_x H(x))
    smap = ScalingMap.build(realize(load_lattice(name)), N)
    H = DriftSpec(FourierField.from_modes(1, [(1, "0.7", "0.2"), (2, 0, "0.4")]))
    Q = generator_matrix(smap, H)
    np.testing.assert_allclose(Q.sum(axis=1), 0, atol=1e-9)
    states = enumerate_states(smap.graph.num_vertices)
    pi = np.exp(2 * states @ H(0.0, smap.coords))
    flux = pi[:, None] * Q
    np.testing.assert_allclose(flux, flux.T, rtol=1e-10, atol=1e-9)


def test_symmetric_jump_counts_balance(square8):
    g = square8.graph
    fwd = bwd = 0
    for r in range(5):
        eta = sample_initial(FourierField.constant(2, "1/2"), g, square8, (5, r))
        rec = simulate(eta, g, square8, DriftSpec.zero(2), 0.5, (6, r))
        fwd += int(rec.jumps_forward.sum())
        bwd += int(rec.jumps_backward.sum())
    assert abs(fwd - bwd) <= 4 * math.sqrt(fwd + bwd)


def test_translation_equivariance_in_distribution(square8):
    # translating eta0 and H by sigma translates the law of the process
    g = square8.graph
    sigma = np.array([3, 5])
    shift = sigma / g.N
    H = _H2()
    Ht = H.translated(shift)
    eta0 = sample_initial(FourierField.from_modes(2, [((0, 0), "1/2", 0), ((1, 1), "0.3", 0)]), g, square8, 0)
    eta1 = eta0.translated(g, sigma)
    J = FourierField.from_modes(2, [((1, 0), 1, 0), ((0, 1), 0, 1)])
    Jt = J.translated(shift)
    assert Jt(square8.coords) @ eta1.occupancy == pytest.approx(J(square8.coords) @ eta0.occupancy)
    a, b = [], []
    for r in range(150):
        ra = simulate(eta0, g, square8, H, 0.02, (20, r))
        rb = simulate(eta1, g, square8, Ht, 0.02, (21, r))
        a.append(ra.pairings([J], square8)[-1, 0])
        b.append(rb.pairings([Jt], square8)[-1, 0])
    a, b = np.array(a), np.array(b)
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    assert abs(a.mean() - b.mean()) <= 4 * se


def test_time_dependent_drift_runs(square8):
    g = square8.graph
    H = DriftSpec(_H2().profile, 1, 2)
    eta = sample_initial(FourierField.constant(2, "1/2"), g, square8, 1)
    rec = simulate(eta, g, square8, H, 0.05, 2)
    assert rec.osc == pytest.approx(drift_oscillation(H, square8, 0.05), rel=1e-9)
    assert np.all(rec.particle_counts == eta.particle_count)
