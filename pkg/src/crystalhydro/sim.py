"""Exact simulation of the weakly asymmetric exclusion process on ``X_N``.

The process is generated by ``N^2 L_N^H``: a particle at ``oe`` jumps
across the oriented edge ``e`` to an empty ``te`` at rate
``(N^2 / 2) exp(H(t, Phi_N(te)) - H(t, Phi_N(oe)))``.

Events are produced by thinning.  A single exponential clock of rate
``lam_bar * |unoriented edges|`` proposes an edge uniformly; the edge is
oriented from its occupied to its empty end (at most one orientation has a
nonzero rate) and the move is accepted with probability
``exp(dH - osc)``, where ``osc`` bounds ``|dH|`` over all edges and times.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .fourier import DriftSpec, FourierField
from .harmonic import ScalingMap
from .lattice import ScaledGraph

RATE_TOL = 1e-12
DEFAULT_BLOCK = 1 << 20


class SimulationError(RuntimeError):
    pass


def make_rng(seed) -> np.random.Generator:
    """Generator for ``seed`` = int or ``(master_seed, replica, ...)``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        ss = np.random.SeedSequence(int(seed[0]), spawn_key=tuple(int(s) for s in seed[1:]))
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------


@dataclass
class Configuration:
    """Occupation numbers on the vertices of a scaled graph."""

    occupancy: np.ndarray
    particle_count: int = -1

    def __post_init__(self):
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if np.any(self.occupancy > 1):
            raise ValueError("occupancy must be 0/1")
        count = int(self.occupancy.sum())
        if self.particle_count >= 0 and self.particle_count != count:
            raise ValueError("particle_count does not match the occupancy")
        self.particle_count = count

    def __len__(self) -> int:
        return len(self.occupancy)

    def copy(self) -> "Configuration":
        return Configuration(self.occupancy.copy(), self.particle_count)

    def exchanged(self, x: int, y: int) -> "Configuration":
        """``eta^{(x, y)}``: swap the values at ``x`` and ``y``."""
        occ = self.occupancy.copy()
        occ[x], occ[y] = occ[y], occ[x]
        return Configuration(occ, self.particle_count)

    def translated(self, graph: ScaledGraph, sigma) -> "Configuration":
        """``(sigma eta)_{sigma x} = eta_x``."""
        occ = np.empty_like(self.occupancy)
        occ[graph.translate_vertices(sigma)] = self.occupancy
        return Configuration(occ, self.particle_count)


def sample_initial(profile: FourierField, graph: ScaledGraph, smap: ScalingMap, seed) -> Configuration:
    """Independent Bernoulli(``rho0(Phi_N(x))``) occupations, ``rho0`` clipped to [0, 1]."""
    if smap.graph is not graph:
        raise ValueError("scaling map belongs to a different scaled graph")
    rho = np.clip(profile(smap.coords), 0.0, 1.0)
    u = make_rng(seed).random(graph.num_vertices)
    return Configuration((u < rho).astype(np.uint8))


def jump_rate(e: int, eta: Configuration, t: float, H: DriftSpec, smap: ScalingMap) -> float:
    """``c^H(e, eta, t)`` for oriented edge ``e`` of the scaled graph.

    The simulated process runs this rate at speed ``N^2 / 2``.
    """
    g = smap.graph
    o, te = g.tails[e], g.heads[e]
    occ = eta.occupancy
    if occ[o] == 0 or occ[te] == 1:
        return 0.0
    return math.exp(float(H(t, smap.coords[te]) - H(t, smap.coords[o])))


# ---------------------------------------------------------------------------
# thinning kernel
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _thinning_block(
    occ, eu, ev, h0, c0, c1, osc, rate, t, T,
    snap_times, snap_idx, snaps, exp_draws, edge_draws, acc_draws, jumps_fwd, jumps_bwd,
):  # pragma: no cover - compiled
    n_edges = eu.shape[0]
    nsnap = snap_times.shape[0]
    accepted = 0
    used = 0
    status = 0  # 0 block exhausted, 1 horizon reached, 2 rate bound violated
    for i in range(exp_draws.shape[0]):
        used += 1
        t_new = t + exp_draws[i] / rate
        while snap_idx < nsnap and snap_times[snap_idx] < t_new:
            snaps[snap_idx, :] = occ
            snap_idx += 1
        if t_new > T:
            t = T
            status = 1
            break
        t = t_new
        k = int(edge_draws[i] * n_edges)
        if k >= n_edges:
            k = n_edges - 1
        a = eu[k]
        b = ev[k]
        if occ[a] == occ[b]:
            continue
        if occ[a] == 1:
            o = a
            te = b
        else:
            o = b
            te = a
        dh = (c0 + c1 * t) * (h0[te] - h0[o])
        p = math.exp(dh - osc)
        if p > 1.0 + 1e-12:
            status = 2
            break
        if acc_draws[i] < p:
            occ[o] = 0
            occ[te] = 1
            accepted += 1
            if o == a:
                jumps_fwd[k] += 1
            else:
                jumps_bwd[k] += 1
    return t, snap_idx, used, accepted, status


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryRecorder:
    """Snapshots of one trajectory at fixed model times.

    ``snapshots[i]`` is the (right-continuous) state at ``times[i]``.
    """

    times: np.ndarray
    seed: tuple = ()
    snapshots: np.ndarray | None = field(default=None, repr=False)
    candidates: int = 0
    events: int = 0
    truncated: bool = False
    final_time: float = 0.0
    rate_bound: float = 0.0
    osc: float = 0.0
    jumps_forward: np.ndarray | None = field(default=None, repr=False)
    jumps_backward: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def particle_counts(self) -> np.ndarray:
        return self.snapshots.sum(axis=1, dtype=np.int64)

    def final(self) -> Configuration:
        return Configuration(self.snapshots[-1].copy())

    def pairings(self, J_set: Sequence[FourierField], smap: ScalingMap) -> np.ndarray:
        """``<J, xi_N(t)>`` for every snapshot (rows) and test function (columns)."""
        vals = np.stack([J(smap.coords) for J in J_set], axis=1)
        return self.snapshots.astype(float) @ vals / smap.graph.num_vertices


def drift_oscillation(H: DriftSpec, smap: ScalingMap, T: float) -> float:
    """``sup_{t <= T, e} |H(t, Phi_N(te)) - H(t, Phi_N(oe))|`` computed over all edges."""
    g = smap.graph
    h0 = H.profile(smap.coords)
    if h0.size == 0 or g.num_edges == 0:
        return 0.0
    return H.envelope_sup(T) * float(np.max(np.abs(h0[g.heads] - h0[g.tails])))


def drift_oscillation_bound(H: DriftSpec, smap: ScalingMap, T: float) -> float:
    """Analytic bound ``sup|grad H0|_1 * max_e |w(e)|_inf / N`` times the envelope."""
    w = smap.realization.lattice_edge_vectors
    return H.envelope_sup(T) * H.profile.gradient_l1_bound() * float(np.abs(w).max()) / smap.N


def simulate(
    config0: Configuration,
    graph: ScaledGraph,
    smap: ScalingMap,
    H: DriftSpec,
    T: float,
    seed,
    recorder: TrajectoryRecorder | None = None,
    *,
    snapshot_times: Sequence[float] | None = None,
    max_events: int | None = None,
    allow_nonharmonic: bool = False,
    block_size: int = DEFAULT_BLOCK,
) -> TrajectoryRecorder:
    """Run one exact trajectory on ``[0, T]``.

    Snapshot times come from ``recorder`` or ``snapshot_times`` (default
    ``0`` and ``T``).  When the number of proposed events would exceed
    ``max_events`` the run stops and the recorder is flagged ``truncated``;
    snapshots after the stop are left as the last state reached.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if smap.graph is not graph:
        raise ValueError("scaling map belongs to a different scaled graph")
    if not allow_nonharmonic and not smap.realization.is_harmonic:
        raise SimulationError("refusing to simulate on a non-harmonic realization")
    if len(config0) != graph.num_vertices:
        raise ValueError("configuration size does not match the graph")
    if recorder is None:
        times = snapshot_times if snapshot_times is not None else [0.0, T]
        recorder = TrajectoryRecorder(np.asarray(times, dtype=float))
    times = recorder.times
    if times.size and (times[0] < 0 or times[-1] > T):
        raise ValueError("snapshot times must lie in [0, T]")
    recorder.seed = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    recorder.meta.setdefault("H", H.digest())

    eu, ev = graph.unoriented_edges()
    eu = np.ascontiguousarray(eu, dtype=np.int64)
    ev = np.ascontiguousarray(ev, dtype=np.int64)
    h0 = np.ascontiguousarray(H.profile(smap.coords), dtype=float)
    if h0.shape != (graph.num_vertices,):
        h0 = np.zeros(graph.num_vertices)
    osc = drift_oscillation(H, smap, T)
    # tiny slack keeps exp(dh - osc) <= 1 under round-off
    osc = osc * (1.0 + 1e-12) + 1e-15
    lam_bar = 0.5 * graph.N**2 * math.exp(osc)
    rate = lam_bar * len(eu)

    occ = config0.occupancy.copy()
    snaps = np.empty((len(times), graph.num_vertices), dtype=np.uint8)
    fwd = np.zeros(len(eu), dtype=np.int64)
    bwd = np.zeros(len(eu), dtype=np.int64)
    rng = make_rng(seed)
    t, snap_idx, candidates, events = 0.0, 0, 0, 0
    truncated = False
    if len(eu) == 0 or rate == 0.0:
        snaps[:] = occ
        snap_idx = len(times)
        t = T
    while snap_idx < len(times) or t < T:
        n = block_size
        if max_events is not None:
            n = min(n, max_events - candidates)
            if n <= 0:
                truncated = True
                break
        ex = rng.standard_exponential(n)
        ue = rng.random(n)
        ua = rng.random(n)
        t, snap_idx, used, acc, status = _thinning_block(
            occ, eu, ev, h0, float(H.c0), float(H.c1), osc, rate, t, float(T),
            times, snap_idx, snaps, ex, ue, ua, fwd, bwd,
        )
        candidates += used
        events += acc
        if status == 2:
            raise SimulationError("accepted rate exceeded the thinning bound")
        if status == 1:
            break
    if snap_idx < len(times):
        snaps[snap_idx:] = occ
    recorder.snapshots = snaps
    recorder.candidates = candidates
    recorder.events = events
    recorder.truncated = truncated
    recorder.final_time = t
    recorder.rate_bound = lam_bar
    recorder.osc = osc
    recorder.jumps_forward = fwd
    recorder.jumps_backward = bwd
    counts = snaps.sum(axis=1, dtype=np.int64)
    if np.any(counts != config0.particle_count):
        raise SimulationError("particle number changed along the trajectory")
    return recorder


# ---------------------------------------------------------------------------
# exact generator for small graphs
# ---------------------------------------------------------------------------


def enumerate_states(n: int) -> np.ndarray:
    """All ``2^n`` configurations as rows, state index = binary number."""
    if n > 20:
        raise ValueError("state space too large to enumerate")
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)[:, ::-1]


def state_index(occ) -> int:
    return int(np.dot(np.asarray(occ, dtype=np.int64), 1 << np.arange(len(occ))))


def generator_matrix(smap: ScalingMap, H: DriftSpec, t: float = 0.0) -> np.ndarray:
    """Matrix of ``N^2 L_N^H`` on the full configuration space ``Z_N``."""
    g = smap.graph
    states = enumerate_states(g.num_vertices)
    hv = H(t, smap.coords) if H.profile.modes else np.zeros(g.num_vertices)
    Q = np.zeros((len(states), len(states)))
    for s, occ in enumerate(states):
        for e in range(g.num_edges):
            o, te = g.tails[e], g.heads[e]
            if occ[o] == 1 and occ[te] == 0:
                nxt = occ.copy()
                nxt[o], nxt[te] = 0, 1
                Q[s, state_index(nxt)] += 0.5 * g.N**2 * math.exp(hv[te] - hv[o])
    Q[np.diag_indices_from(Q)] = -Q.sum(axis=1)
    return Q
