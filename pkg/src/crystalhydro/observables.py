"""Empirical density pairings, local averages and the replacement diagnostic.

A local function bundle is evaluated on the whole scaled graph at once:
``values(eta)[v]`` is ``f_v(eta)``.  Block and orbit averages are then sums
of rolled per-cell arrays over an l1 ball of cell offsets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .fourier import FourierField
from .harmonic import ScalingMap, torus_difference
from .lattice import QuotientGraph, ScaledGraph, _check_radius, l1_ball_offsets, l1_ball_volume_fraction
from .sim import Configuration, TrajectoryRecorder

MAX_WINDOW = 20
KINDS = ("occupation", "edge-product", "neighborhood-product")


def _occ(eta) -> np.ndarray:
    return eta.occupancy if isinstance(eta, Configuration) else np.asarray(eta, dtype=np.uint8)


# ---------------------------------------------------------------------------
# local function bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalFunctionBundle:
    """A Gamma-periodic family ``f_x`` of local functions.

    ``kind`` is one of ``occupation`` (``f_x = eta_x``), ``edge-product``
    (``f_x = eta_{oe} eta_{te}`` when ``x`` is the tail of a translate of
    base edge ``edge``, else 0) and ``neighborhood-product``
    (``f_x = prod_{e in E_x} eta_{te}``).
    """

    kind: str
    edge: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bundle kind {self.kind!r}; expected one of {KINDS}")

    @property
    def radius(self) -> int:
        """Graph distance from ``x`` of the vertices ``f_x`` reads."""
        return 0 if self.kind == "occupation" else 1

    @property
    def label(self) -> str:
        return f"edge-product[{self.edge}]" if self.kind == "edge-product" else self.kind

    def values(self, eta, graph: ScaledGraph) -> np.ndarray:
        """``f_v(eta)`` for every vertex ``v`` of ``graph`` (float array)."""
        occ = _occ(eta)
        if occ.ndim == 2:
            return np.stack([self.values(o, graph) for o in occ])
        if self.kind == "occupation":
            return occ.astype(float)
        n = graph.num_vertices
        if self.kind == "edge-product":
            m0 = graph.base.num_edges
            if not 0 <= self.edge < m0:
                raise ValueError(f"edge {self.edge} is not in the fundamental edge set")
            idx = np.arange(graph.num_cells) * m0 + self.edge
            out = np.zeros(n)
            out[graph.tails[idx]] = occ[graph.tails[idx]].astype(float) * occ[graph.heads[idx]]
            return out
        filled = np.bincount(graph.tails, weights=occ[graph.heads].astype(float), minlength=n)
        return (filled == graph.degree()).astype(float)

    def window(self, base: QuotientGraph, x: int) -> list[tuple[int, tuple[int, ...]]]:
        """Distinct lattice vertices ``(base vertex, cell)`` read by ``f_x`` with ``x`` in cell 0."""
        zero = (0,) * base.d
        if self.kind == "occupation":
            return [(x, zero)]
        if self.kind == "edge-product":
            if base.tails[self.edge] != x:
                return []
            return [(x, zero), (int(base.heads[self.edge]), tuple(int(s) for s in base.shifts[self.edge]))]
        out = []
        for e in base.out_edges(x):
            key = (int(base.heads[e]), tuple(int(s) for s in base.shifts[e]))
            if key not in out:
                out.append(key)
        return out

    def evaluate_window(self, base: QuotientGraph, x: int, state: dict) -> float:
        """``f_x`` on the infinite lattice given occupations of its window."""
        if self.kind == "occupation":
            return float(state[(x, (0,) * base.d)])
        if self.kind == "edge-product":
            win = self.window(base, x)
            return float(np.prod([state[k] for k in win])) if win else 0.0
        return float(np.prod([state[k] for k in self.window(base, x)]))


def canonical_polynomial(f: LocalFunctionBundle, base: QuotientGraph, x: int) -> Polynomial:
    """``<f_x>(rho)`` as a polynomial, by enumeration of the window states."""
    win = f.window(base, x)
    w = len(win)
    if w > MAX_WINDOW:
        raise ValueError(f"window of {w} sites exceeds the enumeration limit {MAX_WINDOW}")
    rho = Polynomial([0.0, 1.0])
    total = Polynomial([0.0])
    for bits in itertools.product((0, 1), repeat=w):
        val = f.evaluate_window(base, x, dict(zip(win, bits)))
        if val == 0.0:
            continue
        k = sum(bits)
        total = total + val * rho**k * (1 - rho) ** (w - k)
    if w == 0:
        total = Polynomial([f.evaluate_window(base, x, {})])
    return total


def canonical_expectation(f: LocalFunctionBundle, rho: float, base: QuotientGraph, x: int = 0) -> float:
    """``E[f_x]`` under product Bernoulli(``rho``)."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"density {rho} outside [0, 1]")
    return float(canonical_polynomial(f, base, x)(rho))


# ---------------------------------------------------------------------------
# pairings
# ---------------------------------------------------------------------------


def pair(J: FourierField, eta, smap: ScalingMap) -> float:
    """``<J, xi_N> = (1/|V_N|) sum_x eta_x J(Phi_N(x))``."""
    occ = _occ(eta)
    return float(np.dot(occ.astype(float), J(smap.coords)) / smap.graph.num_vertices)


@dataclass
class EmpiricalMeasure:
    """Empirical density of one configuration; pairings are evaluated lazily."""

    eta: Configuration
    smap: ScalingMap
    _cache: dict = field(default_factory=dict, repr=False)

    def pair(self, J: FourierField) -> float:
        key = J.digest()
        if key not in self._cache:
            self._cache[key] = pair(J, self.eta, self.smap)
        return self._cache[key]

    @property
    def total_mass(self) -> float:
        return self.eta.particle_count / self.smap.graph.num_vertices


# ---------------------------------------------------------------------------
# local averages
# ---------------------------------------------------------------------------


def _ball_sum(grid: np.ndarray, R: float, N: int, d: int) -> np.ndarray:
    # result[..., c] = sum_{|tau| <= R} grid[..., c + tau] over the last d axes
    _check_radius(R, N)
    axes = tuple(range(grid.ndim - d, grid.ndim))
    out = np.zeros_like(grid, dtype=float)
    for tau in l1_ball_offsets(d, float(R)):
        out += np.roll(grid, tuple(-int(t) for t in tau), axis=axes)
    return out


def _per_cell(vals: np.ndarray, graph: ScaledGraph) -> np.ndarray:
    # (..., |V_N|) -> (..., num_cells, |V0|)
    return vals.reshape(vals.shape[:-1] + (graph.num_cells, graph.base.num_vertices))


def block_averages(f: LocalFunctionBundle, eta, graph: ScaledGraph, R: float) -> np.ndarray:
    """``f-bar`` over the cell ball of radius ``R`` around every cell.

    Shape ``(N,)*d``, or ``(snapshots,) + (N,)*d`` for a stack of configurations.
    """
    vals = f.values(eta, graph)
    lead = vals.shape[:-1]
    per_cell = _per_cell(vals, graph).sum(axis=-1).reshape(lead + (graph.N,) * graph.d)
    count = len(l1_ball_offsets(graph.d, float(R))) * graph.base.num_vertices
    return _ball_sum(per_cell, R, graph.N, graph.d) / count


def orbit_averages(f: LocalFunctionBundle, eta, graph: ScaledGraph, x: int, K: float) -> np.ndarray:
    """``f-tilde_{sigma x, K}`` for every cell ``sigma``; shapes as in :func:`block_averages`."""
    vals = f.values(eta, graph)
    lead = vals.shape[:-1]
    per_cell = _per_cell(vals, graph)[..., x].reshape(lead + (graph.N,) * graph.d)
    return _ball_sum(per_cell, K, graph.N, graph.d) / len(l1_ball_offsets(graph.d, float(K)))


def block_average(f: LocalFunctionBundle, eta, x: int, R: float, graph: ScaledGraph) -> float:
    """Mean of ``f_z`` over the cell ball of radius ``R`` around the cell of vertex ``x``."""
    _check_radius(R, graph.N)
    cell = graph.vertex_cell(x)
    return float(block_averages(f, eta, graph, R)[tuple(cell)])


def orbit_average(f: LocalFunctionBundle, eta, x: int, K: float, graph: ScaledGraph) -> float:
    """Mean of ``f_{tau x}`` over translates ``|tau| <= K`` of vertex ``x``."""
    _check_radius(K, graph.N)
    cell = graph.vertex_cell(x)
    base = int(graph.vertex_base(x))
    return float(orbit_averages(f, eta, graph, base, K)[tuple(cell)])


# ---------------------------------------------------------------------------
# replacement diagnostic
# ---------------------------------------------------------------------------


def replacement_integrand(
    f: LocalFunctionBundle, eta, graph: ScaledGraph, x: int, eps: float, K: float
):
    """``(1/|Gamma_N|) sum_sigma |f-tilde_{sigma x,K} - <f_x>(eta-bar_{sigma x0, eps N})|``.

    Returns a float for one configuration and an array for a stack.
    """
    poly = canonical_polynomial(f, graph.base, x)
    tilde = orbit_averages(f, eta, graph, x, K)
    dens = block_averages(LocalFunctionBundle("occupation"), eta, graph, eps * graph.N)
    axes = tuple(range(tilde.ndim - graph.d, tilde.ndim))
    out = np.mean(np.abs(tilde - poly(dens)), axis=axes)
    return float(out) if np.ndim(out) == 0 else out


def replacement_diagnostic(
    f: LocalFunctionBundle,
    trajectory: TrajectoryRecorder | Sequence,
    x: int,
    eps: float,
    K: float,
    T: float,
    graph: ScaledGraph,
    times: Sequence[float] | None = None,
) -> float:
    """Time integral over ``[0, T]`` of :func:`replacement_integrand`.

    ``trajectory`` is a recorder or a sequence of snapshots with ``times``.
    The integral uses the trapezoid rule on the recorded snapshots; a single
    snapshot is treated as a frozen configuration.
    """
    if isinstance(trajectory, TrajectoryRecorder):
        snaps, times = trajectory.snapshots, trajectory.times
    else:
        snaps = np.asarray(trajectory, dtype=np.uint8)
        if snaps.ndim == 1:
            snaps = snaps[None, :]
    _check_radius(K, graph.N)
    _check_radius(eps * graph.N, graph.N)
    vals = np.atleast_1d(replacement_integrand(f, np.asarray(snaps), graph, x, eps, K))
    if len(vals) == 1:
        return float(vals[0] * T)
    times = np.asarray(times, dtype=float)
    if len(times) != len(vals):
        raise ValueError("need one time per snapshot")
    if times[0] > 1e-12 or times[-1] < T - 1e-12:
        raise ValueError("snapshots do not cover [0, T]")
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times)))


# ---------------------------------------------------------------------------
# characteristic-function pairing against block averages
# ---------------------------------------------------------------------------


def characteristic_pairing(eta, smap: ScalingMap, z: int, eps: float) -> float:
    """``<xi_N, chi>`` with ``chi`` the normalized indicator of the l1 ball of radius ``eps``.

    The ball is centred at ``Phi_N(z)`` and measured in lattice coordinates
    on the unit torus.
    """
    occ = _occ(eta).astype(float)
    dist = np.abs(torus_difference(smap.coords, smap.coords[z])).sum(axis=1)
    inside = dist <= eps + 1e-12
    vol = l1_ball_volume_fraction(smap.graph.d, eps)
    return float(np.dot(occ, inside) / (smap.graph.num_vertices * vol))


def verify_characteristic_pairing(
    realization, eps: float, N_list: Sequence[int], samples: int = 10, seed=0, z: int = 0
) -> list[dict]:
    """Worst ``|<xi_N, chi> - eta-bar_{z, eps N}|`` over random configurations, per ``N``."""
    from .sim import make_rng

    rows = []
    occupation = LocalFunctionBundle("occupation")
    for N in N_list:
        smap = ScalingMap.build(realization, N)
        rng = make_rng((seed, N))
        worst = 0.0
        for _ in range(samples):
            occ = (rng.random(smap.graph.num_vertices) < rng.random()).astype(np.uint8)
            a = characteristic_pairing(occ, smap, z, eps)
            b = block_average(occupation, occ, z, eps * N, smap.graph)
            worst = max(worst, abs(a - b))
        rows.append({"N": N, "difference": worst, "scaled": N * worst})
    return rows


# ---------------------------------------------------------------------------
# hydrodynamic error
# ---------------------------------------------------------------------------


def _check_match(sim_meta: dict, pde_meta: dict) -> None:
    for key in ("H", "rho0", "lattice"):
        if key in sim_meta and key in pde_meta and sim_meta[key] != pde_meta[key]:
            raise ValueError(
                f"mismatched experiment: {key} digest {sim_meta[key]} (simulation) "
                f"vs {pde_meta[key]} (PDE)"
            )


def hydrodynamic_error(
    trajectories: Sequence[TrajectoryRecorder],
    pde_solution: Sequence,
    J_set: Sequence[FourierField],
    times: Sequence[float],
    smap: ScalingMap,
) -> list[dict]:
    """Per ``(t, J)``: per-replica and replica-averaged ``|<J, xi_N(t)> - int J rho(t)|``.

    ``pde_solution`` is a list of density grids; each requested time must be
    a snapshot time of both sides.
    """
    if not trajectories:
        raise ValueError("no trajectories")
    for rec in trajectories:
        if not np.array_equal(rec.times, trajectories[0].times):
            raise ValueError("replicas were recorded at different times")
    pairings = np.stack([rec.pairings(J_set, smap) for rec in trajectories])
    return error_table(pairings, trajectories[0].times, pde_solution, J_set, times,
                       meta=getattr(trajectories[0], "meta", {}))


def error_table(
    pairings: np.ndarray,
    snapshot_times: Sequence[float],
    pde_solution: Sequence,
    J_set: Sequence[FourierField],
    times: Sequence[float],
    meta: dict | None = None,
) -> list[dict]:
    """Error rows from precomputed pairings of shape ``(replicas, snapshots, len(J_set))``.

    Rows carry ``mean_error`` (mean of the per-replica errors),
    ``error_of_mean`` and the standard error of the pairing.
    """
    pairings = np.asarray(pairings, dtype=float)
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    for g in pde_solution:
        _check_match(meta or {}, g.meta)
    pde_by_t = {round(g.t, 12): g for g in pde_solution}
    R = pairings.shape[0]
    rows = []
    for t in times:
        key = round(float(t), 12)
        if key not in pde_by_t:
            raise ValueError(f"PDE solution has no snapshot at t={t}")
        idx = np.flatnonzero(np.isclose(snapshot_times, t, rtol=0.0, atol=1e-12))
        if idx.size == 0:
            raise ValueError(f"trajectory has no snapshot at t={t}")
        grid = pde_by_t[key]
        for j, J in enumerate(J_set):
            exact = grid.integrate(J)
            vals = pairings[:, idx[0], j]
            errs = np.abs(vals - exact)
            rows.append(
                {
                    "t": float(t),
                    "J": j,
                    "pde": exact,
                    "mean_pairing": float(vals.mean()),
                    "stderr": float(vals.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0,
                    "errors": errs.tolist(),
                    "mean_error": float(errs.mean()),
                    "error_of_mean": float(abs(vals.mean() - exact)),
                }
            )
    return rows


def max_error(rows: Sequence[dict], t: float, key: str = "mean_error") -> float:
    """Max over test functions of ``key`` at time ``t``."""
    vals = [r[key] for r in rows if abs(r["t"] - t) < 1e-12]
    if not vals:
        raise ValueError(f"no rows at t={t}")
    return max(vals)
