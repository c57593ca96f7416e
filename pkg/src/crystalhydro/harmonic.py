"""Periodic harmonic realizations and the diffusion coefficient matrix.

The positions of the quotient vertices solve, coordinate by coordinate, the
pinned combinatorial Laplace system ``L p = b`` with
``b_x = sum_{e in E_x} U shift(e)``.  Every oriented base edge then has a
well defined displacement ``v(e)`` and the diffusion matrix is
``D = (1 / 4|V0|) sum_e v(e) v(e)^T``.

Exact arithmetic (sympy) is used whenever the basis and any position
override are given without float literals; this covers irrational entries
such as ``sqrt(3)/2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .fourier import FourierField
from .lattice import LatticeSpec, QuotientGraph, ScaledGraph, build_scaled_graph

RESIDUAL_TOL = 1e-10


class HarmonicError(ValueError):
    pass


# ---------------------------------------------------------------------------
# exact helpers
# ---------------------------------------------------------------------------


def _is_exact_entry(x) -> bool:
    return not isinstance(x, float)


def _to_sympy(x):
    import sympy

    if isinstance(x, Fraction):
        return sympy.Rational(x.numerator, x.denominator)
    if isinstance(x, float):
        return sympy.Rational(repr(x))
    if isinstance(x, str):
        return sympy.nsimplify(sympy.sympify(x, rational=True))
    return sympy.sympify(x, rational=True)


def _canon(x):
    # entries are sums of rationals times square roots; expand + radsimp
    # gives a canonical form far faster than simplify
    import sympy

    return sympy.radsimp(sympy.expand(x))


def _to_float(x) -> float:
    if isinstance(x, (int, float, Fraction)):
        return float(x)
    try:
        return float(Fraction(str(x).strip()))
    except ValueError:
        return float(_to_sympy(x))


def basis_matrix(rows) -> np.ndarray:
    """``U`` with the period vectors as columns, from row-wise input."""
    return np.array([[_to_float(v) for v in r] for r in rows], dtype=float).T


def _sympy_basis(rows):
    import sympy

    return sympy.Matrix([[_to_sympy(v) for v in r] for r in rows]).T


def _laplace_system(graph: QuotientGraph, U):
    """Dense ``L`` and right-hand side ``b`` (rows are vertices)."""
    n = graph.num_vertices
    L = np.zeros((n, n))
    np.add.at(L, (graph.tails, graph.tails), 1.0)
    np.add.at(L, (graph.tails, graph.heads), -1.0)
    b = np.zeros((n, graph.d))
    np.add.at(b, graph.tails, graph.shifts @ np.asarray(U, dtype=float).T)
    return L, b


# ---------------------------------------------------------------------------
# realization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HarmonicRealization:
    """Embedding data of a quotient graph.

    Attributes
    ----------
    basis : (d, d) array
        Columns are the period vectors ``u_i``.
    positions : (|V0|, d) array
        Embedded quotient vertices (cell 0).
    edge_vectors : (|E0|, d) array
        ``v(e) = p(head) + U shift(e) - p(tail)``.
    diffusion : (d, d) array
    override : bool
        Positions were supplied rather than solved for.
    exact : dict or None
        Sympy matrices ``basis``, ``positions``, ``edge_vectors``,
        ``diffusion`` when computed exactly.
    """

    graph: QuotientGraph
    basis: np.ndarray
    positions: np.ndarray
    edge_vectors: np.ndarray
    diffusion: np.ndarray
    override: bool = False
    residual: np.ndarray = field(default=None, repr=False)
    exact: dict | None = field(default=None, repr=False)
    name: str = ""

    @property
    def d(self) -> int:
        return self.graph.d

    @property
    def is_harmonic(self) -> bool:
        return bool(np.all(np.linalg.norm(self.residual, axis=1) <= RESIDUAL_TOL))

    @property
    def basis_inv(self) -> np.ndarray:
        return np.linalg.inv(self.basis)

    @property
    def lattice_positions(self) -> np.ndarray:
        """Positions in lattice coordinates ``U^-1 p``."""
        return self.positions @ self.basis_inv.T

    @property
    def lattice_edge_vectors(self) -> np.ndarray:
        return self.edge_vectors @ self.basis_inv.T

    @property
    def lattice_diffusion(self) -> np.ndarray:
        """Pulled-back tensor ``U^-1 D U^-T`` acting on lattice coordinates."""
        Ui = self.basis_inv
        return Ui @ self.diffusion @ Ui.T

    def report(self) -> dict:
        """Plain-data summary (exact strings where available)."""

        def fmt(mat_float, key):
            if self.exact is not None:
                import sympy

                m = self.exact[key]
                return [[str(sympy.nsimplify(sympy.simplify(m[i, j]))) for j in range(m.cols)]
                        for i in range(m.rows)]
            return np.asarray(mat_float).tolist()

        return {
            "lattice": self.name or self.graph.name,
            "dimension": self.d,
            "vertices": self.graph.num_vertices,
            "oriented_edges": self.graph.num_edges,
            "override": self.override,
            "harmonic": self.is_harmonic,
            "basis_columns": fmt(self.basis, "basis"),
            "positions": fmt(self.positions.T, "positions_T"),
            "edge_vectors": [
                {
                    "tail": int(self.graph.tails[e]),
                    "head": int(self.graph.heads[e]),
                    "shift": self.graph.shifts[e].tolist(),
                    "v": self.edge_vectors[e].tolist(),
                }
                for e in range(self.graph.num_edges)
            ],
            "diffusion": fmt(self.diffusion, "diffusion"),
            "residual_norms": np.linalg.norm(self.residual, axis=1).tolist(),
        }


def edge_vectors(positions, graph: QuotientGraph, U) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    return positions[graph.heads] + graph.shifts @ np.asarray(U, dtype=float).T - positions[graph.tails]


def harmonicity_residual(positions, graph: QuotientGraph, U) -> np.ndarray:
    """Per-vertex ``sum_{e in E_x} v(e)``; zero iff the embedding is harmonic.

    Pass sympy matrices (``positions`` with vertices as rows) for an exact
    result.
    """
    if _is_sympy(positions) or _is_sympy(U):
        import sympy

        P = sympy.Matrix(positions)
        Um = sympy.Matrix(U)
        out = sympy.zeros(graph.num_vertices, graph.d)
        for e in range(graph.num_edges):
            t, h = int(graph.tails[e]), int(graph.heads[e])
            v = P.row(h) + (Um * sympy.Matrix(graph.shifts[e].tolist())).T - P.row(t)
            out[t, :] = out.row(t) + v
        return out.applyfunc(_canon)
    res = np.zeros((graph.num_vertices, graph.d))
    np.add.at(res, graph.tails, edge_vectors(positions, graph, U))
    return res


def _is_sympy(x) -> bool:
    return type(x).__module__.startswith("sympy")


def diffusion_matrix(realization: HarmonicRealization, exact: bool = False):
    """``(1 / 4|V0|) sum_{e in E0} v(e) v(e)^T``.

    With ``exact=True`` returns the sympy matrix (``None`` when the
    realization was computed in floating point).
    """
    if exact:
        return None if realization.exact is None else realization.exact["diffusion"]
    v = realization.edge_vectors
    return v.T @ v / (4.0 * realization.graph.num_vertices)


def _diffusion_from_vectors(v: np.ndarray, n0: int) -> np.ndarray:
    return v.T @ v / (4.0 * n0)


def dirichlet_energy(positions, graph: QuotientGraph, U) -> float:
    """``1/2 sum_{e in E0} |v(e)|^2`` as a function of the quotient positions."""
    v = edge_vectors(np.asarray(positions).reshape(graph.num_vertices, graph.d), graph, U)
    return 0.5 * float(np.sum(v * v))


def solve_harmonic(
    graph: QuotientGraph,
    basis,
    positions=None,
    pin: int = 0,
    exact: bool | None = None,
    name: str = "",
) -> HarmonicRealization:
    """Solve for the periodic harmonic embedding of ``graph``.

    Parameters
    ----------
    basis : rows of the period vectors ``u_i`` (numbers or expressions)
        or a ``(d, d)`` float array with the vectors as columns.
    positions : optional override, one row per quotient vertex.  The
        realization is then flagged ``override`` and not solved for.
    pin : vertex held at the origin.
    exact : force (True) or disable (False) exact arithmetic; by default it
        is used whenever no float literal appears in the input.
    """
    d, n = graph.d, graph.num_vertices
    if isinstance(basis, np.ndarray) and basis.dtype.kind == "f":
        rows = basis.T.tolist()
    else:
        rows = [list(r) if isinstance(r, (list, tuple)) else [r] for r in basis]
    U = basis_matrix(rows)
    if U.shape != (d, d):
        raise HarmonicError(f"basis must be {d} x {d}")
    if abs(np.linalg.det(U)) <= 1e-14:
        raise HarmonicError("basis vectors are linearly dependent")
    flat = [v for r in rows for v in r]
    if positions is not None:
        flat += [v for p in positions for v in (p if isinstance(p, (list, tuple)) else [p])]
    if exact is None:
        exact = all(_is_exact_entry(v) for v in flat)
    if not 0 <= pin < n:
        raise HarmonicError(f"pin vertex {pin} out of range")

    if positions is not None:
        P = np.array(
            [[_to_float(v) for v in (p if isinstance(p, (list, tuple)) else [p])] for p in positions]
        )
        if P.shape != (n, d):
            raise HarmonicError(f"positions must be {n} rows of {d} entries")
    else:
        L, b = _laplace_system(graph, U)
        keep = np.array([i for i in range(n) if i != pin], dtype=int)
        P = np.zeros((n, d))
        if keep.size:
            Lr = L[np.ix_(keep, keep)]
            cond = np.linalg.cond(Lr)
            if not np.isfinite(cond):
                raise HarmonicError("singular Laplace system; the quotient graph is disconnected")
            if cond > 1e12:
                warnings.warn(f"harmonic system is ill-conditioned (cond={cond:.3g})", stacklevel=2)
            P[keep] = np.linalg.solve(Lr, b[keep])

    ex = _solve_exact(graph, rows, positions, pin) if exact else None
    if ex is not None:
        P = np.array(ex["positions_T"].T.evalf(30).tolist(), dtype=float)
    v = edge_vectors(P, graph, U)
    D = _diffusion_from_vectors(v, n)
    if ex is not None:
        D = np.array(ex["diffusion"].evalf(30).tolist(), dtype=float)
    res = harmonicity_residual(P, graph, U)
    return HarmonicRealization(
        graph, U, P, v, D, override=positions is not None, residual=res, exact=ex,
        name=name or graph.name,
    )


def _solve_exact(graph: QuotientGraph, rows, positions, pin: int) -> dict:
    import sympy

    d, n = graph.d, graph.num_vertices
    U = _sympy_basis(rows)
    if positions is not None:
        P = sympy.Matrix(
            [[_to_sympy(v) for v in (p if isinstance(p, (list, tuple)) else [p])] for p in positions]
        )
    else:
        L = sympy.zeros(n, n)
        b = sympy.zeros(n, d)
        for e in range(graph.num_edges):
            t, h = int(graph.tails[e]), int(graph.heads[e])
            L[t, t] += 1
            L[t, h] -= 1
            b[t, :] = b.row(t) + (U * sympy.Matrix(graph.shifts[e].tolist())).T
        keep = [i for i in range(n) if i != pin]
        P = sympy.zeros(n, d)
        if keep:
            sol = L.extract(keep, keep).LUsolve(b.extract(keep, list(range(d))))
            for r, i in enumerate(keep):
                P[i, :] = sol.row(r).applyfunc(_canon)
    V = sympy.zeros(graph.num_edges, d)
    for e in range(graph.num_edges):
        t, h = int(graph.tails[e]), int(graph.heads[e])
        V[e, :] = (P.row(h) + (U * sympy.Matrix(graph.shifts[e].tolist())).T - P.row(t)).applyfunc(_canon)
    D = (V.T * V / (4 * n)).applyfunc(_canon)
    return {"basis": U, "positions_T": P.T, "edge_vectors": V, "diffusion": D}


def realize(spec: LatticeSpec, positions=None, exact: bool | None = None) -> HarmonicRealization:
    """Realization of a catalog entry, honouring its positions override."""
    pos = positions if positions is not None else spec.positions
    return solve_harmonic(spec.graph, spec.basis, positions=pos, exact=exact, name=spec.name)


# ---------------------------------------------------------------------------
# N-scaling map
# ---------------------------------------------------------------------------


class ScalingMap:
    """``Phi_N`` in lattice coordinates on the unit torus.

    ``coords[v]`` is ``((U^-1 p_x + cell) / N) mod 1`` for vertex
    ``v = (cell, x)`` of the scaled graph.
    """

    def __init__(self, realization: HarmonicRealization, graph: ScaledGraph):
        if graph.base is not realization.graph:
            raise ValueError("scaled graph was not built from the realization's quotient")
        self.realization = realization
        self.graph = graph
        self.N = graph.N
        q = realization.lattice_positions
        v = np.arange(graph.num_vertices)
        raw = (q[graph.vertex_base(v)] + graph.vertex_cell(v)) / graph.N
        self.coords = np.mod(raw, 1.0)
        self.coords.setflags(write=False)

    @classmethod
    def build(cls, realization: HarmonicRealization, N: int) -> "ScalingMap":
        return cls(realization, build_scaled_graph(realization.graph, N))

    def physical(self, v=None) -> np.ndarray:
        """Embedded points in the physical torus (``U`` times lattice coords)."""
        y = self.coords if v is None else self.coords[v]
        return y @ self.realization.basis.T

    def edge_displacements(self) -> np.ndarray:
        """Lattice-coordinate displacement ``w(e) / N`` of every oriented edge."""
        w = self.realization.lattice_edge_vectors
        return w[self.graph.edge_base(np.arange(self.graph.num_edges))] / self.N


def torus_difference(a, b) -> np.ndarray:
    """Shortest representative of ``a - b`` on the unit torus, per axis."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return diff - np.round(diff)


# ---------------------------------------------------------------------------
# Laplacian convergence
# ---------------------------------------------------------------------------


def averaged_laplacian(smap: ScalingMap, J: FourierField) -> np.ndarray:
    """Per cell: ``(1/|V0|) sum_{x in V0} d(x) N^2 Delta_N J(Phi_N(x))``."""
    g = smap.graph
    y = smap.coords
    # Heads are evaluated at tail + displacement so no torus reduction is needed.
    head_y = y[g.tails] + smap.edge_displacements()
    diffs = J(head_y) - J(y[g.tails])
    per_vertex = np.bincount(g.tails, weights=diffs, minlength=g.num_vertices)
    n0 = g.base.num_vertices
    return g.N**2 * per_vertex.reshape(g.num_cells, n0).mean(axis=1)


def laplacian_target(realization: HarmonicRealization, J: FourierField, y) -> np.ndarray:
    """``2 sum_ij D_ij d_i d_j J`` at lattice points ``y``."""
    return 2.0 * np.einsum("ij,...ij->...", realization.lattice_diffusion, J.hessian(y))


def laplacian_convergence_check(
    realization: HarmonicRealization, test_function: FourierField, N_list: Sequence[int]
) -> list[dict]:
    """Max deviation of the averaged scaled Laplacian from ``2 div D grad J``.

    The comparison point of each cell is the barycenter of the embedded
    images of its |V0| vertices (in the covering, before torus reduction).
    """
    rows = []
    for N in N_list:
        smap = ScalingMap.build(realization, N)
        approx = averaged_laplacian(smap, test_function)
        centroid = realization.lattice_positions.mean(axis=0)
        ref = (smap.graph.cells + centroid) / N
        exact = laplacian_target(realization, test_function, ref)
        dev = np.abs(approx - exact)
        rows.append({"N": N, "max_deviation": float(dev.max()), "mean_deviation": float(dev.mean())})
    return rows
