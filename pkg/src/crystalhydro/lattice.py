"""Crystal lattices as shift-labelled quotient graphs.

A crystal lattice with period group ``Z^d`` is stored as its finite
quotient graph: every oriented edge carries the integer shift between the
cell of its tail and the cell of its head.  The N-scaling finite graph is
the discrete torus of ``N^d`` copies of the quotient glued along those
shifts.
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml


class LatticeError(ValueError):
    """Raised for malformed quotient graphs or catalog files."""


# ---------------------------------------------------------------------------
# Quotient graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuotientGraph:
    """Finite multigraph with integer shift vectors on its oriented edges.

    ``reverse[e]`` is the index of the inverse edge; the pairing is a
    fixed-point-free involution with ``shift[reverse[e]] == -shift[e]``.
    """

    d: int
    num_vertices: int
    tails: np.ndarray
    heads: np.ndarray
    shifts: np.ndarray
    reverse: np.ndarray
    name: str = ""

    def __post_init__(self):
        for arr in (self.tails, self.heads, self.shifts, self.reverse):
            arr.setflags(write=False)
        self.validate()

    # -- construction ---------------------------------------------------
    @classmethod
    def from_unoriented(cls, d: int, num_vertices: int, edges, name: str = ""):
        """Each ``(tail, head, shift)`` becomes the oriented pair ``e, e-bar``."""
        tails, heads, shifts = [], [], []
        for tail, head, shift in edges:
            s = _as_shift(shift, d)
            tails += [int(tail), int(head)]
            heads += [int(head), int(tail)]
            shifts += [s, tuple(-v for v in s)]
        m = len(tails)
        reverse = np.arange(m) ^ 1
        return cls(
            d,
            int(num_vertices),
            np.asarray(tails, dtype=np.int64),
            np.asarray(heads, dtype=np.int64),
            np.asarray(shifts, dtype=np.int64).reshape(m, d),
            reverse.astype(np.int64),
            name,
        )

    @classmethod
    def from_oriented(cls, d: int, num_vertices: int, edges, name: str = ""):
        """Oriented edge list that must already contain every inverse edge."""
        tails = [int(e[0]) for e in edges]
        heads = [int(e[1]) for e in edges]
        shifts = [_as_shift(e[2], d) for e in edges]
        pending: dict[tuple, list[int]] = {}
        reverse = [-1] * len(edges)
        for i, (t, h, s) in enumerate(zip(tails, heads, shifts)):
            key = (h, t, tuple(-v for v in s))
            partners = pending.get(key)
            if partners:
                j = partners.pop()
                reverse[i], reverse[j] = j, i
            else:
                pending.setdefault((t, h, s), []).append(i)
        for i, r in enumerate(reverse):
            if r < 0:
                raise LatticeError(
                    f"edge {i} ({tails[i]} -> {heads[i]}, shift {list(shifts[i])}) "
                    "has no inverse edge"
                )
        m = len(edges)
        return cls(
            d,
            int(num_vertices),
            np.asarray(tails, dtype=np.int64),
            np.asarray(heads, dtype=np.int64),
            np.asarray(shifts, dtype=np.int64).reshape(m, d),
            np.asarray(reverse, dtype=np.int64),
            name,
        )

    # -- properties -------------------------------------------------------
    @property
    def num_edges(self) -> int:
        return len(self.tails)

    def degree(self) -> np.ndarray:
        return np.bincount(self.tails, minlength=self.num_vertices)

    def out_edges(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.tails == x)

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        n, m = self.num_vertices, self.num_edges
        if self.d < 1:
            raise LatticeError("dimension must be at least 1")
        if n < 1:
            raise LatticeError("at least one vertex is required")
        if self.shifts.shape != (m, self.d):
            raise LatticeError(f"shift vectors must have length {self.d}")
        for arr, what in ((self.tails, "tail"), (self.heads, "head")):
            bad = np.flatnonzero((arr < 0) | (arr >= n))
            if bad.size:
                raise LatticeError(f"edge {bad[0]} has {what} outside 0..{n - 1}")
        r = self.reverse
        for e in range(m):
            q = r[e]
            if q == e or not 0 <= q < m or r[q] != e:
                raise LatticeError(f"edge {e}: inverse pairing is not an involution")
            if self.tails[q] != self.heads[e] or self.heads[q] != self.tails[e]:
                raise LatticeError(f"edge {e}: inverse edge {q} has mismatched endpoints")
            if np.any(self.shifts[q] != -self.shifts[e]):
                raise LatticeError(f"edge {e}: inverse edge {q} shift is not the negative")
            if self.tails[e] == self.heads[e] and not np.any(self.shifts[e]):
                raise LatticeError(f"edge {e} is a zero-shift self-loop")
        self._check_connected()

    def _check_connected(self) -> None:
        # Spanning tree potentials P(v); the cycle values P(o)+s-P(t) must
        # generate Z^d for the lift to be connected.
        n = self.num_vertices
        pot = [None] * n
        pot[0] = np.zeros(self.d, dtype=np.int64)
        stack = [0]
        while stack:
            v = stack.pop()
            for e in self.out_edges(v):
                w = self.heads[e]
                if pot[w] is None:
                    pot[w] = pot[v] + self.shifts[e]
                    stack.append(w)
        missing = [v for v in range(n) if pot[v] is None]
        if missing:
            raise LatticeError(f"quotient graph is disconnected (vertex {missing[0]} unreachable)")
        cycles = [
            pot[self.tails[e]] + self.shifts[e] - pot[self.heads[e]] for e in range(self.num_edges)
        ]
        if _lattice_index(np.array(cycles, dtype=np.int64).reshape(-1, self.d)) != 1:
            raise LatticeError("edge shifts do not generate Z^d; the lift is disconnected")
        zero = self.shifts.any(axis=1) == 0
        if not _connected(n, self.tails[zero], self.heads[zero]):
            warnings.warn(
                f"lattice {self.name or '?'}: the cell-0 fundamental domain is not "
                "connected by zero-shift edges",
                stacklevel=3,
            )


def _as_shift(shift, d: int) -> tuple[int, ...]:
    s = (shift,) if np.ndim(shift) == 0 else tuple(shift)
    if len(s) != d:
        raise LatticeError(f"shift {list(s)} does not have dimension {d}")
    if any(int(v) != v for v in s):
        raise LatticeError(f"shift {list(s)} is not integral")
    return tuple(int(v) for v in s)


def _connected(n: int, a, b) -> bool:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for u, v in zip(a, b):
        parent[find(int(u))] = find(int(v))
    return len({find(i) for i in range(n)}) == 1


def _lattice_index(vectors: np.ndarray) -> int:
    """Index of the subgroup of Z^d spanned by ``vectors`` (0 if rank-deficient)."""
    rows = [list(map(int, v)) for v in vectors if any(v)]
    d = vectors.shape[1]
    index = 1
    for col in range(d):
        rows = [r for r in rows if any(r)]
        piv = [r for r in rows if r[col] != 0]
        if not piv:
            return 0
        # Euclid on the column until a single row carries a nonzero entry.
        while len(piv) > 1:
            piv.sort(key=lambda r: abs(r[col]))
            p = piv[0]
            for r in piv[1:]:
                q = r[col] // p[col]
                for k in range(d):
                    r[k] -= q * p[k]
            piv = [r for r in piv if r[col] != 0]
        p = piv[0]
        index *= abs(p[col])
        rows = [r for r in rows if r is not p and r[col] == 0]
    return index


# ---------------------------------------------------------------------------
# Word metric and balls
# ---------------------------------------------------------------------------


def word_length(sigma) -> int:
    """Word length of ``sigma`` in Z^d for the standard generators (l1 norm)."""
    return int(np.abs(np.asarray(sigma, dtype=np.int64)).sum())


def word_length_mod(sigma, N: int) -> int:
    """Word length in ``(Z/NZ)^d``: the shortest lift, coordinatewise."""
    k = np.mod(np.asarray(sigma, dtype=np.int64), N)
    return int(np.minimum(k, N - k).sum())


@functools.lru_cache(maxsize=256)
def l1_ball_offsets(d: int, R: float) -> np.ndarray:
    """All ``sigma`` in Z^d with ``|sigma|_1 <= R``, sorted lexicographically."""
    r = int(math.floor(R + 1e-12))
    if r < 0:
        return np.zeros((0, d), dtype=np.int64)
    out = [s for s in itertools.product(range(-r, r + 1), repeat=d) if sum(map(abs, s)) <= r]
    arr = np.asarray(out, dtype=np.int64).reshape(-1, d)
    arr.setflags(write=False)
    return arr


def l1_ball_size(d: int, R: float) -> int:
    """Number of lattice points in the l1 ball of radius ``R`` in Z^d."""
    r = int(math.floor(R + 1e-12))
    if r < 0:
        return 0
    # sum_k 2^k C(d,k) C(r,k)
    return sum(2**k * math.comb(d, k) * math.comb(r, k) for k in range(min(d, r) + 1))


def _check_radius(R: float, N: int) -> None:
    if R < 0:
        raise ValueError(f"radius must be nonnegative, got {R}")
    if not R < N / 2:
        raise ValueError(f"radius {R} must be below N/2 = {N / 2} to avoid wrap-around")


def cell_ball(center_cell, R: float, N: int) -> np.ndarray:
    """Cells of ``Gamma_N`` within word distance ``R`` of ``center_cell``.

    Returns an ``(n, d)`` integer array of cell coordinates in ``[0, N)``.
    """
    center = np.atleast_1d(np.asarray(center_cell, dtype=np.int64))
    _check_radius(R, N)
    return np.mod(center + l1_ball_offsets(len(center), float(R)), N)


# ---------------------------------------------------------------------------
# N-scaling finite graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScaledGraph:
    """The N-scaling finite graph ``X_N``.

    Vertex ``(cell, x)`` has index ``cell_index * |V0| + x`` where cells are
    enumerated in C order of their coordinates.  Oriented edge
    ``cell_index * |E0| + e`` is the copy of base edge ``e`` with tail in
    ``cell``; edges ``0 .. |E0|-1`` form the fundamental edge set.
    """

    N: int
    base: QuotientGraph
    cells: np.ndarray = field(repr=False)
    tails: np.ndarray = field(repr=False)
    heads: np.ndarray = field(repr=False)
    reverse: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def num_cells(self) -> int:
        return self.N**self.d

    @property
    def num_vertices(self) -> int:
        return self.num_cells * self.base.num_vertices

    @property
    def num_edges(self) -> int:
        return len(self.tails)

    @property
    def fundamental_edge_set(self) -> np.ndarray:
        return np.arange(self.base.num_edges)

    @property
    def fundamental_domain(self) -> np.ndarray:
        return np.arange(self.base.num_vertices)

    def cell_index(self, cell) -> np.ndarray:
        cell = np.mod(np.asarray(cell, dtype=np.int64), self.N)
        return np.ravel_multi_index(tuple(np.moveaxis(cell, -1, 0)), (self.N,) * self.d)

    def vertex(self, cell, x) -> np.ndarray:
        return self.cell_index(cell) * self.base.num_vertices + np.asarray(x)

    def vertex_cell(self, v) -> np.ndarray:
        return self.cells[np.asarray(v) // self.base.num_vertices]

    def vertex_base(self, v) -> np.ndarray:
        return np.asarray(v) % self.base.num_vertices

    def edge_base(self, e) -> np.ndarray:
        return np.asarray(e) % self.base.num_edges

    def translate_vertices(self, sigma, v=None) -> np.ndarray:
        """Image of vertices under the cell translation by ``sigma``."""
        if v is None:
            v = np.arange(self.num_vertices)
        v = np.asarray(v)
        cell = self.vertex_cell(v) + np.asarray(sigma, dtype=np.int64)
        return self.vertex(cell, self.vertex_base(v))

    def degree(self) -> np.ndarray:
        return np.bincount(self.tails, minlength=self.num_vertices)

    def unoriented_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """One representative per inverse pair: ``(tails, heads)``."""
        idx = np.flatnonzero(np.arange(self.num_edges) < self.reverse)
        return self.tails[idx], self.heads[idx]


def build_scaled_graph(base: QuotientGraph, N: int) -> ScaledGraph:
    """Build the N-scaling finite graph of ``base``."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    N = int(N)
    base.validate()
    d, n0, m0 = base.d, base.num_vertices, base.num_edges
    cells = np.array(list(itertools.product(range(N), repeat=d)), dtype=np.int64).reshape(-1, d)
    nc = len(cells)
    shape = (N,) * d

    def index(c):
        return np.ravel_multi_index(tuple(np.mod(c, N).T), shape)

    ci = np.arange(nc)
    tails = (ci[:, None] * n0 + base.tails[None, :]).ravel()
    head_cells = cells[:, None, :] + base.shifts[None, :, :]
    heads = (index(head_cells.reshape(-1, d)).reshape(nc, m0) * n0 + base.heads[None, :]).ravel()
    rev_cells = index(head_cells.reshape(-1, d)).reshape(nc, m0)
    reverse = (rev_cells * m0 + base.reverse[None, :]).ravel()
    for arr in (cells, tails, heads, reverse):
        arr.setflags(write=False)
    return ScaledGraph(N, base, cells, tails, heads, reverse)


# ---------------------------------------------------------------------------
# l1 ball counts against continuum volumes
# ---------------------------------------------------------------------------


def l1_ball_volume_fraction(d: int, eps: float) -> float:
    """Volume of the l1 ball of radius ``eps`` in the unit torus (``eps <= 1/2``)."""
    return (2.0 * eps) ** d / math.factorial(d)


def verify_ball_count(embedding, eps: float, N_list: Sequence[int]) -> list[dict]:
    """Compare the continuum l1-ball volume with the count of its cell ball.

    ``embedding`` is a realization or a quotient graph; only the period rank
    and ``|V0|`` matter.  Each row carries ``N * |difference|``, which stays
    bounded as ``N`` grows.
    """
    graph = getattr(embedding, "graph", embedding)
    d, n0 = graph.d, graph.num_vertices
    vol = l1_ball_volume_fraction(d, eps)
    rows = []
    for N in N_list:
        count = l1_ball_size(d, eps * N) * n0
        ratio = count / (N**d * n0)
        diff = abs(vol - ratio)
        rows.append(
            {"N": N, "volume_ratio": vol, "count_ratio": ratio, "difference": diff, "scaled": N * diff}
        )
    return rows


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeSpec:
    """A catalog entry: graph plus the (possibly symbolic) basis and positions.

    ``basis`` rows are the period vectors ``u_i``; entries are kept as given
    (numbers or expressions like ``"sqrt(3)/2"``) for exact evaluation.
    """

    name: str
    graph: QuotientGraph
    basis: tuple
    positions: tuple | None = None
    description: str = ""


def catalog_names() -> list[str]:
    root = resources.files("crystalhydro") / "catalog"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def parse_lattice(data: dict, name: str = "") -> LatticeSpec:
    try:
        d = int(data["dimension"])
        n = int(data["vertices"])
        edges = data["edges"]
        basis = data["basis"]
    except KeyError as exc:
        raise LatticeError(f"lattice {name!r}: missing field {exc.args[0]!r}") from None
    name = data.get("name", name)
    if data.get("oriented", False):
        graph = QuotientGraph.from_oriented(d, n, edges, name)
    else:
        graph = QuotientGraph.from_unoriented(d, n, edges, name)
    basis = tuple(tuple(row) if isinstance(row, (list, tuple)) else (row,) for row in basis)
    if len(basis) != d or any(len(r) != d for r in basis):
        raise LatticeError(f"lattice {name!r}: basis must be {d} rows of {d} entries")
    positions = data.get("positions")
    if positions is not None:
        positions = tuple(tuple(p) if isinstance(p, (list, tuple)) else (p,) for p in positions)
        if len(positions) != n or any(len(p) != d for p in positions):
            raise LatticeError(f"lattice {name!r}: positions must be {n} rows of {d} entries")
    return LatticeSpec(name, graph, basis, positions, data.get("description", ""))


def load_lattice(name_or_path: str | Path) -> LatticeSpec:
    """Load a catalog entry by name, or a lattice file by path."""
    path = Path(name_or_path)
    if path.suffix in (".yaml", ".yml") or path.exists():
        with open(path) as fh:
            return parse_lattice(yaml.safe_load(fh), path.stem)
    res = resources.files("crystalhydro") / "catalog" / f"{name_or_path}.yaml"
    if not res.is_file():
        raise LatticeError(
            f"unknown lattice {name_or_path!r}; catalog has {', '.join(catalog_names())}"
        )
    return parse_lattice(yaml.safe_load(res.read_text()), str(name_or_path))
