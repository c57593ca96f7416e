"""Explicit conservative finite differences for the limit equation.

In lattice coordinates ``y = U^-1 u`` on the unit torus the equation reads

    d rho / dt = div_y( Dt grad_y rho - 2 rho (1 - rho) Dt grad_y H )

with ``Dt = U^-1 D U^-T``.  The edge-sum drift
``(1 / 2|V0|) sum_e grad_w(e) (rho (1 - rho) grad_w(e) H)`` is kept as an
alternate code path; it agrees with the divergence form because
``sum_e w w^T = 4 |V0| Dt``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fourier import DriftSpec, FourierField
from .harmonic import HarmonicRealization

RANGE_TOL = 1e-8


class StabilityError(ValueError):
    pass


@dataclass
class DensityGrid:
    """Cell-centred values of ``rho`` on ``M^d`` points of the unit torus."""

    M: int
    values: np.ndarray
    t: float
    realization: HarmonicRealization = field(repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def h(self) -> float:
        return 1.0 / self.M

    def centers(self) -> np.ndarray:
        return grid_centers(self.M, self.d)

    def mass(self) -> float:
        return float(self.values.mean())

    def integrate(self, J: FourierField) -> float:
        """Midpoint rule for ``int J rho dmu``."""
        return float(np.mean(J(self.centers()) * self.values))

    def gradient_energy(self) -> float:
        """Discrete ``int |grad_y rho|^2`` with forward differences."""
        total = 0.0
        for ax in range(self.d):
            diff = (np.roll(self.values, -1, axis=ax) - self.values) / self.h
            total += float(np.mean(diff**2))
        return total

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        if header:
            r = self.realization
            buf.write(f"# M={self.M}\n")
            buf.write(f"# U={r.basis.tolist()}\n")
            buf.write(f"# D={r.diffusion.tolist()}\n")
            cols = ",".join(f"y{i + 1}" for i in range(self.d))
            buf.write(f"t,{cols},rho\n")
        y = self.centers().reshape(-1, self.d)
        for pt, v in zip(y, self.values.ravel()):
            coords = ",".join(f"{c:.10g}" for c in pt)
            buf.write(f"{self.t:.10g},{coords},{v:.17g}\n")
        return buf.getvalue()


def grid_centers(M: int, d: int) -> np.ndarray:
    """``(M,)*d + (d,)`` array of cell centres ``(i + 1/2) / M``."""
    axes = [(np.arange(M) + 0.5) / M] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def initial_grid(rho0: FourierField, realization: HarmonicRealization, M: int) -> DensityGrid:
    vals = np.clip(rho0(grid_centers(M, realization.d)), 0.0, 1.0)
    return DensityGrid(M, vals, 0.0, realization)


def _shift(a: np.ndarray, axis: int, k: int) -> np.ndarray:
    # value at index i + k along axis
    return np.roll(a, -k, axis=axis)


def _face_points(M: int, d: int, axis: int) -> np.ndarray:
    y = grid_centers(M, d).copy()
    y[..., axis] += 0.5 / M
    return y


def drift_velocity(
    realization: HarmonicRealization, H: DriftSpec, t: float, y: np.ndarray, form: str = "divergence"
) -> np.ndarray:
    """Velocity multiplying ``rho (1 - rho)`` in the flux, lattice coordinates."""
    gH = H.gradient(t, y)
    if form == "divergence":
        return 2.0 * gH @ realization.lattice_diffusion.T
    if form == "edge-sum":
        w = realization.lattice_edge_vectors
        n0 = realization.graph.num_vertices
        return (gH @ w.T) @ w / (2.0 * n0)
    raise ValueError(f"unknown drift form {form!r}")


def stability_bounds(grid: DensityGrid, H: DriftSpec, t_end: float | None = None) -> tuple[float, float]:
    """Diffusive and drift time-step limits for ``grid``."""
    h, d = grid.h, grid.d
    lam = float(np.max(np.linalg.eigvalsh(grid.realization.lattice_diffusion)))
    diff_bound = h * h / (4.0 * d * lam)
    vmax = 0.0
    env = H.envelope_sup(t_end if t_end is not None else grid.t)
    for vel in unit_face_velocities(grid.realization, H, grid.M):
        vmax = max(vmax, float(np.max(np.abs(vel).sum(axis=-1))) * env)
    drift_bound = np.inf if vmax == 0 else h / (2.0 * vmax)
    return diff_bound, drift_bound


def unit_face_velocities(
    realization: HarmonicRealization, H: DriftSpec, M: int, form: str = "divergence"
) -> list[np.ndarray]:
    """Drift velocity of ``H0`` (envelope 1) at the ``+1/2`` faces of each axis."""
    if not H.profile.modes:
        return []
    unit = DriftSpec(H.profile)
    d = realization.d
    return [drift_velocity(realization, unit, 0.0, _face_points(M, d, ax), form) for ax in range(d)]


def rhs(
    grid: DensityGrid, H: DriftSpec, form: str = "divergence", face_velocities=None
) -> np.ndarray:
    """Conservative discrete right-hand side at ``grid.t``.

    ``face_velocities`` may carry the output of :func:`unit_face_velocities`
    to avoid re-evaluating the drift field every step.
    """
    rho = grid.values
    h, d, M = grid.h, grid.d, grid.M
    Dt = grid.realization.lattice_diffusion
    out = np.zeros_like(rho)
    has_drift = bool(H.profile.modes)
    if has_drift and face_velocities is None:
        face_velocities = unit_face_velocities(grid.realization, H, M, form)
    env = H.envelope(grid.t)
    for i in range(d):
        up = _shift(rho, i, 1)
        flux = Dt[i, i] * (up - rho) / h
        for j in range(d):
            if j == i or Dt[i, j] == 0.0:
                continue
            cross = (_shift(rho, j, 1) + _shift(up, j, 1) - _shift(rho, j, -1) - _shift(up, j, -1)) / (4 * h)
            flux = flux + Dt[i, j] * cross
        if has_drift:
            rf = 0.5 * (rho + up)
            vel = env * face_velocities[i][..., i]
            flux = flux - rf * (1.0 - rf) * vel
        out += (flux - _shift(flux, i, -1)) / h
    return out


def step(grid: DensityGrid, H: DriftSpec, dt: float, form: str = "divergence") -> DensityGrid:
    """One forward-Euler step of the conservative scheme."""
    diff_bound, drift_bound = stability_bounds(grid, H, grid.t + dt)
    limit = min(diff_bound, drift_bound)
    if dt > limit * (1 + 1e-12):
        raise StabilityError(
            f"time step {dt:.3g} exceeds the stability bound {limit:.3g} "
            f"(diffusion {diff_bound:.3g}, drift {drift_bound:.3g})"
        )
    new = grid.values + dt * rhs(grid, H, form)
    return DensityGrid(grid.M, new, grid.t + dt, grid.realization, grid.meta)


def solve(
    rho0: FourierField,
    H: DriftSpec,
    T: float,
    M: int,
    realization: HarmonicRealization,
    times: Sequence[float] | None = None,
    dt: float | None = None,
    safety: float = 0.9,
    form: str = "divergence",
) -> list[DensityGrid]:
    """Integrate from ``rho0`` to ``T`` and return snapshots at ``times``.

    ``times`` defaults to ``[0, T]``; the step is shortened to land on each
    requested time exactly.
    """
    grid = initial_grid(rho0, realization, M)
    meta = {"H": H.digest(), "rho0": rho0.digest(), "form": form}
    grid.meta = meta
    times = sorted(set([0.0, T] if times is None else [float(t) for t in times]))
    if times[0] < 0 or times[-1] > T + 1e-15:
        raise ValueError("snapshot times must lie in [0, T]")
    if dt is None:
        dt = safety * min(stability_bounds(grid, H, T))
    else:
        limit = min(stability_bounds(grid, H, T))
        if dt > limit:
            raise StabilityError(f"time step {dt:.3g} exceeds the stability bound {limit:.3g}")
    vel = unit_face_velocities(realization, H, M, form)
    out = []
    for target in times:
        while grid.t < target - 1e-14:
            h = min(dt, target - grid.t)
            new_vals = grid.values + h * rhs(grid, H, form, vel)
            grid = DensityGrid(M, new_vals, grid.t + h, realization, meta)
        grid = DensityGrid(M, grid.values, target, realization, meta)
        out.append(grid)
    return out


def drift_term_edge_sum(
    realization: HarmonicRealization, rho: FourierField, H: DriftSpec, t: float, y: np.ndarray
) -> np.ndarray:
    """``-(1/2|V0|) sum_e grad_v(e)(rho(1-rho) grad_v(e) H)`` in physical coordinates."""
    Ui = realization.basis_inv
    r = rho(y)
    g = r * (1 - r)
    grad_g = ((1 - 2 * r)[..., None] * rho.gradient(y)) @ Ui
    grad_H = H.gradient(t, y) @ Ui
    hess_H = np.einsum("ai,...ab,bj->...ij", Ui, H.hessian(t, y), Ui)
    total = np.zeros_like(r)
    for v in realization.edge_vectors:
        total += (grad_g @ v) * (grad_H @ v) + g * np.einsum("i,...ij,j->...", v, hess_H, v)
    return -total / (2.0 * realization.graph.num_vertices)


def drift_term_divergence(
    realization: HarmonicRealization, rho: FourierField, H: DriftSpec, t: float, y: np.ndarray
) -> np.ndarray:
    """``-2 div(rho(1-rho) D grad H)`` in physical coordinates."""
    Ui = realization.basis_inv
    D = realization.diffusion
    r = rho(y)
    g = r * (1 - r)
    grad_g = ((1 - 2 * r)[..., None] * rho.gradient(y)) @ Ui
    grad_H = H.gradient(t, y) @ Ui
    hess_H = np.einsum("ai,...ab,bj->...ij", Ui, H.hessian(t, y), Ui)
    return -2.0 * (np.einsum("...i,ij,...j->...", grad_g, D, grad_H) + g * np.einsum("ij,...ij->...", D, hess_H))
