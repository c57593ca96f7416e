"""Finite trigonometric series on the unit torus in lattice coordinates.

A :class:`FourierField` is ``sum_k a_k cos(2 pi k.y) + b_k sin(2 pi k.y)``
with integer wave vectors ``k``.  Values and the first two derivatives are
evaluated analytically, so the same object serves as initial profile, test
function and drift potential, with bit-identical evaluation everywhere.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


def _coef(value) -> Fraction:
    # Accepts ints, "3/10", "0.3" or floats; floats go through their exact
    # decimal repr so that config round trips are stable.
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (float, np.floating)):
        return Fraction(repr(float(value)))
    if isinstance(value, np.integer):
        return Fraction(int(value))
    return Fraction(str(value).strip())


@dataclass(frozen=True)
class FourierMode:
    k: tuple[int, ...]
    a: Fraction
    b: Fraction


@dataclass(frozen=True)
class FourierField:
    """Real trigonometric polynomial on ``[0, 1)^d``."""

    dim: int
    modes: tuple[FourierMode, ...] = ()

    @classmethod
    def from_modes(cls, dim: int, modes: Iterable) -> "FourierField":
        """Build from ``(k, a, b)`` triples; ``k`` may be an int when ``dim == 1``."""
        out = []
        for k, a, b in modes:
            kk = (int(k),) if np.ndim(k) == 0 else tuple(int(v) for v in k)
            if len(kk) != dim:
                raise ValueError(f"wave vector {kk} does not have dimension {dim}")
            out.append(FourierMode(kk, _coef(a), _coef(b)))
        return cls(dim, tuple(out))

    @classmethod
    def constant(cls, dim: int, value) -> "FourierField":
        return cls.from_modes(dim, [((0,) * dim, value, 0)])

    @classmethod
    def from_config(cls, dim: int, spec) -> "FourierField":
        """Parse ``{"modes": [[k, a, b], ...]}`` or a bare list of modes."""
        if isinstance(spec, dict):
            spec = spec.get("modes", [])
        return cls.from_modes(dim, spec)

    def to_config(self) -> dict:
        return {
            "modes": [
                [list(m.k), str(m.a), str(m.b)] for m in self.modes
            ]
        }

    def digest(self) -> str:
        blob = json.dumps({"dim": self.dim, **self.to_config()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- arrays ---------------------------------------------------------
    def _arrays(self):
        if not self.modes:
            z = np.zeros((0, self.dim))
            return z, np.zeros(0), np.zeros(0)
        k = np.array([m.k for m in self.modes], dtype=float)
        a = np.array([float(m.a) for m in self.modes])
        b = np.array([float(m.b) for m in self.modes])
        return k, a, b

    def _phase(self, y):
        y = np.asarray(y, dtype=float)
        if self.dim == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        k, a, b = self._arrays()
        return TWO_PI * (y @ k.T), k, a, b

    def __call__(self, y) -> np.ndarray:
        th, _, a, b = self._phase(y)
        return np.cos(th) @ a + np.sin(th) @ b

    def gradient(self, y) -> np.ndarray:
        """Gradient in lattice coordinates, shape ``(..., d)``."""
        th, k, a, b = self._phase(y)
        coef = -np.sin(th) * a + np.cos(th) * b
        return TWO_PI * (coef @ k)

    def hessian(self, y) -> np.ndarray:
        """Hessian in lattice coordinates, shape ``(..., d, d)``."""
        th, k, a, b = self._phase(y)
        coef = -(np.cos(th) * a + np.sin(th) * b) * TWO_PI**2
        kk = k[:, :, None] * k[:, None, :]
        return np.tensordot(coef, kk, axes=([-1], [0]))

    def mean(self) -> float:
        return float(sum(float(m.a) for m in self.modes if not any(m.k)))

    def gradient_l1_bound(self) -> float:
        """Upper bound on ``sup_y ||grad f(y)||_1``."""
        return TWO_PI * sum(
            sum(abs(v) for v in m.k) * float(abs(m.a) + abs(m.b)) for m in self.modes
        )

    def sup_bound(self) -> float:
        return sum(float(abs(m.a) + abs(m.b)) for m in self.modes)

    def scaled(self, factor) -> "FourierField":
        f = _coef(factor)
        return FourierField(
            self.dim, tuple(FourierMode(m.k, m.a * f, m.b * f) for m in self.modes)
        )

    def translated(self, shift: Sequence[float]) -> "FourierField":
        """Return ``y -> f(y - shift)`` (float coefficients)."""
        shift = np.asarray(shift, dtype=float)
        modes = []
        for m in self.modes:
            ph = TWO_PI * float(np.dot(m.k, shift))
            c, s = np.cos(ph), np.sin(ph)
            a, b = float(m.a), float(m.b)
            # cos(th - ph) = c cos th + s sin th ; sin(th - ph) = c sin th - s cos th
            modes.append((m.k, a * c - b * s, a * s + b * c))
        return FourierField.from_modes(self.dim, modes)


def fourier_basis(dim: int, count: int) -> list[FourierField]:
    """The first ``count`` non-constant real Fourier modes, in a fixed order.

    Ordering is by ``|k|_1``, then by ``k`` with earlier axes first; each wave
    vector contributes its cosine before its sine.
    """
    ks = []
    for k in itertools.product(range(-3, 4), repeat=dim):
        if not any(k):
            continue
        first = next(v for v in k if v != 0)
        if first < 0:
            continue
        ks.append(k)
    ks.sort(key=lambda k: (sum(abs(v) for v in k), tuple(-v for v in k)))
    out = []
    for k in ks:
        out.append(FourierField.from_modes(dim, [(k, 1, 0)]))
        out.append(FourierField.from_modes(dim, [(k, 0, 1)]))
        if len(out) >= count:
            break
    return out[:count]


@dataclass(frozen=True)
class DriftSpec:
    """Drift potential ``H(t, y) = (c0 + c1 t) * H0(y)``.

    There is deliberately no affine part: a constant external field is not
    representable.
    """

    profile: FourierField
    c0: Fraction = Fraction(1)
    c1: Fraction = Fraction(0)

    @classmethod
    def zero(cls, dim: int) -> "DriftSpec":
        return cls(FourierField(dim, ()))

    @classmethod
    def from_config(cls, dim: int, spec) -> "DriftSpec":
        if spec is None:
            return cls.zero(dim)
        if isinstance(spec, list):
            return cls(FourierField.from_modes(dim, spec))
        env = spec.get("time_envelope", [1, 0])
        return cls(FourierField.from_config(dim, spec), _coef(env[0]), _coef(env[1]))

    def to_config(self) -> dict:
        return {**self.profile.to_config(), "time_envelope": [str(self.c0), str(self.c1)]}

    @property
    def dim(self) -> int:
        return self.profile.dim

    def digest(self) -> str:
        blob = json.dumps({"dim": self.dim, **self.to_config()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def envelope(self, t) -> float:
        return float(self.c0) + float(self.c1) * t

    def is_constant(self) -> bool:
        return all(not any(m.k) or (m.a == 0 and m.b == 0) for m in self.profile.modes) or (
            self.c0 == 0 and self.c1 == 0
        )

    def __call__(self, t, y) -> np.ndarray:
        return self.envelope(t) * self.profile(y)

    def dt(self, t, y) -> np.ndarray:
        return float(self.c1) * self.profile(y)

    def gradient(self, t, y) -> np.ndarray:
        return self.envelope(t) * self.profile.gradient(y)

    def hessian(self, t, y) -> np.ndarray:
        return self.envelope(t) * self.profile.hessian(y)

    def envelope_sup(self, T: float) -> float:
        return max(abs(self.envelope(0.0)), abs(self.envelope(T)))

    def translated(self, shift) -> "DriftSpec":
        return DriftSpec(self.profile.translated(shift), self.c0, self.c1)
