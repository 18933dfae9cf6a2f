"""Segment buffers and delay measures.

A path's recent history over the window [-r, 0] is held on a uniform grid of
spacing dt in a ring buffer of ceil(r/dt) + 1 samples. Off-grid reads are
linear interpolation between neighbouring grid samples; on-grid reads return
the stored sample bit-for-bit. Delay measures are finite atomic measures on
[-r, 0]; integrals against them reduce to weighted sums of taps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ColdBuffer, OutOfRange

# Snap tolerance for "is this offset a grid point" decisions, in grid units.
_SNAP = 1e-9


def _split_lag(u: float, last: int) -> tuple[int, float]:
    """Split a nonnegative lag (in grid units) into (index, fraction).

    Fractions within _SNAP of a grid point collapse onto it so that float
    noise in r/dt or s/dt never turns an exact read into an interpolation.
    ``last`` is the largest valid index; fuzz past it is clamped back.
    """
    k = int(np.floor(u))
    theta = u - k
    if theta < _SNAP:
        theta = 0.0
    elif theta > 1.0 - _SNAP:
        k += 1
        theta = 0.0
    if k > last:
        k = last
        theta = 0.0
    return k, theta


def grid_length(r: float, dt: float) -> int:
    """Ring length ceil(r/dt) + 1, robust to r/dt float noise."""
    if r < 0:
        raise ValueError(f"delay window r must be nonnegative, got {r}")
    if dt <= 0:
        raise ValueError(f"grid spacing dt must be positive, got {dt}")
    if r == 0.0:
        return 1
    u = r / dt
    k = int(np.floor(u))
    if u - k < _SNAP * max(1.0, u):
        return k + 1
    return k + 2


@dataclass(frozen=True)
class DelayMeasure:
    """Finite atomic probability measure on [-r, 0].

    ``atoms`` is a tuple of (offset, weight) pairs sorted by ascending offset;
    weights are nonnegative and sum to 1 within 1e-12.
    """

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("a delay measure needs at least one atom")
        total = 0.0
        for s, w in self.atoms:
            if s > 0.0:
                raise ValueError(f"atom offset {s} is positive")
            if w < 0.0:
                raise ValueError(f"atom weight {w} is negative")
            total += w
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom weights sum to {total!r}, not 1")
        object.__setattr__(
            self, "atoms", tuple(sorted(self.atoms, key=lambda a: a[0]))
        )

    @classmethod
    def dirac(cls, s: float) -> "DelayMeasure":
        return cls(atoms=((s, 1.0),))

    @classmethod
    def mix(cls, pairs: Iterable[tuple[float, float]]) -> "DelayMeasure":
        return cls(atoms=tuple(pairs))

    @property
    def max_lag(self) -> float:
        return -self.atoms[0][0]


class SegmentBuffer:
    """Ring-buffered path segment over [-r, 0] on a dt grid."""

    __slots__ = ("r", "dt", "n", "length", "samples", "head", "t_now", "_filled")

    def __init__(self, r: float, dt: float, n: int):
        self.r = float(r)
        self.dt = float(dt)
        self.n = int(n)
        self.length = grid_length(self.r, self.dt)
        self.samples = np.zeros((self.length, self.n), dtype=np.float64)
        self.head = self.length - 1
        self.t_now = 0.0
        self._filled = False

    # -- construction -----------------------------------------------------

    @classmethod
    def from_function(
        cls,
        r: float,
        dt: float,
        phi: Callable[[float], Sequence[float]],
        n: int,
    ) -> "SegmentBuffer":
        """Fill a buffer by sampling ``phi`` at the grid offsets -j*dt."""
        buf = cls(r, dt, n)
        for j in range(buf.length):
            value = np.asarray(phi(-j * dt), dtype=np.float64).reshape(buf.n)
            buf.samples[(buf.head - j) % buf.length] = value
        buf._filled = True
        return buf

    @classmethod
    def from_constant(cls, r: float, dt: float, x: Sequence[float]) -> "SegmentBuffer":
        x = np.asarray(x, dtype=np.float64).ravel()
        buf = cls(r, dt, len(x))
        buf.samples[:] = x
        buf._filled = True
        return buf

    def copy(self) -> "SegmentBuffer":
        dup = SegmentBuffer.__new__(SegmentBuffer)
        dup.r = self.r
        dup.dt = self.dt
        dup.n = self.n
        dup.length = self.length
        dup.samples = self.samples.copy()
        dup.head = self.head
        dup.t_now = self.t_now
        dup._filled = self._filled
        return dup

    # -- state ------------------------------------------------------------

    @property
    def filled(self) -> bool:
        return self._filled

    def _require_filled(self) -> None:
        if not self._filled:
            raise ColdBuffer("segment buffer read before initial fill")

    def state(self) -> np.ndarray:
        """Copy of the current value phi(0)."""
        self._require_filled()
        return self.samples[self.head].copy()

    def lag_view(self, k: int) -> np.ndarray:
        """Read-only view of the sample k grid steps back."""
        return self.samples[(self.head - k) % self.length]

    def push(self, x: Sequence[float]) -> None:
        """Advance the window by dt, appending the new current value."""
        self._require_filled()
        x = np.asarray(x, dtype=np.float64)
        self.head = (self.head + 1) % self.length
        self.samples[self.head] = x
        self.t_now += self.dt

    # -- reads ------------------------------------------------------------

    def tap(self, s: float) -> np.ndarray:
        """Value of the segment at offset s in [-r, 0].

        Grid offsets return the stored sample exactly; other offsets are the
        chord between the bracketing samples.
        """
        self._require_filled()
        if s > self.dt * _SNAP or s < -self.r - self.dt * _SNAP - 1e-300:
            raise OutOfRange(f"offset {s} outside [-{self.r}, 0]")
        u = min(max(-s, 0.0) / self.dt, self.r / self.dt)
        k, theta = _split_lag(u, self.length - 1)
        newer = self.samples[(self.head - k) % self.length]
        if theta == 0.0:
            return newer.copy()
        older = self.samples[(self.head - k - 1) % self.length]
        return (1.0 - theta) * newer + theta * older

    def states_by_lag(self) -> np.ndarray:
        """(length, n) array of samples ordered newest first.

        Row j is the sample j grid steps back, matching the indexing of
        KernelQuadrature weights.
        """
        self._require_filled()
        idx = (self.head - np.arange(self.length)) % self.length
        return self.samples[idx]

    def sup_norm(self) -> float:
        """Largest Euclidean norm among the stored samples."""
        self._require_filled()
        return float(np.sqrt((self.samples * self.samples).sum(axis=1)).max())


def integrate_measure(
    buf: SegmentBuffer,
    measure: DelayMeasure,
    h: Callable[[np.ndarray], float],
) -> float:
    """sum_k w_k h(phi(s_k)) — the integral of h(phi(s)) mu(ds)."""
    total = 0.0
    for s, w in measure.atoms:
        total += w * float(h(buf.tap(s)))
    return total


class KernelQuadrature:
    """Trapezoid weights for the exponential memory kernel.

    For each atom (s, w) of the measure this precomputes grid weights W_j so
    that sum_j W_j h_j approximates int_s^0 e^{gamma (u - s)} h(phi(u)) du,
    where h_j = h(phi(-j dt)) are the stored-sample values of h. The partial
    cell at the atom interpolates h-values (not states), which keeps the
    whole functional exactly linear in h.

    ``exp_factor`` is the matching discretization of int e^{-gamma s} mu(ds),
    namely sum_k w_k (1 + gamma sum_j W_j^{(k)}): with h constant, the kernel
    sum and exp_factor then cancel identically rather than to O(dt^2).
    """

    __slots__ = ("measure", "gamma", "dt", "length", "weights", "exp_factor")

    def __init__(self, measure: DelayMeasure, gamma: float, dt: float, length: int):
        self.measure = measure
        self.gamma = float(gamma)
        self.dt = float(dt)
        self.length = int(length)
        combined = np.zeros(length, dtype=np.float64)
        exp_factor = 0.0
        for s, w in measure.atoms:
            atom_w = self._atom_weights(s)
            combined += w * atom_w
            exp_factor += w * (1.0 + self.gamma * atom_w.sum())
        self.weights = combined
        self.exp_factor = exp_factor

    def _atom_weights(self, s: float) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.float64)
        u = -s / self.dt
        k, theta = _split_lag(u, self.length - 1)
        g, dt = self.gamma, self.dt
        # Full cells [-(j+1) dt, -j dt]; e^{gamma (u_j - s)} = e^{gamma dt (u - j)}.
        for j in range(k):
            out[j] += 0.5 * dt * np.exp(g * dt * (u - j))
            out[j + 1] += 0.5 * dt * np.exp(g * dt * (u - j - 1))
        if theta > 0.0:
            # Partial cell [s, -k dt], width theta*dt; the h-value at s is
            # interpolated as (1-theta) h_k + theta h_{k+1}.
            half = 0.5 * theta * dt
            out[k] += half * ((1.0 - theta) + np.exp(g * theta * dt))
            out[k + 1] += half * theta
        return out

    def apply(self, h_values: np.ndarray) -> float:
        """Contract precomputed weights with per-lag h values.

        ``h_values[j]`` must be h at the sample j grid steps back.
        """
        return float(self.weights @ h_values)


def kernel_integral(
    buf: SegmentBuffer,
    measure: DelayMeasure,
    gamma: float,
    h: Callable[[np.ndarray], float],
) -> float:
    """int mu(ds) int_s^0 e^{gamma (u - s)} h(phi(u)) du by trapezoid rule."""
    buf._require_filled()
    quad = KernelQuadrature(measure, gamma, buf.dt, buf.length)
    h_values = np.empty(buf.length, dtype=np.float64)
    for j in range(buf.length):
        h_values[j] = h(buf.lag_view(j))
    return quad.apply(h_values)
