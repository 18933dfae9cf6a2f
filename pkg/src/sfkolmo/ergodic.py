"""Time averages against face ergodic measures.

Long-run averages are estimated from one long trajectory after burn-in,
with batch-means confidence intervals (30 equal batches by default). Faces
whose ergodic measure is an exact point mass (the origin for a fully
multiplicative model, a replicator vertex) are evaluated analytically with
zero variance instead of simulated.

Invasion rates lambda_i(pi) are the ergodic averages of
f_i - q_i / 2, with q_i the quadratic-variation rate of ln X_i; for a
coordinate supported on the face itself the rate is identically zero and is
set exactly, never estimated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .engine import SimConfig, SimResult, simulate
from .errors import EmptyHistogram, InsufficientBatches
from .model import FAMILY_REPLICATOR, ModelSpec, restrict_to_face
from .segment import SegmentBuffer

_TARGET_BATCHES = 30
_MIN_BATCHES = 10
_Z95 = 1.96


@dataclass(frozen=True)
class ObservableStats:
    """Batch-means summary of a time-averaged observable."""

    mean: float
    batch_count: int
    batch_size: int
    batch_means_variance: float
    ci_half_width: float
    exact: bool = False

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "ci": self.ci_half_width,
            "batches": self.batch_count,
            "batch_size": self.batch_size,
            "variance": self.batch_means_variance,
            "exact": self.exact,
        }


def exact_stats(value: float) -> ObservableStats:
    """Stats for an analytically known average (zero-width interval)."""
    return ObservableStats(
        mean=float(value),
        batch_count=0,
        batch_size=0,
        batch_means_variance=0.0,
        ci_half_width=0.0,
        exact=True,
    )


def stats_from_series(values: np.ndarray) -> ObservableStats:
    """Batch-means statistics of a stationary record series."""
    values = np.asarray(values, dtype=np.float64).ravel()
    n = values.size
    batch_size = max(1, n // _TARGET_BATCHES)
    batch_count = n // batch_size
    if batch_count < _MIN_BATCHES:
        raise InsufficientBatches(
            f"{n} records form only {batch_count} batches; need {_MIN_BATCHES}"
        )
    used = batch_count * batch_size
    means = values[:used].reshape(batch_count, batch_size).mean(axis=1)
    variance = float(means.var(ddof=1))
    return ObservableStats(
        mean=float(means.mean()),
        batch_count=batch_count,
        batch_size=batch_size,
        batch_means_variance=variance,
        ci_half_width=_Z95 * math.sqrt(variance / batch_count),
    )


def merge_stats(a: ObservableStats, b: ObservableStats) -> ObservableStats:
    """Pool two batch-means summaries of the same observable.

    Exact in the mean and exact (pairwise-update formula) in the variance of
    the pooled batch-mean population; requires equal batch sizes.
    """
    if a.exact or b.exact:
        raise ValueError("exact stats carry no batches to merge")
    if a.batch_size != b.batch_size:
        raise ValueError(
            f"batch sizes differ ({a.batch_size} vs {b.batch_size}); "
            "replicates must share a config"
        )
    n1, n2 = a.batch_count, b.batch_count
    n = n1 + n2
    delta = b.mean - a.mean
    m2 = (
        a.batch_means_variance * (n1 - 1)
        + b.batch_means_variance * (n2 - 1)
        + delta * delta * n1 * n2 / n
    )
    variance = m2 / (n - 1)
    return ObservableStats(
        mean=a.mean + delta * n2 / n,
        batch_count=n,
        batch_size=a.batch_size,
        batch_means_variance=variance,
        ci_half_width=_Z95 * math.sqrt(variance / n),
    )


# ---------------------------------------------------------------------------
# occupation histograms

HIST_BINS = 64
HIST_EDGES = 10.0 ** (-8.0 + np.arange(HIST_BINS + 1) / 4.0)


@dataclass
class OccupationHistogram:
    """Per-coordinate occupation mass over logarithmic abundance bins.

    Bins cover [1e-8, 1e8] with 4 bins per decade; mass outside lands in
    ``under``/``over``.
    """

    counts: np.ndarray
    under: np.ndarray
    over: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "OccupationHistogram":
        return cls(
            counts=np.zeros((n, HIST_BINS)),
            under=np.zeros(n),
            over=np.zeros(n),
        )

    @property
    def edges(self) -> np.ndarray:
        return HIST_EDGES

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1) + self.under + self.over

    def add_states(self, states: np.ndarray) -> None:
        states = np.atleast_2d(states)
        for i in range(self.counts.shape[0]):
            col = states[:, i]
            self.counts[i] += np.histogram(col, bins=HIST_EDGES)[0]
            self.under[i] += float((col < HIST_EDGES[0]).sum())
            self.over[i] += float((col >= HIST_EDGES[-1]).sum())

    def merge(self, other: "OccupationHistogram") -> "OccupationHistogram":
        return OccupationHistogram(
            counts=self.counts + other.counts,
            under=self.under + other.under,
            over=self.over + other.over,
        )


def frequency_in_band(hist: OccupationHistogram, radius: float) -> tuple[float, np.ndarray]:
    """Occupation frequency of each coordinate in [1/R, R].

    R snaps to the nearest histogram edge (in log space); the snapped value
    is returned alongside the per-coordinate frequencies.
    """
    if radius < 1.0:
        raise ValueError(f"band radius must be >= 1, got {radius}")
    totals = hist.totals
    if np.all(totals == 0):
        raise EmptyHistogram("histogram holds no mass")
    j = int(round((math.log10(radius) + 8.0) * 4.0))
    j = min(max(j, HIST_BINS // 2), HIST_BINS)
    snapped = float(HIST_EDGES[j])
    lo = HIST_BINS - j
    in_band = hist.counts[:, lo:j].sum(axis=1)
    with np.errstate(invalid="ignore"):
        freqs = np.where(totals > 0, in_band / totals, 0.0)
    return snapped, freqs


# ---------------------------------------------------------------------------
# face runs and averages


def default_face_initial(sub: ModelSpec) -> np.ndarray:
    """Equilibrium-agnostic interior start on a face: ones, or the uniform
    simplex point for a replicator."""
    if sub.pack is not None and sub.pack.family == FAMILY_REPLICATOR:
        return np.full(sub.n, float(sub.pack.scal[0]) / sub.n)
    return np.ones(sub.n)


def face_run(
    spec: ModelSpec,
    face: Sequence[int],
    config: SimConfig,
    initial=None,
) -> tuple[ModelSpec, SimResult]:
    """Simulate the face-restricted model; returns (sub-model, result)."""
    face = tuple(face)
    sub = restrict_to_face(spec, face) if len(set(face)) < spec.n else spec
    if initial is None:
        initial = default_face_initial(sub)
    result = simulate(sub, initial, config, observers=None, record_path=True)
    return sub, result


def embedded_observer(sub: ModelSpec, observe: Callable[[SegmentBuffer], float]):
    """Lift an observer of root-model segments to a face run.

    The face trajectory's segment buffer is mirrored into a root-dimension
    buffer with zeros on the absent coordinates before each evaluation, so
    functionals of the full model (drift expressions, Lyapunov rates) can be
    averaged against a boundary measure.
    """
    active = list(sub.active)
    root = sub.root
    wide: SegmentBuffer | None = None

    def wrapped(buf: SegmentBuffer) -> float:
        nonlocal wide
        if wide is None:
            wide = SegmentBuffer(buf.r, buf.dt, root.n)
            wide.samples[:] = 0.0
            wide._filled = True
        wide.samples[:, active] = buf.samples
        wide.head = buf.head
        wide.t_now = buf.t_now
        return observe(wide)

    return wrapped


def _dirac_point(spec: ModelSpec, face: tuple[int, ...]) -> np.ndarray | None:
    """The face's ergodic measure as an exact point mass, if it is one."""
    if not face:
        if spec.is_fully_kolmogorov:
            return np.zeros(spec.n)
        return None
    if (
        spec.pack is not None
        and spec.pack.family == FAMILY_REPLICATOR
        and len(face) == 1
    ):
        point = np.zeros(spec.n)
        point[face[0]] = float(spec.pack.scal[0])
        return point
    return None


def lambda_pointwise(spec: ModelSpec, x0: np.ndarray, xr: np.ndarray, target: int) -> np.ndarray:
    """Invasion-rate integrand f_i - q_i/2 for coordinate ``target`` of
    ``spec``, on (m, n) full-dimension state arrays."""
    _, f, _ = spec.point_rates(x0, xr)
    q = spec.log_variance(x0, xr)
    return f[:, target] - 0.5 * q[:, target]


def estimate_lambda(
    spec: ModelSpec,
    face: Sequence[int],
    target: int,
    config: SimConfig,
    initial=None,
) -> ObservableStats:
    """Invasion rate of coordinate ``target`` against the face's measure.

    Coordinates supported on the face have rate exactly zero. Point-mass
    faces evaluate exactly; everything else runs one face trajectory and
    averages the integrand over its records.
    """
    face = tuple(sorted(set(int(i) for i in face)))
    if not 0 <= target < spec.n:
        raise ValueError(f"target {target} outside 0..{spec.n - 1}")
    if not spec.kolmogorov[target]:
        raise ValueError(
            f"coordinate {spec.coordinate_names[target]} has an additive "
            "source; invasion rates apply to multiplicative coordinates"
        )
    if target in face:
        return exact_stats(0.0)
    point = _dirac_point(spec, face)
    if point is not None:
        value = lambda_pointwise(spec, point[None, :], point[None, :], target)[0]
        return exact_stats(float(value))
    sub, result = face_run(spec, face, config, initial=initial)
    x0 = sub.embed(result.states)
    xr = sub.embed(result.delayed_states)
    series = lambda_pointwise(spec, x0, xr, target)
    return stats_from_series(series)


def time_average(
    spec: ModelSpec,
    face: Sequence[int],
    observable,
    config: SimConfig,
    initial=None,
) -> ObservableStats:
    """Ergodic average of an observable on a boundary face (or the interior).

    ``observable`` may be a coordinate index (average of X_i), a pair
    ("delayed", i) for X_i(t - r), or a vectorized callable on
    (states, delayed_states) arrays in the full model dimension.
    """
    face = tuple(sorted(set(int(i) for i in face))) if face is not None else tuple(range(spec.n))
    point = _dirac_point(spec, face)
    if point is not None:
        series_fn = _observable_fn(spec, observable)
        return exact_stats(float(series_fn(point[None, :], point[None, :])[0]))
    sub, result = face_run(spec, face, config, initial=initial)
    x0 = sub.embed(result.states)
    xr = sub.embed(result.delayed_states)
    series = _observable_fn(spec, observable)(x0, xr)
    return stats_from_series(series)


def _observable_fn(spec: ModelSpec, observable) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if callable(observable):
        return observable
    if isinstance(observable, (int, np.integer)):
        i = int(observable)
        return lambda x0, xr: x0[:, i]
    if (
        isinstance(observable, (tuple, list))
        and len(observable) == 2
        and observable[0] == "delayed"
    ):
        i = int(observable[1])
        return lambda x0, xr: xr[:, i]
    raise ValueError(f"unrecognized observable {observable!r}")


def occupation_histogram(result: SimResult) -> OccupationHistogram:
    """Histogram the recorded states of a run."""
    n = result.states.shape[1]
    hist = OccupationHistogram.empty(n)
    if result.states.shape[0]:
        hist.add_states(result.states)
    return hist


def replicate_stats(
    spec: ModelSpec,
    face: Sequence[int],
    target: int,
    config: SimConfig,
    stream_ids: Sequence[int],
) -> ObservableStats:
    """Merge invasion-rate estimates across replicate streams.

    Streams are merged in sorted order, so the result is independent of how
    the replicates were scheduled.
    """
    merged: ObservableStats | None = None
    for sid in sorted(int(s) for s in stream_ids):
        stats = estimate_lambda(spec, face, target, replace(config, stream_id=sid))
        if stats.exact:
            return stats
        merged = stats if merged is None else merge_stats(merged, stats)
    if merged is None:
        raise ValueError("no replicate streams given")
    return merged
