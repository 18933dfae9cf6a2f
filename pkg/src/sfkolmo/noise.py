"""Correlated driving noise.

The n coordinates share a k-dimensional standard Brownian motion B through a
loading matrix ``gamma`` (k x n): the drivers are E(t) = gamma^T B(t) with
covariation matrix ``sigma = gamma^T gamma``. Increments over a step dt are
gamma^T z sqrt(dt) for z ~ N(0, I_k).

Streams are counter-based (Philox) and keyed by (seed, stream_id), so any
replicate can be regenerated bit-for-bit in isolation and in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite, SingularCovariance

# Relative floor on the smallest Cholesky pivot of sigma.
_PIVOT_RTOL = 1e-10


@dataclass(frozen=True)
class NoiseSpec:
    """Validated noise loading.

    Attributes
    ----------
    gamma : ndarray, shape (k, n)
        Loading matrix mapping the k Brownian drivers to the n coordinates.
    sigma : ndarray, shape (n, n)
        Covariation matrix gamma^T gamma (strictly positive definite).
    dimension : int
        Number of driven coordinates n.
    """

    gamma: np.ndarray
    sigma: np.ndarray
    dimension: int

    @property
    def n_drivers(self) -> int:
        return self.gamma.shape[0]

    @property
    def sigma_diag(self) -> np.ndarray:
        return np.diag(self.sigma).copy()

    def restrict(self, active: tuple[int, ...]) -> "NoiseSpec":
        """Noise spec for a coordinate subset, sharing the same drivers.

        Keeping all k drivers means a restricted model consumes the same
        Brownian path as its parent; only the loading columns shrink.
        """
        cols = list(active)
        gamma = self.gamma[:, cols]
        return NoiseSpec(gamma=gamma, sigma=gamma.T @ gamma, dimension=len(cols))


@dataclass
class RngStream:
    """A restartable noise stream keyed by (seed, stream_id)."""

    seed: int
    stream_id: int
    _gen: np.random.Generator | None = field(default=None, repr=False)

    def generator(self) -> np.random.Generator:
        """The stream's generator; created at its origin on first use."""
        if self._gen is None:
            key = np.array([self.seed, self.stream_id], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def reset(self) -> None:
        self._gen = None

    def spawn(self, *key: int) -> np.random.Generator:
        """An auxiliary generator derived from this stream and extra key words.

        Used for rare side draws (bridged substeps) that must not perturb the
        main stream's consumption pattern.
        """
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, *key)
        )
        return np.random.Generator(np.random.Philox(ss))


def validate_noise(gamma: np.ndarray) -> NoiseSpec:
    """Check a loading matrix and derive its covariation.

    Raises
    ------
    NonFinite
        If gamma contains NaN or infinite entries.
    SingularCovariance
        If gamma^T gamma is singular or numerically indefinite.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim != 2 or gamma.shape[0] < 1 or gamma.shape[1] < 1:
        raise ValueError(f"gamma must be a 2-d matrix, got shape {gamma.shape}")
    if not np.all(np.isfinite(gamma)):
        raise NonFinite("gamma contains non-finite entries")
    sigma = gamma.T @ gamma
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise SingularCovariance(
            "gamma^T gamma is not positive definite"
        ) from None
    pivots = np.diag(chol)
    if pivots.min() <= _PIVOT_RTOL * pivots.max():
        raise SingularCovariance(
            f"smallest Cholesky pivot {pivots.min():.3e} below tolerance"
        )
    g = gamma.copy()
    g.setflags(write=False)
    sigma.setflags(write=False)
    return NoiseSpec(gamma=g, sigma=sigma, dimension=gamma.shape[1])


def sample_increments(
    spec: NoiseSpec, dt: float, stream: RngStream, count: int
) -> np.ndarray:
    """Draw ``count`` driver increments over steps of length ``dt``.

    Returns an array of shape (count, n); row m is gamma^T z_m sqrt(dt).
    Consecutive calls continue the stream; recreating the stream replays it.
    """
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    z = stream.generator().standard_normal((count, spec.n_drivers))
    return (z @ spec.gamma) * np.sqrt(dt)
