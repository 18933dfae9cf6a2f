"""Model specifications and the built-in model catalog.

Every model is an n-coordinate SDE with memory,

    dX_i = (b_i(X_t) + X_i f_i(X_t)) dt + X_i g_i(X_t) dE_i(t),

where X_t is the history segment over [-r, 0] and E = gamma^T B is the
correlated driving noise. Coordinates with b_i identically zero have
multiplicative (Kolmogorov) structure: they stay positive and may be pinned
to zero on a boundary face. Coordinates with an additive source term (the
"affine" ones, like a chemostat substrate) can never be pinned.

The catalog covers five families; each compiles to a parameter pack the
stepping core understands. Custom models plug in through plain callables and
run on the generic (slower) path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, NonExtinguishable, NonFinite
from .noise import NoiseSpec, validate_noise
from .segment import DelayMeasure, SegmentBuffer

# Stepping-core family codes.
FAMILY_GENERIC = 0
FAMILY_LV = 1
FAMILY_SIR = 2
FAMILY_CHEMOSTAT = 3
FAMILY_REPLICATOR = 4

_EMPTY = np.zeros(0, dtype=np.float64)
_EMPTY2 = np.zeros((0, 0), dtype=np.float64)


@dataclass(frozen=True)
class KernelPack:
    """Flat parameter pack consumed by the stepping core.

    The meaning of the arrays depends on ``family``:

    - LV:         vec = alpha, mat = beta, mat2 = beta_hat
    - SIR:        scal = (a, b1, b2, c1, c2), or (a, b1) for the S-only face
    - CHEMOSTAT:  scal = (recycle,), vec = m, vec2 = k
    - REPLICATOR: scal = (total,), vec = sigma, mat = payoff
    """

    family: int
    scal: np.ndarray = field(default_factory=lambda: _EMPTY)
    vec: np.ndarray = field(default_factory=lambda: _EMPTY)
    vec2: np.ndarray = field(default_factory=lambda: _EMPTY)
    mat: np.ndarray = field(default_factory=lambda: _EMPTY2)
    mat2: np.ndarray = field(default_factory=lambda: _EMPTY2)


PointRates = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class ModelSpec:
    """A fully validated model, ready to simulate.

    ``point_rates(x0, xr)`` evaluates the rate split (b, f, g) on arrays of
    current states x0 and delayed states xr, both (m, n); this is the form
    observers and invasion-rate integrands use. ``rates(buf)`` evaluates the
    same split on a live segment buffer (needed for models whose rates read
    more of the segment than the single -r tap).

    ``active`` are this spec's coordinate indices in the root model; for an
    unrestricted spec it is (0, ..., n-1).
    """

    n: int
    r: float
    noise: NoiseSpec
    kolmogorov: tuple[bool, ...]
    coordinate_names: tuple[str, ...]
    delay_measures: Mapping[str, DelayMeasure]
    point_rates: PointRates
    rates: Callable[[SegmentBuffer], tuple[np.ndarray, np.ndarray, np.ndarray]]
    log_variance: Callable[[np.ndarray, np.ndarray], np.ndarray]
    pack: KernelPack | None = None
    catalog: "CatalogModel | None" = None
    parent: "ModelSpec | None" = None
    active: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.active:
            object.__setattr__(self, "active", tuple(range(self.n)))

    @property
    def is_fully_kolmogorov(self) -> bool:
        return all(self.kolmogorov)

    @property
    def affine_indices(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kolmogorov) if not k)

    @property
    def root(self) -> "ModelSpec":
        spec = self
        while spec.parent is not None:
            spec = spec.parent
        return spec

    def embed(self, states: np.ndarray) -> np.ndarray:
        """Zero-embed (m, n) sub-states into the root model's dimension."""
        states = np.atleast_2d(states)
        out = np.zeros((states.shape[0], self.root.n), dtype=np.float64)
        out[:, list(self.active)] = states
        return out


# ---------------------------------------------------------------------------
# catalog models


class CatalogModel:
    """Base marker for catalog entries."""

    name: str = ""

    def validate(self) -> None:
        raise NotImplementedError

    def spec(self) -> ModelSpec:
        raise NotImplementedError


def _as_vector(x, n: int, label: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size != n:
        raise InvalidParameter(f"{label} must have {n} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"{label} contains non-finite entries")
    return arr


def _as_matrix(x, n: int, label: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (n, n):
        raise InvalidParameter(f"{label} must be {n}x{n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"{label} contains non-finite entries")
    return arr


def _default_gamma(n: int):
    return np.eye(n)


def _single_tap_rates(spec_r: float, point: PointRates):
    """Lift a (x0, xr) pointwise rate function to a segment-buffer one."""

    def rates(buf: SegmentBuffer):
        x0 = buf.state()[None, :]
        xr = buf.tap(-spec_r)[None, :] if spec_r > 0 else x0
        b, f, g = point(x0, xr)
        return b[0], f[0], g[0]

    return rates


def _diag_log_variance(sigma_diag: np.ndarray, point: PointRates):
    """Default log-coordinate variance rate q_i = sigma_ii g_i^2."""

    def log_variance(x0: np.ndarray, xr: np.ndarray) -> np.ndarray:
        _, _, g = point(x0, xr)
        return g * g * sigma_diag[None, :]

    return log_variance


@dataclass(frozen=True)
class LVCompetitive(CatalogModel):
    """Competitive Lotka-Volterra with a delayed interaction term.

    f_i = a_i - sum_j b_ij x_j(0) - sum_j b_hat_ij x_j(-r),  g_i = 1.

    Constraints: a_i > 0; b_ij >= 0; b_ii > 0; b_hat_ij > -b_ii.
    """

    a: Sequence[float]
    b: Sequence[Sequence[float]]
    b_hat: Sequence[Sequence[float]] | None = None
    r: float = 0.0
    gamma: Sequence[Sequence[float]] | None = None

    name = "LVCompetitive"

    def validate(self) -> None:
        a = np.asarray(self.a, dtype=np.float64).ravel()
        n = a.size
        b = _as_matrix(self.b, n, "b")
        b_hat = (
            np.zeros((n, n))
            if self.b_hat is None
            else _as_matrix(self.b_hat, n, "b_hat")
        )
        if self.r < 0:
            raise InvalidParameter(f"r must be nonnegative (r >= 0), got {self.r}")
        for i in range(n):
            if not a[i] > 0:
                raise InvalidParameter(f"a[{i}] = {a[i]} violates a_i > 0")
            if not b[i, i] > 0:
                raise InvalidParameter(f"b[{i}][{i}] = {b[i, i]} violates b_ii > 0")
            for j in range(n):
                if b[i, j] < 0:
                    raise InvalidParameter(
                        f"b[{i}][{j}] = {b[i, j]} violates b_ij >= 0"
                    )
                if not b_hat[i, j] > -b[i, i]:
                    raise InvalidParameter(
                        f"b_hat[{i}][{j}] = {b_hat[i, j]} violates b_hat_ij > -b_ii"
                    )

    def spec(self) -> ModelSpec:
        self.validate()
        a = np.asarray(self.a, dtype=np.float64).ravel()
        n = a.size
        b = _as_matrix(self.b, n, "b")
        b_hat = (
            np.zeros((n, n))
            if self.b_hat is None
            else _as_matrix(self.b_hat, n, "b_hat")
        )
        gamma = _default_gamma(n) if self.gamma is None else np.asarray(self.gamma)
        return _lv_family_spec(a, b, b_hat, self.r, gamma, self, names=None)


@dataclass(frozen=True)
class PredatorPrey3(CatalogModel):
    """Three-species food web: prey x1, mid predator x2, top predator x3.

    f_1 = a_1 - b_11 x_1 - b_12 x_2 - b_13 x_3
    f_2 = -a_2 + b_21 x_1 - b_22 x_2 - b_23 x_3
    f_3 = -a_3 + b_31 x_1 - b_32 x_2 - b_33 x_3

    with matching-sign delayed terms from b_hat, g_i = 1. ``a`` holds the
    prey growth rate and the two predator death rates, all positive;
    b_ij >= 0 with b_ii > 0; b_hat_ij >= 0.
    """

    a: Sequence[float]
    b: Sequence[Sequence[float]]
    b_hat: Sequence[Sequence[float]] | None = None
    r: float = 0.0
    gamma: Sequence[Sequence[float]] | None = None

    name = "PredatorPrey3"

    def validate(self) -> None:
        a = _as_vector(self.a, 3, "a")
        b = _as_matrix(self.b, 3, "b")
        b_hat = (
            np.zeros((3, 3)) if self.b_hat is None else _as_matrix(self.b_hat, 3, "b_hat")
        )
        if self.r < 0:
            raise InvalidParameter(f"r must be nonnegative (r >= 0), got {self.r}")
        for i in range(3):
            if not a[i] > 0:
                raise InvalidParameter(f"a[{i}] = {a[i]} violates a_i > 0")
            if not b[i, i] > 0:
                raise InvalidParameter(f"b[{i}][{i}] = {b[i, i]} violates b_ii > 0")
            for j in range(3):
                if b[i, j] < 0:
                    raise InvalidParameter(f"b[{i}][{j}] = {b[i, j]} violates b_ij >= 0")
                if b_hat[i, j] < 0:
                    raise InvalidParameter(
                        f"b_hat[{i}][{j}] = {b_hat[i, j]} violates b_hat_ij >= 0"
                    )

    def _signed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Fold the food-web sign pattern into plain LV-form coefficients."""
        a = _as_vector(self.a, 3, "a")
        b = _as_matrix(self.b, 3, "b")
        b_hat = (
            np.zeros((3, 3)) if self.b_hat is None else _as_matrix(self.b_hat, 3, "b_hat")
        )
        sign = np.ones((3, 3))
        sign[1, 0] = sign[2, 0] = -1.0  # predators gain from prey
        alpha = np.array([a[0], -a[1], -a[2]])
        return alpha, sign * b, sign * b_hat

    def spec(self) -> ModelSpec:
        self.validate()
        alpha, beta, beta_hat = self._signed()
        gamma = _default_gamma(3) if self.gamma is None else np.asarray(self.gamma)
        return _lv_family_spec(alpha, beta, beta_hat, self.r, gamma, self, names=None)


def _lv_family_spec(
    alpha: np.ndarray,
    beta: np.ndarray,
    beta_hat: np.ndarray,
    r: float,
    gamma: np.ndarray,
    catalog: CatalogModel | None,
    names: tuple[str, ...] | None,
) -> ModelSpec:
    n = alpha.size
    noise = validate_noise(gamma)
    if noise.dimension != n:
        raise InvalidParameter(
            f"gamma has {noise.dimension} columns for an {n}-coordinate model"
        )
    alpha = np.ascontiguousarray(alpha)
    beta = np.ascontiguousarray(beta)
    beta_hat = np.ascontiguousarray(beta_hat)

    def point(x0: np.ndarray, xr: np.ndarray):
        f = alpha[None, :] - x0 @ beta.T - xr @ beta_hat.T
        return np.zeros_like(f), f, np.ones_like(f)

    pack = KernelPack(family=FAMILY_LV, vec=alpha, mat=beta, mat2=beta_hat)
    return ModelSpec(
        n=n,
        r=float(r),
        noise=noise,
        kolmogorov=(True,) * n,
        coordinate_names=names or tuple(f"X_{i + 1}" for i in range(n)),
        delay_measures={"interaction": DelayMeasure.dirac(-float(r))},
        point_rates=point,
        rates=_single_tap_rates(float(r), point),
        log_variance=_diag_log_variance(noise.sigma_diag, point),
        pack=pack,
        catalog=catalog,
    )


@dataclass(frozen=True)
class Replicator(CatalogModel):
    """Stochastic replicator on the simplex sum x_i = total.

    Strategies carry linear payoffs phi_i = sum_j payoff_ij x_j(-r); each
    coordinate grows at its payoff minus the population-weighted average,
    with noise sigma_i dE_i recentred by the weighted-average noise so the
    total is conserved. Constraints: total > 0; sigma_i >= 0.
    """

    payoff: Sequence[Sequence[float]]
    sigma: Sequence[float]
    total: float = 1.0
    r: float = 0.0

    name = "Replicator"

    def validate(self) -> None:
        sigma = np.asarray(self.sigma, dtype=np.float64).ravel()
        n = sigma.size
        _as_matrix(self.payoff, n, "payoff")
        if not self.total > 0:
            raise InvalidParameter(f"total = {self.total} violates total > 0")
        if np.any(sigma < 0):
            raise InvalidParameter("sigma entries must be nonnegative")
        if self.r < 0:
            raise InvalidParameter(f"r must be nonnegative (r >= 0), got {self.r}")

    def spec(self) -> ModelSpec:
        self.validate()
        sigma = np.ascontiguousarray(np.asarray(self.sigma, dtype=np.float64).ravel())
        n = sigma.size
        payoff = np.ascontiguousarray(_as_matrix(self.payoff, n, "payoff"))
        return _replicator_spec(payoff, sigma, float(self.total), float(self.r), self)


def _replicator_spec(
    payoff: np.ndarray,
    sigma: np.ndarray,
    total: float,
    r: float,
    catalog: CatalogModel | None,
    names: tuple[str, ...] | None = None,
) -> ModelSpec:
    n = sigma.size
    noise = validate_noise(np.eye(n))

    def point(x0: np.ndarray, xr: np.ndarray):
        phi = xr @ payoff.T
        favg = (x0 * phi).sum(axis=1) / total
        f = phi - favg[:, None]
        return np.zeros_like(f), f, np.broadcast_to(sigma, f.shape).copy()

    def log_variance(x0: np.ndarray, xr: np.ndarray) -> np.ndarray:
        # Quadratic variation rate of ln x_i under the recentred noise
        # x_i (sigma_i dE_i - (1/total) sum_j sigma_j x_j dE_j).
        s2 = ((sigma[None, :] * x0 / total) ** 2).sum(axis=1)
        return sigma[None, :] ** 2 * (1.0 - 2.0 * x0 / total) + s2[:, None]

    pack = KernelPack(
        family=FAMILY_REPLICATOR,
        scal=np.array([total]),
        vec=sigma,
        mat=payoff,
    )
    return ModelSpec(
        n=n,
        r=r,
        noise=noise,
        kolmogorov=(True,) * n,
        coordinate_names=names or tuple(f"X_{i + 1}" for i in range(n)),
        delay_measures={"payoff": DelayMeasure.dirac(-r)},
        point_rates=point,
        rates=_single_tap_rates(r, point),
        log_variance=log_variance,
        pack=pack,
        catalog=catalog,
    )


@dataclass(frozen=True)
class SIR(CatalogModel):
    """Susceptible-infected dynamics with recruitment and delayed transmission.

    dS = (a - b1 S - c1 S I - c2 I S(-r)) dt + S dE_S
    dI = I (-b2 + c1 S + c2 S(-r)) dt + I dE_I

    S has an additive recruitment source (affine coordinate, never pinned);
    I is Kolmogorov. Constraints: a > 0; b1 > 0; b2 > 0; c1, c2 >= 0.
    """

    a: float = 1.0
    b1: float = 1.0
    b2: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    r: float = 0.0
    gamma: Sequence[Sequence[float]] | None = None

    name = "SIR"

    def validate(self) -> None:
        for label, value, strict in (
            ("a", self.a, True),
            ("b1", self.b1, True),
            ("b2", self.b2, True),
            ("c1", self.c1, False),
            ("c2", self.c2, False),
        ):
            bound = "> 0" if strict else ">= 0"
            ok = value > 0 if strict else value >= 0
            if not ok:
                raise InvalidParameter(f"{label} = {value} violates {label} {bound}")
        if self.r < 0:
            raise InvalidParameter(f"r must be nonnegative (r >= 0), got {self.r}")

    def spec(self) -> ModelSpec:
        self.validate()
        gamma = _default_gamma(2) if self.gamma is None else np.asarray(self.gamma)
        noise = validate_noise(gamma)
        if noise.dimension != 2:
            raise InvalidParameter("gamma must have 2 columns for SIR")
        scal = np.array([self.a, self.b1, self.b2, self.c1, self.c2])

        def point(x0: np.ndarray, xr: np.ndarray):
            a, b1, b2, c1, c2 = scal
            b = np.zeros_like(x0)
            f = np.zeros_like(x0)
            b[:, 0] = a - c2 * x0[:, 1] * xr[:, 0]
            f[:, 0] = -b1 - c1 * x0[:, 1]
            f[:, 1] = -b2 + c1 * x0[:, 0] + c2 * xr[:, 0]
            return b, f, np.ones_like(x0)

        pack = KernelPack(family=FAMILY_SIR, scal=scal)
        return ModelSpec(
            n=2,
            r=float(self.r),
            noise=noise,
            kolmogorov=(False, True),
            coordinate_names=("S", "I"),
            delay_measures={"transmission": DelayMeasure.dirac(-float(self.r))},
            point_rates=point,
            rates=_single_tap_rates(float(self.r), point),
            log_variance=_diag_log_variance(noise.sigma_diag, point),
            pack=pack,
            catalog=self,
        )


@dataclass(frozen=True)
class Chemostat(CatalogModel):
    """Chemostat with delayed nutrient recycling and Monod uptake.

    dS   = (1 - S + a S(-r) - sum_i x_i p_i(S)) dt + S dE_0
    dx_i = x_i (p_i(S(-r)) - 1) dt + x_i dE_i,   p_i(S) = m_i S / (k_i + S).

    Time and dilution are normalized to 1. S is affine (never pinned).
    Constraints: 0 <= recycle < 1; m_i > 0; k_i > 0.
    """

    m: Sequence[float]
    k: Sequence[float]
    recycle: float = 0.0
    r: float = 0.0
    gamma: Sequence[Sequence[float]] | None = None

    name = "Chemostat"

    def validate(self) -> None:
        m = np.asarray(self.m, dtype=np.float64).ravel()
        k = _as_vector(self.k, m.size, "k")
        if not 0.0 <= self.recycle < 1.0:
            raise InvalidParameter(
                f"recycle = {self.recycle} violates 0 <= recycle < 1"
            )
        for i in range(m.size):
            if not m[i] > 0:
                raise InvalidParameter(f"m[{i}] = {m[i]} violates m_i > 0")
            if not k[i] > 0:
                raise InvalidParameter(f"k[{i}] = {k[i]} violates k_i > 0")
        if self.r < 0:
            raise InvalidParameter(f"r must be nonnegative (r >= 0), got {self.r}")

    def spec(self) -> ModelSpec:
        self.validate()
        m = np.ascontiguousarray(np.asarray(self.m, dtype=np.float64).ravel())
        k = np.ascontiguousarray(_as_vector(self.k, m.size, "k"))
        n = m.size + 1
        gamma = _default_gamma(n) if self.gamma is None else np.asarray(self.gamma)
        noise = validate_noise(gamma)
        if noise.dimension != n:
            raise InvalidParameter(
                f"gamma must have {n} columns (substrate + {m.size} species)"
            )
        return _chemostat_spec(m, k, float(self.recycle), float(self.r), noise, self)


def _chemostat_spec(
    m: np.ndarray,
    k: np.ndarray,
    recycle: float,
    r: float,
    noise: NoiseSpec,
    catalog: CatalogModel | None,
    names: tuple[str, ...] | None = None,
) -> ModelSpec:
    n = m.size + 1

    def point(x0: np.ndarray, xr: np.ndarray):
        b = np.zeros_like(x0)
        f = np.zeros_like(x0)
        b[:, 0] = 1.0 + recycle * xr[:, 0]
        f[:, 0] = -1.0
        if m.size:
            f[:, 0] -= (x0[:, 1:] * (m[None, :] / (k[None, :] + x0[:, :1]))).sum(axis=1)
            f[:, 1:] = m[None, :] * xr[:, :1] / (k[None, :] + xr[:, :1]) - 1.0
        return b, f, np.ones_like(x0)

    pack = KernelPack(
        family=FAMILY_CHEMOSTAT, scal=np.array([recycle]), vec=m, vec2=k
    )
    return ModelSpec(
        n=n,
        r=r,
        noise=noise,
        kolmogorov=(False,) + (True,) * m.size,
        coordinate_names=names
        or ("S",) + tuple(f"X_{i + 1}" for i in range(m.size)),
        delay_measures={"recycling": DelayMeasure.dirac(-r)},
        point_rates=point,
        rates=_single_tap_rates(r, point),
        log_variance=_diag_log_variance(noise.sigma_diag, point),
        pack=pack,
        catalog=catalog,
    )


# ---------------------------------------------------------------------------
# public constructors

CATALOG: dict[str, type[CatalogModel]] = {
    "LVCompetitive": LVCompetitive,
    "PredatorPrey3": PredatorPrey3,
    "Replicator": Replicator,
    "SIR": SIR,
    "Chemostat": Chemostat,
}

CATALOG_CONSTRAINTS: dict[str, str] = {
    "LVCompetitive": "a_i > 0; b_ij >= 0; b_ii > 0; b_hat_ij > -b_ii",
    "PredatorPrey3": "a_i > 0; b_ij >= 0; b_ii > 0; b_hat_ij >= 0",
    "Replicator": "total > 0; sigma_i >= 0; payoff square",
    "SIR": "a > 0; b1 > 0; b2 > 0; c1 >= 0; c2 >= 0",
    "Chemostat": "0 <= recycle < 1; m_i > 0; k_i > 0",
}


def build(catalog: CatalogModel) -> ModelSpec:
    """Validate a catalog entry and produce its ModelSpec.

    Raises InvalidParameter with a message naming the violated constraint.
    """
    if not isinstance(catalog, CatalogModel):
        raise TypeError(f"expected a catalog model, got {type(catalog).__name__}")
    return catalog.spec()


def custom_model(
    n: int,
    r: float,
    gamma: np.ndarray,
    kolmogorov: Sequence[bool],
    point_rates: PointRates,
    log_variance: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    rates: Callable[[SegmentBuffer], tuple] | None = None,
    delay_measures: Mapping[str, DelayMeasure] | None = None,
    coordinate_names: Sequence[str] | None = None,
) -> ModelSpec:
    """Build a non-catalog model from a pointwise rate split.

    Runs on the generic stepping path (no compiled kernel).
    """
    noise = validate_noise(gamma)
    if noise.dimension != n:
        raise DimensionMismatch(f"gamma has {noise.dimension} columns, model has {n}")
    return ModelSpec(
        n=n,
        r=float(r),
        noise=noise,
        kolmogorov=tuple(bool(k) for k in kolmogorov),
        coordinate_names=tuple(coordinate_names)
        if coordinate_names
        else tuple(f"X_{i + 1}" for i in range(n)),
        delay_measures=dict(delay_measures) if delay_measures else {"lag": DelayMeasure.dirac(-float(r))},
        point_rates=point_rates,
        rates=rates or _single_tap_rates(float(r), point_rates),
        log_variance=log_variance or _diag_log_variance(noise.sigma_diag, point_rates),
        pack=None,
        catalog=None,
    )


# ---------------------------------------------------------------------------
# face restriction


def restrict_to_face(spec: ModelSpec, face: Sequence[int]) -> ModelSpec:
    """Model on the boundary face keeping only the coordinates in ``face``.

    Only Kolmogorov coordinates can be pinned to zero; coordinates with an
    additive source (chemostat substrate, SIR susceptibles) are retained even
    when omitted from ``face``. The restricted model shares the parent's
    Brownian drivers so sample paths agree across faces.
    """
    requested = set(int(i) for i in face)
    for i in requested:
        if i < 0 or i >= spec.n:
            raise DimensionMismatch(f"face index {i} outside 0..{spec.n - 1}")
    face = tuple(sorted(requested | set(spec.affine_indices)))
    if len(face) == spec.n:
        return spec
    if not face:
        if spec.pack is not None and spec.pack.family == FAMILY_REPLICATOR:
            raise NonExtinguishable(
                "the simplex constraint keeps the total positive; the empty "
                "face is not reachable for a replicator"
            )
        raise ValueError(
            "the empty face carries no dynamics (it is the origin point "
            "mass); evaluate it analytically instead of restricting"
        )

    sub = _restricted_spec(spec, face)
    object.__setattr__(sub, "active", tuple(spec.active[i] for i in face))
    object.__setattr__(sub, "parent", spec)
    return sub


def _restricted_spec(spec: ModelSpec, face: tuple[int, ...]) -> ModelSpec:
    idx = list(face)
    names = tuple(spec.coordinate_names[i] for i in idx)
    pack = spec.pack
    if pack is not None:
        if pack.family == FAMILY_LV:
            return _lv_family_spec(
                pack.vec[idx],
                np.ascontiguousarray(pack.mat[np.ix_(idx, idx)]),
                np.ascontiguousarray(pack.mat2[np.ix_(idx, idx)]),
                spec.r,
                spec.noise.gamma[:, idx],
                spec.catalog,
                names,
            )
        if pack.family == FAMILY_REPLICATOR:
            return _replicator_spec(
                np.ascontiguousarray(pack.mat[np.ix_(idx, idx)]),
                np.ascontiguousarray(pack.vec[idx]),
                float(pack.scal[0]),
                spec.r,
                spec.catalog,
                names,
            )
        if pack.family == FAMILY_SIR:
            # Only the S-only face reaches here (I dropped).
            a, b1 = float(pack.scal[0]), float(pack.scal[1])
            scal = np.array([a, b1])

            def point(x0: np.ndarray, xr: np.ndarray):
                b = np.zeros_like(x0)
                f = np.zeros_like(x0)
                b[:, 0] = scal[0]
                f[:, 0] = -scal[1]
                return b, f, np.ones_like(x0)

            noise = spec.noise.restrict((0,))
            return ModelSpec(
                n=1,
                r=spec.r,
                noise=noise,
                kolmogorov=(False,),
                coordinate_names=names,
                delay_measures=dict(spec.delay_measures),
                point_rates=point,
                rates=_single_tap_rates(spec.r, point),
                log_variance=_diag_log_variance(noise.sigma_diag, point),
                pack=KernelPack(family=FAMILY_SIR, scal=scal),
                catalog=spec.catalog,
            )
        if pack.family == FAMILY_CHEMOSTAT:
            species = [i - 1 for i in idx if i > 0]
            return _chemostat_spec(
                np.ascontiguousarray(pack.vec[species]),
                np.ascontiguousarray(pack.vec2[species]),
                float(pack.scal[0]),
                spec.r,
                spec.noise.restrict(face),
                spec.catalog,
                names,
            )

    # Generic path: evaluate the parent's rates at zero-embedded states.
    parent_point = spec.point_rates
    parent_logvar = spec.log_variance
    cols = idx

    def embed(arr: np.ndarray) -> np.ndarray:
        full = np.zeros((arr.shape[0], spec.n), dtype=np.float64)
        full[:, cols] = arr
        return full

    def point(x0: np.ndarray, xr: np.ndarray):
        b, f, g = parent_point(embed(x0), embed(xr))
        return b[:, cols], f[:, cols], g[:, cols]

    def log_variance(x0: np.ndarray, xr: np.ndarray) -> np.ndarray:
        return parent_logvar(embed(x0), embed(xr))[:, cols]

    return ModelSpec(
        n=len(idx),
        r=spec.r,
        noise=spec.noise.restrict(face),
        kolmogorov=tuple(spec.kolmogorov[i] for i in idx),
        coordinate_names=names,
        delay_measures=dict(spec.delay_measures),
        point_rates=point,
        rates=_single_tap_rates(spec.r, point),
        log_variance=log_variance,
        pack=None,
        catalog=spec.catalog,
    )


# ---------------------------------------------------------------------------
# pointwise evaluation on live buffers


def _checked_buffer(spec: ModelSpec, buf: SegmentBuffer) -> None:
    if buf.n != spec.n:
        raise DimensionMismatch(
            f"buffer carries {buf.n} coordinates, model has {spec.n}"
        )


def eval_drift(spec: ModelSpec, buf: SegmentBuffer) -> np.ndarray:
    """Full drift vector b(X_t) + x * f(X_t) at the buffer's current segment."""
    _checked_buffer(spec, buf)
    b, f, _ = spec.rates(buf)
    out = b + buf.state() * f
    if not np.all(np.isfinite(out)):
        raise NonFinite("drift evaluation produced non-finite entries")
    return out


def eval_diffusion(spec: ModelSpec, buf: SegmentBuffer) -> np.ndarray:
    """Diffusion loading x * g(X_t) on each coordinate's own driver."""
    _checked_buffer(spec, buf)
    _, _, g = spec.rates(buf)
    out = buf.state() * g
    if not np.all(np.isfinite(out)):
        raise NonFinite("diffusion evaluation produced non-finite entries")
    return out
