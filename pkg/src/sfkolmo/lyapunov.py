"""Lyapunov functionals and sampled audits of the structural assumptions.

The central object is the segment functional

    V_rho(phi) = (1 + c.x) * prod_i x_i^rho_i * exp(A2 * K(phi)),

where x = phi(0) and K is the exponential memory kernel
int mu(ds) int_s^0 e^{gamma (u-s)} h(phi(u)) du. Its logarithmic drift rate
along the dynamics splits into the five-term expression Q_0 plus the
rho-weighted per-capita growth; time averages of these expressions against
invariant measures satisfy exact identities that the tests exploit.

The drift/growth assumptions behind the theory are audited by Monte Carlo
over random segments rather than proved symbolically: each check evaluates
the relevant two-sided inequality at sampled segments and reports the
violation count and worst margin.

All scalar functions of the state (``h`` and friends) are vectorized along
the last axis: they accept an (..., n) array and return (...,).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConstraintInfeasible,
    DomainError,
    InvalidParameter,
    NonFinite,
    SingularDiffusion,
)
from .model import LVCompetitive, ModelSpec, build
from .segment import (
    DelayMeasure,
    KernelQuadrature,
    SegmentBuffer,
    integrate_measure,
    kernel_integral,
)


def default_h(states: np.ndarray) -> np.ndarray:
    """h(x) = 1 + |x| (Euclidean), along the last axis."""
    states = np.asarray(states, dtype=np.float64)
    return 1.0 + np.sqrt((states * states).sum(axis=-1))


@dataclass(frozen=True)
class LyapunovParams:
    """Constants of the drift condition and Lyapunov functional.

    Construction checks positivity and finiteness only; the ordering
    A1 > A2 and the weight/exponent smallness conditions are checked by
    ``validate`` so that audits may deliberately carry broken parameters.
    ``alt_*`` hold the two-sided growth variant (used by check_assumption_2
    when all four are set).
    """

    c: np.ndarray
    gamma_b: float
    gamma_0: float
    gamma: float
    A0: float
    A1: float
    A2: float
    M: float
    p0: float
    rho: np.ndarray
    h: Callable[[np.ndarray], np.ndarray] = default_h
    mu: DelayMeasure = DelayMeasure.dirac(0.0)
    alt_h1: Callable[[np.ndarray], np.ndarray] | None = None
    alt_mu1: DelayMeasure | None = None
    alt_b1: float | None = None
    alt_b2: float | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        rho = np.asarray(self.rho, dtype=np.float64)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "rho", rho)
        scalars = {
            "gamma_b": self.gamma_b, "gamma_0": self.gamma_0,
            "gamma": self.gamma, "A0": self.A0, "A1": self.A1,
            "A2": self.A2, "M": self.M, "p0": self.p0,
        }
        for name, value in scalars.items():
            if not math.isfinite(value):
                raise InvalidParameter(f"{name} = {value} is not finite")
        if rho.shape != c.shape:
            raise InvalidParameter(
                f"rho has shape {rho.shape}, c has shape {c.shape}"
            )
        if np.any(c <= 0) or not np.all(np.isfinite(c)):
            raise InvalidParameter("c must be strictly positive and finite")
        for name in ("gamma_b", "gamma_0", "gamma", "A0", "A1", "M"):
            if scalars[name] <= 0:
                raise InvalidParameter(f"{name} must be positive, got {scalars[name]}")
        if self.A2 < 0:
            raise InvalidParameter(f"A2 must be nonnegative, got {self.A2}")
        if not 0.0 < self.p0 < 1.0:
            raise InvalidParameter(f"p0 must lie in (0, 1), got {self.p0}")

    def validate(self, spec: ModelSpec | None = None) -> None:
        """Full invariant check: ordering and, given a model, the smallness
        bounds on |rho| and p0 relative to the noise strength."""
        if not self.A1 > self.A2 or self.A2 <= 0:
            raise InvalidParameter(
                f"need A1 > A2 > 0, got A1 = {self.A1}, A2 = {self.A2}"
            )
        if not self.gamma < self.gamma_b:
            raise InvalidParameter(
                f"gamma = {self.gamma} must be below gamma_b = {self.gamma_b}"
            )
        if spec is not None:
            n = spec.n
            sigma_up = float(spec.noise.sigma_diag.max())
            rho_cap = min(self.gamma_b / 2.0, 1.0 / n,
                          self.gamma_b / (4.0 * sigma_up))
            if float(np.abs(self.rho).sum()) >= rho_cap:
                raise InvalidParameter(
                    f"|rho| = {float(np.abs(self.rho).sum())} must be below {rho_cap}"
                )
            p0_cap = min(1.0, self.gamma_b / (8.0 * n * sigma_up))
            if self.p0 >= p0_cap:
                raise InvalidParameter(
                    f"p0 = {self.p0} must be below {p0_cap} for this noise"
                )

    def digest(self) -> str:
        payload = {
            "c": self.c.tolist(),
            "gamma_b": self.gamma_b, "gamma_0": self.gamma_0,
            "gamma": self.gamma, "A0": self.A0, "A1": self.A1,
            "A2": self.A2, "M": self.M, "p0": self.p0,
            "rho": self.rho.tolist(),
            "mu": [list(a) for a in self.mu.atoms],
            "h": getattr(self.h, "__name__", "h"),
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _h_floor(values: np.ndarray) -> None:
    if values.min() < 1.0 - 1e-9:
        raise InvalidParameter(
            f"h must map states into [1, inf); sampled minimum {values.min()}"
        )


# ---------------------------------------------------------------------------
# the functional and its drift expressions


def eval_V(params: LyapunovParams, buf: SegmentBuffer,
           rho: Sequence[float] | None = None) -> float:
    """(1 + c.x) * prod x_i^rho_i * exp(A2 * kernel integral)."""
    rho_vec = params.rho if rho is None else np.asarray(rho, dtype=np.float64)
    x = buf.state()
    if np.any((x == 0.0) & (rho_vec < 0.0)):
        raise DomainError(
            "x_i = 0 with rho_i < 0: the weighted functional diverges"
        )
    base = 1.0 + float(params.c @ x)
    power = float(np.prod(np.power(x, rho_vec)))
    kern = 0.0
    if params.A2 != 0.0:
        kern = kernel_integral(buf, params.mu, params.gamma, params.h)
    return base * power * math.exp(params.A2 * kern)


def eval_U(params: LyapunovParams, buf: SegmentBuffer,
           rho: Sequence[float] | None = None) -> float:
    """ln V evaluated directly in log space (requires positive state where
    rho is nonzero)."""
    rho_vec = params.rho if rho is None else np.asarray(rho, dtype=np.float64)
    x = buf.state()
    if np.any((x <= 0.0) & (rho_vec != 0.0)):
        raise DomainError("eval_U needs x_i > 0 wherever rho_i != 0")
    value = math.log1p(float(params.c @ x))
    live = rho_vec != 0.0
    if np.any(live):
        value += float(rho_vec[live] @ np.log(x[live]))
    if params.A2 != 0.0:
        value += params.A2 * kernel_integral(buf, params.mu, params.gamma,
                                             params.h)
    return value


def _quadrature(params: LyapunovParams, buf: SegmentBuffer) -> KernelQuadrature:
    return KernelQuadrature(params.mu, params.gamma, buf.dt, buf.length)


def eval_Q0(spec: ModelSpec, params: LyapunovParams, buf: SegmentBuffer,
            _kq: KernelQuadrature | None = None) -> float:
    """Five-term drift rate of ln V_0 along the dynamics.

    Kernel block (three A2 terms, exactly cancelling on constant segments)
    plus the drift ratio and the diffusion quadratic. Averages to zero
    against any interior invariant measure.
    """
    kq = _kq if _kq is not None else _quadrature(params, buf)
    x = buf.state()
    b, f, g = spec.rates(buf)
    c = params.c
    cx = 1.0 + float(c @ x)
    h_now = float(params.h(x))
    h_lag = params.h(buf.states_by_lag())
    kern_sum = kq.apply(h_lag)
    mu_now = integrate_measure(buf, params.mu, params.h)
    drift = float(c @ (b + x * f)) / cx
    w = c * x * g
    diff = 0.5 * float(w @ spec.noise.sigma @ w) / (cx * cx)
    value = (
        params.A2 * h_now * kq.exp_factor
        - params.A2 * mu_now
        - params.A2 * params.gamma * kern_sum
        + drift
        - diff
    )
    if not math.isfinite(value):
        raise NonFinite(f"Q0 evaluated to {value}")
    return value


def eval_Q_rho_star(spec: ModelSpec, params: LyapunovParams,
                    rho_star: Sequence[float], buf: SegmentBuffer,
                    _kq: KernelQuadrature | None = None) -> float:
    """Q_0 minus the rho*-weighted invasion integrand f_i - sigma_ii g_i^2/2.

    Its average against the measure on an occupied face I is
    -sum_{i not in I} rho*_i lambda_i(pi_I).
    """
    rho_vec = np.asarray(rho_star, dtype=np.float64)
    q0 = eval_Q0(spec, params, buf, _kq=_kq)
    _, f, g = spec.rates(buf)
    growth = f - 0.5 * spec.noise.sigma_diag * g * g
    value = q0 - float(rho_vec @ growth)
    if not math.isfinite(value):
        raise NonFinite(f"Q_rho evaluated to {value}")
    return value


def q0_observer(spec: ModelSpec, params: LyapunovParams):
    """Observer closure for simulate(): records Q0 along the path."""
    cache: dict[tuple, KernelQuadrature] = {}

    def observe(buf: SegmentBuffer) -> float:
        key = (buf.dt, buf.length)
        kq = cache.get(key)
        if kq is None:
            kq = _quadrature(params, buf)
            cache[key] = kq
        return eval_Q0(spec, params, buf, _kq=kq)

    return observe


def q_rho_observer(spec: ModelSpec, params: LyapunovParams,
                   rho_star: Sequence[float]):
    """Observer closure recording Q_rho* along the path."""
    rho_vec = np.asarray(rho_star, dtype=np.float64)
    cache: dict[tuple, KernelQuadrature] = {}

    def observe(buf: SegmentBuffer) -> float:
        key = (buf.dt, buf.length)
        kq = cache.get(key)
        if kq is None:
            kq = _quadrature(params, buf)
            cache[key] = kq
        return eval_Q_rho_star(spec, params, rho_vec, buf, _kq=kq)

    return observe


# ---------------------------------------------------------------------------
# segment sampling


class SegmentSampler:
    """Random piecewise-linear segments with log-uniform knot values.

    Each of the ``knots`` evenly spaced knots on [-r, 0] draws every
    coordinate log-uniformly from [floor, bound]; values in between are
    linear interpolants. Exercises small and large states and genuinely
    nonconstant history.
    """

    def __init__(self, spec: ModelSpec, bound: float, seed: int = 0,
                 dt: float | None = None, knots: int = 8,
                 floor: float = 1e-4):
        if bound <= floor:
            raise InvalidParameter(
                f"sampler bound {bound} must exceed the floor {floor}"
            )
        self.spec = spec
        self.bound = float(bound)
        self.seed = int(seed)
        self.knots = int(knots)
        self.floor = float(floor)
        if dt is None:
            dt = spec.r / 64.0 if spec.r > 0 else 1e-2
        self.dt = float(dt)
        self._rng = np.random.default_rng(seed)

    def with_bound(self, bound: float) -> "SegmentSampler":
        return SegmentSampler(self.spec, bound, seed=self.seed + 1,
                              dt=self.dt, knots=self.knots, floor=self.floor)

    def sample(self) -> SegmentBuffer:
        spec = self.spec
        lo, hi = math.log10(self.floor), math.log10(self.bound)
        values = 10.0 ** self._rng.uniform(lo, hi, size=(self.knots, spec.n))
        if spec.r == 0.0:
            return SegmentBuffer.from_constant(0.0, self.dt, values[0])
        times = np.linspace(-spec.r, 0.0, self.knots)

        def shape(s: float) -> np.ndarray:
            out = np.empty(spec.n)
            for i in range(spec.n):
                out[i] = np.interp(s, times, values[:, i])
            return out

        return SegmentBuffer.from_function(spec.r, self.dt, shape, spec.n)


# ---------------------------------------------------------------------------
# assumption audits


@dataclass
class AssumptionAudit:
    """Sampled-inequality report: violations are data, not errors."""

    assumption: str
    samples: int
    violations: int
    worst_margin: float | None
    params_digest: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "assumption": self.assumption,
            "samples": self.samples,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "params_digest": self.params_digest,
        }
        out.update(self.extra)
        return out


def _growth_sum(spec: ModelSpec, buf: SegmentBuffer) -> float:
    _, f, g = spec.rates(buf)
    return float(np.abs(f).sum() + (g * g).sum())


def check_assumption_1_3(spec: ModelSpec, params: LyapunovParams,
                         sampler: SegmentSampler,
                         n_samples: int) -> AssumptionAudit:
    """Audit the drift condition at sampled segments.

    Left side: the c-weighted drift ratio, minus half the diffusion
    quadratic, plus gamma_b times the total growth. Right side:
    A0 1_{|x|<M} - gamma_0 - A1 h(x) + A2 int h dmu. Margin = RHS - LHS;
    negative margins are violations.
    """
    if n_samples == 0:
        return AssumptionAudit(
            assumption="assumption_1_3", samples=0, violations=0,
            worst_margin=None, params_digest=params.digest(),
            extra={"vacuous": True},
        )
    violations = 0
    worst = math.inf
    c = params.c
    for _ in range(n_samples):
        buf = sampler.sample()
        x = buf.state()
        b, f, g = spec.rates(buf)
        cx = 1.0 + float(c @ x)
        w = c * x * g
        lhs = (
            float(c @ (b + x * f)) / cx
            - 0.5 * float(w @ spec.noise.sigma @ w) / (cx * cx)
            + params.gamma_b * float(np.abs(f).sum() + (g * g).sum())
        )
        h_now = float(params.h(x))
        h_mu = integrate_measure(buf, params.mu, params.h)
        _h_floor(np.array([h_now]))
        indicator = 1.0 if float(np.sqrt(x @ x)) < params.M else 0.0
        rhs = (
            params.A0 * indicator
            - params.gamma_0
            - params.A1 * h_now
            + params.A2 * h_mu
        )
        margin = rhs - lhs
        if margin < 0:
            violations += 1
        worst = min(worst, margin)
    return AssumptionAudit(
        assumption="assumption_1_3", samples=n_samples, violations=violations,
        worst_margin=worst, params_digest=params.digest(),
    )


def check_assumption_2(spec: ModelSpec, params: LyapunovParams,
                       sampler: SegmentSampler,
                       n_samples: int) -> AssumptionAudit:
    """Audit the growth bound and report the smallest feasible constant.

    Default form: sum(|f_i| + g_i^2) <= K [h(x) + int h dmu]; the report
    carries K = sup of the sampled ratio. When the params hold the full
    two-sided alternative (h1, mu1, b1, b2), that display is audited
    instead, with violations counted on both sides.

    A growth mismatch (K estimate inflating with the sampler bound) is
    flagged ``unbounded_trend`` by re-sampling at a tenth of the bound.
    """
    digest = params.digest()
    if n_samples == 0:
        return AssumptionAudit(
            assumption="assumption_2", samples=0, violations=0,
            worst_margin=None, params_digest=digest,
            extra={"vacuous": True},
        )
    alt = (params.alt_h1, params.alt_mu1, params.alt_b1, params.alt_b2)
    if any(v is not None for v in alt):
        if any(v is None for v in alt):
            raise InvalidParameter(
                "two-sided growth audit needs all of h1, mu1, b1, b2"
            )
        violations = 0
        worst = math.inf
        for _ in range(n_samples):
            buf = sampler.sample()
            x = buf.state()
            total = _growth_sum(spec, buf)
            h1_now = float(params.alt_h1(x))
            upper = params.alt_b2 * (
                h1_now + integrate_measure(buf, params.alt_mu1, params.alt_h1)
            )
            lower = params.alt_b1 * h1_now
            margin = min(total - lower, upper - total)
            if margin < 0:
                violations += 1
            worst = min(worst, margin)
        return AssumptionAudit(
            assumption="assumption_2", samples=n_samples,
            violations=violations, worst_margin=worst, params_digest=digest,
            extra={"form": "two-sided"},
        )

    def largest_ratio(smp: SegmentSampler) -> float:
        top = 0.0
        for _ in range(n_samples):
            buf = smp.sample()
            total = _growth_sum(spec, buf)
            denom = float(params.h(buf.state())) + integrate_measure(
                buf, params.mu, params.h
            )
            top = max(top, total / denom)
        return top

    k_tilde = largest_ratio(sampler)
    k_small = largest_ratio(sampler.with_bound(max(sampler.bound / 10.0,
                                                   sampler.floor * 10.0)))
    trend = k_tilde > 3.0 * max(k_small, 1e-300)
    return AssumptionAudit(
        assumption="assumption_2", samples=n_samples, violations=0,
        worst_margin=0.0, params_digest=digest,
        extra={"k_tilde": k_tilde, "unbounded_trend": trend, "form": "growth"},
    )


def _combined_measure(spec: ModelSpec) -> DelayMeasure:
    measures = list(spec.delay_measures.values())
    if not measures:
        return DelayMeasure.dirac(-spec.r)
    if len(measures) == 1:
        return measures[0]
    weight = 1.0 / len(measures)
    pairs = []
    for m in measures:
        pairs.extend((s, w * weight) for s, w in m.atoms)
    return DelayMeasure.mix(pairs)


def check_assumption_4(spec: ModelSpec, sampler: SegmentSampler,
                       n_samples: int, d0: float,
                       D0: float) -> AssumptionAudit:
    """Audit the polynomial-Lipschitz bound and the diffusion invertibility.

    For sampled segment pairs, each of f_i, g_i, g_i^2 must change by at
    most D0 |x1-x2| |1+x1+x2|^d0 plus the matching delayed integral. The
    inverse of the diffusion matrix (g_i g_j sigma_ij) is evaluated at every
    sample and its largest operator norm reported; a non-invertible sample
    raises SingularDiffusion.
    """
    digest = hashlib.sha256(
        json.dumps({"d0": d0, "D0": D0}, sort_keys=True).encode()
    ).hexdigest()[:16]
    if n_samples == 0:
        return AssumptionAudit(
            assumption="assumption_4", samples=0, violations=0,
            worst_margin=None, params_digest=digest,
            extra={"vacuous": True},
        )
    mu = _combined_measure(spec)
    sigma = spec.noise.sigma
    violations = 0
    worst = math.inf
    inv_norm_max = 0.0
    for _ in range(n_samples):
        buf1 = sampler.sample()
        buf2 = sampler.sample()
        x1, x2 = buf1.state(), buf2.state()
        _, f1, g1 = spec.rates(buf1)
        _, f2, g2 = spec.rates(buf2)
        grow = float(np.sqrt(((1.0 + x1 + x2) ** 2).sum())) ** d0
        bound = D0 * float(np.sqrt(((x1 - x2) ** 2).sum())) * grow
        for s, w in mu.atoms:
            p1, p2 = buf1.tap(s), buf2.tap(s)
            g_lag = float(np.sqrt(((1.0 + p1 + p2) ** 2).sum())) ** d0
            bound += D0 * w * float(np.sqrt(((p1 - p2) ** 2).sum())) * g_lag
        deltas = np.concatenate([
            np.abs(f1 - f2), np.abs(g1 - g2), np.abs(g1 * g1 - g2 * g2),
        ])
        margin = float(bound - deltas.max())
        if margin < 0:
            violations += 1
        worst = min(worst, margin)
        diffusion = np.outer(g1, g1) * sigma
        try:
            inverse = np.linalg.inv(diffusion)
        except np.linalg.LinAlgError as exc:
            raise SingularDiffusion(
                f"diffusion matrix singular at a sampled segment: {exc}"
            ) from exc
        norm = float(np.linalg.norm(inverse, 2))
        if not math.isfinite(norm):
            raise SingularDiffusion("diffusion inverse overflowed at a sample")
        inv_norm_max = max(inv_norm_max, norm)
    return AssumptionAudit(
        assumption="assumption_4", samples=n_samples, violations=violations,
        worst_margin=worst, params_digest=digest,
        extra={"inverse_norm_max": inv_norm_max, "d0": d0, "D0": D0},
    )


# ---------------------------------------------------------------------------
# parameter recipe for competitive LV


def suggest_params_lv(catalog: LVCompetitive) -> LyapunovParams:
    """Concrete drift-condition constants for a competitive LV model.

    Follows the explicit construction chain: a self-damping margin b1*
    dominating the delayed coupling b2*, cutoff radii from the quadratic
    drift, rate constants from the displayed inequalities with a factor-two
    safety margin, A2 < A1 placed inside their admissible window, and A0
    from a grid supremum of the bounded-region terms.
    """
    spec = build(catalog)
    n = spec.n
    a = np.asarray(catalog.a, dtype=np.float64)
    b = np.asarray(catalog.b, dtype=np.float64)
    b_hat = (
        np.zeros_like(b)
        if catalog.b_hat is None
        else np.asarray(catalog.b_hat, dtype=np.float64)
    )
    sigma = spec.noise.sigma
    sum_a = float(a.sum())
    sum_b = float(b.sum())
    sum_bh = float(np.abs(b_hat).sum())
    b_min = float(np.diag(b).min())

    b1_star = b_min / (2.0 * n)
    b2_star = max(math.sqrt(n) * float(np.abs(b_hat).max()) * 1.01,
                  b1_star / 100.0)
    if b2_star >= b1_star:
        raise ConstraintInfeasible(
            f"delayed coupling too strong: b2* = {b2_star} >= b1* = {b1_star}"
        )
    eigs = np.linalg.eigvalsh(sigma)
    sigma_low = float(eigs.min()) / (4.0 * n)
    m1 = 10.0
    slope = b_min / n - b1_star
    m2 = (sum_a + b_min / n + b1_star) / slope + 1.0
    big_m = max(m1, m2) + 1.0

    gamma_b = 0.5 * min(
        b1_star / (2.0 * sum_a),
        sigma_low / 2.0,
        (b1_star - b2_star) / (sum_b + sum_bh),
    )
    gamma_0 = 0.5 * (b1_star / 2.0 - gamma_b * sum_a)
    lo = b2_star + gamma_b * sum_bh
    hi = b1_star - gamma_b * sum_b
    if not lo < hi:
        raise ConstraintInfeasible(
            f"A-window empty: lower {lo} not below upper {hi}"
        )
    a2 = lo + 0.25 * (hi - lo)
    a1 = lo + 0.75 * (hi - lo)

    points = max(5, int(round(2e5 ** (1.0 / n))))
    axes = [np.linspace(0.0, big_m, points)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    x = np.stack([m.ravel() for m in mesh], axis=1)
    lin = 1.0 + x.sum(axis=1)
    quad = np.einsum("mi,ij,mj->m", x, sigma, x) / (lin * lin)
    drift = (x * (a[None, :] - x @ b.T)).sum(axis=1) / lin
    sup_term = float((quad + drift).max())
    a0 = (
        gamma_0
        + a1 * (1.0 + big_m)
        + gamma_b * (sum_a + big_m * sum_b + n)
        + big_m * sum_a
        + sup_term
    )
    a0 = a0 * 1.05 + 0.1

    sigma_up = float(spec.noise.sigma_diag.max())
    p0 = 0.5 * min(1.0, gamma_b / (8.0 * n * sigma_up))
    params = LyapunovParams(
        c=np.ones(n),
        gamma_b=gamma_b,
        gamma_0=gamma_0,
        gamma=gamma_b / 2.0,
        A0=a0,
        A1=a1,
        A2=a2,
        M=big_m,
        p0=p0,
        rho=np.zeros(n),
        h=default_h,
        mu=DelayMeasure.dirac(-float(catalog.r)),
    )
    params.validate(spec)
    return params
