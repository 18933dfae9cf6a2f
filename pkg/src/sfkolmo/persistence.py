"""Persistence certificates from boundary-face invasion rates.

The boundary of the state space decomposes into faces indexed by the subset
I of multiplicative coordinates allowed to be positive. Each occupied face
carries an ergodic measure pi_I; the certificate seeks simplex weights rho
making the weighted invasion rate sum_i rho_i lambda_i(pi) strictly positive
on every occupied boundary face. The optimal weights solve a small linear
program whose value kappa_LP normalizes to the certificate margin
kappa_star = kappa_LP / 2.

Face occupancy is decided hierarchically: a face is reachable only if every
occupied strict sub-face can be invaded by some coordinate the face adds.
Estimates whose confidence interval straddles zero leave that decision
inconclusive; such faces are retained pessimistically (they only add
constraints) and flagged in the diagnostics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .engine import SimConfig, simulate
from .ergodic import (
    ObservableStats,
    OccupationHistogram,
    _dirac_point,
    exact_stats,
    face_run,
    frequency_in_band,
    lambda_pointwise,
    occupation_histogram,
    stats_from_series,
)
from .errors import EmptyHistogram, InfeasibleLP, SingularSystem
from .model import (
    FAMILY_LV,
    FAMILY_REPLICATOR,
    FAMILY_SIR,
    FAMILY_CHEMOSTAT,
    ModelSpec,
)

RHO_MIN = 1e-3

PERSISTENT = "Persistent"
CRITERION_FAILS = "CriterionFails"
INCONCLUSIVE = "Inconclusive"


@dataclass
class FaceMeasureEstimate:
    """Invasion rates and abundance means against one face's measure.

    ``lam`` maps each multiplicative coordinate to its estimated invasion
    rate; coordinates supported on the face are exactly zero. ``conclusive``
    is False when the occupancy decision rested on a straddling interval.
    """

    face: tuple[int, ...]
    occupied: bool
    conclusive: bool = True
    lam: dict[int, ObservableStats] = field(default_factory=dict)
    means: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "I": list(self.face),
            "occupied": self.occupied,
            "conclusive": self.conclusive,
            "lambda": [
                {"i": i, "mean": s.mean, "ci": s.ci_half_width}
                for i, s in sorted(self.lam.items())
            ],
            "means": {str(i): v for i, v in sorted(self.means.items())},
        }


@dataclass
class PersistenceReport:
    classification: str
    kappa_star: float
    rho_star: dict[int, float]
    face_table: list[FaceMeasureEstimate]
    diagnostics: dict

    def to_dict(self, model: str = "custom", seeds: Sequence[int] = (),
                config_digest: str = "") -> dict:
        return {
            "model": model,
            "classification": self.classification,
            "kappa_star": self.kappa_star,
            "rho_star": {str(i): v for i, v in sorted(self.rho_star.items())},
            "faces": [f.to_dict() for f in self.face_table],
            "seeds": list(seeds),
            "config_digest": config_digest,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# face enumeration and the boundary scan


def _kol_indices(spec: ModelSpec) -> tuple[int, ...]:
    return tuple(i for i, k in enumerate(spec.kolmogorov) if k)


def candidate_faces(spec: ModelSpec) -> list[tuple[int, ...]]:
    """Boundary faces in scan order: increasing size, then lexicographic.

    Faces are subsets of the multiplicative coordinates (the affine ones are
    implicitly present everywhere). The full set is the interior, not a
    boundary face, and is excluded. A replicator additionally excludes the
    empty set (the simplex total cannot vanish).
    """
    kol = _kol_indices(spec)
    smallest = 1 if (
        spec.pack is not None and spec.pack.family == FAMILY_REPLICATOR
    ) else 0
    faces: list[tuple[int, ...]] = []
    for size in range(smallest, len(kol)):
        faces.extend(itertools.combinations(kol, size))
    return faces


def measure_face(
    spec: ModelSpec,
    face: Sequence[int],
    config: SimConfig,
) -> FaceMeasureEstimate:
    """Estimate all invasion rates and coordinate means against one face.

    Point-mass faces evaluate exactly; otherwise one trajectory on the face
    serves every target coordinate.
    """
    face = tuple(sorted(int(i) for i in face))
    kol = _kol_indices(spec)
    est = FaceMeasureEstimate(face=face, occupied=True)
    point = _dirac_point(spec, face)
    if point is not None:
        for i in kol:
            if i in face:
                est.lam[i] = exact_stats(0.0)
            else:
                value = lambda_pointwise(spec, point[None, :], point[None, :], i)[0]
                est.lam[i] = exact_stats(float(value))
        for i in range(spec.n):
            est.means[i] = float(point[i])
        return est
    sub, result = face_run(spec, face, config)
    x0 = sub.embed(result.states)
    xr = sub.embed(result.delayed_states)
    for i in kol:
        if i in face:
            est.lam[i] = exact_stats(0.0)
        else:
            est.lam[i] = stats_from_series(lambda_pointwise(spec, x0, xr, i))
    for i in range(spec.n):
        est.means[i] = float(x0[:, i].mean())
    return est


def boundary_scan(spec: ModelSpec, config: SimConfig) -> list[FaceMeasureEstimate]:
    """Estimate measures on all reachable boundary faces.

    Faces are visited by increasing size. A face is occupied when every
    occupied strict sub-face is invadable by at least one coordinate the
    face adds (its rate confidently positive); it is unoccupied when some
    sub-face blocks all of them (rates confidently negative); anything in
    between is marked inconclusive and retained.

    Each simulated face uses its own replicate stream (config.stream_id
    plus the face's ordinal), so the scan is reproducible face-by-face.
    """
    estimates: dict[tuple[int, ...], FaceMeasureEstimate] = {}
    table: list[FaceMeasureEstimate] = []
    for ordinal, face in enumerate(candidate_faces(spec)):
        occupied, conclusive = _occupancy(face, estimates)
        if occupied:
            cfg = replace(config, stream_id=config.stream_id + ordinal)
            est = measure_face(spec, face, cfg)
            est.conclusive = conclusive
            estimates[face] = est
        else:
            est = FaceMeasureEstimate(face=face, occupied=False,
                                      conclusive=conclusive)
        table.append(est)
    return table


def _occupancy(
    face: tuple[int, ...],
    occupied_so_far: dict[tuple[int, ...], FaceMeasureEstimate],
) -> tuple[bool, bool]:
    """(occupied, conclusive) for a face given the occupied sub-faces."""
    conclusive = True
    for sub_face, est in occupied_so_far.items():
        if not set(sub_face) < set(face):
            continue
        added = [i for i in face if i not in sub_face]
        invadable = False
        blocked = True
        for i in added:
            s = est.lam[i]
            if s.mean - s.ci_half_width > 0:
                invadable = True
            if not (s.mean + s.ci_half_width < 0):
                blocked = False
        if blocked:
            return False, True
        if not invadable:
            conclusive = False
    return True, conclusive


# ---------------------------------------------------------------------------
# the certificate linear program


def _lambda_matrix(
    table: Sequence[FaceMeasureEstimate],
    kol: tuple[int, ...],
    shift: float,
) -> np.ndarray:
    """Rows: occupied faces; columns: lambda means shifted by ``shift`` CI
    widths (exact entries have zero width, so they never move)."""
    rows = []
    for est in table:
        if not est.occupied:
            continue
        rows.append(
            [est.lam[i].mean + shift * est.lam[i].ci_half_width for i in kol]
        )
    return np.asarray(rows, dtype=np.float64)


def simplex_maximize(
    c: np.ndarray,
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Dense two-phase simplex: maximize c.x, A_ub x <= b_ub, A_eq x = b_eq,
    x >= 0. Bland's rule, so it cannot cycle. Problems here are tiny."""
    n = c.size
    rows = [(np.asarray(r, dtype=np.float64), float(v), "ub")
            for r, v in zip(a_ub, b_ub)]
    rows += [(np.asarray(r, dtype=np.float64), float(v), "eq")
             for r, v in zip(a_eq, b_eq)]
    m = len(rows)
    n_slack = sum(1 for _, _, kind in rows if kind == "ub")
    total = n + n_slack + m  # artificials for every row keep phase 1 simple
    tab = np.zeros((m, total))
    rhs = np.zeros(m)
    basis = []
    si = 0
    for r, (arow, bval, kind) in enumerate(rows):
        sign = 1.0 if bval >= 0 else -1.0
        tab[r, :n] = sign * arow
        rhs[r] = sign * bval
        if kind == "ub":
            tab[r, n + si] = sign
            si += 1
        tab[r, n + n_slack + r] = 1.0
        basis.append(n + n_slack + r)

    def pivot(obj: np.ndarray, goal_cols: int):
        while True:
            red = obj.copy()
            for r, bv in enumerate(basis):
                if obj[bv] != 0.0:
                    red -= obj[bv] * tab[r]
            enter = -1
            for jcol in range(goal_cols):
                if red[jcol] > 1e-11:
                    enter = jcol
                    break
            if enter < 0:
                return
            ratio = np.inf
            leave = -1
            for r in range(m):
                if tab[r, enter] > 1e-11:
                    q = rhs[r] / tab[r, enter]
                    if q < ratio - 1e-14 or (
                        abs(q - ratio) <= 1e-14
                        and (leave < 0 or basis[r] < basis[leave])
                    ):
                        ratio = q
                        leave = r
            if leave < 0:
                raise InfeasibleLP("linear program unbounded")
            piv = tab[leave, enter]
            tab[leave] /= piv
            rhs[leave] /= piv
            for r in range(m):
                if r != leave and tab[r, enter] != 0.0:
                    rhs[r] -= tab[r, enter] * rhs[leave]
                    tab[r] -= tab[r, enter] * tab[leave]
            basis[leave] = enter

    # Phase 1: drive the artificials out.
    phase1 = np.zeros(total)
    phase1[n + n_slack:] = -1.0
    pivot(phase1, n + n_slack)
    art_value = sum(rhs[r] for r, bv in enumerate(basis) if bv >= n + n_slack)
    if art_value > 1e-8:
        raise InfeasibleLP("no feasible point satisfies the constraints")
    # Pivot any zero-level artificial out of the basis so phase 2 cannot
    # drift it positive (its row is degenerate, so feasibility is kept).
    for r in range(m):
        if basis[r] < n + n_slack:
            continue
        for jcol in range(n + n_slack):
            if abs(tab[r, jcol]) > 1e-9:
                piv = tab[r, jcol]
                tab[r] /= piv
                rhs[r] /= piv
                for o in range(m):
                    if o != r and tab[o, jcol] != 0.0:
                        rhs[o] -= tab[o, jcol] * rhs[r]
                        tab[o] -= tab[o, jcol] * tab[r]
                basis[r] = jcol
                break
        # An all-zero row is redundant; it never binds, so it may stay.
    # Phase 2 on the original objective (artificial columns frozen).
    phase2 = np.zeros(total)
    phase2[:n] = c
    tab[:, n + n_slack:] = 0.0
    pivot(phase2, n + n_slack)
    x = np.zeros(n)
    for r, bv in enumerate(basis):
        if bv < n:
            x[bv] = rhs[r]
    return x, float(c @ x)


def _solve_certificate(lam: np.ndarray, rho_min: float) -> tuple[np.ndarray, float]:
    """max kappa s.t. lam_J . rho >= kappa, rho >= rho_min, sum rho = 1."""
    n_faces, n = lam.shape
    slack_total = 1.0 - n * rho_min
    if slack_total < 0:
        raise InfeasibleLP(
            f"{n} coordinates cannot each carry weight {rho_min} within the simplex"
        )
    # Variables: u_1..u_n (rho = rho_min + u), kappa+, kappa-.
    c = np.zeros(n + 2)
    c[n] = 1.0
    c[n + 1] = -1.0
    a_ub = np.zeros((n_faces, n + 2))
    b_ub = np.zeros(n_faces)
    for j in range(n_faces):
        a_ub[j, :n] = -lam[j]
        a_ub[j, n] = 1.0
        a_ub[j, n + 1] = -1.0
        b_ub[j] = rho_min * lam[j].sum()
    a_eq = np.zeros((1, n + 2))
    a_eq[0, :n] = 1.0
    b_eq = np.array([slack_total])
    x, _ = simplex_maximize(c, a_ub, b_ub, a_eq, b_eq)
    rho = rho_min + x[:n]
    kappa = float((lam @ rho).min())
    return rho, kappa


def find_rho_star(
    table: Sequence[FaceMeasureEstimate],
    kol: Sequence[int],
    rho_min: float = RHO_MIN,
) -> tuple[dict[int, float], float, float]:
    """Optimal certificate weights over the occupied faces.

    Returns (rho_star by coordinate, kappa_star, kappa_LP) with
    kappa_star = kappa_LP / 2.
    """
    kol = tuple(kol)
    lam = _lambda_matrix(table, kol, shift=0.0)
    if lam.shape[0] == 0:
        raise InfeasibleLP("no occupied boundary faces to constrain the program")
    rho, kappa_lp = _solve_certificate(lam, rho_min)
    rho_star = {i: float(rho[j]) for j, i in enumerate(kol)}
    return rho_star, kappa_lp / 2.0, kappa_lp


def grid_kappa(
    lam: np.ndarray,
    rho_min: float = RHO_MIN,
    resolution: float = 1e-5,
) -> tuple[np.ndarray, float]:
    """Brute-force certificate search on a simplex grid.

    Independent check of the linear program: walks rho over an evenly spaced
    grid (step ``resolution`` for up to two free coordinates, coarsened for
    three) and maximizes the worst-face weighted rate directly.
    """
    lam = np.atleast_2d(np.asarray(lam, dtype=np.float64))
    n = lam.shape[1]
    if n == 1:
        rho = np.array([1.0])
        return rho, float((lam @ rho).min())
    if n == 3 and resolution < 1e-3:
        resolution = 1e-3
    if n > 3:
        raise ValueError("grid oracle supports up to three coordinates")
    best_rho = None
    best = -np.inf
    if n == 2:
        grid = np.arange(rho_min, 1.0 - rho_min + resolution / 2, resolution)
        for r1 in grid:
            rho = np.array([r1, 1.0 - r1])
            if rho[1] < rho_min - 1e-12:
                continue
            value = float((lam @ rho).min())
            if value > best:
                best = value
                best_rho = rho
    else:
        grid = np.arange(rho_min, 1.0 - 2 * rho_min + resolution / 2, resolution)
        for r1 in grid:
            for r2 in np.arange(rho_min, 1.0 - r1 - rho_min + resolution / 2,
                                resolution):
                r3 = 1.0 - r1 - r2
                if r3 < rho_min - 1e-12:
                    continue
                rho = np.array([r1, r2, r3])
                value = float((lam @ rho).min())
                if value > best:
                    best = value
                    best_rho = rho
    return best_rho, best


def classify(
    spec: ModelSpec,
    config: SimConfig,
    table: Sequence[FaceMeasureEstimate] | None = None,
    rho_min: float = RHO_MIN,
) -> PersistenceReport:
    """Scan the boundary and classify the interior behaviour.

    Persistent only if the certificate value stays positive with every rate
    at its unfavorable interval endpoint; CriterionFails only if it stays
    negative at the favorable endpoints; otherwise Inconclusive.
    """
    if table is None:
        table = boundary_scan(spec, config)
    kol = _kol_indices(spec)
    rho_star, kappa_star, kappa_lp = find_rho_star(table, kol, rho_min)
    _, kappa_lo = _solve_certificate(_lambda_matrix(table, kol, -1.0), rho_min)
    _, kappa_hi = _solve_certificate(_lambda_matrix(table, kol, +1.0), rho_min)
    if kappa_lo / 2.0 > 0:
        label = PERSISTENT
    elif kappa_hi / 2.0 < 0:
        label = CRITERION_FAILS
    else:
        label = INCONCLUSIVE
    diagnostics = {
        "kappa_lp": kappa_lp,
        "kappa_lower": kappa_lo / 2.0,
        "kappa_upper": kappa_hi / 2.0,
        "inconclusive_faces": [
            list(e.face) for e in table if e.occupied and not e.conclusive
        ],
        "occupied_faces": [list(e.face) for e in table if e.occupied],
    }
    return PersistenceReport(
        classification=label,
        kappa_star=kappa_star,
        rho_star=rho_star,
        face_table=list(table),
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# analytic thresholds


@dataclass(frozen=True)
class ThresholdEntry:
    """One closed-form (or explicitly simulation-only) boundary quantity."""

    name: str
    face: tuple[int, ...]
    target: int
    value: float | None
    note: str = ""


def _face_label(face: tuple[int, ...]) -> str:
    return "pi_{" + ",".join(str(i + 1) for i in face) + "}" if face else "delta*"


def analytic_threshold(spec: ModelSpec) -> list[ThresholdEntry]:
    """Closed-form invasion rates where the model structure allows them.

    Linear (LV-type) models solve each face's stationary-mean linear system;
    the linear-incidence SIR face mean is exact; replicator vertices are
    point masses. Nonlinear averages (chemostat uptake, mixed replicator
    faces) are marked simulation-only. Raises SingularSystem when a face's
    mean system is singular.
    """
    if spec.pack is None:
        return [
            ThresholdEntry(
                name="all",
                face=(),
                target=-1,
                value=None,
                note="requires simulation (no closed form for custom models)",
            )
        ]
    family = spec.pack.family
    if family == FAMILY_LV:
        return _lv_thresholds(spec)
    if family == FAMILY_SIR:
        return _sir_thresholds(spec)
    if family == FAMILY_REPLICATOR:
        return _replicator_thresholds(spec)
    if family == FAMILY_CHEMOSTAT:
        return _chemostat_thresholds(spec)
    raise ValueError(f"unknown kernel family {family}")


def face_equilibrium(spec: ModelSpec, face: Sequence[int]) -> dict[int, float]:
    """Exact stationary means on a face of a linear-drift (LV-type) model.

    Solves the per-coordinate balance: interactions evaluated at the means
    absorb the net growth a_i - sigma_ii/2 of every supported coordinate
    (delayed and instantaneous couplings share one mean under stationarity).
    Raises SingularSystem when the face's interaction block is singular and
    ValueError when any solved mean is nonpositive (the face then carries no
    interior equilibrium) or the model has no linear closed form.
    """
    if spec.pack is None or spec.pack.family != FAMILY_LV:
        raise ValueError("face equilibria in closed form need a linear-drift model")
    face = tuple(sorted(set(int(i) for i in face)))
    if not face:
        return {}
    idx = list(face)
    inter = spec.pack.mat + spec.pack.mat2
    sub = inter[np.ix_(idx, idx)]
    if abs(np.linalg.det(sub)) < 1e-12:
        raise SingularSystem(f"stationary-mean system on face {face} is singular")
    rhs = spec.pack.vec[idx] - 0.5 * spec.noise.sigma_diag[idx]
    sol = np.linalg.solve(sub, rhs)
    if np.any(sol <= 0):
        raise ValueError(f"face {face} has no interior equilibrium (means {sol})")
    return {i: float(v) for i, v in zip(idx, sol)}


def _lv_thresholds(spec: ModelSpec) -> list[ThresholdEntry]:
    pack = spec.pack
    alpha = pack.vec
    inter = pack.mat + pack.mat2  # stationarity makes delayed means equal
    sig = spec.noise.sigma_diag
    n = spec.n
    entries: list[ThresholdEntry] = []
    for size in range(n):
        for face in itertools.combinations(range(n), size):
            means = np.zeros(n)
            if face:
                try:
                    solved = face_equilibrium(spec, face)
                except ValueError:
                    continue  # no interior equilibrium on this face
                means[list(face)] = [solved[i] for i in face]
            for i in range(n):
                if i in face:
                    continue
                value = float(
                    alpha[i] - inter[i] @ means - 0.5 * sig[i]
                )
                entries.append(
                    ThresholdEntry(
                        name=f"lambda_{i + 1}({_face_label(face)})",
                        face=face,
                        target=i,
                        value=value,
                    )
                )
    return entries


def _sir_thresholds(spec: ModelSpec) -> list[ThresholdEntry]:
    if spec.n != 2:
        return []
    a, b1, b2, c1, c2 = (float(v) for v in spec.pack.scal)
    s_mean = a / b1
    value = -b2 + (c1 + c2) * s_mean - 0.5 * float(spec.noise.sigma[1, 1])
    return [
        ThresholdEntry(
            name="mean_S(pi_{S})", face=(), target=0, value=s_mean,
            note="exact: linear drift",
        ),
        ThresholdEntry(
            name="lambda_I(pi_{S})", face=(), target=1, value=value,
            note="exact for linear incidence",
        ),
    ]


def _replicator_thresholds(spec: ModelSpec) -> list[ThresholdEntry]:
    pack = spec.pack
    payoff = pack.mat
    sigma = pack.vec
    total = float(pack.scal[0])
    n = spec.n
    entries: list[ThresholdEntry] = []
    for v in range(n):
        for i in range(n):
            if i == v:
                continue
            value = float(
                (payoff[i, v] - payoff[v, v]) * total
                - 0.5 * (sigma[i] ** 2 + sigma[v] ** 2)
            )
            entries.append(
                ThresholdEntry(
                    name=f"lambda_{i + 1}(delta_{v + 1})",
                    face=(v,),
                    target=i,
                    value=value,
                    note="vertex point mass",
                )
            )
    if n > 2:
        entries.append(
            ThresholdEntry(
                name="mixed faces", face=(), target=-1, value=None,
                note="requires simulation (non-vertex faces)",
            )
        )
    return entries


def _chemostat_thresholds(spec: ModelSpec) -> list[ThresholdEntry]:
    recycle = float(spec.pack.scal[0])
    s_mean = 1.0 / (1.0 - recycle)
    entries = [
        ThresholdEntry(
            name="mean_S(pi_{S})", face=(), target=0, value=s_mean,
            note="exact: linear drift",
        )
    ]
    for i in range(1, spec.n):
        entries.append(
            ThresholdEntry(
                name=f"lambda_{spec.coordinate_names[i]}(pi_{{S}})",
                face=(),
                target=i,
                value=None,
                note="requires simulation (nonlinear uptake average)",
            )
        )
    return entries


# ---------------------------------------------------------------------------
# empirical persistence check


@dataclass
class EmpiricalCheck:
    """Occupation evidence that the interior path stays in a compact band."""

    radius: float
    frequencies: np.ndarray
    satisfied: bool
    epsilon: float
    histogram: OccupationHistogram


def empirical_persistence_check(
    spec: ModelSpec,
    config: SimConfig,
    epsilon: float = 0.05,
    initial=None,
) -> EmpiricalCheck:
    """Smallest band [1/R, R] holding every coordinate with frequency
    >= 1 - epsilon on an interior run; falls back to the largest band when
    none suffices."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if initial is None:
        initial = np.ones(spec.n)
    result = simulate(spec, initial, config)
    hist = occupation_histogram(result)
    if result.states.shape[0] == 0:
        raise EmptyHistogram("run recorded no states (T equals burn_in?)")
    best: tuple[float, np.ndarray] | None = None
    for j in range(hist.counts.shape[1] // 2, hist.edges.size):
        radius = float(hist.edges[j])
        snapped, freqs = frequency_in_band(hist, radius)
        if freqs.min() >= 1.0 - epsilon:
            return EmpiricalCheck(
                radius=snapped, frequencies=freqs, satisfied=True,
                epsilon=epsilon, histogram=hist,
            )
        best = (snapped, freqs)
    assert best is not None
    return EmpiricalCheck(
        radius=best[0], frequencies=best[1], satisfied=False,
        epsilon=epsilon, histogram=hist,
    )
