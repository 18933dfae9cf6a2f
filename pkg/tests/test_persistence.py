from __future__ import annotations

import numpy as np
import pytest

import sfkolmo as sk
from sfkolmo.errors import InfeasibleLP, SingularSystem
from sfkolmo.persistence import RHO_MIN, FaceMeasureEstimate


def _estimate(face, lam_means, cis=None, means=None):
    """Build a face estimate from plain numbers (exact when ci is omitted)."""
    lam = {}
    for i, m in lam_means.items():
        ci = 0.0 if cis is None else cis.get(i, 0.0)
        if ci == 0.0:
            lam[i] = sk.exact_stats(m)
        else:
            lam[i] = sk.ObservableStats(
                mean=m,
                batch_count=30,
                batch_size=10,
                batch_means_variance=1.0,
                ci_half_width=ci,
            )
    return FaceMeasureEstimate(
        face=tuple(face), occupied=True, lam=lam, means=means or {}
    )


def _lv_exact_table():
    # hand-solved rates of the coexisting pair a=(3,2), b=[[2,1],[1,2]]
    return [
        _estimate((), {0: 2.5, 1: 1.5}),
        _estimate((0,), {0: 0.0, 1: 0.25}, means={0: 1.25}),
        _estimate((1,), {0: 1.75, 1: 0.0}, means={1: 0.75}),
    ]


# ---------------------------------------------------------------------------
# face enumeration


def test_candidate_faces(lv_coexist, pp3, sir_gentle):
    assert sk.candidate_faces(lv_coexist) == [(), (0,), (1,)]
    assert sk.candidate_faces(pp3) == [
        (),
        (0,),
        (1,),
        (2,),
        (0, 1),
        (0, 2),
        (1, 2),
    ]
    # only I is multiplicative, so the boundary is the S axis alone
    assert sk.candidate_faces(sir_gentle) == [()]
    rep = sk.build(sk.Replicator(payoff=[[0.0, 1.0], [1.0, 0.0]], sigma=[0.1, 0.1]))
    assert sk.candidate_faces(rep) == [(0,), (1,)]


# ---------------------------------------------------------------------------
# the simplex solver on textbook programs


def test_simplex_basic():
    x, v = sk.simplex_maximize(
        np.array([1.0, 1.0]),
        np.array([[1.0, 0.0], [0.0, 1.0]]),
        np.array([2.0, 3.0]),
        np.zeros((0, 2)),
        np.zeros(0),
    )
    assert v == pytest.approx(5.0)
    assert np.allclose(x, [2.0, 3.0])


def test_simplex_with_equality():
    x, v = sk.simplex_maximize(
        np.array([2.0, 1.0]),
        np.array([[1.0, 0.0]]),
        np.array([0.75]),
        np.array([[1.0, 1.0]]),
        np.array([1.0]),
    )
    assert v == pytest.approx(1.75)
    assert np.allclose(x, [0.75, 0.25])


def test_simplex_infeasible_and_unbounded():
    with pytest.raises(InfeasibleLP, match="feasible"):
        sk.simplex_maximize(
            np.array([1.0]),
            np.array([[1.0]]),
            np.array([-1.0]),
            np.zeros((0, 1)),
            np.zeros(0),
        )
    with pytest.raises(InfeasibleLP, match="unbounded"):
        sk.simplex_maximize(
            np.array([1.0]),
            np.zeros((0, 1)),
            np.zeros(0),
            np.zeros((0, 1)),
            np.zeros(0),
        )


def test_simplex_degenerate_equality_rows():
    # duplicated equality row leaves a zero-level artificial; the solver must
    # still optimize the real variables
    x, v = sk.simplex_maximize(
        np.array([1.0, 2.0]),
        np.zeros((0, 2)),
        np.zeros(0),
        np.array([[1.0, 1.0], [1.0, 1.0]]),
        np.array([1.0, 1.0]),
    )
    assert v == pytest.approx(2.0)
    assert np.allclose(x, [0.0, 1.0])


# ---------------------------------------------------------------------------
# certificate program against the grid oracle


def test_certificate_weights_for_the_coexisting_pair():
    rho, kappa_star, kappa_lp = sk.find_rho_star(_lv_exact_table(), (0, 1))
    # binding faces: 0.25 rho_2 = 1.75 rho_1 with rho_1 + rho_2 = 1
    assert rho[0] == pytest.approx(0.125, abs=1e-9)
    assert rho[1] == pytest.approx(0.875, abs=1e-9)
    assert kappa_lp == pytest.approx(0.21875, abs=1e-9)
    assert kappa_star == pytest.approx(0.109375, abs=1e-9)


def test_certificate_matches_grid_search():
    lam = np.array([[2.5, 1.5], [0.0, 0.25], [1.75, 0.0]])
    rho_grid, kappa_grid = sk.grid_kappa(lam)
    assert kappa_grid == pytest.approx(0.21875, abs=1e-6)
    assert rho_grid[0] == pytest.approx(0.125, abs=1e-5)


def test_certificate_respects_the_weight_floor():
    table = [_estimate((), {0: -1.0, 1: 1.0})]
    rho, _, kappa_lp = sk.find_rho_star(table, (0, 1))
    assert rho[0] == pytest.approx(RHO_MIN, abs=1e-12)
    assert kappa_lp == pytest.approx(-RHO_MIN + (1.0 - RHO_MIN), abs=1e-12)


def test_certificate_floor_too_large_is_infeasible():
    with pytest.raises(InfeasibleLP):
        sk.find_rho_star(_lv_exact_table(), (0, 1), rho_min=0.6)


def test_grid_oracle_three_coordinates_and_limits():
    lam = np.array([[1.0, -1.0, 0.5], [-1.0, 1.0, 0.5]])
    rho, kappa = sk.grid_kappa(lam, resolution=1e-3)
    # symmetric optimum: rho_1 = rho_2, value 0.5 rho_3 maximized at the
    # largest rho_3 the floor allows... which is the all-in-rho_3 corner
    direct = float((lam @ rho).min())
    assert kappa == pytest.approx(direct)
    assert kappa == pytest.approx(0.5 * (1.0 - 2 * RHO_MIN), abs=1e-2)
    with pytest.raises(ValueError):
        sk.grid_kappa(np.zeros((1, 4)))


# ---------------------------------------------------------------------------
# classification on injected tables (no simulation noise)


def test_classify_persistent_with_exact_table(lv_coexist, quick_cfg):
    report = sk.classify(lv_coexist, quick_cfg, table=_lv_exact_table())
    assert report.classification == "Persistent"
    assert report.kappa_star == pytest.approx(0.109375, abs=1e-9)
    assert report.diagnostics["kappa_lower"] == report.diagnostics["kappa_upper"]
    d = report.to_dict(model="LVCompetitive", seeds=[7], config_digest="abc")
    assert d["classification"] == "Persistent"
    assert d["rho_star"]["0"] == pytest.approx(0.125)
    assert d["faces"][1]["I"] == [0]


def test_classify_inconclusive_when_intervals_straddle(lv_coexist, quick_cfg):
    table = [
        _estimate((), {0: 2.5, 1: 1.5}),
        _estimate((0,), {0: 0.0, 1: 0.25}, cis={1: 0.5}),
        _estimate((1,), {0: 1.75, 1: 0.0}),
    ]
    report = sk.classify(lv_coexist, quick_cfg, table=table)
    assert report.classification == "Inconclusive"
    assert report.diagnostics["kappa_lower"] < 0 < report.diagnostics["kappa_upper"]


def test_classify_criterion_fails_with_exact_table(pp3, quick_cfg):
    # hand-solved food-chain rates; the top predator loses on the (1,2) face
    table = [
        _estimate((), {0: 3.5, 1: -1.5, 2: -2.5}),
        _estimate((0,), {0: 0.0, 1: 2.0, 2: 1.0}, means={0: 3.5}),
        _estimate((0, 1), {0: 0.0, 1: 0.0, 2: -0.5}, means={0: 2.5, 1: 1.0}),
        _estimate((0, 2), {0: 0.0, 1: 2.0, 2: 0.0}, means={0: 3.5, 2: 1.0}),
    ]
    report = sk.classify(pp3, quick_cfg, table=table)
    assert report.classification == "CriterionFails"
    # the negative face pins kappa at its floor-weighted rate
    assert report.diagnostics["kappa_lp"] == pytest.approx(-0.5 * RHO_MIN, abs=1e-9)
    assert report.kappa_star == pytest.approx(-0.25 * RHO_MIN, abs=1e-9)


# ---------------------------------------------------------------------------
# simulation-backed boundary scans


def test_boundary_scan_of_the_coexisting_pair(lv_coexist, quick_cfg):
    table = sk.boundary_scan(lv_coexist, quick_cfg)
    assert [e.face for e in table] == [(), (0,), (1,)]
    assert all(e.occupied and e.conclusive for e in table)
    origin = table[0]
    assert origin.lam[0].exact and origin.lam[0].mean == pytest.approx(2.5)
    mono = table[1]
    assert mono.lam[0].exact and mono.lam[0].mean == 0.0
    assert abs(mono.lam[1].mean - 0.25) <= 3 * mono.lam[1].ci_half_width + 0.02
    assert abs(mono.means[0] - 1.25) <= 0.05


def test_boundary_scan_prunes_unreachable_faces(pp3, quick_cfg):
    table = sk.boundary_scan(pp3, quick_cfg)
    occupied = [e.face for e in table if e.occupied]
    assert occupied == [(), (0,), (0, 1), (0, 2)]
    blocked = {e.face: e for e in table if not e.occupied}
    assert set(blocked) == {(1,), (2,), (1, 2)}
    assert all(e.conclusive for e in blocked.values())


def test_classify_full_run_verdicts(lv_coexist, pp3, quick_cfg):
    lv_report = sk.classify(lv_coexist, quick_cfg)
    assert lv_report.classification == "Persistent"
    assert abs(lv_report.kappa_star - 0.109375) < 0.03
    pp_report = sk.classify(pp3, quick_cfg)
    assert pp_report.classification == "CriterionFails"


# ---------------------------------------------------------------------------
# analytic thresholds


def test_lv_threshold_rows(lv_coexist):
    rows = sk.analytic_threshold(lv_coexist)
    by_name = {e.name: e for e in rows}
    assert set(by_name) == {
        "lambda_1(delta*)",
        "lambda_2(delta*)",
        "lambda_2(pi_{1})",
        "lambda_1(pi_{2})",
    }
    assert by_name["lambda_1(delta*)"].value == pytest.approx(2.5)
    assert by_name["lambda_2(delta*)"].value == pytest.approx(1.5)
    assert by_name["lambda_2(pi_{1})"].value == pytest.approx(0.25)
    assert by_name["lambda_1(pi_{2})"].value == pytest.approx(1.75)


def test_food_chain_threshold_rows(pp3):
    rows = sk.analytic_threshold(pp3)
    values = [e.value for e in rows]
    assert values == pytest.approx([3.5, -1.5, -2.5, 2.0, 1.0, -0.5, 2.0])
    by_name = {e.name: e for e in rows}
    assert by_name["lambda_3(pi_{1,2})"].value == pytest.approx(-0.5)


def test_sir_threshold_rows(sir_gentle):
    rows = sk.analytic_threshold(sir_gentle)
    by_name = {e.name: e for e in rows}
    assert by_name["mean_S(pi_{S})"].value == pytest.approx(1.0)  # a / b1
    # lambda_I = -b2 + (c1 + c2) a/b1 - sigma_II/2 with sigma_II = 0.09
    assert by_name["lambda_I(pi_{S})"].value == pytest.approx(-0.045)


def test_replicator_threshold_rows():
    spec = sk.build(
        sk.Replicator(payoff=[[1.0, 2.0], [0.5, 1.0]], sigma=[0.5, 0.5], total=1.0)
    )
    rows = sk.analytic_threshold(spec)
    by_name = {e.name: e for e in rows}
    # at the opposite vertex: payoff edge minus the resident's self-payoff,
    # minus the vertex noise correction (sigma_inv^2 + sigma_res^2) / 2
    assert by_name["lambda_1(delta_2)"].value == pytest.approx(0.75)
    assert by_name["lambda_2(delta_1)"].value == pytest.approx(-0.75)


def test_chemostat_threshold_rows():
    spec = sk.build(sk.Chemostat(m=[2.0], k=[1.0], recycle=0.5))
    rows = sk.analytic_threshold(spec)
    assert rows[0].name == "mean_S(pi_{S})"
    assert rows[0].value == pytest.approx(2.0)  # 1 / (1 - recycle)
    sim_only = [e for e in rows if e.value is None]
    assert sim_only and all("simulation" in e.note for e in sim_only)


def test_custom_model_has_no_closed_form():
    spec = sk.custom_model(
        n=1,
        r=0.0,
        gamma=np.eye(1),
        kolmogorov=[True],
        point_rates=lambda x0, xr: (np.zeros_like(x0), 1.0 - x0, np.ones_like(x0)),
    )
    rows = sk.analytic_threshold(spec)
    assert len(rows) == 1
    assert rows[0].value is None


# ---------------------------------------------------------------------------
# face equilibria


def test_face_equilibrium_values(lv_coexist, pp3):
    interior = sk.face_equilibrium(lv_coexist, (0, 1))
    assert interior[0] == pytest.approx(7.0 / 6.0)
    assert interior[1] == pytest.approx(1.0 / 6.0)
    pair = sk.face_equilibrium(pp3, (0, 1))
    assert pair[0] == pytest.approx(2.5)
    assert pair[1] == pytest.approx(1.0)
    assert sk.face_equilibrium(lv_coexist, ()) == {}


def test_face_equilibrium_errors(sir_gentle):
    with pytest.raises(ValueError, match="linear"):
        sk.face_equilibrium(sir_gentle, (1,))
    thin = sk.build(sk.LVCompetitive(a=[0.4], b=[[1.0]]))
    with pytest.raises(ValueError, match="no interior equilibrium"):
        sk.face_equilibrium(thin, (0,))
    flat = sk.build(sk.LVCompetitive(a=[1.0, 1.0], b=[[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularSystem):
        sk.face_equilibrium(flat, (0, 1))


# ---------------------------------------------------------------------------
# empirical band check


def test_empirical_check_expands_to_an_adequate_band(lv_coexist, quick_cfg):
    check = sk.empirical_persistence_check(lv_coexist, quick_cfg, epsilon=0.05)
    assert check.satisfied
    assert check.frequencies.min() >= 0.95
    # the band is a histogram edge: an integer number of quarter-decades
    logr = 4.0 * np.log10(check.radius)
    assert abs(logr - round(logr)) < 1e-9
    with pytest.raises(ValueError):
        sk.empirical_persistence_check(lv_coexist, quick_cfg, epsilon=1.5)
