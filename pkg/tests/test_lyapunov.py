from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

import sfkolmo as sk
from sfkolmo.errors import DomainError, InvalidParameter, SingularDiffusion
from sfkolmo.lyapunov import default_h


E = math.e


def _params(**overrides):
    base = dict(
        c=[1.0, 1.0],
        gamma_b=1.0,
        gamma_0=1.0,
        gamma=0.9,
        A0=1.0,
        A1=1.0,
        A2=0.7,
        M=1.0,
        p0=0.5,
        rho=[0.0, 0.0],
        mu=sk.DelayMeasure.dirac(-0.5),
    )
    base.update(overrides)
    return sk.LyapunovParams(**base)


@pytest.fixture(scope="module")
def lv_delayed():
    return sk.build(
        sk.LVCompetitive(
            a=[3.0, 2.0],
            b=[[2.0, 1.0], [1.0, 2.0]],
            b_hat=[[0.0, 0.0], [0.0, 0.0]],
            r=0.5,
        )
    )


# ---------------------------------------------------------------------------
# parameter container


def test_params_construction_checks():
    with pytest.raises(InvalidParameter):
        _params(c=[1.0, -1.0])
    with pytest.raises(InvalidParameter):
        _params(p0=1.5)
    with pytest.raises(InvalidParameter):
        _params(A1=-1.0)
    with pytest.raises(InvalidParameter):
        _params(gamma=math.nan)
    with pytest.raises(InvalidParameter):
        _params(rho=[0.1])  # shape mismatch against c
    # a deliberately broken ordering may be constructed (audits need it) ...
    broken = _params(A1=0.5, A2=0.7)
    # ... but not validated
    with pytest.raises(InvalidParameter, match="A1 > A2"):
        broken.validate()


def test_validate_smallness_against_model(lv_delayed):
    with pytest.raises(InvalidParameter, match="rho"):
        _params(rho=[0.3, 0.3], gamma=0.5).validate(lv_delayed)
    with pytest.raises(InvalidParameter, match="p0"):
        _params(rho=[0.0, 0.0], gamma=0.5, p0=0.9).validate(lv_delayed)


def test_digest_tracks_content():
    a, b = _params(), _params()
    assert a.digest() == b.digest()
    assert a.digest() != _params(A2=0.8).digest()


# ---------------------------------------------------------------------------
# the functional itself


def test_eval_v_closed_form():
    params = _params(
        c=[1.0, 1.0], rho=[0.5, -0.25], A2=0.3, gamma=1.0,
        mu=sk.DelayMeasure.dirac(-1.0),
    )
    buf = sk.SegmentBuffer.from_constant(1.0, 0.01, np.array([2.0, 0.5]))
    h_val = 1.0 + math.sqrt(4.25)
    want = (
        (1.0 + 2.5)
        * 2.0**0.5
        * 0.5**-0.25
        * math.exp(0.3 * h_val * (E - 1.0))
    )
    got = sk.eval_V(params, buf)
    assert got == pytest.approx(want, rel=1e-3)
    assert sk.eval_U(params, buf) == pytest.approx(math.log(got), rel=1e-9)


def test_eval_v_without_kernel_is_exact():
    params = _params(rho=[0.5, -0.25], A2=0.0)
    buf = sk.SegmentBuffer.from_constant(0.5, 0.01, np.array([2.0, 0.5]))
    want = 3.5 * 2.0**0.5 * 0.5**-0.25
    assert sk.eval_V(params, buf) == pytest.approx(want, rel=1e-14)


def test_eval_v_domain_errors():
    params = _params(rho=[0.5, -0.25], A2=0.0)
    buf = sk.SegmentBuffer.from_constant(0.5, 0.01, np.array([2.0, 0.0]))
    with pytest.raises(DomainError):
        sk.eval_V(params, buf)
    with pytest.raises(DomainError):
        sk.eval_U(params, buf)
    # zero state with nonnegative weights is fine (the product vanishes)
    ok = _params(rho=[0.5, 0.0], A2=0.0)
    assert sk.eval_V(ok, buf) == pytest.approx(3.0 * 2.0**0.5, rel=1e-14)


def test_weight_override_argument():
    params = _params(rho=[0.0, 0.0], A2=0.0)
    buf = sk.SegmentBuffer.from_constant(0.5, 0.01, np.array([2.0, 0.5]))
    plain = sk.eval_V(params, buf)
    weighted = sk.eval_V(params, buf, rho=[1.0, 0.0])
    assert weighted == pytest.approx(plain * 2.0, rel=1e-14)


# ---------------------------------------------------------------------------
# drift-rate expressions


def test_q0_constant_segment_oracle(lv_delayed):
    # at x = (1, 1): f = (0, -1), so the drift ratio is -1/3 and the
    # diffusion quadratic is (1/2) * 2 / 9; the three kernel terms cancel
    # exactly on constant segments by construction of the quadrature
    buf = sk.SegmentBuffer.from_constant(0.5, 1e-3, np.array([1.0, 1.0]))
    q0 = sk.eval_Q0(lv_delayed, _params(), buf)
    assert q0 == pytest.approx(-1.0 / 3.0 - 1.0 / 9.0, abs=1e-12)


def test_q0_kernel_cancellation_is_independent_of_a2(lv_delayed):
    buf = sk.SegmentBuffer.from_constant(0.5, 1e-3, np.array([0.3, 2.0]))
    values = {
        a2: sk.eval_Q0(lv_delayed, _params(A2=a2), buf) for a2 in (0.0, 0.7, 5.0)
    }
    assert values[0.7] == pytest.approx(values[0.0], abs=1e-12)
    assert values[5.0] == pytest.approx(values[0.0], abs=1e-11)


def test_q0_sees_nonconstant_history(lv_delayed):
    ramp = sk.SegmentBuffer.from_function(
        0.5, 1e-3, lambda s: (1.0 + s, 1.0), 2
    )
    flat = sk.SegmentBuffer.from_constant(0.5, 1e-3, np.array([1.0, 1.0]))
    params = _params()
    assert sk.eval_Q0(lv_delayed, params, ramp) != pytest.approx(
        sk.eval_Q0(lv_delayed, params, flat), abs=1e-6
    )


def test_q_rho_star_subtracts_the_growth_rates(lv_delayed):
    buf = sk.SegmentBuffer.from_constant(0.5, 1e-3, np.array([1.0, 1.0]))
    params = _params()
    q0 = sk.eval_Q0(lv_delayed, params, buf)
    # growth integrand f - sigma g^2 / 2 = (-1/2, -3/2) at this state
    got = sk.eval_Q_rho_star(lv_delayed, params, [0.5, 0.5], buf)
    assert got == pytest.approx(q0 + 1.0, abs=1e-12)


def test_observers_match_direct_evaluation(lv_delayed):
    buf = sk.SegmentBuffer.from_constant(0.5, 1e-3, np.array([1.3, 0.4]))
    params = _params()
    obs0 = sk.q0_observer(lv_delayed, params)
    assert obs0(buf) == pytest.approx(sk.eval_Q0(lv_delayed, params, buf), rel=1e-14)
    obsr = sk.q_rho_observer(lv_delayed, params, [0.2, 0.1])
    assert obsr(buf) == pytest.approx(
        sk.eval_Q_rho_star(lv_delayed, params, [0.2, 0.1], buf), rel=1e-14
    )


def test_interior_q0_averages_to_zero(lv_coexist):
    # the interior measure integrates Q0 to zero; a short run should already
    # sit within its own confidence band
    params = _params(mu=sk.DelayMeasure.dirac(0.0), gamma=0.0125, A2=0.09125)
    cfg = sk.SimConfig(dt=1e-3, T=500.0, burn_in=50.0, seed=13, thinning=50)
    res = sk.simulate(
        lv_coexist,
        [1.0, 1.0],
        cfg,
        observers={"q0": sk.q0_observer(lv_coexist, params)},
        record_path=False,
    )
    stats = sk.stats_from_series(res.observations["q0"])
    assert abs(stats.mean) <= 3.0 * stats.ci_half_width + 0.05


# ---------------------------------------------------------------------------
# segment sampling


def test_sampler_bounds_and_determinism(lv_delayed):
    with pytest.raises(InvalidParameter):
        sk.SegmentSampler(lv_delayed, bound=1e-5)
    s1 = sk.SegmentSampler(lv_delayed, bound=50.0, seed=4)
    s2 = sk.SegmentSampler(lv_delayed, bound=50.0, seed=4)
    a, b = s1.sample(), s2.sample()
    assert np.array_equal(a.samples, b.samples)
    for _ in range(20):
        buf = s1.sample()
        assert buf.n == 2
        assert buf.samples.min() >= 1e-4 - 1e-12
        assert buf.samples.max() <= 50.0 + 1e-9
    # interpolated histories genuinely vary along the segment
    assert s1.sample().sup_norm() != pytest.approx(
        float(np.linalg.norm(s1.sample().state()))
    )


def test_sampler_with_zero_delay(lv_coexist):
    buf = sk.SegmentSampler(lv_coexist, bound=10.0, seed=1).sample()
    assert buf.length == 1
    assert buf.r == 0.0


# ---------------------------------------------------------------------------
# the drift-condition audit


def test_recipe_values_for_the_coexisting_pair(lv_coexist):
    params = sk.suggest_params_lv(lv_coexist.catalog)
    assert params.gamma_b == pytest.approx(0.025)
    assert params.gamma_0 == pytest.approx(0.0625)
    assert params.gamma == pytest.approx(0.0125)
    assert params.A1 == pytest.approx(0.26375)
    assert params.A2 == pytest.approx(0.09125)
    assert params.M == pytest.approx(15.0)
    assert params.p0 == pytest.approx(0.00078125)
    assert params.A0 == pytest.approx(86.7627227, rel=1e-6)
    assert np.array_equal(params.rho, [0.0, 0.0])
    params.validate(lv_coexist)  # must satisfy its own smallness bounds


def test_recipe_treats_missing_delay_matrix_as_zero():
    with_none = sk.suggest_params_lv(
        sk.LVCompetitive(a=[3.0, 2.0], b=[[2.0, 1.0], [1.0, 2.0]])
    )
    with_zeros = sk.suggest_params_lv(
        sk.LVCompetitive(
            a=[3.0, 2.0], b=[[2.0, 1.0], [1.0, 2.0]],
            b_hat=[[0.0, 0.0], [0.0, 0.0]],
        )
    )
    assert with_none.digest() == with_zeros.digest()


def test_drift_condition_holds_at_recipe_parameters(lv_coexist):
    params = sk.suggest_params_lv(lv_coexist.catalog)
    sampler = sk.SegmentSampler(lv_coexist, bound=50.0, seed=0)
    audit = sk.check_assumption_1_3(lv_coexist, params, sampler, 200)
    assert audit.samples == 200
    assert audit.violations == 0
    assert audit.worst_margin > 0
    assert audit.assumption == "assumption_1_3"
    assert audit.to_dict()["params_digest"] == params.digest()


def test_drift_condition_audit_catches_tampered_parameters(lv_coexist):
    params = sk.suggest_params_lv(lv_coexist.catalog)
    broken = dataclasses.replace(params, A1=100.0)
    sampler = sk.SegmentSampler(lv_coexist, bound=50.0, seed=0)
    audit = sk.check_assumption_1_3(lv_coexist, broken, sampler, 200)
    assert audit.violations == 200
    assert audit.worst_margin < 0


def test_vacuous_audits():
    spec = sk.build(sk.LVCompetitive(a=[1.0], b=[[1.0]]))
    params = sk.suggest_params_lv(spec.catalog)
    sampler = sk.SegmentSampler(spec, bound=10.0)
    for fn in (
        lambda: sk.check_assumption_1_3(spec, params, sampler, 0),
        lambda: sk.check_assumption_2(spec, params, sampler, 0),
        lambda: sk.check_assumption_4(spec, sampler, 0, 0.0, 1.0),
    ):
        audit = fn()
        assert audit.samples == 0 and audit.violations == 0
        assert audit.worst_margin is None
        assert audit.to_dict()["vacuous"] is True


# ---------------------------------------------------------------------------
# the growth audit


def test_growth_audit_bounded_for_linear_rates(lv_coexist):
    params = sk.suggest_params_lv(lv_coexist.catalog)
    sampler = sk.SegmentSampler(lv_coexist, bound=50.0, seed=0)
    audit = sk.check_assumption_2(lv_coexist, params, sampler, 200)
    assert audit.violations == 0
    assert audit.extra["form"] == "growth"
    assert not audit.extra["unbounded_trend"]
    # |f| grows like h, so the ratio stays below the coefficient mass
    assert audit.extra["k_tilde"] < 13.0


def test_growth_audit_flags_superlinear_rates():
    def point(x0, xr):
        return np.zeros_like(x0), -(x0**2), np.ones_like(x0)

    spec = sk.custom_model(
        n=1, r=0.0, gamma=np.eye(1), kolmogorov=[True], point_rates=point
    )
    params = _params(c=[1.0], rho=[0.0], mu=sk.DelayMeasure.dirac(0.0))
    sampler = sk.SegmentSampler(spec, bound=100.0, seed=2)
    audit = sk.check_assumption_2(spec, params, sampler, 200)
    assert audit.extra["unbounded_trend"]


def test_growth_audit_two_sided_form(lv_coexist):
    base = sk.suggest_params_lv(lv_coexist.catalog)
    two_sided = dataclasses.replace(
        base,
        alt_h1=default_h,
        alt_mu1=sk.DelayMeasure.dirac(0.0),
        alt_b1=1e-6,
        alt_b2=1e6,
    )
    sampler = sk.SegmentSampler(lv_coexist, bound=50.0, seed=0)
    audit = sk.check_assumption_2(lv_coexist, two_sided, sampler, 100)
    assert audit.extra["form"] == "two-sided"
    assert audit.violations == 0
    partial = dataclasses.replace(base, alt_b1=1.0)
    with pytest.raises(InvalidParameter, match="two-sided"):
        sk.check_assumption_2(lv_coexist, partial, sampler, 100)


# ---------------------------------------------------------------------------
# the regularity audit


def test_lipschitz_audit_on_linear_rates(lv_coexist):
    sampler = sk.SegmentSampler(lv_coexist, bound=50.0, seed=0)
    audit = sk.check_assumption_4(lv_coexist, sampler, 200, d0=0.0, D0=3.0)
    assert audit.violations == 0
    # unit loadings and identity covariance invert to exactly norm one
    assert audit.extra["inverse_norm_max"] == pytest.approx(1.0, rel=1e-12)
    zero_bound = sk.check_assumption_4(lv_coexist, sampler, 50, d0=0.0, D0=0.0)
    assert zero_bound.violations == 50


def test_lipschitz_audit_rejects_degenerate_diffusion():
    def point(x0, xr):
        return np.zeros_like(x0), -x0, np.zeros_like(x0)

    spec = sk.custom_model(
        n=1, r=0.0, gamma=np.eye(1), kolmogorov=[True], point_rates=point
    )
    sampler = sk.SegmentSampler(spec, bound=10.0, seed=0)
    with pytest.raises(SingularDiffusion):
        sk.check_assumption_4(spec, sampler, 10, d0=0.0, D0=5.0)
