from __future__ import annotations

import math

import numpy as np
import pytest

import sfkolmo as sk
from sfkolmo.errors import EmptyHistogram, InsufficientBatches


# ---------------------------------------------------------------------------
# batch-means statistics


def test_exact_stats():
    s = sk.exact_stats(2.5)
    assert s.mean == 2.5
    assert s.exact
    assert s.ci_half_width == 0.0
    d = s.to_dict()
    assert d["mean"] == 2.5 and d["exact"] is True and d["ci"] == 0.0


def test_stats_from_series_against_direct_computation():
    rng = np.random.default_rng(17)
    values = rng.normal(3.0, 1.0, size=300)
    s = sk.stats_from_series(values)
    # re-derive with plain numpy: 30 batches of 10
    means = values.reshape(30, 10).mean(axis=1)
    assert s.batch_count == 30
    assert s.batch_size == 10
    assert s.mean == pytest.approx(means.mean(), rel=1e-14)
    assert s.batch_means_variance == pytest.approx(means.var(ddof=1), rel=1e-12)
    assert s.ci_half_width == pytest.approx(
        1.96 * math.sqrt(means.var(ddof=1) / 30), rel=1e-12
    )
    assert not s.exact


def test_stats_leftover_records_are_dropped():
    values = np.arange(305, dtype=float)  # batch size 10, 5 leftovers
    s = sk.stats_from_series(values)
    assert s.batch_count == 30
    assert s.mean == pytest.approx(np.arange(300).mean())


def test_too_few_records_raise():
    with pytest.raises(InsufficientBatches):
        sk.stats_from_series(np.arange(9, dtype=float))


def test_merge_stats_is_exact_pooling():
    rng = np.random.default_rng(5)
    a = rng.normal(size=300)
    b = rng.normal(loc=0.3, size=600)
    sa, sb = sk.stats_from_series(a), sk.stats_from_series(b)
    assert sa.batch_size == 10 and sb.batch_size == 20
    with pytest.raises(ValueError):
        sk.merge_stats(sa, sb)  # unequal batch sizes
    sb2 = sk.stats_from_series(b[:300])
    merged = sk.merge_stats(sa, sb2)
    pooled = np.concatenate(
        [a.reshape(30, 10).mean(axis=1), b[:300].reshape(30, 10).mean(axis=1)]
    )
    assert merged.batch_count == 60
    assert merged.mean == pytest.approx(pooled.mean(), rel=1e-13)
    assert merged.batch_means_variance == pytest.approx(pooled.var(ddof=1), rel=1e-12)
    with pytest.raises(ValueError):
        sk.merge_stats(sa, sk.exact_stats(1.0))


# ---------------------------------------------------------------------------
# occupation histograms


def test_histogram_binning():
    hist = sk.OccupationHistogram.empty(2)
    assert hist.edges.size == 65
    assert hist.edges[0] == pytest.approx(1e-8)
    assert hist.edges[-1] == pytest.approx(1e8)
    states = np.array([[1.0, 1e-9], [1.0, 1e9], [0.02, 5.0]])
    hist.add_states(states)
    assert hist.totals.tolist() == [3.0, 3.0]
    # 1.0 is the left edge of bin 32
    assert hist.counts[0, 32] == 2.0
    assert hist.under[1] == 1.0
    assert hist.over[1] == 1.0


def test_histogram_merge():
    a = sk.OccupationHistogram.empty(1)
    b = sk.OccupationHistogram.empty(1)
    a.add_states(np.array([[1.0]]))
    b.add_states(np.array([[2.0], [1e-9]]))
    c = a.merge(b)
    assert c.totals[0] == 3.0
    assert c.under[0] == 1.0
    assert a.totals[0] == 1.0  # merge does not mutate


def test_frequency_in_band_snaps_to_grid():
    hist = sk.OccupationHistogram.empty(1)
    hist.add_states(np.array([[0.5], [2.0], [50.0], [200.0]]))
    snapped, freqs = sk.frequency_in_band(hist, 100.0)
    assert snapped == pytest.approx(100.0, rel=1e-12)
    assert freqs[0] == pytest.approx(3.0 / 4.0)  # 200 sits outside [0.01, 100)
    snapped2, _ = sk.frequency_in_band(hist, 60.0)
    assert snapped2 == pytest.approx(10.0 ** 1.75)  # nearest quarter-decade edge
    with pytest.raises(ValueError):
        sk.frequency_in_band(hist, 0.5)
    with pytest.raises(EmptyHistogram):
        sk.frequency_in_band(sk.OccupationHistogram.empty(1), 10.0)


def test_occupation_histogram_of_a_run(lv_coexist, quick_cfg):
    _, result = sk.face_run(lv_coexist, (0, 1), quick_cfg)
    hist = sk.occupation_histogram(result)
    assert hist.totals.tolist() == [result.states.shape[0]] * 2
    assert hist.under.sum() == 0.0
    assert hist.over.sum() == 0.0


# ---------------------------------------------------------------------------
# invasion rates


def test_lambda_pointwise(lv_coexist):
    x = np.array([[1.25, 0.0]])
    lam = sk.lambda_pointwise(lv_coexist, x, x, 1)
    assert lam[0] == pytest.approx(2.0 - 1.25 - 0.5)


def test_lambda_on_own_face_is_exactly_zero(lv_coexist, quick_cfg):
    s = sk.estimate_lambda(lv_coexist, (0,), 0, quick_cfg)
    assert s.exact and s.mean == 0.0


def test_lambda_at_origin_is_evaluated_exactly(lv_coexist, quick_cfg):
    s = sk.estimate_lambda(lv_coexist, (), 0, quick_cfg)
    assert s.exact
    assert s.mean == pytest.approx(3.0 - 0.5)  # a_1 - sigma_11/2 at the origin


def test_lambda_at_replicator_vertex_is_exact(quick_cfg):
    spec = sk.build(
        sk.Replicator(payoff=[[1.0, 2.0], [0.5, 1.0]], sigma=[0.5, 0.5], total=1.0)
    )
    s = sk.estimate_lambda(spec, (1,), 0, quick_cfg)
    # payoff against the vertex delta_2: phi_1 - phi_avg = 2 - 1, then the
    # noise correction (sigma_1^2 (1 - 0) + sigma_2^2 1^2) / 2 = 0.25
    assert s.exact
    assert s.mean == pytest.approx(1.0 - 0.25)


def test_lambda_rejects_affine_targets(sir_gentle, quick_cfg):
    with pytest.raises(ValueError, match="additive"):
        sk.estimate_lambda(sir_gentle, (1,), 0, quick_cfg)


def test_lambda_monoculture_estimate(lv_coexist, quick_cfg):
    s = sk.estimate_lambda(lv_coexist, (0,), 1, quick_cfg)
    assert not s.exact
    # lambda_2(pi_1) = 2 - E[X_1] - 1/2 = 0.25 with E[X_1] = 1.25
    assert abs(s.mean - 0.25) <= 3.0 * s.ci_half_width + 0.02


def test_replicate_merge_is_order_invariant(lv_coexist, quick_cfg):
    a = sk.replicate_stats(lv_coexist, (0,), 1, quick_cfg, [3, 1, 2])
    b = sk.replicate_stats(lv_coexist, (0,), 1, quick_cfg, [1, 2, 3])
    assert a == b
    single = sk.estimate_lambda(lv_coexist, (0,), 1, quick_cfg)
    assert a.batch_count == 3 * single.batch_count
    assert a.ci_half_width < single.ci_half_width


# ---------------------------------------------------------------------------
# time averages and face runs


def test_face_run_shapes(lv_coexist, quick_cfg):
    sub, result = sk.face_run(lv_coexist, (0,), quick_cfg)
    assert sub.n == 1
    assert sub.active == (0,)
    assert result.states.shape[1] == 1
    full_sub, _ = sk.face_run(lv_coexist, (0, 1), quick_cfg)
    assert full_sub is lv_coexist


def test_default_face_initial(lv_coexist):
    sub = sk.restrict_to_face(lv_coexist, (0,))
    assert np.array_equal(sk.default_face_initial(sub), [1.0])
    rep = sk.build(
        sk.Replicator(payoff=[[0.0, 1.0], [1.0, 0.0]], sigma=[0.1, 0.1], total=2.0)
    )
    assert np.array_equal(sk.default_face_initial(rep), [1.0, 1.0])


def test_time_average_monoculture_mean(lv_coexist, quick_cfg):
    s = sk.time_average(lv_coexist, (0,), 0, quick_cfg)
    # stationary mean of dX = X(3 - 2X)dt + X dB is (a - sigma/2)/b = 1.25
    assert abs(s.mean - 1.25) <= 3.0 * s.ci_half_width + 0.02


def test_time_average_callable_and_delayed(quick_cfg):
    spec = sk.build(sk.LVCompetitive(a=[3.0], b=[[1.0]], b_hat=[[1.0]], r=0.5))
    plain = sk.time_average(spec, (0,), 0, quick_cfg)
    lagged = sk.time_average(spec, (0,), ("delayed", 0), quick_cfg)
    # the stationary law does not move, so both averages estimate E[X_1]
    assert abs(plain.mean - lagged.mean) <= 3.0 * (
        plain.ci_half_width + lagged.ci_half_width
    )
    combo = sk.time_average(
        spec, (0,), lambda x0, xr: x0[:, 0] - xr[:, 0], quick_cfg
    )
    assert abs(combo.mean) <= 3.0 * combo.ci_half_width + 0.02
    with pytest.raises(ValueError, match="observable"):
        sk.time_average(spec, (0,), "nonsense", quick_cfg)


def test_time_average_at_origin_point_mass(quick_cfg):
    spec = sk.build(sk.LVCompetitive(a=[3.0, 2.0], b=[[2.0, 1.0], [1.0, 2.0]]))
    s = sk.time_average(spec, (), lambda x0, xr: 5.0 + 0.0 * x0[:, 0], quick_cfg)
    assert s.exact and s.mean == 5.0


# ---------------------------------------------------------------------------
# observer embedding


def test_embedded_observer_zero_fills_absent_coordinates(lv_coexist, quick_cfg):
    sub = sk.restrict_to_face(lv_coexist, (0,))

    values = {}

    def probe(buf):
        values["n"] = buf.n
        values["x"] = buf.state().copy()
        return float(buf.state()[1])

    wrapped = sk.embedded_observer(sub, probe)
    narrow = sk.SegmentBuffer.from_constant(0.0, 1e-3, [1.7])
    out = wrapped(narrow)
    assert out == 0.0
    assert values["n"] == 2
    assert np.array_equal(values["x"], [1.7, 0.0])


def test_embedded_observer_in_a_face_run(lv_coexist, quick_cfg):
    sub = sk.restrict_to_face(lv_coexist, (0,))
    wrapped = sk.embedded_observer(sub, lambda buf: float(buf.state()[0]))
    res = sk.simulate(
        sub, [1.0], quick_cfg, observers={"x1": wrapped}
    )
    assert np.array_equal(res.observations["x1"], res.states[:, 0])
