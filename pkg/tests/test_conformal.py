import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csdsurv.baseline import km_dummy_predict, weibull_fit, weibull_predict_all
from csdsurv.conformal import (
    HANDLERS,
    ConformityScoreSet,
    CsdConfig,
    EmptyConformalSetError,
    PctMatrix,
    RankOverflowWarning,
    adjust,
    conformal_quantile,
    conformal_quantile_values,
    conformity_scores,
    discretize,
    level_shifts,
    pct_mean_times,
    rearrange,
    run_csd,
    sample_event_times,
)
from csdsurv.core import (
    PercentileGrid,
    SurvivalCurve,
    SurvivalDataset,
    curve_eval,
    curve_from_pcts,
    curve_inverse,
    mean_survival_time,
    stratified_split,
)
from csdsurv.km import km_fit, km_fit_arrays
from csdsurv.metrics import concordance_index, d_cal_histogram
from csdsurv.synthetic import SyntheticSpec, generate_synthetic

GRID3 = PercentileGrid((0.25, 0.5, 0.75))


def labels(times, events):
    times = np.asarray(times, dtype=float)
    return SurvivalDataset(np.zeros((times.size, 1)), times, np.asarray(events, dtype=bool))


def scores_of(values, rho):
    v = np.asarray(values, dtype=float)
    return ConformityScoreSet(np.array([rho]), v[:, None], np.zeros((v.size, 1)), v.size)


@st.composite
def pct_matrices(draw, rows=st.integers(1, 12), cols=st.integers(1, 9)):
    r, c = draw(rows), draw(cols)
    flat = draw(st.lists(st.floats(0.0, 100.0), min_size=r * c, max_size=r * c))
    times = np.sort(np.array(flat).reshape(r, c), axis=1)
    levels = np.linspace(0.9, 0.1, c) if c > 1 else np.array([0.5])
    return PctMatrix(levels, times)


def test_discretize_heaviside():
    c = SurvivalCurve(np.array([3.0]), np.array([0.0]), "step")
    np.testing.assert_array_equal(discretize([c], GRID3).times, [[3.0, 3.0, 3.0]])


def test_discretize_straight_line():
    c = SurvivalCurve(np.array([10.0]), np.array([0.0]))
    np.testing.assert_allclose(discretize([c], GRID3).times, [[2.5, 5.0, 7.5]])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 20.0), min_size=3, max_size=8), st.floats(0.0, 0.9))
def test_rebuilt_curve_reproduces_percentiles(gaps, floor):
    times = np.cumsum(gaps)
    probs = np.linspace(1.0, floor, times.size + 1)[1:]
    curve = SurvivalCurve(times, probs)
    grid = PercentileGrid.preset(19)
    pcts = discretize([curve], grid)
    rebuilt = curve_from_pcts(pcts.times[0], grid)
    np.testing.assert_allclose(curve_inverse(rebuilt, grid.descending), pcts.times[0], rtol=1e-9)


def test_handlers_agree_without_censoring():
    rng = np.random.default_rng(0)
    t = rng.exponential(2.0, 30) + 0.1
    ds = labels(t, np.ones(30))
    pcts = PctMatrix(GRID3.descending, np.sort(rng.exponential(2.0, (30, 3)), axis=1))
    km = km_fit(ds)
    ref = conformity_scores(pcts, ds, km, CsdConfig(handler="uncensored", repeat_r=5))
    for h in HANDLERS[1:]:
        other = conformity_scores(pcts, ds, km, CsdConfig(handler=h, repeat_r=5))
        np.testing.assert_allclose(np.unique(other.scores, axis=0), np.unique(ref.scores, axis=0), atol=1e-9)
        np.testing.assert_allclose(level_shifts(other), level_shifts(ref), atol=1e-9)


def test_point_mass_conditional_scores():
    km = km_fit_arrays([7.0], [True])
    pcts = PctMatrix(np.array([0.5]), np.array([[4.0]]))
    s = conformity_scores(pcts, labels([3.0], [False]), km, CsdConfig(repeat_r=50))
    assert s.level(0.5).size == 50
    assert np.all(s.level(0.5) == -3.0)


def test_uncensored_handler_needs_events():
    pcts = PctMatrix(np.array([0.5]), np.array([[4.0]]))
    with pytest.raises(EmptyConformalSetError):
        conformity_scores(pcts, labels([3.0], [False]), None, CsdConfig(handler="uncensored"))


def test_km_sampling_is_reproducible_across_workers():
    ds, _ = generate_synthetic(SyntheticSpec(n=300, censor_fraction=0.4, seed=2))
    km = km_fit(ds)
    a = sample_event_times(ds, km, 64, seed=9)
    b = sample_event_times(ds, km, 64, seed=9, workers=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_event_times(ds, km, 64, seed=10))


def test_sampled_times_lie_beyond_censoring():
    ds, _ = generate_synthetic(SyntheticSpec(n=200, censor_fraction=0.5, seed=4))
    draws = sample_event_times(ds, km_fit(ds), 32, seed=0)
    assert np.all(draws >= ds.times[:, None])
    np.testing.assert_array_equal(draws[ds.events], np.repeat(ds.times[ds.events, None], 32, axis=1))


def test_quantile_rank_examples():
    assert conformal_quantile(scores_of([1, 2, 3], 0.5), 0.5) == 2.0
    assert conformal_quantile(scores_of([-5, -1, 0, 2, 7, 9, 11], 0.25), 0.25) == -1.0


def test_quantile_rank_overflow_warns():
    with pytest.warns(RankOverflowWarning):
        assert conformal_quantile(scores_of([1, 2, 3], 0.95), 0.95) == 3.0


def test_repeated_scores_use_relative_rank():
    # each subject repeated R times: same answer as the un-repeated multiset
    base = np.array([4.0, -2.0, 0.5, 9.0, 3.0])
    for rho in (0.1, 0.3, 0.5, 0.7):
        assert conformal_quantile_values(np.repeat(base, 7), 5, rho) == conformal_quantile_values(base, 5, rho)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.floats(0.01, 0.99))
def test_quantile_is_an_element(values, rho):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankOverflowWarning)
        q = conformal_quantile_values(np.array(values), len(values), rho)
    assert q in values


def test_zero_shift_is_identity():
    m = PctMatrix(GRID3.descending, [[1.0, 2.0, 3.0], [0.5, 4.0, 4.0]])
    np.testing.assert_array_equal(adjust(m, [0.0, 0.0, 0.0]).times, m.times)


@given(pct_matrices(), st.data())
def test_adjust_preserves_column_order(m, data):
    shifts = data.draw(st.lists(st.floats(-50, 50), min_size=m.levels.size, max_size=m.levels.size))
    out = adjust(m, shifts)
    for col in range(m.levels.size):
        a, b = m.times[:, col], out.times[:, col]
        # subtracting a constant never swaps a pair; rounding may only merge one
        swapped = (a[:, None] < a[None, :]) & (b[:, None] > b[None, :])
        assert not swapped.any()


def test_single_subject_moves_up_one_bin():
    # four subjects, probability at event time in bins 3, 0, 1, 1; the shift
    # pushes subject D from (0.25, 0.5] into (0.5, 0.75] and nobody else moves
    rows = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [4.0, 8.0, 12.0], [2.0, 4.0, 6.0]])
    ds = labels([0.2, 10.0, 10.0, 5.0], np.ones(4))
    before = PctMatrix(GRID3.descending, rows)
    after = adjust(before, [-1.5, -1.5, -1.5])

    def bins_and_hist(m):
        curves = [curve_from_pcts(r, GRID3) for r in m.times]
        p = np.array([curve_eval(c, t) for c, t in zip(curves, ds.times)])
        return np.clip(np.ceil(p * 4) - 1, 0, 3).astype(int), d_cal_histogram(curves, ds, bins=4).masses

    b0, h0 = bins_and_hist(before)
    b1, h1 = bins_and_hist(after)
    np.testing.assert_array_equal(b0, [3, 0, 1, 1])
    np.testing.assert_array_equal(b1, [3, 0, 1, 2])
    np.testing.assert_array_equal(h0, [1, 2, 0, 1])
    np.testing.assert_array_equal(h1, [1, 1, 1, 1])
    medians = lambda m: m.column(0.5)
    np.testing.assert_array_equal(np.argsort(medians(before)), np.argsort(medians(after)))


def test_rearrange_examples():
    m = PctMatrix(GRID3.descending, [[1.0, 2.0, 3.0]])
    out, changed = rearrange(m)
    assert out is m and not changed
    out, changed = rearrange(PctMatrix(GRID3.descending, [[5.0, 3.0, 8.0]]))
    np.testing.assert_array_equal(out.times, [[3.0, 5.0, 8.0]])
    assert changed


@given(pct_matrices(), st.data())
def test_rearrange_keeps_each_row_multiset(m, data):
    noise = data.draw(st.lists(st.floats(-30, 30), min_size=m.times.size, max_size=m.times.size))
    shuffled = PctMatrix(m.levels, m.times + np.array(noise).reshape(m.times.shape))
    out, _ = rearrange(shuffled)
    assert out.is_monotone()
    np.testing.assert_array_equal(np.sort(out.times, axis=1), np.sort(shuffled.times, axis=1))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 30.0), min_size=19, max_size=19).map(sorted))
def test_pct_mean_matches_curve_area(pcts):
    grid = PercentileGrid.preset(19)
    m = PctMatrix(grid.descending, [pcts])
    area = mean_survival_time(curve_from_pcts(pcts, grid))
    assert pct_mean_times(m)[0] == pytest.approx(area, rel=1e-9)


def _split_setup(seed, censor=0.0, n=600, mult=1.0, beta=None):
    ds, _ = generate_synthetic(SyntheticSpec(n=n, censor_fraction=censor, beta=beta, seed=seed))
    train, val, test = stratified_split(ds, [0.5, 0.3, 0.2], seed)
    model = weibull_fit(train).rescaled(mult)
    return train, val, test, model


def test_calibrated_input_is_barely_moved():
    train, val, test, _ = _split_setup(1, censor=0.3, n=2000)
    km_curve = km_dummy_predict(train)
    cfg = CsdConfig(handler="km_sampling", repeat_r=200, grid=PercentileGrid.preset(9))
    res = run_csd([km_curve] * len(val), val, [km_curve] * len(test), km_fit(train), cfg)
    # relative shift against the percentile time itself
    rel = np.abs(res.shifts) / res.pcts_before.times[0]
    assert np.max(rel) < 0.25


@pytest.mark.parametrize("handler", HANDLERS)
def test_median_c_index_unchanged(handler):
    # weak covariate effects keep percentile spacing wide, so no crossings
    train, val, test, model = _split_setup(3, censor=0.3, n=1500, beta=(0.2, 0.2))
    cfg = CsdConfig(handler=handler, repeat_r=50, grid=PercentileGrid.preset(9))
    res = run_csd(weibull_predict_all(model, val.features), val,
                  weibull_predict_all(model, test.features), km_fit(train), cfg)
    assert not res.rearranged
    assert concordance_index(res.pcts.column(0.5), test) == concordance_index(
        res.pcts_before.column(0.5), test
    )


def test_coverage_on_uncensored_exchangeable_data():
    ds, truth = generate_synthetic(SyntheticSpec(n=3000, seed=12))
    con, test = ds.subset(np.arange(999)), ds.subset(np.arange(999, 3000))
    model = weibull_fit(con)
    cfg = CsdConfig(handler="uncensored", grid=PercentileGrid.preset(9))
    res = run_csd(weibull_predict_all(model, con.features), con,
                  weibull_predict_all(model, test.features), km_fit(con), cfg)
    for l, rho in enumerate(res.pcts.levels):
        cover = np.mean(test.times >= res.pcts.times[:, l])
        # binomial 4-sigma band around rho at 2001 test subjects
        assert abs(cover - rho) < 4 * np.sqrt(rho * (1 - rho) / len(test)) + 1 / 1000
