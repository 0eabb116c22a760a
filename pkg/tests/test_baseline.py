import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csdsurv.baseline import (
    WeibullAftModel,
    ZeroTimeError,
    km_dummy_predict,
    objective_parts,
    weibull_fit,
    weibull_predict,
    weibull_predict_all,
)
from csdsurv.core import SurvivalDataset, curve_eval, median_survival_time
from csdsurv.metrics import concordance_index, predicted_times
from csdsurv.synthetic import SyntheticSpec, generate_synthetic

from oracles import weibull_loglik


def unit_model(dim=1):
    return WeibullAftModel(np.zeros(dim + 1), 0.0, 0.0, np.zeros(dim), np.ones(dim), 10.0)


def original_units(model):
    slopes = model.beta[1:] / model.feature_scale
    return model.beta[0] - slopes @ model.feature_mean, slopes


def test_recovers_known_parameters():
    ds, _ = generate_synthetic(SyntheticSpec(n=5000, feature_dim=1, beta0=1.0, shape=2.0, seed=5))
    model = weibull_fit(ds)
    b0, b = original_units(model)
    assert b0 == pytest.approx(1.0, abs=0.05)
    assert b[0] == pytest.approx(0.5, abs=0.05)
    assert model.shape == pytest.approx(2.0, abs=0.1)


def test_exponential_mle_is_the_sample_mean():
    rng = np.random.default_rng(2)
    t = rng.exponential(3.0, size=400)
    ds = SurvivalDataset(np.empty((t.size, 0)), t, np.ones(t.size, dtype=bool))
    model = weibull_fit(ds, fixed_log_sigma=0.0)
    assert float(model.scale(np.empty((1, 0)))[0]) == pytest.approx(t.mean(), rel=1e-6)


def _random_problem(seed, n=60, dim=3):
    rng = np.random.default_rng(seed)
    design = np.hstack([np.ones((n, 1)), rng.normal(size=(n, dim))])
    t = rng.weibull(1.5, size=n) * 2.0 + 0.01
    d = (rng.random(n) < 0.7).astype(float)
    params = rng.normal(scale=0.5, size=dim + 2)
    return design, t, d, params


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.0, 1e-4, 0.3]))
def test_gradient_matches_central_differences(seed, l2):
    design, t, d, params = _random_problem(seed)
    log_t = np.log(t)
    _, grad = objective_parts(params, design, log_t, d, l2)

    def central(h):
        fd = np.empty_like(params)
        for j in range(params.size):
            e = np.zeros_like(params)
            e[j] = h
            up, _ = objective_parts(params + e, design, log_t, d, l2)
            down, _ = objective_parts(params - e, design, log_t, d, l2)
            fd[j] = (up - down) / (2 * h)
        return fd

    # Richardson extrapolation cancels the h^2 term, which is large when
    # a draw puts sigma far from the data.
    h = 1e-3
    fd = (4 * central(h / 2) - central(h)) / 3
    assert np.max(np.abs(grad - fd)) < 1e-5 * (1.0 + np.max(np.abs(grad)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_objective_matches_literal_likelihood(seed):
    design, t, d, params = _random_problem(seed, n=25, dim=2)
    ll, _ = objective_parts(params, design, np.log(t), d, 0.1)
    assert ll == pytest.approx(weibull_loglik(params, design[:, 1:], t, d, 0.1), rel=1e-10)


def test_trace_is_non_decreasing():
    ds, _ = generate_synthetic(SyntheticSpec(n=500, censor_fraction=0.3, seed=1))
    _, trace = weibull_fit(ds, return_trace=True)
    assert np.all(np.diff(trace) >= 0)


def test_zero_times_rejected():
    ds = SurvivalDataset(np.zeros((3, 1)), [0.0, 1.0, 2.0], [1, 1, 1])
    with pytest.raises(ZeroTimeError):
        weibull_fit(ds)


def test_exponential_closed_form():
    c = weibull_predict(unit_model(), [0.0], grid=np.linspace(0, 5, 51))
    assert curve_eval(c, 1.0) == pytest.approx(np.exp(-1.0))
    assert curve_eval(c, 0.0) == 1.0


def test_median_matches_closed_form():
    ds, _ = generate_synthetic(SyntheticSpec(n=800, seed=3))
    model = weibull_fit(ds)
    x = ds.features[:5]
    lam = model.scale(x)
    closed = lam * np.log(2.0) ** (1.0 / model.shape)
    got = predicted_times(weibull_predict_all(model, x), "median")
    np.testing.assert_allclose(got, closed, rtol=5e-3)


def test_rescaled_doubles_every_percentile():
    model = unit_model()
    big = model.rescaled(2.0)
    x = np.array([[0.3]])
    assert big.scale(x)[0] == pytest.approx(2 * model.scale(x)[0])
    assert median_survival_time(weibull_predict(big, x)) == pytest.approx(
        2 * median_survival_time(weibull_predict(model, x)), rel=1e-9
    )


def test_km_dummy_has_no_discrimination():
    ds, _ = generate_synthetic(SyntheticSpec(n=300, censor_fraction=0.3, seed=8))
    curve = km_dummy_predict(ds)
    preds = [curve] * len(ds)
    assert curve_eval(preds[0], 1.3) == curve_eval(preds[17], 1.3)
    assert concordance_index(predicted_times(preds), ds) == 0.5
