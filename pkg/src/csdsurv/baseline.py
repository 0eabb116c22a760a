"""Reference ISD predictors: a Weibull AFT model and the KM "dummy" model."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .core import SurvivalCurve, SurvivalDataset, SurvivalDataError
from .km import km_fit

GRID_POINTS = 200


class NonConvergenceError(RuntimeError):
    pass


class ZeroTimeError(SurvivalDataError):
    pass


@dataclass(frozen=True, eq=False)
class WeibullAftModel:
    """Weibull AFT: ``log T = beta0 + z.beta + sigma * W`` with ``W`` Gumbel-min.

    ``z`` are features standardised with the training mean and scale. The
    survival curve is ``exp(-(t / lam)^k)`` with ``lam = exp(beta0 + z.beta)``
    and ``k = 1 / sigma``.
    """

    beta: np.ndarray  # intercept first
    log_sigma: float
    l2_penalty: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    grid_max: float = np.nan

    @property
    def shape(self) -> float:
        return float(np.exp(-self.log_sigma))

    def design(self, x) -> np.ndarray:
        z = (np.atleast_2d(np.asarray(x, dtype=float)) - self.feature_mean) / self.feature_scale
        return np.hstack([np.ones((z.shape[0], 1)), z])

    def scale(self, x) -> np.ndarray:
        """Weibull scale ``lam(x)`` for each row of ``x``."""
        return np.exp(self.design(x) @ self.beta)

    def survival(self, t, x) -> np.ndarray:
        """``S(t | x)`` for an array of times (columns) and rows of ``x``."""
        lam = self.scale(x)[:, None]
        return np.exp(-(np.asarray(t, dtype=float)[None, :] / lam) ** self.shape)

    def rescaled(self, factor: float) -> "WeibullAftModel":
        """Same model with every ``lam(x)`` multiplied by ``factor``."""
        beta = self.beta.copy()
        beta[0] += np.log(factor)
        return replace(self, beta=beta, grid_max=self.grid_max * factor)

    def default_grid(self) -> np.ndarray:
        head = np.linspace(0.0, self.grid_max / 10, GRID_POINTS // 10, endpoint=False)
        tail = np.geomspace(self.grid_max / 10, self.grid_max, GRID_POINTS - head.size)
        return np.concatenate([head, tail])


def objective_parts(params, design, log_t, events, l2, fixed_log_sigma=None):
    """Mean penalised log-likelihood and its gradient.

    ``params`` is ``[beta..., log_sigma]``; when ``fixed_log_sigma`` is given
    the last entry is ignored and its gradient is zero.
    """
    beta, log_sigma = params[:-1], params[-1]
    if fixed_log_sigma is not None:
        log_sigma = fixed_log_sigma
    sigma = np.exp(log_sigma)
    z = (log_t - design @ beta) / sigma
    ez = np.exp(np.minimum(z, 700.0))
    n = log_t.size
    ll = np.sum(events * (z - log_sigma - log_t) - ez) / n
    ll -= 0.5 * l2 * np.sum(beta[1:] ** 2)
    w = events - ez
    g_beta = -(design.T @ w) / (n * sigma)
    g_beta[1:] -= l2 * beta[1:]
    g_ls = 0.0 if fixed_log_sigma is not None else float(np.sum(-w * z - events) / n)
    return ll, np.append(g_beta, g_ls)


def weibull_fit(
    train: SurvivalDataset,
    l2: float = 1e-4,
    tol: float = 1e-6,
    max_iter: int = 20000,
    fixed_log_sigma: float | None = None,
    return_trace: bool = False,
):
    """Fit by gradient ascent with Armijo backtracking.

    The objective is the censored log-likelihood averaged over subjects, minus
    ``l2/2 * |beta|^2`` (intercept unpenalised). Trial steps use the
    Barzilai-Borwein length; the line search keeps every accepted step
    non-decreasing in the objective.
    """
    train.require_events()
    if np.any(train.times <= 0):
        bad = np.flatnonzero(train.times <= 0)
        raise ZeroTimeError(f"non-positive times at rows {bad[:10].tolist()}")
    mean = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    design = np.hstack([np.ones((len(train), 1)), (train.features - mean) / scale])
    log_t = np.log(train.times)
    events = train.events.astype(float)

    params = np.zeros(design.shape[1] + 1)
    params[0] = log_t.mean()
    params[-1] = np.log(max(log_t.std(), 0.1)) if fixed_log_sigma is None else fixed_log_sigma

    def f(p):
        return objective_parts(p, design, log_t, events, l2, fixed_log_sigma)

    ll, grad = f(params)
    trace = [ll]
    step = 1e-2
    prev_p, prev_g = None, None
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            break
        if prev_g is not None:
            s, y = params - prev_p, grad - prev_g
            sy = float(s @ y)
            if sy < 0:  # ascent: curvature is negative along s
                step = float(s @ s) / -sy
        step = min(max(step, 1e-10), 1e3)
        while True:
            cand = params + step * grad
            cand_ll, cand_grad = f(cand)
            if np.isfinite(cand_ll) and cand_ll >= ll + 1e-4 * step * gnorm**2:
                break
            step *= 0.5
            if step < 1e-14:
                raise NonConvergenceError(f"line search stalled, gradient norm {gnorm:.3g}")
        prev_p, prev_g = params, grad
        params, ll, grad = cand, cand_ll, cand_grad
        trace.append(ll)
    else:
        raise NonConvergenceError(
            f"no convergence in {max_iter} iterations, gradient norm {np.linalg.norm(grad):.3g}"
        )

    log_sigma = float(params[-1]) if fixed_log_sigma is None else float(fixed_log_sigma)
    model = WeibullAftModel(params[:-1].copy(), log_sigma, l2, mean, scale)
    model = replace(model, grid_max=_marginal_quantile_time(model, train.features, 0.001))
    return (model, np.array(trace)) if return_trace else model


def _marginal_quantile_time(model: WeibullAftModel, x, level: float) -> float:
    lam = model.scale(x)
    k = model.shape

    def gap(log_t):
        return float(np.mean(np.exp(-(np.exp(log_t) / lam) ** k))) - level

    lo, hi = np.log(lam.min()) - 50.0 / k, np.log(lam.max()) + 5.0
    while gap(hi) > 0:
        hi += 5.0
    return float(np.exp(brentq(gap, lo, hi, xtol=1e-12)))


def weibull_predict(model: WeibullAftModel, x, grid=None) -> SurvivalCurve:
    grid = model.default_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("prediction grid must be strictly increasing")
    probs = model.survival(grid, x)[0]
    return SurvivalCurve(grid, probs, "linear", "linear")


def weibull_predict_all(model: WeibullAftModel, features, grid=None) -> list[SurvivalCurve]:
    grid = model.default_grid() if grid is None else np.asarray(grid, dtype=float)
    probs = model.survival(grid, features)
    return [SurvivalCurve(grid, row, "linear", "linear") for row in probs]


def km_dummy_predict(train: SurvivalDataset) -> SurvivalCurve:
    """Training-set KM curve; the same prediction is used for every subject."""
    return km_fit(train).curve
