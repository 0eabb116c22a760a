"""Synthetic right-censored data with a known conditional survival law."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import SurvivalCurve, SurvivalDataset


@dataclass(frozen=True)
class SyntheticSpec:
    """Weibull event times with ``lam(x) = exp(beta0 + x.beta)``, exponential censoring.

    Features are i.i.d. standard normal. The censoring rate is chosen so that
    the expected censored fraction, given the drawn event times, equals
    ``censor_fraction``. Censoring is drawn independently of everything else.
    """

    n: int = 1000
    feature_dim: int = 2
    beta0: float = 1.0
    beta: tuple[float, ...] | None = None  # None: 0.5 for every feature
    shape: float = 2.0
    censor_fraction: float = 0.0
    seed: int = 0

    def coefficients(self) -> np.ndarray:
        if self.beta is None:
            return np.full(self.feature_dim, 0.5)
        b = np.asarray(self.beta, dtype=float)
        if b.shape != (self.feature_dim,):
            raise ValueError("beta length must equal feature_dim")
        return b


@dataclass(frozen=True)
class TrueModel:
    """The generating law; ``survival(t, x)`` is the true ``S(t | x)``."""

    beta0: float
    beta: np.ndarray
    shape: float

    def scale(self, x) -> np.ndarray:
        return np.exp(self.beta0 + np.atleast_2d(x) @ self.beta)

    def survival(self, t, x) -> np.ndarray:
        lam = self.scale(x)[:, None]
        return np.exp(-(np.asarray(t, dtype=float)[None, :] / lam) ** self.shape)

    def quantile_time(self, rho, x) -> np.ndarray:
        """Time where the true curve crosses ``rho``, shape ``(n, len(rho))``."""
        lam = self.scale(x)[:, None]
        return lam * (-np.log(np.asarray(rho, dtype=float)))[None, :] ** (1.0 / self.shape)

    def curves(self, x, points: int = 400) -> list[SurvivalCurve]:
        """Dense piecewise-linear versions of the true curves, knots at true quantiles."""
        rho = np.linspace(1.0, 0.0, points + 1)[1:-1]
        q = self.quantile_time(rho, x)
        return [SurvivalCurve(np.concatenate(([0.0], row)), np.concatenate(([1.0], rho))) for row in q]


def generate_synthetic(spec: SyntheticSpec) -> tuple[SurvivalDataset, TrueModel]:
    rng = np.random.default_rng(spec.seed)
    beta = spec.coefficients()
    x = rng.standard_normal((spec.n, spec.feature_dim))
    truth = TrueModel(spec.beta0, beta, spec.shape)
    lam = truth.scale(x)
    e = lam * rng.weibull(spec.shape, spec.n)
    rate = censoring_rate(e, spec.censor_fraction)
    c = rng.exponential(1.0 / rate, spec.n) if rate > 0 else np.full(spec.n, np.inf)
    times = np.minimum(e, c)
    events = e <= c
    return SurvivalDataset(x, times, events), truth


def censoring_rate(event_times, target: float) -> float:
    """Exponential rate ``r`` with ``mean(1 - exp(-r e_i)) == target``."""
    if not 0.0 <= target < 1.0:
        raise ValueError("censor fraction must lie in [0, 1)")
    if target == 0.0:
        return 0.0
    e = np.asarray(event_times, dtype=float)

    def gap(log_r):
        return float(np.mean(-np.expm1(-np.exp(log_r) * e))) - target

    scale = np.log(1.0 / np.median(e))
    return float(np.exp(brentq(gap, scale - 40.0, scale + 40.0, xtol=1e-12)))
