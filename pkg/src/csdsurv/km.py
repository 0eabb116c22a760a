"""Kaplan-Meier estimation, conditional KM curves and sampling from them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import NoEventsError, SurvivalCurve, SurvivalDataset, curve_inverse, mean_survival_time


class DegenerateConditionalError(ValueError):
    """The KM curve (even extrapolated) carries no mass beyond the conditioning time."""


@dataclass(frozen=True, eq=False)
class KmCurve:
    """Product-limit estimate with its event table.

    ``curve`` is a step curve with one knot per distinct event time, plus a
    flat knot at the largest observed time when that time is censored. The
    tail beyond it is the straight line towards zero through ``(0, 1)``.
    """

    curve: SurvivalCurve
    event_times: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def __call__(self, t):
        return self.curve(t)


def km_fit(ds: SurvivalDataset) -> KmCurve:
    return km_fit_arrays(ds.times, ds.events)


def km_fit_arrays(times, events) -> KmCurve:
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if not events.any():
        raise NoEventsError("Kaplan-Meier needs at least one observed event")
    uniq, inverse = np.unique(times, return_inverse=True)
    d = np.bincount(inverse, weights=events, minlength=uniq.size)
    total = np.bincount(inverse, minlength=uniq.size)
    # subjects with time >= u; censorings at u stay in the risk set for events at u
    n = total[::-1].cumsum()[::-1].astype(float)
    has_event = d > 0
    event_times = uniq[has_event]
    d_e, n_e = d[has_event], n[has_event]
    surv = np.cumprod(1.0 - d_e / n_e)
    knots_t, knots_s = event_times, surv
    if uniq[-1] > event_times[-1]:
        knots_t = np.append(knots_t, uniq[-1])
        knots_s = np.append(knots_s, surv[-1])
    curve = SurvivalCurve(knots_t, knots_s, interpolation="step", extrapolation="linear")
    return KmCurve(curve, event_times, n_e.astype(int), d_e.astype(int))


def km_conditional(km: KmCurve | SurvivalCurve, c: float) -> SurvivalCurve:
    """``S(t | t > c) = min(S(t) / S(c), 1)``, with the extrapolated tail kept.

    Raises :class:`DegenerateConditionalError` when ``S(c)`` is zero even
    under extrapolation; callers then treat the subject as a point mass at
    ``c``.
    """
    curve = km.curve if isinstance(km, KmCurve) else km
    s_c = curve(c)
    if s_c <= 0:
        raise DegenerateConditionalError(f"no survival mass beyond t={c}")
    later = curve.times > c
    if later.any():
        times = curve.times[later]
        probs = np.minimum(curve.probs[later] / s_c, 1.0)
    else:
        times, probs = np.array([float(c)]), np.array([1.0])
    return SurvivalCurve(times, probs, curve.interpolation, curve.extrapolation, curve.zero_time)


def subject_stream(seed: int, subject: int) -> np.random.Generator:
    """Independent random stream for one subject, fixed by ``(seed, subject)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(subject,))))


def km_sample(cond: SurvivalCurve, rng: np.random.Generator, size: int | None = None):
    """Inverse-CDF draws from a survival curve."""
    u = rng.random(size)
    return curve_inverse(cond, u)


def margin_time(km: KmCurve, c: float) -> float:
    """KM conditional expectation of the event time given survival past ``c``."""
    try:
        return mean_survival_time(km_conditional(km, c))
    except DegenerateConditionalError:
        return float(c)


def km_mean(times, events) -> float:
    return mean_survival_time(km_fit_arrays(times, events).curve)


def pseudo_observations(ds: SurvivalDataset, return_flags: bool = False):
    """Jackknife pseudo-observations of the KM mean survival time.

    ``PO_i = N * theta - (N - 1) * theta_{-i}``, where ``theta`` is the mean
    of the KM curve. Leave-one-out sets without any event fall back to
    ``PO_i = theta`` and are flagged.
    """
    n = len(ds)
    theta = km_mean(ds.times, ds.events)
    po = np.empty(n)
    flags = np.zeros(n, dtype=bool)
    if n == 1:
        po[0] = theta
    else:
        cache: dict[tuple[float, bool], float] = {}
        mask = np.ones(n, dtype=bool)
        for i in range(n):
            key = (float(ds.times[i]), bool(ds.events[i]))
            if key not in cache:
                mask[i] = False
                if ds.events[mask].any():
                    cache[key] = n * theta - (n - 1) * km_mean(ds.times[mask], ds.events[mask])
                else:
                    cache[key] = np.nan
                mask[i] = True
            po[i] = cache[key]
        flags = np.isnan(po)
        if flags.any():
            warnings.warn(
                f"{int(flags.sum())} leave-one-out sets have no events; using the full-sample mean",
                stacklevel=2,
            )
            po[flags] = theta
    return (po, flags) if return_flags else po
