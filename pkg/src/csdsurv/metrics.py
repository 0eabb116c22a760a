"""Discrimination and calibration metrics for individual survival distributions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    PercentileGrid,
    SurvivalCurve,
    SurvivalDataset,
    curve_eval,
    mean_survival_time,
    median_survival_time,
)
from .km import KmCurve, km_fit, km_fit_arrays, pseudo_observations


class NoComparablePairsError(ValueError):
    pass


class DegenerateGroupError(ValueError):
    pass


def _eval_each(predictions: Sequence[SurvivalCurve], t) -> np.ndarray:
    """``(subjects, len(t))`` matrix of predicted survival, reusing shared curves."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((len(predictions), t.size))
    seen: dict[int, np.ndarray] = {}
    for i, c in enumerate(predictions):
        key = id(c)
        if key not in seen:
            seen[key] = curve_eval(c, t)
        out[i] = seen[key]
    return out


def _mean_curve(predictions: Sequence[SurvivalCurve], t) -> np.ndarray:
    """Average predicted survival at each time, without the full matrix."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    total = np.zeros(t.size)
    counts: dict[int, list] = {}
    for c in predictions:
        counts.setdefault(id(c), [c, 0])[1] += 1
    for c, k in counts.values():
        total += k * curve_eval(c, t)
    return total / len(predictions)


def survival_at_observed(predictions: Sequence[SurvivalCurve], ds: SurvivalDataset) -> np.ndarray:
    """``S_i(t_i | x_i)`` for each subject."""
    if len(predictions) != len(ds):
        raise ValueError("one prediction per subject is required")
    return np.array([curve_eval(c, t) for c, t in zip(predictions, ds.times)])


def predicted_times(predictions: Sequence[SurvivalCurve], kind: str = "median") -> np.ndarray:
    if kind == "median":
        return np.array([median_survival_time(c) for c in predictions])
    if kind == "mean":
        return np.array([mean_survival_time(c) for c in predictions])
    raise ValueError("kind must be 'median' or 'mean'")


# -- discrimination -----------------------------------------------------------

def concordance_index(
    risk_times, ds: SurvivalDataset, tie_score: float = 0.5, chunk: int = 2048
) -> float:
    """Harrell's C over comparable pairs, using predicted times as negative risk.

    A pair ``(i, j)`` is comparable when ``t_i < t_j`` and ``i`` had the
    event; it is concordant when ``pred_i < pred_j``. Tied predictions score
    ``tie_score`` (0.5 by default; 0 reproduces the strict indicator).
    """
    pred = np.asarray(risk_times, dtype=float)
    t, d = ds.times, ds.events
    if pred.shape != t.shape:
        raise ValueError("one predicted time per subject is required")
    num = 0.0
    den = 0
    rows = np.flatnonzero(d)
    for start in range(0, rows.size, chunk):
        i = rows[start:start + chunk]
        comparable = t[i, None] < t[None, :]
        conc = pred[i, None] < pred[None, :]
        tied = pred[i, None] == pred[None, :]
        den += int(comparable.sum())
        num += float((comparable & conc).sum()) + tie_score * float((comparable & tied).sum())
    if den == 0:
        raise NoComparablePairsError("no comparable pairs")
    return num / den


# -- distribution calibration -------------------------------------------------

@dataclass(frozen=True, eq=False)
class DcalHistogram:
    """Subject mass per probability bin; bins are ``[0, b_1], (b_1, b_2], ...``."""

    bin_edges: np.ndarray
    masses: np.ndarray


def d_cal_histogram(
    predictions: Sequence[SurvivalCurve], ds: SurvivalDataset, bins: int = 10
) -> DcalHistogram:
    """D-calibration histogram with censored subjects split over lower bins.

    An uncensored subject adds one unit to the bin holding ``S(t_i)``. A
    censored subject with ``p = S(c_i)`` adds ``(p - a) / p`` to its own bin
    ``(a, b]`` and ``(b' - a') / p`` to every bin lying wholly below ``p``;
    ``p = 0`` puts the whole unit in the lowest bin.
    """
    edges = np.linspace(0.0, 1.0, bins + 1)
    p = survival_at_observed(predictions, ds)
    own = np.clip(np.searchsorted(edges, p, side="left") - 1, 0, bins - 1)
    masses = np.zeros(bins)
    ev = ds.events
    np.add.at(masses, own[ev], 1.0)

    cens = np.flatnonzero(~ev)
    zero = cens[p[cens] <= 0]
    if zero.size:
        warnings.warn(
            f"{zero.size} censored subjects have predicted survival 0 at censoring", stacklevel=2
        )
        masses[0] += zero.size
    for i in cens[p[cens] > 0]:
        b = own[i]
        masses[b] += (p[i] - edges[b]) / p[i]
        masses[:b] += np.diff(edges)[:b] / p[i]
    return DcalHistogram(edges, masses)


def d_cal_cumulative(
    predictions: Sequence[SurvivalCurve], ds: SurvivalDataset, levels
) -> np.ndarray:
    """Fractional subject count with predicted survival in ``[0, rho]``, over ``N``."""
    levels = np.asarray(levels, dtype=float)
    p = survival_at_observed(predictions, ds)
    ev = ds.events
    unc = (p[ev, None] <= levels[None, :]).sum(axis=0)
    pc = p[~ev]
    safe = np.where(pc > 0, pc, 1.0)
    cens_mass = np.where(pc[:, None] > 0, np.minimum(levels[None, :] / safe[:, None], 1.0), 1.0)
    return (unc + cens_mass.sum(axis=0)) / len(ds)


def d_cal_pp_points(
    predictions: Sequence[SurvivalCurve], ds: SurvivalDataset, grid: PercentileGrid | None = None
) -> np.ndarray:
    """``(expected, observed)`` rows for a P-P plot."""
    levels = np.array((grid or PercentileGrid.deciles()).levels)
    return np.column_stack([levels, d_cal_cumulative(predictions, ds, levels)])


def d_cal_statistic(
    predictions: Sequence[SurvivalCurve], ds: SurvivalDataset, grid: PercentileGrid | None = None
) -> float:
    """Mean squared gap between the P-P curve and the diagonal."""
    pp = d_cal_pp_points(predictions, ds, grid)
    return float(np.mean((pp[:, 1] - pp[:, 0]) ** 2))


# -- KM calibration and 1-calibration -----------------------------------------

def km_cal_integrand(
    predictions: Sequence[SurvivalCurve], ds: SurvivalDataset, times, km: KmCurve | None = None
) -> np.ndarray:
    km = km or km_fit(ds)
    mean_pred = _mean_curve(predictions, times)
    return (curve_eval(km.curve, times) - mean_pred) ** 2


def km_cal_times(ds: SurvivalDataset) -> np.ndarray:
    """Integration knots: zero and the unique observed times."""
    return np.unique(np.concatenate([[0.0], ds.times]))


def km_calibration(predictions: Sequence[SurvivalCurve], ds: SurvivalDataset) -> float:
    """``1/t_max * integral (S_KM(t) - mean_i S_i(t))^2 dt``, trapezoid rule."""
    km = km_fit(ds)
    times = km_cal_times(ds)
    return integrated_gap(km.curve, predictions, times)


def integrated_gap(reference: SurvivalCurve, predictions: Sequence[SurvivalCurve], times) -> float:
    times = np.asarray(times, dtype=float)
    mean_pred = _mean_curve(predictions, times)
    sq = (curve_eval(reference, times) - mean_pred) ** 2
    t_max = times[-1]
    return float(np.trapezoid(sq, times) / t_max) if t_max > 0 else 0.0


def hosmer_lemeshow_terms(
    predictions: Sequence[SurvivalCurve], ds: SurvivalDataset, t_star: float, groups: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-group numerators ``(|G| S_KM(G)(t*) - sum S_i(t*))^2`` and denominators.

    Subjects are sorted by predicted survival at ``t_star`` and cut into
    ``groups`` equal parts, the remainder going to the earliest groups.
    """
    if groups < 1:
        raise ValueError("groups must be >= 1")
    s = _eval_each(predictions, [t_star])[:, 0]
    order = np.argsort(s, kind="stable")
    num, den = [], []
    for members in np.array_split(order, groups):
        s_k = s[members]
        pbar = s_k.mean()
        if pbar <= 0 or pbar >= 1:
            raise DegenerateGroupError(f"group mean prediction {pbar} at t*={t_star}")
        ev = ds.events[members]
        observed = km_fit_arrays(ds.times[members], ev)(t_star) if ev.any() else 1.0
        num.append((members.size * observed - s_k.sum()) ** 2)
        den.append(s_k.sum() * (1.0 - pbar))
    return np.array(num), np.array(den)


def hosmer_lemeshow(
    predictions: Sequence[SurvivalCurve], ds: SurvivalDataset, t_star: float, groups: int = 10
) -> float:
    num, den = hosmer_lemeshow_terms(predictions, ds, t_star, groups)
    return float(np.sum(num / den))


# -- other accuracy metrics ---------------------------------------------------

def censoring_curve(train: SurvivalDataset) -> KmCurve | None:
    """Reverse KM (censoring survival) of the training set; ``None`` if nothing is censored."""
    if train.events.all():
        return None
    return km_fit_arrays(train.times, ~train.events)


def integrated_brier_score(
    predictions: Sequence[SurvivalCurve], test: SurvivalDataset, censor_km: KmCurve | None
) -> float:
    """IPCW Brier score integrated over ``[0, t_max]`` of the test set.

    ``censor_km`` is the censoring survival ``G``; ``None`` means ``G = 1``.
    Terms whose weight has ``G = 0`` are dropped.
    """
    t_max = float(test.times.max())
    grid = np.unique(np.concatenate([[0.0], test.times]))
    grid = grid[grid <= t_max]
    s = _eval_each(predictions, grid)

    def g(x):
        return np.ones_like(np.asarray(x, dtype=float)) if censor_km is None else censor_km(x)

    g_obs = g(test.times)
    g_grid = g(grid)
    inv_obs = np.divide(1.0, g_obs, out=np.zeros_like(g_obs), where=g_obs > 0)
    inv_grid = np.divide(1.0, g_grid, out=np.zeros_like(g_grid), where=g_grid > 0)
    t = test.times[:, None]
    died = (t <= grid[None, :]) & test.events[:, None]
    alive = t > grid[None, :]
    bs = (s**2 * died * inv_obs[:, None] + (1.0 - s) ** 2 * alive * inv_grid[None, :]).mean(axis=0)
    if t_max <= 0:
        return 0.0
    return float(np.trapezoid(bs, grid) / t_max)


def mae_po(pred_times, ds: SurvivalDataset) -> float:
    """Mean absolute error, censored subjects scored against their pseudo-observation."""
    pred = np.asarray(pred_times, dtype=float)
    target = ds.times.astype(float)
    if (~ds.events).any():
        target = np.where(ds.events, target, pseudo_observations(ds))
    return float(np.mean(np.abs(pred - target)))


# -- report -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MetricReport:
    c_index: float
    d_cal: float
    km_cal: float
    ibs: float
    mae_po: float
    hl: tuple[float, float, int] | None = None  # (statistic, time, groups)
    pp_points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def __post_init__(self):
        values = [self.c_index, self.d_cal, self.km_cal, self.ibs, self.mae_po]
        if self.hl is not None:
            values.append(self.hl[0])
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite metric in report: {values}")

    def as_dict(self) -> dict[str, float]:
        out = {
            "c_index": self.c_index,
            "d_cal": self.d_cal,
            "km_cal": self.km_cal,
            "ibs": self.ibs,
            "mae_po": self.mae_po,
        }
        if self.hl is not None:
            out["hl"] = self.hl[0]
            out["hl_time"] = self.hl[1]
            out["hl_groups"] = float(self.hl[2])
        return out


def evaluate(
    predictions: Sequence[SurvivalCurve],
    test: SurvivalDataset,
    train: SurvivalDataset,
    pred_times=None,
    grid: PercentileGrid | None = None,
    hl_time: float | None = None,
    hl_groups: int = 10,
    tie_score: float = 0.5,
) -> MetricReport:
    """Full metric suite; ``pred_times`` defaults to the predicted medians."""
    if pred_times is None:
        pred_times = predicted_times(predictions, "median")
    pp = d_cal_pp_points(predictions, test, grid)
    hl = None
    if hl_time is not None:
        hl = (hosmer_lemeshow(predictions, test, hl_time, hl_groups), float(hl_time), hl_groups)
    return MetricReport(
        c_index=concordance_index(pred_times, test, tie_score),
        d_cal=float(np.mean((pp[:, 1] - pp[:, 0]) ** 2)),
        km_cal=km_calibration(predictions, test),
        ibs=integrated_brier_score(predictions, test, censoring_curve(train)),
        mae_po=mae_po(pred_times, test),
        hl=hl,
        pp_points=pp,
    )
