"""Datasets, survival curves and the curve algebra shared by every module."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

INTERPOLATIONS = ("step", "linear")
EXTRAPOLATIONS = ("linear", "hold")
PRESET_LEVEL_COUNTS = (9, 19, 39, 49, 99)


class SurvivalDataError(ValueError):
    """Raised when survival data violate a structural requirement."""


class NoEventsError(SurvivalDataError):
    pass


class EmptySplitError(SurvivalDataError):
    pass


class UnboundedCurveError(ValueError):
    """The curve never reaches zero, so its mean is infinite."""


class NonMonotonePctsError(ValueError):
    pass


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored observations ``(x_i, t_i, delta_i)``.

    ``times`` is the observed time ``min(e_i, c_i)`` and ``events`` is true
    when the event was observed.
    """

    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        times = _frozen(self.times)
        events = _frozen(self.events, dtype=bool)
        features = np.array(self.features, dtype=float, copy=True)
        if features.ndim == 1:
            features = features.reshape(len(times), -1)
        features.setflags(write=False)
        if times.ndim != 1 or events.shape != times.shape:
            raise SurvivalDataError("times and events must be 1-d arrays of equal length")
        if features.shape[0] != times.shape[0]:
            raise SurvivalDataError(
                f"{features.shape[0]} feature rows for {times.shape[0]} subjects"
            )
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise SurvivalDataError("times must be finite and non-negative")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(features.shape[1]))
        if len(names) != features.shape[1]:
            raise SurvivalDataError("feature_names length does not match feature dimension")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "feature_names", names)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "SurvivalDataset":
        index = np.asarray(index)
        return SurvivalDataset(
            self.features[index], self.times[index], self.events[index], self.feature_names
        )

    def require_events(self) -> None:
        if self.n_events == 0:
            raise NoEventsError("dataset contains no observed events")

    @staticmethod
    def concat(parts: Sequence["SurvivalDataset"]) -> "SurvivalDataset":
        return SurvivalDataset(
            np.vstack([p.features for p in parts]),
            np.concatenate([p.times for p in parts]),
            np.concatenate([p.events for p in parts]),
            parts[0].feature_names,
        )


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """A non-increasing survival function given by knots.

    Knot times are non-decreasing; a repeated time encodes a vertical drop and
    the curve is right-continuous there. Before the first knot the curve starts
    from ``(0, 1)``, either as a flat step or as a straight line. Past the last
    knot ``(t_max, S_max)`` the ``linear`` policy follows a straight line down
    to ``zero_time`` (by default the zero crossing of the line through
    ``(0, 1)`` and ``(t_max, S_max)``); ``hold`` keeps ``S_max`` forever.
    """

    times: np.ndarray
    probs: np.ndarray
    interpolation: str = "linear"
    extrapolation: str = "linear"
    zero_time: float | None = None

    def __post_init__(self):
        times = _frozen(self.times)
        probs = _frozen(self.probs)
        if times.ndim != 1 or times.shape != probs.shape or times.size == 0:
            raise ValueError("times and probs must be non-empty 1-d arrays of equal length")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.extrapolation not in EXTRAPOLATIONS:
            raise ValueError(f"unknown extrapolation {self.extrapolation!r}")
        if np.any(times < 0) or np.any(np.diff(times) < 0) or not np.all(np.isfinite(times)):
            raise ValueError("knot times must be finite, non-negative and non-decreasing")
        if np.any(probs < 0) or np.any(probs > 1) or np.any(np.diff(probs) > 0):
            raise ValueError("knot probabilities must lie in [0, 1] and be non-increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "probs", probs)
        if self.extrapolation == "linear":
            t_max, s_max = float(times[-1]), float(probs[-1])
            if self.zero_time is None:
                zt = t_max if s_max == 0 or t_max == 0 else (
                    np.inf if s_max == 1 else t_max / (1.0 - s_max)
                )
            else:
                zt = float(self.zero_time)
                if zt < t_max or (zt == t_max and s_max > 0):
                    raise ValueError("zero_time must lie beyond the last knot")
            object.__setattr__(self, "zero_time", zt)
        else:
            object.__setattr__(self, "zero_time", np.inf if probs[-1] > 0 else float(times[-1]))

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    @property
    def s_max(self) -> float:
        return float(self.probs[-1])

    def _points(self) -> tuple[np.ndarray, np.ndarray]:
        """Knots with the implicit ``(0, 1)`` prepended."""
        return np.concatenate(([0.0], self.times)), np.concatenate(([1.0], self.probs))

    def __call__(self, t):
        return curve_eval(self, t)

    def inverse(self, rho):
        return curve_inverse(self, rho)


def curve_eval(curve: SurvivalCurve, t):
    """Survival probability at ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    out = np.empty_like(t_arr)

    tail = t_arr > curve.t_max
    inside = ~tail
    ti = t_arr[inside]
    if curve.interpolation == "step":
        k = np.searchsorted(curve.times, ti, side="right")
        out[inside] = np.where(k == 0, 1.0, curve.probs[np.maximum(k - 1, 0)])
    else:
        xs, ys = curve._points()
        k = np.searchsorted(xs, ti, side="right")  # xs[k-1] <= t < xs[k]
        k = np.clip(k, 1, xs.size - 1)
        x0, x1, y0, y1 = xs[k - 1], xs[k], ys[k - 1], ys[k]
        width = x1 - x0
        frac = np.divide(ti - x0, width, out=np.zeros_like(ti), where=width > 0)
        vals = y0 + frac * (y1 - y0)
        # exactly on the last knot: right-continuous value
        vals = np.where(ti >= curve.t_max, curve.s_max, vals)
        out[inside] = vals

    if np.any(tail):
        tt = t_arr[tail]
        if curve.extrapolation == "hold" or curve.s_max == 0 or not np.isfinite(curve.zero_time):
            out[tail] = curve.s_max
        elif curve.zero_time <= curve.t_max:
            out[tail] = 0.0
        else:
            zt = curve.zero_time
            slope = curve.s_max / (zt - curve.t_max)
            out[tail] = np.maximum(curve.s_max - slope * (tt - curve.t_max), 0.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def curve_inverse(curve: SurvivalCurve, rho):
    """Smallest ``t`` with ``S(t) <= rho`` (the percentile time).

    Flat stretches resolve to their left edge. Levels below the last knot use
    the extrapolated tail; under ``hold`` such levels are never reached and
    map to ``inf``.
    """
    r = np.asarray(rho, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    out = np.empty_like(r)

    if curve.interpolation == "step":
        xs, ys = curve.times, curve.probs
    else:
        xs, ys = curve._points()
    # first index with ys <= rho; ys is non-increasing so search on -ys
    k = np.searchsorted(-ys, -r, side="left")
    found = k < ys.size

    kf = k[found]
    rf = r[found]
    if curve.interpolation == "step":
        out[found] = xs[kf]
    else:
        prev = np.maximum(kf - 1, 0)
        x0, x1, y0, y1 = xs[prev], xs[kf], ys[prev], ys[kf]
        drop = y0 - y1
        frac = np.divide(y0 - rf, drop, out=np.zeros_like(rf), where=drop > 0)
        out[found] = np.where(kf == 0, xs[0], x0 + frac * (x1 - x0))

    if np.any(~found):
        rt = r[~found]
        if curve.extrapolation == "hold" or not np.isfinite(curve.zero_time):
            out[~found] = np.inf
        else:
            zt = curve.zero_time
            out[~found] = curve.t_max + (curve.s_max - rt) / curve.s_max * (zt - curve.t_max)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class PercentileGrid:
    """Strictly increasing survival levels in (0, 1)."""

    levels: tuple[float, ...]

    def __post_init__(self):
        lv = tuple(float(v) for v in self.levels)
        if not lv:
            raise ValueError("a percentile grid needs at least one level")
        if lv[0] <= 0 or lv[-1] >= 1 or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def preset(cls, count: int) -> "PercentileGrid":
        """``count`` evenly spaced levels, e.g. 9 gives 0.1, ..., 0.9."""
        if count not in PRESET_LEVEL_COUNTS:
            raise ValueError(f"preset must be one of {PRESET_LEVEL_COUNTS}, got {count}")
        return cls(tuple(round(k / (count + 1), 12) for k in range(1, count + 1)))

    @classmethod
    def deciles(cls) -> "PercentileGrid":
        return cls.preset(9)

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def descending(self) -> np.ndarray:
        return np.array(self.levels[::-1])


def curve_from_pcts(pcts, grid: PercentileGrid) -> SurvivalCurve:
    """Rebuild a survival curve from percentile times.

    ``pcts`` are ordered by decreasing level (so times increase). Negative
    times are clamped to zero here and only here.
    """
    p = np.asarray(pcts, dtype=float)
    if p.shape != (len(grid),):
        raise ValueError(f"expected {len(grid)} percentile times, got shape {p.shape}")
    if np.any(np.diff(p) < 0):
        raise NonMonotonePctsError("percentile times must be non-decreasing; rearrange first")
    return SurvivalCurve(np.maximum(p, 0.0), grid.descending, "linear", "linear")


def median_survival_time(curve: SurvivalCurve) -> float:
    return curve_inverse(curve, 0.5)


def mean_survival_time(curve: SurvivalCurve) -> float:
    """Area under the curve out to its zero crossing."""
    if not np.isfinite(curve.zero_time):
        raise UnboundedCurveError("curve keeps positive mass forever")
    if curve.interpolation == "step":
        xs = np.concatenate(([0.0], curve.times))
        heights = np.concatenate(([1.0], curve.probs[:-1]))
        body = float(np.sum(np.diff(xs) * heights))
    else:
        xs, ys = curve._points()
        body = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))
    tail = 0.5 * curve.s_max * (curve.zero_time - curve.t_max) if curve.s_max > 0 else 0.0
    return body + tail


def stratified_split(
    ds: SurvivalDataset, fractions: Sequence[float], seed: int
) -> list[SurvivalDataset]:
    """Partition balancing event status and time.

    Each event-status group is sorted by time and dealt to the splits in
    proportion to ``fractions``; the dealt labels are then shuffled inside
    consecutive blocks so that neighbouring times land in random splits.
    """
    fr = np.asarray(fractions, dtype=float)
    if fr.ndim != 1 or fr.size == 0 or np.any(fr <= 0) or not np.isclose(fr.sum(), 1.0):
        raise ValueError("fractions must be positive and sum to 1")
    rng = np.random.default_rng(seed)
    block = int(np.ceil(1.0 / fr.min() - 1e-9))
    assignment = np.empty(len(ds), dtype=int)
    for status in (True, False):
        idx = np.flatnonzero(ds.events == status)
        if idx.size == 0:
            continue
        # random tie-break, then stable sort by time
        idx = idx[rng.permutation(idx.size)]
        idx = idx[np.argsort(ds.times[idx], kind="stable")]
        labels = _deal(idx.size, fr)
        for start in range(0, idx.size, block):
            chunk = labels[start:start + block]
            labels[start:start + block] = chunk[rng.permutation(chunk.size)]
        assignment[idx] = labels
    parts = []
    for s in range(fr.size):
        members = np.flatnonzero(assignment == s)
        if members.size == 0:
            raise EmptySplitError(f"split {s} received no records")
        parts.append(ds.subset(members))
    return parts


def _deal(n: int, fractions: np.ndarray) -> np.ndarray:
    counts = np.zeros(fractions.size)
    labels = np.empty(n, dtype=int)
    for pos in range(n):
        s = int(np.argmax(fractions * (pos + 1) - counts))
        labels[pos] = s
        counts[s] += 1
    return labels
