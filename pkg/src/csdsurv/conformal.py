"""Conformalized survival distributions.

Predicted curves are discretised into percentile times, shifted per level by
a finite-sample corrected quantile of the conformity scores, repaired for
monotonicity and rebuilt as curves.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import PercentileGrid, SurvivalCurve, SurvivalDataset, curve_from_pcts, curve_inverse
from .km import (
    DegenerateConditionalError,
    KmCurve,
    km_conditional,
    km_sample,
    margin_time,
    pseudo_observations,
    subject_stream,
)

HANDLERS = ("uncensored", "margin", "pseudo_observation", "km_sampling")
POLICIES = ("separate_validation", "merged_train_and_validation")


class EmptyConformalSetError(ValueError):
    pass


class EmptyLevelError(ValueError):
    pass


class RankOverflowWarning(UserWarning):
    """The corrected rank exceeds the number of conformal subjects."""


@dataclass(frozen=True)
class CsdConfig:
    handler: str = "km_sampling"
    repeat_r: int = 1000
    grid: PercentileGrid = field(default_factory=lambda: PercentileGrid.preset(19))
    conformal_policy: str = "merged_train_and_validation"
    seed: int = 0

    def __post_init__(self):
        if self.handler not in HANDLERS:
            raise ValueError(f"handler must be one of {HANDLERS}")
        if self.conformal_policy not in POLICIES:
            raise ValueError(f"conformal_policy must be one of {POLICIES}")
        if self.repeat_r < 1:
            raise ValueError("repeat_r must be >= 1")


@dataclass(frozen=True, eq=False)
class PctMatrix:
    """Percentile times, one row per subject.

    Columns follow ``levels`` in decreasing order, so a valid row is
    non-decreasing left to right.
    """

    levels: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        times = np.array(self.times, dtype=float)
        if times.ndim != 2 or times.shape[1] != levels.size:
            raise ValueError("times must be a (subjects, levels) matrix")
        if np.any(np.diff(levels) >= 0):
            raise ValueError("levels must be strictly decreasing")
        levels.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "times", times)

    @property
    def grid(self) -> PercentileGrid:
        return PercentileGrid(tuple(self.levels[::-1]))

    def column(self, rho: float) -> np.ndarray:
        return self.times[:, _level_index(self.levels, rho)]

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.times, axis=1) >= 0))


@dataclass(frozen=True, eq=False)
class ConformityScoreSet:
    """Scores ``q(rho | x_j) - t_j^r`` per level, stored factorised.

    ``pcts`` holds the percentile times of the scored subjects and
    ``targets`` their (possibly sampled) event times, one column per repeat.
    ``effective_n`` is the number of conformal subjects used in the rank
    correction; with KM sampling each level holds ``effective_n * R`` scores.
    """

    levels: np.ndarray
    pcts: np.ndarray
    targets: np.ndarray
    effective_n: int

    def column(self, index: int) -> np.ndarray:
        return (self.pcts[:, index, None] - self.targets).ravel()

    def level(self, rho: float) -> np.ndarray:
        return self.column(_level_index(self.levels, rho))

    @property
    def scores(self) -> np.ndarray:
        """Full ``(subjects * R, levels)`` score matrix, subject-major."""
        return np.column_stack([self.column(l) for l in range(self.levels.size)])


def _level_index(levels: np.ndarray, rho: float) -> int:
    hits = np.flatnonzero(np.isclose(levels, rho, rtol=0, atol=1e-9))
    if hits.size == 0:
        raise KeyError(f"level {rho} not in grid")
    return int(hits[0])


def discretize(predictions: Sequence[SurvivalCurve], grid: PercentileGrid) -> PctMatrix:
    levels = grid.descending
    return PctMatrix(levels, np.vstack([curve_inverse(c, levels) for c in predictions]))


def conformity_scores(
    pcts: PctMatrix,
    labels: SurvivalDataset,
    km: KmCurve,
    cfg: CsdConfig,
    workers: int = 1,
) -> ConformityScoreSet:
    if pcts.times.shape[0] != len(labels):
        raise ValueError("one row of percentile times per labelled subject is required")
    q = pcts.times
    t = labels.times
    if cfg.handler == "uncensored":
        keep = labels.events
        if not keep.any():
            raise EmptyConformalSetError("no uncensored subjects in the conformal set")
        return ConformityScoreSet(pcts.levels, q[keep], t[keep, None], int(keep.sum()))
    if cfg.handler == "margin":
        surrogate = t.copy()
        for j in np.flatnonzero(~labels.events):
            surrogate[j] = margin_time(km, t[j])
        return ConformityScoreSet(pcts.levels, q, surrogate[:, None], len(labels))
    if cfg.handler == "pseudo_observation":
        po = pseudo_observations(labels)
        surrogate = np.where(labels.events, t, po)
        return ConformityScoreSet(pcts.levels, q, surrogate[:, None], len(labels))

    draws = sample_event_times(labels, km, cfg.repeat_r, cfg.seed, workers)
    return ConformityScoreSet(pcts.levels, q, draws, len(labels))


def sample_event_times(
    labels: SurvivalDataset, km: KmCurve, repeat_r: int, seed: int, workers: int = 1
) -> np.ndarray:
    """``(subjects, R)`` surrogate event times for KM sampling.

    Uncensored subjects repeat their event time. Censored subject ``j`` draws
    from the KM curve conditioned on survival past its censoring time, using
    the stream fixed by ``(seed, j)``; a conditional with no mass left is a
    point mass at the censoring time.
    """

    def one(j: int) -> np.ndarray:
        tj = float(labels.times[j])
        if labels.events[j]:
            return np.full(repeat_r, tj)
        try:
            cond = km_conditional(km, tj)
        except DegenerateConditionalError:
            return np.full(repeat_r, tj)
        return km_sample(cond, subject_stream(seed, j), repeat_r)

    idx = range(len(labels))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, idx))
    else:
        rows = [one(j) for j in idx]
    return np.vstack(rows) if rows else np.empty((0, repeat_r))


def quantile_rank(rho: float, n: int) -> int:
    """``ceil(rho * (n + 1))``, robust to float noise in ``rho``."""
    return math.ceil(round(rho * (n + 1), 9))


def conformal_quantile_values(values: np.ndarray, n: int, rho: float) -> float:
    """Corrected empirical quantile of a score multiset.

    With ``k = ceil(rho * (n + 1))`` the result is the element at relative
    rank ``k / n``, i.e. the ``ceil(k * M / n)``-th smallest of the ``M``
    values. Ranks past ``n`` return the maximum with a warning.
    """
    values = np.asarray(values, dtype=float)
    m = values.size
    if m == 0 or n < 1:
        raise EmptyLevelError(f"no scores at level {rho}")
    k = quantile_rank(rho, n)
    if k > n:
        warnings.warn(
            f"rank {k} exceeds {n} conformal subjects at level {rho}; using the maximum score",
            RankOverflowWarning,
            stacklevel=2,
        )
        return float(values.max())
    pos = -(-k * m // n) - 1
    return float(np.partition(values, pos)[pos])


def conformal_quantile(scores: ConformityScoreSet, rho: float) -> float:
    return conformal_quantile_values(scores.level(rho), scores.effective_n, rho)


def level_shifts(scores: ConformityScoreSet) -> np.ndarray:
    """One shift per level, in the score set's column order."""
    return np.array(
        [conformal_quantile_values(scores.column(l), scores.effective_n, rho)
         for l, rho in enumerate(scores.levels)]
    )


def adjust(pcts: PctMatrix, shifts) -> PctMatrix:
    shifts = np.asarray(shifts, dtype=float)
    if shifts.shape != pcts.levels.shape:
        raise ValueError("one shift per level is required")
    return PctMatrix(pcts.levels, pcts.times - shifts[None, :])


def rearrange(pcts: PctMatrix) -> tuple[PctMatrix, bool]:
    """Monotone rearrangement: sort each row. Returns the matrix and whether anything moved."""
    if pcts.is_monotone():
        return pcts, False
    return PctMatrix(pcts.levels, np.sort(pcts.times, axis=1)), True


def pct_mean_times(pcts: PctMatrix) -> np.ndarray:
    """Mean survival time of each rebuilt curve, integrated over levels.

    Uses the same polyline as :func:`curve_from_pcts` (through ``(0, 1)`` and
    down to zero at ``q_last / (1 - rho_last)``) but without clamping, so the
    result is a fixed linear functional of each row.
    """
    rho = np.concatenate(([1.0], pcts.levels, [0.0]))
    q = pcts.times
    t_zero = q[:, -1] / (1.0 - pcts.levels[-1])
    pts = np.hstack([np.zeros((q.shape[0], 1)), q, t_zero[:, None]])
    widths = -np.diff(rho)
    return ((pts[:, 1:] + pts[:, :-1]) / 2.0) @ widths


@dataclass(frozen=True, eq=False)
class CsdResult:
    curves: list[SurvivalCurve]
    pcts: PctMatrix  # after adjustment and rearrangement
    pcts_before: PctMatrix
    shifts: np.ndarray
    rearranged: bool


def run_csd(
    predictions_conformal: Sequence[SurvivalCurve],
    conformal_labels: SurvivalDataset,
    predictions_test: Sequence[SurvivalCurve],
    km_from_train: KmCurve,
    cfg: CsdConfig,
    workers: int = 1,
) -> CsdResult:
    pct_con = discretize(predictions_conformal, cfg.grid)
    scores = conformity_scores(pct_con, conformal_labels, km_from_train, cfg, workers)
    shifts = level_shifts(scores)
    pct_test = discretize(predictions_test, cfg.grid)
    adjusted, changed = rearrange(adjust(pct_test, shifts))
    curves = [curve_from_pcts(row, cfg.grid) for row in adjusted.times]
    return CsdResult(curves, adjusted, pct_test, shifts, changed)


def csd_pipeline(
    model_predictions_conformal: Sequence[SurvivalCurve],
    conformal_labels: SurvivalDataset,
    model_predictions_test: Sequence[SurvivalCurve],
    km_from_train: KmCurve,
    cfg: CsdConfig,
) -> list[SurvivalCurve]:
    return run_csd(
        model_predictions_conformal, conformal_labels, model_predictions_test, km_from_train, cfg
    ).curves
