"""Evaluation suite: success, timing, path errors, curvature, significance.

All functions are pure. Distances are millimetres, durations seconds,
curvatures 1/mm. Episode inputs are EpisodeResult objects from the
environment; path inputs are (n, 3) arrays of waypoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BSpline
from scipy.spatial.distance import cdist
from scipy.stats import chi2

from .errors import ConfigError


@dataclass(frozen=True)
class SignificanceResult:
    statistic: float
    p_value: float
    significant: bool  # at the 0.05 level


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate of one evaluation batch.

    Scalar fields are means over the batch; the tracking series keeps every
    per-point distance so callers can plot or re-summarise it.
    """

    success_rate: float
    n_success: int
    n_total: int
    mean_steps: float
    mean_duration: float
    targeting_error: float
    tracking_series: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tracking_mean: float = float("nan")
    tracking_std: float = float("nan")
    curvature_mean: float = float("nan")
    curvature_std: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ConfigError("success_rate outside [0, 1]")
        if self.targeting_error < 0.0:
            raise ConfigError("targeting_error must be nonnegative")
        if np.any(np.asarray(self.tracking_series) < 0.0):
            raise ConfigError("tracking distances must be nonnegative")

    def lines(self) -> List[str]:
        out = [
            f"episodes            {self.n_total}",
            f"successes           {self.n_success}",
            f"success_rate        {self.success_rate:.4f}",
            f"mean_steps          {self.mean_steps:.2f}",
            f"mean_duration_s     {self.mean_duration:.3f}",
            f"targeting_error_mm  {self.targeting_error:.3f}",
        ]
        if len(self.tracking_series):
            out.append(f"tracking_mm         {self.tracking_mean:.3f} +/- {self.tracking_std:.3f}")
        if np.isfinite(self.curvature_mean):
            out.append(
                f"curvature_per_mm    {self.curvature_mean:.4f} +/- {self.curvature_std:.4f}"
            )
        return out


# -- scalar episode metrics ------------------------------------------------


def success_rate(results: Sequence) -> float:
    if len(results) == 0:
        raise ValueError("success_rate needs at least one episode")
    flags = [bool(getattr(r, "success", r)) for r in results]
    return sum(flags) / len(flags)


def timesteps(result) -> int:
    if result.last_step < result.first_step:
        raise ValueError("episode ends before it starts")
    return result.last_step - result.first_step + 1


def duration(result) -> float:
    if result.end_time < result.start_time:
        raise ValueError("episode ends before it starts")
    return result.end_time - result.start_time


# -- desired-path geometry -------------------------------------------------


def _dedup(points: np.ndarray) -> np.ndarray:
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(points, axis=0), axis=1) > 1e-12
    return points[keep]


def _arc_resample(dense: np.ndarray, n_samples: int) -> np.ndarray:
    steps = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    targets = np.linspace(0.0, cum[-1], n_samples)
    out = np.empty((n_samples, 3))
    for axis in range(3):
        out[:, axis] = np.interp(targets, cum, dense[:, axis])
    return out


def resample_path(waypoints: np.ndarray, n_samples: int = 500) -> np.ndarray:
    """Smooth, arc-length-uniform densification of a waypoint polyline.

    Waypoints act as control points of a clamped cubic B-spline with
    chord-length knots, so the curve starts and ends exactly on the first
    and last waypoints and never leaves their convex hull; fewer than four
    waypoints fall back to the polyline itself. Consecutive duplicates are
    collapsed first.
    """
    pts = _dedup(np.asarray(waypoints, dtype=np.float64).reshape(-1, 3))
    if n_samples < 2:
        raise ConfigError("n_samples must be at least 2")
    if len(pts) < 2:
        raise ConfigError("resample_path needs at least 2 distinct waypoints")
    if len(pts) < 4:
        return _arc_resample(pts, n_samples)
    chord = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    u = np.concatenate([[0.0], np.cumsum(chord)]) / np.sum(chord)
    # clamped knot vector; interior knots by de Boor averaging of the
    # chord parameters keeps the parameterization chord-proportional
    n = len(pts)
    interior = [np.mean(u[i : i + 3]) for i in range(1, n - 3)]
    knots = np.concatenate([np.zeros(4), interior, np.ones(4)])
    spline = BSpline(knots, pts, 3)
    dense = spline(np.linspace(0.0, 1.0, max(8 * n_samples, 1000)))
    return _arc_resample(dense, n_samples)


def tracking_error(
    trajectory: np.ndarray, desired: np.ndarray
) -> Tuple[np.ndarray, float, float]:
    """Distance from each trajectory point to the nearest desired-path point.

    The desired path carries no timestamps, so pairing is by proximity, not
    by index. Returns (series, mean, std).
    """
    traj = np.asarray(trajectory, dtype=np.float64).reshape(-1, 3)
    path = np.asarray(desired, dtype=np.float64).reshape(-1, 3)
    if len(traj) == 0 or len(path) == 0:
        raise ValueError("tracking_error needs nonempty trajectory and path")
    series = cdist(traj, path).min(axis=1)
    return series, float(series.mean()), float(series.std())


def targeting_error(trajectory: np.ndarray, target: np.ndarray) -> float:
    """Closest approach of the trajectory to the target position."""
    traj = np.asarray(trajectory, dtype=np.float64).reshape(-1, 3)
    if len(traj) == 0:
        raise ValueError("targeting_error needs a nonempty trajectory")
    return float(np.linalg.norm(traj - np.asarray(target, dtype=np.float64), axis=1).min())


def curvature(trajectory: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Discrete curvature from the circumscribed circle of each point triple.

    kappa = 4 * area / (|ab| * |bc| * |ac|); triples with a repeated point
    are skipped. Returns (series, mean, std).
    """
    traj = np.asarray(trajectory, dtype=np.float64).reshape(-1, 3)
    if len(traj) < 3:
        raise ValueError("curvature needs at least 3 points")
    a, b, c = traj[:-2], traj[1:-1], traj[2:]
    ab = np.linalg.norm(b - a, axis=1)
    bc = np.linalg.norm(c - b, axis=1)
    ac = np.linalg.norm(c - a, axis=1)
    ok = (ab > 1e-12) & (bc > 1e-12) & (ac > 1e-12)
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    series = 4.0 * area[ok] / (ab[ok] * bc[ok] * ac[ok])
    if len(series) == 0:
        return series, float("nan"), float("nan")
    return series, float(series.mean()), float(series.std())


# -- significance ----------------------------------------------------------


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # mean of ranks i+1 .. j+1
        i = j + 1
    return ranks


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> SignificanceResult:
    """Rank-based H test with tie correction; p from the chi-squared tail.

    A sample where every value is identical carries no rank information and
    reports H = 0, p = 1.
    """
    if len(groups) < 2:
        raise ValueError("kruskal_wallis needs at least 2 groups")
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if any(len(g) == 0 for g in arrays):
        raise ValueError("every group needs at least one sample")
    pooled = np.concatenate(arrays)
    total = len(pooled)
    ranks = _average_ranks(pooled)
    h = 0.0
    start = 0
    for g in arrays:
        r = ranks[start : start + len(g)].sum()
        h += r * r / len(g)
        start += len(g)
    h = 12.0 / (total * (total + 1)) * h - 3.0 * (total + 1)
    _, counts = np.unique(pooled, return_counts=True)
    tie_factor = 1.0 - np.sum(counts**3 - counts) / (total**3 - total)
    if tie_factor <= 0.0:  # every value identical
        return SignificanceResult(statistic=0.0, p_value=1.0, significant=False)
    h /= tie_factor
    p = float(chi2.sf(h, len(arrays) - 1))
    return SignificanceResult(statistic=float(h), p_value=p, significant=p < 0.05)


# -- aggregation -----------------------------------------------------------


def target_distance_series(result) -> np.ndarray:
    """Live tip-to-target distance at every step, robust to a moving target."""
    dists = [float(np.linalg.norm(t[0].v)) for t in result.transitions]
    if result.transitions:
        dists.append(float(np.linalg.norm(result.transitions[-1][3].v)))
    return np.asarray(dists)


def episode_targeting_error(result) -> float:
    """Closest live tip-to-target distance reached over one episode."""
    d = target_distance_series(result)
    return float(d.min()) if len(d) else float("nan")


def evaluate_episodes(
    results: Sequence,
    desired: Optional[np.ndarray] = None,
    n_samples: int = 500,
) -> MetricsReport:
    """One report for a batch of episodes, optionally against a desired path."""
    if len(results) == 0:
        raise ValueError("evaluate_episodes needs at least one episode")
    n_success = sum(1 for r in results if r.success)
    steps = [timesteps(r) for r in results]
    durations = [duration(r) for r in results]
    per_episode_targeting = [episode_targeting_error(r) for r in results]
    tracking = np.zeros(0)
    tracking_mean = tracking_std = float("nan")
    if desired is not None:
        dense = resample_path(desired, n_samples)
        chunks = [tracking_error(r.trajectory, dense)[0] for r in results if len(r.trajectory)]
        if chunks:
            tracking = np.concatenate(chunks)
            tracking_mean = float(tracking.mean())
            tracking_std = float(tracking.std())
    curv_chunks = [curvature(r.trajectory)[0] for r in results if len(r.trajectory) >= 3]
    curv = np.concatenate(curv_chunks) if curv_chunks else np.zeros(0)
    return MetricsReport(
        success_rate=success_rate(results),
        n_success=n_success,
        n_total=len(results),
        mean_steps=float(np.mean(steps)),
        mean_duration=float(np.mean(durations)),
        targeting_error=float(np.nanmean(per_episode_targeting)),
        tracking_series=tracking,
        tracking_mean=tracking_mean,
        tracking_std=tracking_std,
        curvature_mean=float(curv.mean()) if len(curv) else float("nan"),
        curvature_std=float(curv.std()) if len(curv) else float("nan"),
    )
