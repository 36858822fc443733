"""Evaluation metric oracles and invariants."""

from types import SimpleNamespace

import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from scipy.stats import kruskal as scipy_kruskal

from cathnav.errors import ConfigError
from cathnav.metrics import (
    MetricsReport,
    curvature,
    duration,
    evaluate_episodes,
    kruskal_wallis,
    resample_path,
    success_rate,
    targeting_error,
    timesteps,
    tracking_error,
)


def _episode(success=True, first=0, last=9, t0=0.0, t1=1.0, trajectory=None):
    return SimpleNamespace(
        success=success,
        first_step=first,
        last_step=last,
        start_time=t0,
        end_time=t1,
        trajectory=trajectory if trajectory is not None else np.zeros((2, 3)),
        transitions=[],
    )


# -- scalar metrics --------------------------------------------------------


def test_success_rate_exact():
    assert success_rate([True] * 42 + [False] * 58) == 0.42
    assert success_rate([False] * 10) == 0.0
    assert success_rate([True] * 10) == 1.0
    with pytest.raises(ValueError):
        success_rate([])


def test_timesteps_arithmetic():
    assert timesteps(_episode(first=1, last=1)) == 1
    assert timesteps(_episode(first=1, last=10)) == 10
    assert timesteps(_episode(first=100, last=250)) == 151
    with pytest.raises(ValueError):
        timesteps(_episode(first=5, last=4))


def test_duration_arithmetic():
    assert duration(_episode(t0=0.0, t1=5.0)) == 5.0
    assert duration(_episode(t0=3.0, t1=3.0)) == 0.0
    assert duration(_episode(t0=10.5, t1=190.5)) == 180.0


# -- path resampling -------------------------------------------------------


def test_resample_collinear_stays_on_line():
    pts = np.outer(np.linspace(0, 100, 8), [0.0, 1.0, 0.0])
    dense = resample_path(pts, 200)
    assert np.abs(dense[:, [0, 2]]).max() < 1e-9
    assert dense[0, 1] == pytest.approx(0.0, abs=1e-9)
    assert dense[-1, 1] == pytest.approx(100.0, abs=1e-9)


def test_resample_square_stays_in_hull():
    corners = np.array(
        [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [10.0, 10.0, 0.0], [0.0, 10.0, 0.0]]
    )
    dense = resample_path(corners, 300)
    assert dense.min() >= -1e-9
    assert dense.max() <= 10.0 + 1e-9


def test_resample_two_samples_are_endpoints():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [2.0, 0.0, 1.0], [4.0, 4.0, 4.0], [5.0, 0.0, 0.0]])
    dense = resample_path(pts, 2)
    np.testing.assert_allclose(dense[0], pts[0], atol=1e-9)
    np.testing.assert_allclose(dense[1], pts[-1], atol=1e-9)


def test_resample_spacing_uniform():
    t = np.linspace(0, np.pi, 30)
    arc = np.stack([40 * np.cos(t), 40 * np.sin(t), np.zeros_like(t)], axis=1)
    dense = resample_path(arc, 400)
    gaps = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    assert gaps.max() / gaps.min() < 1.01


def test_resample_collapses_duplicates():
    pts = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 10.0, 0.0]])
    dense = resample_path(pts, 50)
    assert np.abs(dense[:, [0, 2]]).max() < 1e-9


def test_resample_rejects_degenerate():
    with pytest.raises(ConfigError):
        resample_path(np.zeros((3, 3)), 10)
    with pytest.raises(ConfigError):
        resample_path(np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), 1)


# -- tracking / targeting --------------------------------------------------


def test_tracking_zero_on_itself():
    path = resample_path(np.outer(np.linspace(0, 50, 6), [0, 1.0, 0]), 100)
    series, mean, std = tracking_error(path, path)
    assert np.all(series == 0.0)
    assert mean == 0.0 and std == 0.0


def test_tracking_rigid_offset():
    path = resample_path(np.outer(np.linspace(0, 50, 6), [0, 1.0, 0]), 200)
    series, mean, _ = tracking_error(path + np.array([2.0, 0.0, 0.0]), path)
    np.testing.assert_allclose(series, 2.0, atol=1e-9)
    assert mean == pytest.approx(2.0, abs=1e-9)


def test_tracking_helix_mean_radius():
    y = np.linspace(0, 100, 600)
    helix = np.stack([3 * np.cos(y / 5), y, 3 * np.sin(y / 5)], axis=1)
    path = resample_path(np.outer(np.linspace(0, 100, 10), [0, 1.0, 0]), 2000)
    _, mean, _ = tracking_error(helix, path)
    assert mean == pytest.approx(3.0, rel=0.01)


def test_tracking_rigid_invariance():
    rng = np.random.default_rng(0)
    traj = rng.normal(size=(40, 3)) * 10
    path = rng.normal(size=(80, 3)) * 10
    series, _, _ = tracking_error(traj, path)
    rot = Rotation.from_rotvec([0.3, -1.1, 0.7]).as_matrix()
    shift = np.array([5.0, -3.0, 12.0])
    moved, _, _ = tracking_error(traj @ rot.T + shift, path @ rot.T + shift)
    np.testing.assert_allclose(moved, series, atol=1e-9)


def test_targeting_error_cases():
    target = np.array([1.0, 2.0, 3.0])
    through = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])
    assert targeting_error(through, target) == 0.0
    single = np.array([[1.0, 2.0, 7.0]])
    assert targeting_error(single, target) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        targeting_error(np.zeros((0, 3)), target)


def test_targeting_triangle_sanity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        traj = rng.normal(size=(30, 3)) * 20
        path = rng.normal(size=(10, 3)) * 20
        target = rng.normal(size=3) * 20
        t_a = targeting_error(traj, target)
        detour = np.linalg.norm(traj - path[-1], axis=1).min() + np.linalg.norm(
            path[-1] - target
        )
        assert t_a <= detour + 1e-12


# -- curvature -------------------------------------------------------------


def test_curvature_circle_exact():
    t = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    pts = np.stack([10 * np.cos(t), 10 * np.sin(t), np.zeros_like(t)], axis=1)
    series, mean, std = curvature(pts)
    np.testing.assert_allclose(series, 0.1, atol=1e-9)
    assert std == pytest.approx(0.0, abs=1e-9)


def test_curvature_collinear_zero():
    pts = np.outer(np.arange(10.0), [1.0, 2.0, 0.5])
    series, mean, _ = curvature(pts)
    assert np.all(series == 0.0)
    assert mean == 0.0


def test_curvature_noisy_circle():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    pts = np.stack([10 * np.cos(t), 10 * np.sin(t), np.zeros_like(t)], axis=1)
    pts += rng.normal(0, 0.1, pts.shape)
    _, mean, _ = curvature(pts)
    assert mean == pytest.approx(0.1, rel=0.10)


def test_curvature_skips_repeats():
    pts = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 1.0, 0.0], [3.0, 0.0, 0.0]])
    series, _, _ = curvature(pts)
    assert len(series) == 2  # the triple containing the repeat is dropped
    with pytest.raises(ValueError):
        curvature(pts[:2])


# -- significance test -----------------------------------------------------


def test_kruskal_hand_oracle():
    res = kruskal_wallis([[1, 2, 3], [4, 5, 6]])
    assert res.statistic == pytest.approx(27.0 / 7.0, abs=1e-12)
    assert res.p_value == pytest.approx(0.049534613435626915, abs=1e-12)
    assert res.significant


def test_kruskal_identical_groups():
    res = kruskal_wallis([[2.0, 2.0], [2.0, 2.0, 2.0]])
    assert res.statistic == 0.0
    assert res.p_value == 1.0
    assert not res.significant


def test_kruskal_matches_reference_with_ties():
    rng = np.random.default_rng(7)
    for _ in range(25):
        groups = [rng.integers(0, 6, size=rng.integers(3, 12)).astype(float) for _ in range(3)]
        if all(np.ptp(np.concatenate(groups)) == 0 for _ in [0]):
            continue
        try:
            ref = scipy_kruskal(*groups)
        except ValueError:  # scipy refuses the all-identical case
            continue
        mine = kruskal_wallis(groups)
        assert mine.statistic == pytest.approx(ref.statistic, abs=1e-10)
        assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-10)


def test_kruskal_monotone_invariance():
    rng = np.random.default_rng(5)
    groups = [rng.normal(size=8), rng.normal(size=6) + 0.5, rng.normal(size=7)]
    base = kruskal_wallis(groups)
    warped = kruskal_wallis([np.exp(g) for g in groups])
    assert warped.statistic == pytest.approx(base.statistic, abs=1e-9)


def test_kruskal_permutation_calibration():
    rng = np.random.default_rng(11)
    pooled = rng.normal(size=30)
    hits = 0
    for _ in range(1000):
        rng.shuffle(pooled)
        res = kruskal_wallis([pooled[:10], pooled[10:20], pooled[20:]])
        hits += res.significant
    assert 0.02 <= hits / 1000 <= 0.09


def test_kruskal_validation():
    with pytest.raises(ValueError):
        kruskal_wallis([[1.0, 2.0]])
    with pytest.raises(ValueError):
        kruskal_wallis([[1.0], []])


# -- aggregation -----------------------------------------------------------


def test_evaluate_episodes_on_env_run():
    from cathnav.demos import scripted_expert
    from cathnav.scenario import toy_scenario

    sc = toy_scenario("straight")
    env = sc.build_env(seed=0)
    expert = scripted_expert(sc.spaces(), sc.catheter)
    results = [env.run_episode(expert, rng=np.random.default_rng(s)) for s in range(3)]
    report = evaluate_episodes(results, desired=sc.centerline)
    assert report.success_rate == 1.0
    assert report.n_success == 3 and report.n_total == 3
    assert report.targeting_error < sc.rewards.epsilon
    assert report.mean_steps == pytest.approx(np.mean([timesteps(r) for r in results]))
    assert len(report.tracking_series) == sum(len(r.trajectory) for r in results)
    assert report.tracking_mean < 3.0  # expert hugs the centerline
    assert np.isfinite(report.curvature_mean)
    assert any("success_rate" in line for line in report.lines())


def test_evaluate_episodes_requires_input():
    with pytest.raises(ValueError):
        evaluate_episodes([])


def test_report_validation():
    with pytest.raises(ConfigError):
        MetricsReport(
            success_rate=1.5,
            n_success=3,
            n_total=2,
            mean_steps=1.0,
            mean_duration=1.0,
            targeting_error=0.0,
        )
