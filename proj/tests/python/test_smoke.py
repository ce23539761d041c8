import math

import numpy as np
import pytest

import colcal


def test_huber_regions():
    assert colcal.huber(0.5, 1.0) == pytest.approx(0.25)
    assert colcal.huber(3.0, 1.0) == pytest.approx(5.0)


def test_homography_round_trip():
    h0 = np.array([[1.2, 0.1, 30.0], [-0.05, 0.9, 12.0], [1e-4, -2e-4, 1.0]])
    model = np.array([[x, y] for x in range(0, 100, 25) for y in range(0, 100, 25)], float)
    image = np.array([colcal.apply_homography(h0, p) for p in model])
    h = colcal.estimate_homography(model, image)
    assert np.allclose(h / h[2, 2], h0, atol=1e-9)


def test_noiseless_calibration_recovers_truth():
    gt = colcal.default_ground_truth(3, 4)
    pairs = colcal.simulate_views(gt, seed=9)
    assert pairs.shape[1] == 6
    report = colcal.calibrate(pairs)
    k = report["intrinsics"]
    for name in ("fx", "fy", "cx", "cy"):
        assert k[name] == pytest.approx(gt["intrinsics"][name], rel=1e-6)
    assert report["statistics"]["converged"]


def test_iac_from_homographies():
    gt = colcal.default_ground_truth(3, 2)
    gt["distortion"] = {"k1": 0.0, "k2": 0.0}
    pairs = colcal.simulate_views(gt, seed=1)
    hs = []
    for v in range(3):
        rows = pairs[pairs[:, 0] == v]
        hs.append(colcal.estimate_homography(rows[:, 1:3], rows[:, 4:6]))
    k = colcal.intrinsics_from_iac(colcal.solve_iac(hs))
    assert k["fx"] == pytest.approx(gt["intrinsics"]["fx"], rel=1e-6)
    x, y, r = colcal.spherical_offset(hs, k["fx"], k["fy"], k["cx"], k["cy"])
    assert r == pytest.approx(gt["offset"]["r"], rel=1e-6)


def test_errors_are_translated():
    gt = colcal.default_ground_truth(3, 1)
    pairs = colcal.simulate_views(gt, seed=1)
    with pytest.raises(colcal.ColcalError, match="insufficient"):
        colcal.calibrate(pairs[pairs[:, 0] == 0])


def test_random_poses_are_rotations():
    for r in colcal.random_spherical_poses(4, 30.0, 7):
        r = np.asarray(r)
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert math.isclose(np.linalg.det(r), 1.0, abs_tol=1e-12)
