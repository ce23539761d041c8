"""Event-camera calibration through a collimator."""

import json

from ._colcal import (
    ColcalError,
    apply_homography,
    estimate_homography,
    huber,
    intrinsics_from_iac,
    random_spherical_poses,
    solve_iac,
    spherical_offset,
)
from . import _colcal

__all__ = [
    "ColcalError",
    "apply_homography",
    "calibrate",
    "default_ground_truth",
    "estimate_homography",
    "huber",
    "intrinsics_from_iac",
    "random_spherical_poses",
    "simulate_views",
    "solve_iac",
    "spherical_offset",
]


def default_ground_truth(views=3, seed=1):
    """Default synthetic scene as a dict."""
    return json.loads(_colcal.default_ground_truth_json(views, seed))


def simulate_views(ground_truth, noise=None, seed=0):
    """Marker correspondences as an N x 6 array: view, X, Y, Z, u, v."""
    return _colcal.simulate_views(json.dumps(ground_truth), json.dumps(noise) if noise else "", seed)


def calibrate(pairs, mode="spherical", huber_delta=1.0, max_iterations=100):
    """Linear initialization plus robust refinement; returns the report dict."""
    return json.loads(_colcal.calibrate_json(pairs, mode, float(huber_delta), max_iterations))
