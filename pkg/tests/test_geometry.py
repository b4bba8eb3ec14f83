import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairmine.errors import (DegenerateConfiguration, InsufficientMatches,
                             ProjectiveDegenerate)
from pairmine.features import KeypointSet
from pairmine.geometry import (apply_homography, estimate_homography_dlt, index_to_area,
                               invert, normalize_h, ransac_homography, ransac_points,
                               symmetric_error, translation)
from pairmine.matching import MatchSet
from synthetic import planted_matches


def random_h(rng):
    """Entries in [-1, 1] around a well-conditioned map, h33 = 1, cond < 1e4."""
    while True:
        H = rng.uniform(-1, 1, (3, 3))
        H[2, :2] *= 0.01
        H[2, 2] = 1.0
        if np.linalg.cond(H) < 1e4 and abs(np.linalg.det(H)) > 1e-3:
            return H


def map_pts(H, pts):
    hp = np.c_[pts, np.ones(len(pts))] @ H.T
    return hp[:, :2] / hp[:, 2:]


def rel_frob(A, B):
    return np.linalg.norm(normalize_h(A) - normalize_h(B)) / np.linalg.norm(normalize_h(B))


def test_apply_examples():
    assert apply_homography(np.eye(3), (37.5, 10)) == (37.5, 10)
    assert apply_homography(translation(32, 0), (0, 0)) == (32, 0)
    assert apply_homography(np.diag([2.0, 2.0, 1.0]), (10, 7)) == (20, 14)


def test_apply_at_infinity():
    H = np.array([[1.0, 0, 0], [0, 1, 0], [1, 0, 0]])
    with pytest.raises(ProjectiveDegenerate):
        apply_homography(H, (0, 5))


def test_dlt_translation_of_unit_square():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    H = estimate_homography_dlt(sq, sq + [32, 16])
    np.testing.assert_allclose(H, translation(32, 16), atol=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_dlt_random_homography(seed):
    rng = np.random.default_rng(seed)
    H = random_h(rng)
    p1 = rng.uniform(0, 224, (20, 2))
    est = estimate_homography_dlt(p1, map_pts(H, p1))
    assert rel_frob(est, H) < 1e-6
    assert np.abs(map_pts(est, p1) - map_pts(H, p1)).max() < 1e-6


def test_dlt_collinear():
    pts = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], float)
    with pytest.raises(DegenerateConfiguration):
        estimate_homography_dlt(pts, pts + 1)


def test_ransac_planted_example():
    H, p1, p2, truth = planted_matches(7, n=200, outlier_frac=0.3)
    res = ransac_points(p1, p2, 3.0, 2000, 0.999, rng_seed=1)
    assert res.inlier_mask[truth].mean() >= 0.95
    assert res.inlier_mask[~truth].mean() <= 0.02
    assert res.inlier_rmse < 1.0
    assert res.n_inliers >= 4


def test_ransac_identity_exact():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 224, (50, 2))
    res = ransac_points(pts, pts, rng_seed=0)
    assert res.inlier_mask.all()
    np.testing.assert_allclose(res.homography, np.eye(3), atol=1e-9)


def test_ransac_on_matches_and_insufficient():
    pts = np.array([[0, 0], [50, 0], [50, 50], [0, 50], [20, 30]], float)
    kps = KeypointSet(pts[:, 0], pts[:, 1], np.ones(5), np.zeros(5), np.ones(5))
    m = MatchSet(np.arange(5), np.arange(5), np.zeros(5))
    res = ransac_homography(m, kps, kps)
    assert res.inlier_mask.all()
    with pytest.raises(InsufficientMatches):
        ransac_homography(m[:3], kps, kps)


def test_ransac_deterministic():
    _, p1, p2, _ = planted_matches(3, outlier_frac=0.4)
    a = ransac_points(p1, p2, rng_seed=99)
    b = ransac_points(p1, p2, rng_seed=99)
    assert a.homography.tobytes() == b.homography.tobytes()
    assert np.array_equal(a.inlier_mask, b.inlier_mask)
    assert a.iterations_run == b.iterations_run and a.inlier_rmse == b.inlier_rmse


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_inliers_within_threshold(seed):
    _, p1, p2, _ = planted_matches(seed, n=80, outlier_frac=0.3)
    res = ransac_points(p1, p2, 3.0, rng_seed=seed)
    err = symmetric_error(res.homography, invert(res.homography), p1, p2)
    assert np.all(err[res.inlier_mask] <= 3.0)
    assert res.n_inliers >= 4


@pytest.mark.parametrize("seed", range(10))
def test_normalization_invariance(seed):
    rng = np.random.default_rng(seed)
    H = random_h(rng)
    p1 = rng.uniform(0, 224, (20, 2))
    p2 = map_pts(H, p1) + rng.normal(0, 0.3, (20, 2))
    base = estimate_homography_dlt(p1, p2)
    S = np.diag([10.0, 10.0, 1.0])
    scaled = estimate_homography_dlt(p1 * 10, p2 * 10)
    corrected = np.linalg.inv(S) @ scaled @ S
    assert rel_frob(corrected, base) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-500, 500), st.floats(-500, 500))
def test_inverse_round_trip(seed, x, y):
    H = random_h(np.random.default_rng(seed))
    try:
        q = apply_homography(H, (x, y))
        back = apply_homography(invert(H), q)
    except ProjectiveDegenerate:
        return
    scale = max(1.0, abs(x), abs(y))
    assert abs(back[0] - x) <= 1e-9 * scale and abs(back[1] - y) <= 1e-9 * scale


def test_index_to_area_translation_is_unchanged():
    np.testing.assert_allclose(index_to_area(translation(5, -3)), translation(5, -3))
    S = index_to_area(np.diag([2.0, 2.0, 1.0]))
    # pixel 0 spans [0, 1) in area coordinates, its centre 0.5 maps to 2 * 0 + 0.5
    assert apply_homography(S, (0.5, 0.5)) == (0.5, 0.5)
