import numpy as np
import pytest
from scipy import stats
from scipy.special import erf

from lshj.density import (DensityError, DensityModel, density_at, hyperplane_integral_analytic,
                          hyperplane_integral_mc, hyperplane_integral_mc_batch, line_integral_grid,
                          sample_density)
from lshj.geometry import Stencil, build_grid_cloud


def test_indicator_values():
    sq = DensityModel.square()
    np.testing.assert_array_equal(density_at(sq, [[0.5, 0.5], [0.1, 0.5], [0.75, 0.25]]), [1, 0, 1])
    donut = DensityModel.donut()
    np.testing.assert_array_equal(density_at(donut, [[0.5, 0.5], [0.7, 0.5], [0.9, 0.5]]), [0, 1, 0])
    balls = DensityModel.two_balls()
    np.testing.assert_array_equal(density_at(balls, [[0.3, 0.3], [0.7, 0.7], [0.5, 0.5]]), [1, 1, 0])
    ell = DensityModel.ellipse()
    major = 0.29 * np.array([np.cos(np.pi / 6), np.sin(np.pi / 6)])
    minor = 0.16 * np.array([-np.sin(np.pi / 6), np.cos(np.pi / 6)])
    np.testing.assert_array_equal(density_at(ell, 0.5 + np.array([major, minor])), [1, 0])


def test_density_values_are_binary():
    y = np.random.default_rng(0).uniform(size=(1000, 2))
    for name in ("square", "circle", "donut", "two_balls", "ellipse"):
        v = density_at(DensityModel.named(name), y)
        assert set(np.unique(v)) <= {0.0, 1.0}


def test_kde_single_sample_peak():
    m = DensityModel.kde(np.array([[0.2, 0.3]]), bandwidth=0.1, sigma=0.1)
    peak = density_at(m, [[0.2, 0.3]])[0]
    assert peak == pytest.approx(1.0 / (2 * np.pi * 0.01))
    assert density_at(m, [[0.5, 0.3]])[0] < peak


def test_kde_integrates_to_one():
    rng = np.random.default_rng(1)
    m = DensityModel.kde(rng.uniform(0.4, 0.6, size=(50, 2)), bandwidth=0.05, sigma=0.05)
    g = np.linspace(-0.2, 1.2, 401)
    X, Y = np.meshgrid(g, g)
    vals = density_at(m, np.stack([X, Y], axis=-1))
    assert vals.sum() * (g[1] - g[0]) ** 2 == pytest.approx(1.0, abs=1e-3)


def test_kde_default_widths():
    rng = np.random.default_rng(2)
    pts = rng.uniform(size=(200, 2))
    m = DensityModel.kde(pts)
    from scipy.spatial import cKDTree
    dist, _ = cKDTree(pts).query(pts, k=11)
    assert m.bandwidth == pytest.approx(np.median(dist[:, 10]))
    assert m.sigma == pytest.approx(3 * np.median(dist[:, 1]))


def test_model_validation():
    with pytest.raises(DensityError):
        DensityModel.donut(inner_radius=0.3, radius=0.2)
    with pytest.raises(DensityError):
        DensityModel.circle(radius=-1.0)
    with pytest.raises(DensityError):
        DensityModel.named("triangle")


def test_analytic_chords():
    disk = DensityModel.circle((0.5, 0.5), 0.5)
    assert hyperplane_integral_analytic(disk, [0.5, 0.5], [0.3, 0.7]) == pytest.approx(1.0)
    # tangent line
    assert hyperplane_integral_analytic(disk, [1.0, 0.5], [1.0, 0.0]) == pytest.approx(0.0)
    sq = DensityModel.square((0, 0), (1, 1))
    assert hyperplane_integral_analytic(sq, [0.5, 0.5], [1, 1]) == pytest.approx(np.sqrt(2))
    assert hyperplane_integral_analytic(sq, [0.3, 0.9], [0, 1]) == pytest.approx(1.0)
    # a line through one of the two balls only
    balls = DensityModel.two_balls()
    assert hyperplane_integral_analytic(balls, [0.3, 0.3], [1, 1]) == pytest.approx(0.3)
    donut = DensityModel.donut()
    assert hyperplane_integral_analytic(donut, [0.5, 0.5], [1, 0]) == pytest.approx(0.25)
    ell = DensityModel.ellipse()
    normal_to_major = np.array([-np.sin(np.pi / 6), np.cos(np.pi / 6)])
    assert hyperplane_integral_analytic(ell, [0.5, 0.5], normal_to_major) == pytest.approx(0.6)


def test_analytic_ball_sections_3d():
    ball = DensityModel.named("ball", dim=3)
    assert hyperplane_integral_analytic(ball, [0.5, 0.5, 0.5], [0, 0, 1]) == pytest.approx(np.pi / 4)
    s = 0.3
    assert hyperplane_integral_analytic(ball, [0.5, 0.5, 0.5 + s], [0, 0, 1]) == \
        pytest.approx(np.pi * (0.25 - s * s))


def test_analytic_lipschitz_in_x():
    """Chord lengths of a disk vary continuously (and slowly away from tangency)."""
    disk = DensityModel.circle()
    xs = np.linspace(0.35, 0.65, 2001)
    vals = hyperplane_integral_analytic(disk, np.stack([xs, np.full_like(xs, 0.5)], 1), [1.0, 0.0])
    assert np.max(np.abs(np.diff(vals))) / (xs[1] - xs[0]) < 2.0


def test_line_integral_grid_close_to_analytic():
    """The Riemann sum with step |p| is within about one step of the chord length."""
    for n in (33, 65):
        cloud = build_grid_cloud((n, n), Stencil.wide(5))
        disk = DensityModel.circle()
        nodes = cloud.interior[::37]
        for p in ([1, 0], [1, 1], [2, 1], [1, -2]):
            p_phys = np.asarray(p, dtype=float) * cloud.h
            grid = line_integral_grid(disk, cloud, nodes, p_phys)
            exact = hyperplane_integral_analytic(disk, cloud.points[nodes], p_phys)
            assert np.max(np.abs(grid - exact)) <= 1.5 * np.linalg.norm(p_phys)


def test_line_integral_grid_visits_lattice_line():
    cloud = build_grid_cloud((11, 11), Stencil.wide(3))
    sq = DensityModel.square((0, 0), (1, 1))
    node = 60  # center
    # the full horizontal line through the center: 11 nodes, spacing 0.1
    assert line_integral_grid(sq, cloud, node, [0.0, 0.1]) == pytest.approx(1.1)
    with pytest.raises(DensityError):
        line_integral_grid(sq, object(), node, [0.0, 0.1])


def test_mc_constant_densities():
    empty = DensityModel.circle((5.0, 5.0), 0.1)
    full = DensityModel.square((-100, -100), (100, 100))
    assert hyperplane_integral_mc(empty, [0.5, 0.5], [1, 0], sigma=0.2, n_samples=1000) == 0.0
    assert hyperplane_integral_mc(full, [0.5, 0.5], [1, 0], sigma=0.2, n_samples=1000) == 1.0


def test_mc_matches_gaussian_weighted_chord():
    # Gaussian-weighted chord through the disk center: P(|Z| <= R), Z ~ N(0, sigma^2)
    R, sigma = 0.25, 0.3
    disk = DensityModel.circle((0.5, 0.5), R)
    expect = erf(R / (sigma * np.sqrt(2)))
    n = 10**5
    est = hyperplane_integral_mc(disk, [0.5, 0.5], [0.6, 0.8], seed=3, sigma=sigma, n_samples=n)
    se = np.sqrt(expect * (1 - expect) / n)
    assert abs(est - expect) <= 3 * se


def test_mc_deterministic_and_batch_consistent():
    disk = DensityModel.circle()
    a = hyperplane_integral_mc(disk, [0.5, 0.45], [1, 0], seed=(7, 0), sigma=0.1, n_samples=500)
    b = hyperplane_integral_mc(disk, [0.5, 0.45], [1, 0], seed=(7, 0), sigma=0.1, n_samples=500)
    assert a == b
    batch = hyperplane_integral_mc_batch(disk, [[0.5, 0.45], [0.4, 0.5]], [[1, 0], [0, 1]], seed=7,
                                         sigma=0.1, n_samples=500)
    assert batch[0] == a


def test_sample_density_uniform_on_square():
    pts = sample_density(DensityModel.square((0, 0), (1, 1)), 10**4, seed=0)
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=4, range=[[0, 1], [0, 1]])
    assert stats.chisquare(counts.ravel()).pvalue > 0.01


def test_sample_density_support_and_determinism():
    disk = DensityModel.circle()
    pts = sample_density(disk, 2000, seed=4)
    assert pts.shape == (2000, 2) and np.all(density_at(disk, pts) == 1)
    np.testing.assert_array_equal(pts, sample_density(disk, 2000, seed=4))
    balls = DensityModel.two_balls()
    pts = sample_density(balls, 2000, seed=5)
    near = [np.linalg.norm(pts - c, axis=1) <= balls.radius for c in balls.centers]
    assert np.all(near[0] ^ near[1])
    # both balls get about half the points
    assert abs(near[0].mean() - 0.5) < 0.05
    with pytest.raises(DensityError):
        sample_density(DensityModel.kde(pts), 10)


def test_ellipsoid_3d():
    ell = DensityModel.named("ellipse", dim=3)
    pts = sample_density(ell, 4000, seed=6)
    assert np.all(density_at(ell, pts) == 1)
    lo, hi = ell.bounding_box()
    assert np.all(pts >= lo) and np.all(pts <= hi)
    assert ell.volume() == pytest.approx(4 / 3 * np.pi * 0.3 * 0.15 * 0.15)
    # the major axis is rotated pi/6 in the (x0, x1) plane
    tip = 0.5 + 0.29 * np.array([np.cos(np.pi / 6), np.sin(np.pi / 6), 0.0])
    assert density_at(ell, tip[None])[0] == 1
    assert density_at(ell, (0.5 + 0.29 * np.array([1.0, 0.0, 0.0]))[None])[0] == 0


def test_volume_matches_sampling():
    rng = np.random.default_rng(8)
    y = rng.uniform(size=(400000, 2))
    for name in ("square", "circle", "donut", "two_balls", "ellipse"):
        m = DensityModel.named(name)
        assert density_at(m, y).mean() == pytest.approx(m.volume(), abs=3e-3)
