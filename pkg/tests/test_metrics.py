import unittest
from temsim.core import metrics
from temsim.core.metrics import AngleHistogram
from temsim.core.macro_engine import GridMeasure
from temsim.core.geometry import Rectangle, GridSpec
import numpy as np

HEX_DIRECTIONS = [0, 60, 120, 180, 240, 300]

def hex_lattice(nx, ny, a = 1.0):
    return np.array([((i + 0.5 * (j % 2)) * a, j * a * np.sqrt(3) / 2) for j in range(ny) for i in range(nx)])

def square_lattice(n, a = 1.0):
    return np.array([(i * a, j * a) for i in range(n) for j in range(n)], dtype = float)

def rigid_motion(X, theta, shift, scale = 1.0):
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    return scale * X @ R.T + np.asarray(shift)


class TestAngleDistribution(unittest.TestCase):

    def test_horizontal_pair(self):
        histogram = metrics.angle_distribution([(0, 0), (1, 0)], k_neighbors = 1, bin_width = 5)
        self.assertEqual(histogram.total, 2)
        self.assertEqual(histogram.counts[0], 1)
        self.assertEqual(histogram.counts[36], 1)

    def test_relative_to_axis(self):
        histogram = metrics.angle_distribution([(0, 0), (1, 0)], k_neighbors = 1, bin_width = 5, axis = (0, 1))
        self.assertEqual(histogram.counts[54], 1)
        self.assertEqual(histogram.counts[18], 1)

    def test_hexagonal_peaks(self):
        histogram = metrics.angle_distribution(hex_lattice(30, 30), k_neighbors = 6, bin_width = 5)
        peaks = histogram.counts[[d // 5 for d in HEX_DIRECTIONS]]
        self.assertEqual(set(np.argsort(histogram.counts)[-6:]), {d // 5 for d in HEX_DIRECTIONS})
        self.assertTrue(peaks.max() <= 1.15 * peaks.min())
        self.assertEqual(histogram.total, 6 * 900)

    def test_jittered_hexagonal_alignment(self):
        X = hex_lattice(30, 30)
        X = X + np.random.default_rng(0).uniform(-0.02, 0.02, X.shape)
        histogram = metrics.angle_distribution(X, k_neighbors = 6, bin_width = 5)
        self.assertTrue(histogram.fraction_near(HEX_DIRECTIONS, 10) >= 0.9)

    def test_needs_enough_agents(self):
        with self.assertRaises(AssertionError):
            metrics.angle_distribution([(0, 0), (1, 0)], k_neighbors = 2)


class TestAngleHistogram(unittest.TestCase):

    def test_addition(self):
        a = AngleHistogram(90, [1, 0, 2, 0])
        b = AngleHistogram(90, [0, 3, 1, 0])
        self.assertEqual(a + b, AngleHistogram(90, [1, 3, 3, 0]))
        self.assertEqual((a + b).total, 7)

    def test_mismatched_widths(self):
        with self.assertRaises(AssertionError):
            AngleHistogram.empty(5) + AngleHistogram.empty(10)

    def test_width_must_divide_circle(self):
        with self.assertRaises(AssertionError):
            AngleHistogram.empty(7)

    def test_bin_edges(self):
        edges = AngleHistogram.empty(90).bin_edges
        self.assertTrue(np.array_equal(edges, [0, 90, 180, 270, 360]))


class TestCrystalScore(unittest.TestCase):

    def test_hexagonal_lattice(self):
        fraction, cv = metrics.crystal_score(hex_lattice(10, 10))
        self.assertEqual(fraction, 1.0)
        self.assertAlmostEqual(cv, 0.0, places = 9)

    def test_square_lattice(self):
        fraction, cv = metrics.crystal_score(square_lattice(10))
        self.assertEqual(fraction, 0.0)
        self.assertAlmostEqual(cv, 0.0, places = 9)

    def test_uniform_points(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            fraction, cv = metrics.crystal_score(rng.uniform(0, 10, (100, 2)))
            self.assertTrue(fraction < 0.8)
            self.assertTrue(cv > 0.2)

    def test_rigid_motion_and_scaling(self):
        X = np.random.default_rng(2).uniform(0, 10, (80, 2))
        reference = metrics.crystal_score(X)
        moved = metrics.crystal_score(rigid_motion(X, 0.7, (5, -3), scale = 2.5))
        self.assertEqual(reference[0], moved[0])
        self.assertAlmostEqual(reference[1], moved[1], places = 9)

    def test_collinear(self):
        with self.assertRaises(metrics.DegenerateHull):
            metrics.crystal_score(np.stack([np.arange(25.0), 2 * np.arange(25.0)], axis = -1))

    def test_needs_twenty_agents(self):
        with self.assertRaises(AssertionError):
            metrics.crystal_score(hex_lattice(4, 4))


class TestCollinearity(unittest.TestCase):

    def test_exact_line(self):
        t = np.linspace(0, 5, 20)
        ratio, bearing = metrics.collinearity(np.stack([t * np.cos(np.pi / 6), t * np.sin(np.pi / 6)], axis = -1))
        self.assertAlmostEqual(ratio, 1.0)
        self.assertAlmostEqual(bearing, 30.0, places = 6)

    def test_isotropic_cloud(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            ratio, _ = metrics.collinearity(rng.normal(size = (100, 2)))
            self.assertTrue(0.5 <= ratio < 0.7)

    def test_jittered_line(self):
        rng = np.random.default_rng(4)
        x = np.linspace(0, 10, 50)
        ratio, bearing = metrics.collinearity(np.stack([x, rng.uniform(-0.05, 0.05, 50)], axis = -1))
        self.assertTrue(ratio > 0.999)
        self.assertTrue(metrics.axis_deviation(bearing) < 1.0)

    def test_rigid_motion(self):
        X = np.random.default_rng(5).normal(size = (40, 2)) * [3, 1]
        ratio, bearing = metrics.collinearity(X)
        moved_ratio, moved_bearing = metrics.collinearity(rigid_motion(X, np.radians(20), (7, 7)))
        self.assertAlmostEqual(ratio, moved_ratio, places = 9)
        self.assertAlmostEqual(metrics.axis_deviation(moved_bearing, bearing + 20), 0.0, places = 6)

    def test_axis_deviation(self):
        self.assertAlmostEqual(metrics.axis_deviation(170), 10)
        self.assertAlmostEqual(metrics.axis_deviation(90), 90)
        self.assertAlmostEqual(metrics.axis_deviation(45, 90), 45)
        self.assertAlmostEqual(metrics.axis_deviation(179, 1), 2)


class TestLaneProfile(unittest.TestCase):

    def setUp(self):
        self.spec = GridSpec(8, 8, 0.125)

    def striped(self, bands):
        rows = np.repeat(np.arange(bands) % 2, 8 // bands)
        first = np.broadcast_to(rows == 1, self.spec.shape).astype(float)
        return GridMeasure(self.spec, first), GridMeasure(self.spec, 1 - first)

    def test_equal_densities(self):
        uniform = GridMeasure(self.spec, np.ones(self.spec.shape))
        profile, alternations = metrics.lane_profile(uniform, uniform)
        self.assertTrue(np.all(profile == 0))
        self.assertEqual(alternations, 0)

    def test_two_lanes(self):
        profile, alternations = metrics.lane_profile(*self.striped(2))
        self.assertEqual(alternations, 1)
        self.assertTrue(np.array_equal(profile, [-1] * 4 + [1] * 4))

    def test_four_lanes(self):
        self.assertEqual(metrics.lane_profile(*self.striped(4))[1], 3)

    def test_column_range(self):
        rho1, rho2 = np.zeros(self.spec.shape), np.zeros(self.spec.shape)
        rho1[:4, 4:] = 1.0
        rho2[:4, :4] = 1.0
        rho1[4:, :4] = 1.0
        inside = metrics.lane_profile(GridMeasure(self.spec, rho1), GridMeasure(self.spec, rho2), columns = (0, 4))
        outside = metrics.lane_profile(GridMeasure(self.spec, rho1), GridMeasure(self.spec, rho2), columns = (4, 8))
        self.assertEqual(inside[1], 1)
        self.assertEqual(outside[1], 0)

    def test_small_bands_suppressed(self):
        rho1 = np.zeros(self.spec.shape)
        rho1[:, 6:] = 1.0
        rho1[:, 1] = 0.01
        rho2 = np.zeros(self.spec.shape)
        rho2[:, :2] = 0.02
        profile, alternations = metrics.lane_profile(GridMeasure(self.spec, rho1), GridMeasure(self.spec, rho2))
        self.assertEqual(alternations, 0)

    def test_grid_mismatch(self):
        with self.assertRaises(metrics.GridMismatch):
            metrics.lane_profile(GridMeasure.zeros(self.spec), GridMeasure.zeros(GridSpec(8, 8, 0.25)))


class TestWasserstein(unittest.TestCase):

    def test_single_transport(self):
        self.assertAlmostEqual(metrics.wasserstein_1d([0], [0.3]), 0.3)

    def test_identical(self):
        self.assertEqual(metrics.wasserstein_1d([0, 1, 4], [4, 0, 1]), 0)

    def test_brute_force_pairing(self):
        self.assertAlmostEqual(metrics.wasserstein_1d([0, 1], [0.5, 0.5]), 1.0)

    def test_mass_mismatch(self):
        with self.assertRaises(metrics.MassMismatch):
            metrics.wasserstein_1d([0], [1], [1.0], [2.0])

    def test_metric_axioms(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            sets = [rng.uniform(-5, 5, 6) for _ in range(3)]
            weights = [rng.uniform(0.1, 1, 6) for _ in range(3)]
            weights = [w / w.sum() for w in weights]
            d = lambda a, b: metrics.wasserstein_1d(sets[a], sets[b], weights[a], weights[b])
            self.assertAlmostEqual(d(0, 1), d(1, 0), places = 9)
            self.assertAlmostEqual(d(0, 0), 0.0, places = 9)
            self.assertTrue(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9)

    def test_translation(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 1, 10)
        w = rng.uniform(0.1, 1, 10)
        w = w / w.sum()
        for c in [-2.5, 0.0, 0.125, 3.0]:
            self.assertAlmostEqual(metrics.wasserstein_1d(x, x + c, w, w), abs(c), places = 9)

    def test_thin_densities(self):
        #two unit-mass bands of width 0.01, 0.1 apart: L1 sees disjoint supports, W1 sees the shift
        dx, delta = 0.001, 0.1
        centers = (np.arange(1000) + 0.5) * dx
        rho1 = np.where((centers > 0.2) & (centers < 0.21), 100.0, 0.0)
        rho2 = np.where((centers > 0.2 + delta) & (centers < 0.21 + delta), 100.0, 0.0)
        self.assertAlmostEqual(metrics.l1_distance(rho1, rho2, dx), 2.0, places = 9)
        support1, support2 = rho1 > 0, rho2 > 0
        distance = metrics.wasserstein_1d(centers[support1], centers[support2], rho1[support1] * dx, rho2[support2] * dx)
        self.assertTrue(abs(distance - delta) <= 1e-6)

    def test_small_planar_assignment(self):
        P = np.array([(0, 0), (1, 0), (0, 1)], dtype = float)
        self.assertEqual(metrics.wasserstein_2d_small(P, P[::-1]), 0)
        self.assertAlmostEqual(metrics.wasserstein_2d_small(P, P + [0.5, 0]), 1.5)
        self.assertAlmostEqual(metrics.wasserstein_2d_small([(0, 0), (1, 0)], [(0.5, 0), (0.5, 0)]), 1.0)


class TestDensityObservables(unittest.TestCase):

    def setUp(self):
        self.spec = GridSpec(8, 8, 0.125)

    def test_components(self):
        rho = np.zeros(self.spec.shape)
        rho[1:3, 1:3] = 1.0
        rho[5:7, 5:7] = 2.0
        self.assertEqual(metrics.density_components(GridMeasure(self.spec, rho)), 2)
        self.assertEqual(metrics.density_components(GridMeasure.zeros(self.spec)), 0)

    def test_diagonal_contact_is_two_components(self):
        rho = np.zeros(self.spec.shape)
        rho[2, 2] = rho[3, 3] = 1.0
        self.assertEqual(metrics.density_components(GridMeasure(self.spec, rho)), 2)

    def test_faint_cells_ignored(self):
        rho = np.zeros(self.spec.shape)
        rho[1, 1] = 1.0
        rho[5, 5] = 0.05
        self.assertEqual(metrics.density_components(GridMeasure(self.spec, rho)), 1)

    def test_region_density(self):
        rho = np.zeros(self.spec.shape)
        rho[:4, :] = 2.0
        density = GridMeasure(self.spec, rho)
        self.assertAlmostEqual(metrics.region_density(density, Rectangle(0, 0, 0.5, 1)), 2.0)
        self.assertAlmostEqual(metrics.region_density(density, Rectangle(0.25, 0, 0.75, 1)), 1.0)

    def test_mean_speed(self):
        rho = np.zeros(self.spec.shape)
        rho[0, 0], rho[1, 0] = 1.0, 3.0
        speed = np.zeros(self.spec.shape)
        speed[0, 0], speed[1, 0], speed[2, 0] = 2.0, 1.0, 100.0
        self.assertAlmostEqual(metrics.mean_speed(GridMeasure(self.spec, rho), speed), 1.25)
        self.assertEqual(metrics.mean_speed(GridMeasure.zeros(self.spec), speed), 0.0)

    def test_total_mass(self):
        self.assertAlmostEqual(metrics.total_mass(GridMeasure(self.spec, np.ones(self.spec.shape))), 1.0)


if __name__ == '__main__':
    unittest.main()
