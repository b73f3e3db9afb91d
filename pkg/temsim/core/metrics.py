'''
Observables computed from simulation states: neighbor bearing histograms,
crystal and line order parameters for agent sets, lane and cluster counts and
region averages for densities, and transport distances.
'''

import itertools
import numpy as np
from scipy import ndimage, stats
from scipy.spatial import ConvexHull, cKDTree
try:
    from scipy.spatial import QhullError
except ImportError:
    from scipy.spatial.qhull import QhullError
from sklearn.decomposition import PCA
from sklearn.neighbors import NearestNeighbors
from temsim.core.utils import _config

BIN_WIDTH = float(_config.get('metrics', 'bin_width'))
K_NEIGHBORS = int(_config.get('metrics', 'k_neighbors'))
LANE_THRESHOLD = float(_config.get('metrics', 'lane_threshold'))
COMPONENT_THRESHOLD = float(_config.get('metrics', 'component_threshold'))

class DegenerateHull(ValueError):
    pass

class GridMismatch(ValueError):
    pass

class MassMismatch(ValueError):
    pass


def _positions(agents):
    return np.asarray(getattr(agents, 'positions', agents), dtype = float).reshape((-1, 2))


class AngleHistogram:
    '''
Tallies of neighbor bearings in [0, 360) degrees. Histograms from different
runs with the same bin width add bin by bin.
    '''
    def __init__(self, bin_width, counts):
        self.bin_width = float(bin_width)
        self.counts = np.asarray(counts, dtype = int)
        assert(len(self.counts) == self.n_bins(self.bin_width)), 'Histogram needs {} bins'.format(self.n_bins(self.bin_width))

    @staticmethod
    def n_bins(bin_width):
        n = int(round(360 / bin_width))
        assert(abs(n * bin_width - 360) < 1e-9), 'Bin width must divide 360 degrees'
        return n

    @classmethod
    def empty(cls, bin_width = BIN_WIDTH):
        return cls(bin_width, np.zeros(cls.n_bins(bin_width), dtype = int))

    @property
    def bin_edges(self):
        return np.arange(len(self.counts) + 1) * self.bin_width

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        assert(self.bin_width == other.bin_width), 'Cannot add histograms with different bin widths'
        return AngleHistogram(self.bin_width, self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, AngleHistogram) and self.bin_width == other.bin_width and \
            np.array_equal(self.counts, other.counts)

    def fraction_near(self, directions, tolerance):
        '''Share of tallies whose bin center lies within ``tolerance`` degrees of any of ``directions``'''
        centers = self.bin_edges[:-1] + self.bin_width / 2
        gap = np.abs((centers[:, np.newaxis] - np.asarray(directions)[np.newaxis, :] + 180) % 360 - 180)
        near = (gap <= tolerance).any(axis = 1)
        return float(self.counts[near].sum() / max(self.total, 1))


def angle_distribution(agents, k_neighbors = None, bin_width = None, axis = (1.0, 0.0)):
    '''
**angle_distribution** (agents, k_neighbors = 6, bin_width = 5)

Bearings, measured counterclockwise from ``axis``, from every agent to each of
its ``k_neighbors`` nearest neighbors.

Returns:
    AngleHistogram
    '''
    k_neighbors = K_NEIGHBORS if k_neighbors is None else k_neighbors
    bin_width = BIN_WIDTH if bin_width is None else bin_width
    X = _positions(agents)
    assert(len(X) > k_neighbors), 'Need more agents than neighbors per agent'

    _, indices = NearestNeighbors(n_neighbors = k_neighbors + 1).fit(X).kneighbors(X)
    #drop each agent's own index, wherever a tie placed it
    neighbors = np.array([[k for k in row if k != j][:k_neighbors] for j, row in enumerate(indices)])
    offsets = X[neighbors] - X[:, np.newaxis, :]

    axis = np.asarray(axis, dtype = float)
    bearings = np.degrees(np.arctan2(offsets[...,1], offsets[...,0]) - np.arctan2(axis[1], axis[0]))
    bearings = np.mod(np.round(bearings, 9), 360).ravel()
    counts, _ = np.histogram(bearings, bins = AngleHistogram.n_bins(bin_width), range = (0, 360))
    return AngleHistogram(bin_width, counts)


def _hull_distances(X):
    if np.linalg.matrix_rank(X - X.mean(axis = 0), tol = 1e-12 * max(np.abs(X).max(), 1.0)) < 2:
        raise DegenerateHull('Agents are collinear, the convex hull has no interior')
    try:
        hull = ConvexHull(X)
    except QhullError as err:
        raise DegenerateHull(str(err))
    #facet equations are normal . x + offset <= 0 inside, with unit normals
    return np.min(-(X @ hull.equations[:, :2].T + hull.equations[:, 2]), axis = 1)


def crystal_score(agents, neighbor_factor = 1.5):
    '''
**crystal_score** (agents)

Returns:
    (fraction of interior agents with exactly six neighbors within 1.5 median
    nearest-neighbor distances, coefficient of variation of nearest-neighbor distances)

Interior agents lie farther than the median nearest-neighbor distance from the convex hull boundary.
    '''
    X = _positions(agents)
    assert(len(X) >= 20), 'Crystal score needs at least 20 agents'
    to_boundary = _hull_distances(X)

    tree = cKDTree(X)
    nn_dist, _ = tree.query(X, k = 2)
    nn_dist = nn_dist[:, 1]
    typical = float(np.median(nn_dist))
    cv = float(nn_dist.std() / nn_dist.mean())

    interior = np.nonzero(to_boundary > typical)[0]
    if len(interior) == 0:
        return 0.0, cv
    neighbor_counts = np.array([len(tree.query_ball_point(X[j], neighbor_factor * typical)) - 1 for j in interior])
    return float(np.mean(neighbor_counts == 6)), cv


def collinearity(agents):
    '''
Fraction of positional variance along the principal axis, and that axis's
bearing in degrees within [0, 180).
    '''
    X = _positions(agents)
    assert(len(X) >= 3), 'Collinearity needs at least three agents'
    assert(np.ptp(X, axis = 0).max() > 0), 'Collinearity is undefined for coincident agents'
    pca = PCA(n_components = 2).fit(X)
    direction = pca.components_[0]
    bearing = float(np.mod(np.degrees(np.arctan2(direction[1], direction[0])), 180))
    return float(pca.explained_variance_ratio_[0]), bearing


def axis_deviation(bearing, axis_bearing = 0.0):
    '''Unsigned angle in degrees between an undirected line bearing and an axis bearing'''
    gap = np.mod(bearing - axis_bearing, 180)
    return float(min(gap, 180 - gap))


def _check_same_grid(a, b):
    if not a.spec == b.spec:
        raise GridMismatch('Densities live on different grids: {} vs {}'.format(a.spec, b.spec))


def lane_profile(density, density2, columns = None, threshold = None):
    '''
**lane_profile** (density, density2, columns = None)

Mean of ``density - density2`` over the column range ``columns`` (a pair
``(i0, i1)``, half-open; all columns when omitted), as a function of the row.

Returns:
    (profile, alternation_count), the count being sign changes of the profile
    after zeroing entries below ``threshold`` (5%) of its largest magnitude

Raises:
    GridMismatch
    '''
    _check_same_grid(density, density2)
    threshold = LANE_THRESHOLD if threshold is None else threshold
    i0, i1 = (0, density.spec.nx) if columns is None else columns
    assert(0 <= i0 < i1 <= density.spec.nx), 'Column range {} outside the grid'.format((i0, i1))

    profile = (density.rho[i0:i1, :] - density2.rho[i0:i1, :]).mean(axis = 0)
    peak = np.abs(profile).max()
    if peak == 0:
        return profile, 0
    signs = np.sign(profile[np.abs(profile) >= threshold * peak])
    return profile, int(np.count_nonzero(signs[1:] != signs[:-1]))


def wasserstein_1d(x1, x2, w1 = None, w2 = None, rtol = 1e-9):
    '''
**wasserstein_1d** (x1, x2, w1 = None, w2 = None)

Exact W1 distance between two weighted point sets on a line of equal total
mass. Unit weights when omitted.

Raises:
    MassMismatch
    '''
    x1, x2 = np.asarray(x1, dtype = float), np.asarray(x2, dtype = float)
    w1 = np.ones(len(x1)) if w1 is None else np.asarray(w1, dtype = float)
    w2 = np.ones(len(x2)) if w2 is None else np.asarray(w2, dtype = float)
    assert((w1 > 0).all() and (w2 > 0).all()), 'Weights must be positive'
    m1, m2 = w1.sum(), w2.sum()
    if abs(m1 - m2) > rtol * max(m1, m2):
        raise MassMismatch('Total masses differ: {} vs {}'.format(m1, m2))
    #scipy normalizes both weight vectors to probability measures
    return float(stats.wasserstein_distance(x1, x2, w1, w2) * m1)


def wasserstein_2d_small(points1, points2):
    '''
W1 between two equal-size unit-weight point clouds in the plane by
enumerating every assignment. Meant for N <= 8.
    '''
    P, Q = _positions(points1), _positions(points2)
    assert(len(P) == len(Q)), 'Point clouds must have the same size'
    assert(len(P) <= 8), 'Exhaustive assignment is limited to 8 points'
    cost = np.hypot(P[:, np.newaxis, 0] - Q[np.newaxis, :, 0], P[:, np.newaxis, 1] - Q[np.newaxis, :, 1])
    rows = np.arange(len(P))
    return float(min(cost[rows, list(perm)].sum() for perm in itertools.permutations(rows)))


def l1_distance(density1, density2, cell_measure = None):
    '''
Discrete L1 distance, sum |rho1 - rho2| times the cell measure. Accepts two
GridMeasures, or arrays together with ``cell_measure``.
    '''
    if hasattr(density1, 'spec'):
        _check_same_grid(density1, density2)
        cell_measure = density1.spec.cell_area if cell_measure is None else cell_measure
        density1, density2 = density1.rho, density2.rho
    assert(not cell_measure is None), 'Array inputs need a cell measure'
    return float(np.abs(np.asarray(density1, dtype = float) - np.asarray(density2, dtype = float)).sum() * cell_measure)


def density_components(density, threshold = None):
    '''Number of 4-connected groups of cells denser than ``threshold`` (10%) of the peak density'''
    threshold = COMPONENT_THRESHOLD if threshold is None else threshold
    peak = density.rho.max()
    if peak <= 0:
        return 0
    _, n_components = ndimage.label(density.rho > threshold * peak)
    return int(n_components)


def region_density(density, region):
    X, Y = density.spec.centers()
    inside = region.contains_points(np.stack([X, Y], axis = -1)) & ~density.obstacle_mask
    assert(inside.any()), 'Region {} holds no grid cell centers'.format(region)
    return float(density.rho[inside].mean())


def mean_speed(density, speed):
    mass = density.mass()
    total = mass.sum()
    return float((mass * speed).sum() / total) if total > 0 else 0.0


def total_mass(density):
    return density.total_mass()
