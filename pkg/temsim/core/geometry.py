'''
Planar primitives shared by both engines: the rectangular domain with its
obstacles and labeled boundary, the uniform grid laid over it, circular
sensing sectors, and the exact overlap areas used by the push-forward scheme.

Everything here is two-dimensional. Points and vectors are length-2 sequences
or numpy arrays; batched inputs carry the coordinate on the last axis.
'''

import numpy as np
from temsim.core.utils import _config

FULL_TURN = 2 * np.pi
ANGLE_EPS = float(_config.get('kernel', 'angle_eps'))

EDGES = ('left', 'right', 'bottom', 'top')
LABELS = ('target', 'wall', 'inflow')

class InvalidDomain(ValueError):
    pass

class SectorError(ValueError):
    pass


class Rectangle:

    def __init__(self, x0, y0, x1, y1):
        self.x0, self.y0, self.x1, self.y1 = float(x0), float(y0), float(x1), float(y1)
        assert(self.x1 > self.x0 and self.y1 > self.y0), 'Rectangle must have positive side lengths: {}'.format(str(self))

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def to_tuple(self):
        return (self.x0, self.y0, self.x1, self.y1)

    def translated(self, shift):
        return Rectangle(self.x0 + shift[0], self.y0 + shift[1], self.x1 + shift[0], self.y1 + shift[1])

    def contains(self, point):
        return self.x0 <= point[0] <= self.x1 and self.y0 <= point[1] <= self.y1

    def contains_points(self, points):
        points = np.asarray(points, dtype = float)
        return (points[...,0] >= self.x0) & (points[...,0] <= self.x1) & \
            (points[...,1] >= self.y0) & (points[...,1] <= self.y1)

    def strictly_inside(self, other):
        #is self strictly inside other, touching no edge
        return other.x0 < self.x0 and self.x1 < other.x1 and other.y0 < self.y0 and self.y1 < other.y1

    def intersects(self, other):
        return _overlap_1d(self.x0, self.x1, other.x0, other.x1) > 0 and \
            _overlap_1d(self.y0, self.y1, other.y0, other.y1) > 0

    def __eq__(self, other):
        return isinstance(other, Rectangle) and self.to_tuple() == other.to_tuple()

    def __repr__(self):
        return 'Rectangle({}, {}, {}, {})'.format(*self.to_tuple())


def _overlap_1d(min1, max1, min2, max2):
    return max(0.0, min(max1, max2) - max(min1, min2))


def cell_overlap_volume(cell_a, cell_b, shift):
    '''
Exact area of ``cell_a`` intersected with ``cell_b`` translated by ``shift``.
For axis-aligned rectangles this is the product of the two 1-D interval overlaps.
    '''
    return _overlap_1d(cell_a.x0, cell_a.x1, cell_b.x0 + shift[0], cell_b.x1 + shift[0]) * \
        _overlap_1d(cell_a.y0, cell_a.y1, cell_b.y0 + shift[1], cell_b.y1 + shift[1])


class BoundarySegment:
    '''
A labeled stretch of one outer edge. ``start`` and ``end`` are absolute
coordinates along the edge (y for left/right, x for bottom/top).
    '''
    def __init__(self, name, edge, start, end, label):
        assert(edge in EDGES), 'Edge must be one of {}'.format(', '.join(EDGES))
        assert(label in LABELS), 'Boundary label must be one of {}'.format(', '.join(LABELS))
        self.name = str(name)
        self.edge = edge
        self.start = float(start)
        self.end = float(end)
        self.label = label
        assert(self.end > self.start), 'Segment {} must have positive length'.format(self.name)

    def covers(self, coord):
        return self.start <= coord <= self.end

    def __repr__(self):
        return 'BoundarySegment({}, {}, {}, {}, {})'.format(self.name, self.edge, self.start, self.end, self.label)


class Domain:
    '''
Rectangular region of motion with axis-aligned rectangular obstacles and a
fully labeled outer boundary.

Params:
    bounds (Rectangle):
        the outer box
    obstacles (list of Rectangle):
        pairwise disjoint, strictly inside ``bounds``
    segments (list of BoundarySegment):
        labeled edge pieces. Edges not mentioned get one segment named after the edge with ``default_label``.
    '''
    def __init__(self, bounds, obstacles = (), segments = (), default_label = 'wall'):
        assert(isinstance(bounds, Rectangle))
        self.bounds = bounds
        self.obstacles = list(obstacles)
        self.segments = list(segments)

        covered_edges = set(segment.edge for segment in self.segments)
        for edge in EDGES:
            if not edge in covered_edges:
                start, end = self.edge_extent(edge)
                self.segments.append(BoundarySegment(edge, edge, start, end, default_label))

        self._validate()

    def edge_extent(self, edge):
        if edge in ('left', 'right'):
            return self.bounds.y0, self.bounds.y1
        return self.bounds.x0, self.bounds.x1

    def _validate(self):
        for i, obstacle in enumerate(self.obstacles):
            if not obstacle.strictly_inside(self.bounds):
                raise InvalidDomain('Obstacle {} must lie strictly inside the domain bounds'.format(str(obstacle)))
            for other in self.obstacles[i+1:]:
                if obstacle.intersects(other):
                    raise InvalidDomain('Obstacles {} and {} overlap'.format(str(obstacle), str(other)))

        names = [segment.name for segment in self.segments]
        if len(set(names)) != len(names):
            raise InvalidDomain('Boundary segment names must be unique')

        for edge in EDGES:
            start, end = self.edge_extent(edge)
            pieces = sorted([s for s in self.segments if s.edge == edge], key = lambda s : s.start)
            tol = 1e-12 * max(1.0, abs(end - start))
            position = start
            for piece in pieces:
                if abs(piece.start - position) > tol:
                    raise InvalidDomain('Edge {} is not partitioned by its segments near {}'.format(edge, position))
                position = piece.end
            if abs(position - end) > tol:
                raise InvalidDomain('Edge {} segments stop at {}, edge ends at {}'.format(edge, position, end))

    def get_segment(self, name):
        for segment in self.segments:
            if segment.name == name:
                return segment
        raise KeyError('No boundary segment named {}'.format(name))

    def segments_with_label(self, label):
        return [segment for segment in self.segments if segment.label == label]

    def has_target(self):
        return len(self.segments_with_label('target')) > 0

    def label_at(self, edge, coord):
        #face midpoints may sit on a junction; target takes precedence there
        labels = [segment.label for segment in self.segments if segment.edge == edge and segment.covers(coord)]
        if len(labels) == 0:
            raise InvalidDomain('Coordinate {} is not on edge {}'.format(coord, edge))
        return 'target' if 'target' in labels else labels[0]

    def in_obstacle(self, points):
        points = np.asarray(points, dtype = float)
        inside = np.zeros(points.shape[:-1], dtype = bool)
        for obstacle in self.obstacles:
            inside |= obstacle.contains_points(points)
        return inside


class GridSpec:
    '''
Uniform grid of square cells of side ``h``. Cell (i, j) spans
``[x0 + i*h, x0 + (i+1)*h] x [y0 + j*h, y0 + (j+1)*h]``; arrays over the grid
have shape ``(nx, ny)`` and are indexed ``[i, j]``.
    '''
    @classmethod
    def covering(cls, bounds, h):
        nx, ny = int(round(bounds.width / h)), int(round(bounds.height / h))
        assert(nx >= 1 and ny >= 1), 'Cell size {} exceeds the domain'.format(h)
        if abs(nx * h - bounds.width) > 1e-9 * bounds.width or abs(ny * h - bounds.height) > 1e-9 * bounds.height:
            raise InvalidDomain('Cell size {} does not tile the domain {}'.format(h, str(bounds)))
        return cls(nx, ny, h, origin = (bounds.x0, bounds.y0))

    def __init__(self, nx, ny, h, origin = (0.0, 0.0)):
        assert(int(nx) >= 1 and int(ny) >= 1), 'Grid must have at least one cell per axis'
        assert(h > 0), 'Cell size must be positive'
        self.nx, self.ny = int(nx), int(ny)
        self.h = float(h)
        self.origin = (float(origin[0]), float(origin[1]))

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def cell_area(self):
        return self.h * self.h

    @property
    def bounds(self):
        return Rectangle(self.origin[0], self.origin[1],
            self.origin[0] + self.nx * self.h, self.origin[1] + self.ny * self.h)

    def cell_center(self, i, j):
        return np.array([self.origin[0] + (i + 0.5) * self.h, self.origin[1] + (j + 0.5) * self.h])

    def cell_rect(self, i, j):
        x0, y0 = self.origin[0] + i * self.h, self.origin[1] + j * self.h
        return Rectangle(x0, y0, x0 + self.h, y0 + self.h)

    def centers(self):
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y, indexing = 'ij')

    def locate(self, point):
        i = int(np.floor((point[0] - self.origin[0]) / self.h))
        j = int(np.floor((point[1] - self.origin[1]) / self.h))
        return min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1)

    def obstacle_mask(self, domain):
        X, Y = self.centers()
        return domain.in_obstacle(np.stack([X, Y], axis = -1))

    def face_labels(self, domain):
        '''
Label of every outer boundary face, keyed by edge. Left/right arrays have
length ``ny``, bottom/top arrays length ``nx``.
        '''
        X, Y = self.centers()
        return dict(
            left = np.array([domain.label_at('left', y) for y in Y[0, :]]),
            right = np.array([domain.label_at('right', y) for y in Y[0, :]]),
            bottom = np.array([domain.label_at('bottom', x) for x in X[:, 0]]),
            top = np.array([domain.label_at('top', x) for x in X[:, 0]]),
        )

    def edge_cells(self, edge, start = None, end = None):
        '''
Boolean mask of the cells adjacent to ``edge`` whose face midpoint lies in
``[start, end]`` (the whole edge when omitted).
        '''
        assert(edge in EDGES)
        X, Y = self.centers()
        mask = np.zeros(self.shape, dtype = bool)
        if edge in ('left', 'right'):
            coords = Y[0, :]
            column = 0 if edge == 'left' else self.nx - 1
            lo = -np.inf if start is None else start
            hi = np.inf if end is None else end
            mask[column, :] = (coords >= lo) & (coords <= hi)
        else:
            coords = X[:, 0]
            row = 0 if edge == 'bottom' else self.ny - 1
            lo = -np.inf if start is None else start
            hi = np.inf if end is None else end
            mask[:, row] = (coords >= lo) & (coords <= hi)
        return mask

    def segment_cells(self, segment):
        return self.edge_cells(segment.edge, segment.start, segment.end)

    def __eq__(self, other):
        return isinstance(other, GridSpec) and self.shape == other.shape and \
            self.h == other.h and self.origin == other.origin

    def __repr__(self):
        return 'GridSpec(nx={}, ny={}, h={}, origin={})'.format(self.nx, self.ny, self.h, self.origin)


def is_full_turn(angle):
    return angle >= FULL_TURN * (1 - 1e-12)


def in_cone(vectors, axis, angle):
    '''
Closed angular test ``r·axis >= cos(angle/2) |r|`` for a batch of offset
vectors. Zero offsets (the apex) are always members; a full turn ignores the axis.
    '''
    vectors = np.asarray(vectors, dtype = float)
    if is_full_turn(angle):
        return np.ones(vectors.shape[:-1], dtype = bool)
    axis = np.asarray(axis, dtype = float)
    norms = np.hypot(vectors[...,0], vectors[...,1])
    dots = vectors[...,0] * axis[...,0] + vectors[...,1] * axis[...,1]
    return (norms == 0) | (dots >= (np.cos(angle / 2) - ANGLE_EPS) * norms)


class Sector:
    '''
Closed circular sector ``{y : |y - apex| <= radius, r(apex, y)·axis >= cos(angle/2)}``.
    '''
    def __init__(self, apex, radius, axis, angle):
        assert(radius >= 0), 'Sector radius must be non-negative'
        assert(0 < angle <= FULL_TURN * (1 + 1e-12)), 'Sector angle must lie in (0, 2pi]'
        self.apex = np.asarray(apex, dtype = float)
        self.radius = float(radius)
        self.axis = np.asarray(axis, dtype = float)
        self.angle = float(angle)

        if not is_full_turn(self.angle):
            norm = np.hypot(*self.axis)
            if norm == 0:
                raise SectorError('A sector narrower than the full turn needs a non-zero axis')
            assert(abs(norm - 1) <= 1e-12), 'Sector axis must be a unit vector, got norm {}'.format(norm)

    def contains(self, y):
        offset = np.asarray(y, dtype = float) - self.apex
        return bool(np.hypot(*offset) <= self.radius and in_cone(offset, self.axis, self.angle))

    def contains_points(self, points):
        offsets = np.asarray(points, dtype = float) - self.apex
        return (np.hypot(offsets[...,0], offsets[...,1]) <= self.radius) & in_cone(offsets, self.axis, self.angle)

    def area(self):
        return self.angle * self.radius**2 / 2


def sector_contains(s, y):
    return s.contains(y)


def sector_area(s):
    return s.area()
