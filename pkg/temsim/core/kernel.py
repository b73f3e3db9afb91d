'''
The intelligent velocity: anisotropic topological cohesion plus metric repulsion.

Both scales evaluate

    nu(x) = F_c * sum_{B_c(x)} (y - x) m(y)  +  F_r * sum_{B_r(x)} (y - x) / |y - x|^2 m(y)

where ``B_c`` is the cohesion sector whose radius shrinks until it holds at
most ``p`` mass (agents at micro scale, density mass at macro scale) and
``B_r`` is the fixed repulsion sector. Micro agents also repel every agent
inside their body-size ball regardless of heading. Sensing zones are not
clipped by obstacles.
'''

import numpy as np
from scipy.signal import fftconvolve
from temsim.core.utils import _config
from temsim.core.geometry import in_cone, is_full_turn, FULL_TURN

SINGULAR_FRACTION = float(_config.get('kernel', 'singular_fraction'))
BLOCK_ENTRIES = int(_config.get('kernel', 'block_entries'))

class SingularPair(Exception):

    def __init__(self, j, k, distance):
        self.j, self.k, self.distance = j, k, distance
        super().__init__('Agents {} and {} are {:.3e} apart, inside the singular repulsion core'.format(j, k, distance))


class SensingConfig:
    '''
Interaction parameters shared by both engines.

Params:
    alpha_c, alpha_r (float):
        cohesion and repulsion sector spans, in (0, 2pi]
    R_r (float):
        repulsion radius
    R_c_max (float):
        metric cut-off of the cohesion zone; bounds its area at ``alpha_c * R_c_max**2 / 2``
    p (float):
        cohesion capacity. Agent count at micro scale, mass at macro scale. ``np.inf`` gives metric cohesion.
    F_c (float):
        cohesion coefficient, >= 0
    F_r (float):
        repulsion coefficient, <= 0
    body_size (float):
        minimum inter-agent distance (micro only)
    '''
    fields = ('alpha_c', 'alpha_r', 'R_r', 'R_c_max', 'p', 'F_c', 'F_r', 'body_size')

    def __init__(self, alpha_c = FULL_TURN, alpha_r = np.pi, R_r = 0.1, R_c_max = 1.0, p = np.inf,
            F_c = 0.0, F_r = -1.0, body_size = 0.0):
        self.alpha_c, self.alpha_r = float(alpha_c), float(alpha_r)
        self.R_r, self.R_c_max = float(R_r), float(R_c_max)
        self.p = float(p)
        self.F_c, self.F_r = float(F_c), float(F_r)
        self.body_size = float(body_size)

        for angle in (self.alpha_c, self.alpha_r):
            assert(0 < angle <= FULL_TURN * (1 + 1e-12)), 'Sector spans must lie in (0, 2pi]'
        assert(self.R_r > 0), 'Repulsion radius must be positive'
        assert(self.R_c_max > 0), 'Cohesion cut-off must be positive'
        assert(self.p >= 0), 'Cohesion capacity p must be non-negative'
        assert(self.F_c >= 0), 'Cohesion coefficient must be non-negative'
        assert(self.F_r <= 0), 'Repulsion coefficient must be non-positive'
        assert(self.body_size >= 0), 'Body size must be non-negative'
        assert(self.body_size == 0 or self.body_size < self.R_r), 'Body size must be smaller than the repulsion radius'

    @property
    def s(self):
        return self.alpha_c * self.R_c_max**2 / 2

    @property
    def is_topological(self):
        return np.isfinite(self.p)

    def to_dict(self):
        return {field : getattr(self, field) for field in self.fields}

    def replace(self, **kwargs):
        params = self.to_dict()
        params.update(kwargs)
        return SensingConfig(**params)

    def __eq__(self, other):
        return isinstance(other, SensingConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return 'SensingConfig({})'.format(', '.join('{}={}'.format(k, repr(v)) for k, v in self.to_dict().items()))


def _positions(agents):
    return np.asarray(getattr(agents, 'positions', agents), dtype = float).reshape((-1, 2))


def _sensing_mask(offsets, axes, angle):
    #axes broadcast against offsets; a zero axis opens the zone to the full ball
    axes = np.asarray(axes, dtype = float)
    mask = in_cone(offsets, axes, angle)
    if not is_full_turn(angle):
        mask = mask | (np.hypot(axes[...,0], axes[...,1]) == 0)
    return mask


def cohesion_radius_micro(x, axis, others, cfg):
    '''
**cohesion_radius_micro** (x, axis, others, cfg)

Largest cohesion radius holding at most ``p`` other agents, capped at ``R_c_max``.
Agents tied at the limiting distance are excluded together.

Params:
    x (array-like):
        sensing agent position
    axis (array-like):
        unit heading; zero opens the sector to the full ball
    others (AgentSet or array (n, 2)):
        the other agents. Points coinciding with ``x`` are ignored.
    cfg (SensingConfig)

Returns:
    float
    '''
    if not cfg.is_topological:
        return cfg.R_c_max
    offsets = _positions(others) - np.asarray(x, dtype = float)
    dist = np.hypot(offsets[:,0], offsets[:,1])
    candidates = np.sort(dist[_sensing_mask(offsets, axis, cfg.alpha_c) & (dist > 0)])
    k = int(np.floor(cfg.p))
    if len(candidates) <= k:
        return cfg.R_c_max
    return min(cfg.R_c_max, float(candidates[k]))


def _micro_rows(rows, positions, axes, cfg):
    n = len(positions)
    offsets = positions[np.newaxis, :, :] - positions[rows][:, np.newaxis, :]
    dist = np.hypot(offsets[...,0], offsets[...,1])
    is_self = np.arange(n)[np.newaxis, :] == rows[:, np.newaxis]
    dist = np.where(is_self, np.inf, dist)

    singular = dist < SINGULAR_FRACTION * cfg.body_size if cfg.body_size > 0 else dist == 0
    if singular.any():
        row, k = np.argwhere(singular)[0]
        raise SingularPair(int(rows[row]), int(k), float(dist[row, k]))

    row_axes = axes[rows][:, np.newaxis, :]
    nu = np.zeros((len(rows), 2))

    if cfg.F_c != 0:
        in_zone = _sensing_mask(offsets, row_axes, cfg.alpha_c) & ~is_self
        k = int(np.floor(cfg.p)) if cfg.is_topological else n
        if k < n:
            cone_dist = np.where(in_zone, dist, np.inf)
            limit = np.partition(cone_dist, k, axis = 1)[:, k][:, np.newaxis]
            members = in_zone & np.where(limit <= cfg.R_c_max, cone_dist < limit, cone_dist <= cfg.R_c_max)
            assert((members.sum(axis = 1) <= k).all()), 'Topological cap exceeded'
        else:
            members = in_zone & (dist <= cfg.R_c_max)
        nu += cfg.F_c * np.einsum('bn,bnd->bd', members.astype(float), offsets)

    if cfg.F_r != 0:
        in_zone = (_sensing_mask(offsets, row_axes, cfg.alpha_r) & (dist <= cfg.R_r)) | (dist <= cfg.body_size)
        in_zone &= ~is_self
        weights = np.where(in_zone, 1.0 / np.where(in_zone, dist, 1.0)**2, 0.0)
        nu += cfg.F_r * np.einsum('bn,bnd->bd', weights, offsets)

    return nu


def intelligent_velocities_micro(agents, axis_per_agent, cfg, block_entries = None):
    '''
Intelligent velocity of every agent, evaluated from one frozen configuration.
Returns an array of shape (N, 2).
    '''
    positions = _positions(agents)
    n = len(positions)
    axes = np.broadcast_to(np.asarray(axis_per_agent, dtype = float), (n, 2))
    block_entries = BLOCK_ENTRIES if block_entries is None else block_entries
    rows_per_block = max(1, block_entries // max(n, 1))

    nu = np.zeros((n, 2))
    for start in range(0, n, rows_per_block):
        rows = np.arange(start, min(n, start + rows_per_block))
        nu[rows] = _micro_rows(rows, positions, axes, cfg)
    return nu


def intelligent_velocity_micro(j, agents, axis_per_agent, cfg):
    positions = _positions(agents)
    axes = np.broadcast_to(np.asarray(axis_per_agent, dtype = float), positions.shape)
    return _micro_rows(np.array([j]), positions, axes, cfg)[0]


class GridKernel:
    '''
Midpoint-rule quadrature of the intelligent velocity over a uniform grid.

A cell belongs to a sector when its center does. Offsets to every cell within
the interaction range are tabulated once, sorted into rings of equal
distance, and gathered per block of evaluation cells. The cell holding ``x``
counts toward the cohesion capacity and is left out of the repulsion sum.

Example ::

    >>> kernel = GridKernel(grid, cfg)
    >>> nu = kernel.velocity(mass_c = rho * grid.cell_area, mass_r = rho * grid.cell_area, axes = field.w)

    '''
    def __init__(self, grid, cfg, block_entries = None):
        self.grid = grid
        self.cfg = cfg
        self.block_entries = BLOCK_ENTRIES if block_entries is None else block_entries

        reach = max(cfg.R_c_max if cfg.F_c != 0 else 0.0, cfg.R_r if cfg.F_r != 0 else 0.0)
        self.pad = int(np.ceil(reach / grid.h + 1e-9))
        di, dj = np.meshgrid(np.arange(-self.pad, self.pad + 1), np.arange(-self.pad, self.pad + 1), indexing = 'ij')
        di, dj = di.ravel(), dj.ravel()
        ring_key = di**2 + dj**2
        keep = np.sqrt(ring_key) * grid.h <= reach * (1 + 1e-12)
        order = np.lexsort((dj[keep], di[keep], ring_key[keep]))

        self.di, self.dj = di[keep][order], dj[keep][order]
        ring_key = ring_key[keep][order]
        self.offsets = np.stack([self.di, self.dj], axis = -1) * grid.h
        self.dist = np.sqrt(ring_key) * grid.h
        _, self.ring_starts, self.ring_of = np.unique(ring_key, return_index = True, return_inverse = True)

        self.within_c = self.dist <= cfg.R_c_max * (1 + 1e-12)
        self.within_r = (self.dist <= cfg.R_r * (1 + 1e-12)) & (self.dist > 0)
        self.repulsion_weights = np.zeros_like(self.offsets)
        self.repulsion_weights[self.within_r] = self.offsets[self.within_r] / self.dist[self.within_r, np.newaxis]**2

    def _gather(self, padded, I, J):
        return padded[I[:, np.newaxis] + self.pad + self.di[np.newaxis, :], J[:, np.newaxis] + self.pad + self.dj[np.newaxis, :]]

    def _block(self, I, J, padded_c, padded_r, axes):
        cfg = self.cfg
        nu = np.zeros((len(I), 2))
        block_axes = axes[I, J][:, np.newaxis, :]

        if cfg.F_c != 0:
            mass = self._gather(padded_c, I, J)
            zone = _sensing_mask(self.offsets[np.newaxis, :, :], block_axes, cfg.alpha_c) & self.within_c[np.newaxis, :]
            if cfg.is_topological:
                ring_mass = np.cumsum(np.add.reduceat(np.where(zone, mass, 0.0), self.ring_starts, axis = 1), axis = 1)
                exceeded = ring_mass > cfg.p
                first_excluded = np.where(exceeded.any(axis = 1), exceeded.argmax(axis = 1), len(self.ring_starts))
                zone = zone & (self.ring_of[np.newaxis, :] < first_excluded[:, np.newaxis])
            nu += cfg.F_c * np.where(zone, mass, 0.0) @ self.offsets

        if cfg.F_r != 0:
            mass = self._gather(padded_r, I, J)
            zone = _sensing_mask(self.offsets[np.newaxis, :, :], block_axes, cfg.alpha_r) & self.within_r[np.newaxis, :]
            nu += cfg.F_r * np.where(zone, mass, 0.0) @ self.repulsion_weights

        return nu

    def _convolved(self, mass, axis, angle, weights, zone):
        #correlation sum_k m(x + r_k) K(r_k) as a convolution with the flipped stencil
        size = 2 * self.pad + 1
        stencil = np.zeros((size, size, 2))
        zone = zone & _sensing_mask(self.offsets, axis, angle)
        stencil[self.pad - self.di[zone], self.pad - self.dj[zone]] = weights[zone]
        return np.stack([fftconvolve(mass, stencil[...,d], mode = 'same') for d in range(2)], axis = -1)

    def velocity(self, mass_c, mass_r, axes, active = None):
        '''
**velocity** (mass_c, mass_r, axes, active = None)

Params:
    mass_c (np.ndarray (nx, ny)):
        per-cell mass sensed for cohesion
    mass_r (np.ndarray (nx, ny)):
        per-cell mass sensed for repulsion
    axes (np.ndarray (nx, ny, 2) or (2,)):
        sector heading per cell
    active (np.ndarray (nx, ny) of bool):
        cells to evaluate; defaults to every cell

Returns:
    np.ndarray (nx, ny, 2), zero outside ``active``
        '''
        shape = self.grid.shape
        axes = np.broadcast_to(np.asarray(axes, dtype = float), shape + (2,))
        active = np.ones(shape, dtype = bool) if active is None else np.asarray(active, dtype = bool)
        nu = np.zeros(shape + (2,))
        if not active.any() or len(self.dist) == 0:
            return nu

        active_axes = axes[active]
        if not self.cfg.is_topological and (active_axes == active_axes[0]).all():
            return self._velocity_fft(mass_c, mass_r, active_axes[0], active)

        padded_c = np.pad(np.asarray(mass_c, dtype = float), self.pad)
        padded_r = np.pad(np.asarray(mass_r, dtype = float), self.pad)
        I, J = np.nonzero(active)
        cells_per_block = max(1, self.block_entries // len(self.dist))
        for start in range(0, len(I), cells_per_block):
            block = slice(start, start + cells_per_block)
            nu[I[block], J[block]] = self._block(I[block], J[block], padded_c, padded_r, axes)
        return nu

    def _velocity_fft(self, mass_c, mass_r, axis, active):
        nu = np.zeros(self.grid.shape + (2,))
        if self.cfg.F_c != 0:
            nu += self.cfg.F_c * self._convolved(np.asarray(mass_c, dtype = float), axis, self.cfg.alpha_c,
                self.offsets, self.within_c)
        if self.cfg.F_r != 0:
            nu += self.cfg.F_r * self._convolved(np.asarray(mass_r, dtype = float), axis, self.cfg.alpha_r,
                self.repulsion_weights, self.within_r)
        nu[~active] = 0.0
        return nu


def intelligent_velocity_macro(x, density, axis, cfg, repulsion_density = None):
    '''
Intelligent velocity at the cell holding ``x``, sensing ``density`` (a
GridMeasure) for cohesion and ``repulsion_density`` (defaults to ``density``)
for repulsion.
    '''
    grid = density.spec
    i, j = grid.locate(x)
    active = np.zeros(grid.shape, dtype = bool)
    active[i, j] = True
    source_r = density if repulsion_density is None else repulsion_density
    nu = GridKernel(grid, cfg).velocity(density.mass(), source_r.mass(), np.asarray(axis, dtype = float), active)
    return nu[i, j]
