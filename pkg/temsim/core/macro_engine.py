'''
Macroscopic push-forward of piecewise-constant densities.

Each step freezes the velocity ``v = w + nu`` per cell, translates every cell
by ``v * dt`` and deposits its mass into the cells it overlaps, in proportion
to the overlap area. Under the CFL bound ``dt * |v| <= h`` a cell reaches at
most its 2 x 2 block of neighbors, so the overlap fractions are the bilinear
split weights of the fractional shift.
'''

import numpy as np
from temsim.core.utils import _config, Log
from temsim.core.geometry import GridSpec
from temsim.core.field import PotentialField
from temsim.core.kernel import GridKernel

CFL_RTOL = float(_config.get('macro', 'cfl_rtol'))

class CflViolation(Exception):

    def __init__(self, max_speed, admissible_dt, step):
        self.max_speed, self.admissible_dt, self.step = max_speed, admissible_dt, step
        super().__init__('CFL violated at step {}: max speed {:.6g} needs dt <= {:.6g}'.format(step, max_speed, admissible_dt))

class UnknownSegment(KeyError):
    pass


class GridMeasure:
    '''
Density ``rho`` (mass per unit area) on the cells of ``spec``. Obstacle cells hold no mass.
    '''
    @classmethod
    def from_agents(cls, agents, spec, obstacle_mask = None):
        positions = np.asarray(getattr(agents, 'positions', agents), dtype = float).reshape((-1, 2))
        bounds = spec.bounds
        counts, _, _ = np.histogram2d(positions[:,0], positions[:,1], bins = spec.shape,
            range = [[bounds.x0, bounds.x1], [bounds.y0, bounds.y1]])
        return cls(spec, counts / spec.cell_area, obstacle_mask)

    @classmethod
    def zeros(cls, spec, obstacle_mask = None):
        return cls(spec, np.zeros(spec.shape), obstacle_mask)

    def __init__(self, spec, rho, obstacle_mask = None):
        self.spec = spec
        self.rho = np.array(rho, dtype = float)
        assert(self.rho.shape == spec.shape), 'Density shape {} does not match grid {}'.format(self.rho.shape, spec.shape)
        assert((self.rho >= 0).all()), 'Density must be non-negative'
        self.obstacle_mask = np.zeros(spec.shape, dtype = bool) if obstacle_mask is None else np.asarray(obstacle_mask, dtype = bool)
        assert(not self.rho[self.obstacle_mask].any()), 'Obstacle cells cannot carry mass'

    def mass(self):
        return self.rho * self.spec.cell_area

    def total_mass(self):
        return float(self.rho.sum() * self.spec.cell_area)

    def copy(self):
        return GridMeasure(self.spec, self.rho, self.obstacle_mask)


class BoundaryFaces:
    '''
Per-cell, per-direction face status used by the transport step. A face is
``blocked`` when it leads into an obstacle cell or through a wall; mass crossing
an open outer face (target or inflow) leaves the grid as outflow.
    '''
    @classmethod
    def open(cls, spec, obstacle_mask = None):
        return cls(spec, obstacle_mask, outer_blocked = None)

    @classmethod
    def from_domain(cls, domain, spec):
        faces = spec.face_labels(domain)
        outer_blocked = {edge : labels == 'wall' for edge, labels in faces.items()}
        return cls(spec, spec.obstacle_mask(domain), outer_blocked)

    def __init__(self, spec, obstacle_mask = None, outer_blocked = None):
        self.spec = spec
        self.obstacle_mask = np.zeros(spec.shape, dtype = bool) if obstacle_mask is None else np.asarray(obstacle_mask, dtype = bool)
        #padded ring of outer cells stands for the far side of each boundary face
        self.padded_blocked = np.pad(self.obstacle_mask, 1, constant_values = False)
        if not outer_blocked is None:
            self.padded_blocked[0, 1:-1] = outer_blocked['left']
            self.padded_blocked[-1, 1:-1] = outer_blocked['right']
            self.padded_blocked[1:-1, 0] = outer_blocked['bottom']
            self.padded_blocked[1:-1, -1] = outer_blocked['top']
            #corners: blocked if either adjoining edge is a wall there
            self.padded_blocked[0, 0] = outer_blocked['left'][0] or outer_blocked['bottom'][0]
            self.padded_blocked[-1, 0] = outer_blocked['right'][0] or outer_blocked['bottom'][-1]
            self.padded_blocked[0, -1] = outer_blocked['left'][-1] or outer_blocked['top'][0]
            self.padded_blocked[-1, -1] = outer_blocked['right'][-1] or outer_blocked['top'][-1]

    def blocked_toward(self, di, dj):
        '''Boolean (nx, ny) array: is the neighbor at offset (di, dj) blocked'''
        nx, ny = self.spec.shape
        return self.padded_blocked[1 + di : 1 + di + nx, 1 + dj : 1 + dj + ny]

    def slide(self, v):
        '''
Remove velocity components that point into blocked neighbors. When only the
diagonal neighbor is blocked, the smaller component is dropped.
        '''
        v = np.array(v, dtype = float)
        vx, vy = v[...,0], v[...,1]
        vx[(vx > 0) & self.blocked_toward(1, 0)] = 0.0
        vx[(vx < 0) & self.blocked_toward(-1, 0)] = 0.0
        vy[(vy > 0) & self.blocked_toward(0, 1)] = 0.0
        vy[(vy < 0) & self.blocked_toward(0, -1)] = 0.0

        for sx in (1, -1):
            for sy in (1, -1):
                corner = (np.sign(vx) == sx) & (np.sign(vy) == sy) & self.blocked_toward(sx, sy)
                drop_x = corner & (np.abs(vx) <= np.abs(vy))
                vx[drop_x] = 0.0
                vy[corner & ~drop_x] = 0.0
        return v


class InflowProfile:
    '''
Density injected per step along a named inflow segment.

Params:
    segment (str):
        name of an inflow-labeled boundary segment
    rho_in (float):
        density added to each adjacent cell per injecting step
    period (float):
        square-wave period; ``None`` injects every step
    duty (float):
        fraction of each period that injects
    phase (float):
        time offset of the square wave
    modulation (float):
        relative amplitude of a sinusoidal profile along the segment, in [0, 1]
    waves (float):
        number of modulation periods along the segment
    modulation_phase (float):
        phase of the along-segment modulation, radians
    '''
    def __init__(self, segment, rho_in, period = None, duty = 1.0, phase = 0.0,
            modulation = 0.0, waves = 1.0, modulation_phase = 0.0):
        assert(rho_in >= 0), 'Inflow density must be non-negative'
        assert(period is None or period > 0), 'Inflow period must be positive'
        assert(0 <= duty <= 1), 'Duty cycle must lie in [0, 1]'
        assert(0 <= modulation <= 1), 'Modulation amplitude must lie in [0, 1]'
        self.segment = segment
        self.rho_in = float(rho_in)
        self.period = None if period is None else float(period)
        self.duty, self.phase = float(duty), float(phase)
        self.modulation, self.waves, self.modulation_phase = float(modulation), float(waves), float(modulation_phase)
        self.cells = None
        self.amounts = None

    def is_on(self, t):
        if self.period is None:
            return True
        cycle_position = ((t - self.phase) % self.period) / self.period
        return cycle_position < self.duty

    def bind(self, domain, spec):
        try:
            segment = domain.get_segment(self.segment)
        except KeyError:
            raise UnknownSegment('No boundary segment named {}'.format(self.segment))
        if segment.label != 'inflow':
            raise UnknownSegment('Segment {} is labeled {}, not inflow'.format(segment.name, segment.label))

        self.cells = spec.segment_cells(segment) & ~spec.obstacle_mask(domain)
        X, Y = spec.centers()
        along = (Y if segment.edge in ('left', 'right') else X)
        s = (along - segment.start) / (segment.end - segment.start)
        shape = 1 + self.modulation * np.sin(2 * np.pi * self.waves * s + self.modulation_phase)
        self.amounts = np.where(self.cells, self.rho_in * shape, 0.0)
        return self


class Population:
    '''
One density species: its measure, external velocity (a solved field or a
fixed vector), sensing parameters and repulsion source (``'self'`` or the
name of another population).
    '''
    def __init__(self, name, measure, cfg, field = None, w = None, repulsion_source = 'self',
            absorbing = False, inflows = ()):
        assert((field is None) != (w is None)), 'Population needs exactly one of field or fixed w'
        self.name = name
        self.measure = measure
        self.cfg = cfg
        self.field = field
        self.w = None if w is None else np.asarray(w, dtype = float)
        self.repulsion_source = repulsion_source
        self.absorbing = absorbing
        self.inflows = list(inflows)
        if isinstance(field, PotentialField):
            assert(field.grid == measure.spec), 'Field grid does not match the population grid'

    def external_velocity(self):
        spec = self.measure.spec
        if self.field is None:
            w = np.broadcast_to(self.w, spec.shape + (2,)).copy()
        else:
            w = np.array(self.field.w)
        w[self.measure.obstacle_mask] = 0.0
        return w


def _repulsion_measure(pop, populations):
    if pop.repulsion_source == 'self':
        return pop.measure
    others = [other for other in populations if other is not pop]
    if pop.repulsion_source == 'other':
        assert(len(others) == 1), 'Repulsion source "other" needs exactly one other population'
        return others[0].measure
    for other in others:
        if other.name == pop.repulsion_source:
            return other.measure
    raise KeyError('Population {} senses unknown population {}'.format(pop.name, pop.repulsion_source))


def transport(measure, v, dt):
    '''
Push ``measure`` forward by the per-cell velocity ``v`` over ``dt``.
Returns the new GridMeasure and the mass that left through open boundary faces.
    '''
    spec = measure.spec
    nx, ny = spec.shape
    mass = measure.mass()
    occupied = mass > 0
    I, J = np.nonzero(occupied)
    shift = np.asarray(v, dtype = float)[occupied] * dt / spec.h

    base_i, base_j = np.floor(shift[:,0]).astype(int), np.floor(shift[:,1]).astype(int)
    frac_x, frac_y = shift[:,0] - base_i, shift[:,1] - base_j
    m = mass[occupied]

    #two-cell margin catches outflow and keeps every destination index valid
    deposit = np.zeros((nx + 4, ny + 4))
    for ox, wx in [(0, 1 - frac_x), (1, frac_x)]:
        for oy, wy in [(0, 1 - frac_y), (1, frac_y)]:
            np.add.at(deposit, (I + base_i + ox + 2, J + base_j + oy + 2), m * wx * wy)

    interior = deposit[2:-2, 2:-2]
    outflow = float(deposit.sum() - interior.sum())
    blocked = measure.obstacle_mask
    assert(not (interior[blocked] > 0).any()), 'Mass was pushed into an obstacle cell'
    #float splitting can leave -0.0 or tiny negatives from 1 - frac
    rho = np.maximum(interior / spec.cell_area, 0.0)
    return GridMeasure(spec, rho, blocked), outflow


def velocities(populations, faces = None, kernels = None):
    '''
Per-cell velocity ``w + nu`` of every population, all read from the current
(step n) measures. Cells without mass get zero velocity.
    '''
    result = []
    for index, pop in enumerate(populations):
        spec = pop.measure.spec
        kernel = GridKernel(spec, pop.cfg) if kernels is None else kernels[index]
        active = pop.measure.rho > 0
        w = pop.external_velocity()
        nu = kernel.velocity(pop.measure.mass(), _repulsion_measure(pop, populations).mass(), w, active)
        v = np.where(active[..., np.newaxis], w + nu, 0.0)
        if not faces is None:
            v = faces.slide(v)
        result.append(v)
    return result


def check_cfl(v, dt, h, step = 0):
    speed = np.hypot(v[...,0], v[...,1])
    max_speed = float(speed.max()) if speed.size else 0.0
    if max_speed * dt > h * (1 + CFL_RTOL):
        raise CflViolation(max_speed, h / max_speed, step)
    return max_speed


def max_speed_of(fields):
    return max((float(np.hypot(v[...,0], v[...,1]).max()) if v.size else 0.0 for v in fields), default = 0.0)


def step(populations, dt, faces = None, kernels = None, step_index = 0, fields = None):
    '''
**step** (populations, dt, faces = None, kernels = None, step_index = 0, fields = None)

One explicit push-forward of every population from the same step-n snapshot.

Params:
    populations (list of Population)
    dt (float):
        time step; must satisfy ``dt * max|v| <= h`` over occupied cells
    faces (BoundaryFaces):
        wall and obstacle faces. ``None`` leaves every outer face open.
    fields (list of arrays):
        velocities already evaluated on this snapshot; computed when omitted

Returns:
    list of (GridMeasure, outflow, speed) per population

Raises:
    CflViolation
    '''
    assert(dt > 0), 'Time step must be positive'
    fields = velocities(populations, faces = faces, kernels = kernels) if fields is None else fields
    for pop, v in zip(populations, fields):
        check_cfl(v, dt, pop.measure.spec.h, step = step_index)

    updated = []
    for pop, v in zip(populations, fields):
        measure, outflow = transport(pop.measure, v, dt)
        updated.append((measure, outflow, np.hypot(v[...,0], v[...,1])))
    return updated


def inject_boundary(pop, profile, t):
    '''
Add the profile's density to its inflow cells when its schedule is on at time ``t``.
Returns the injected mass.
    '''
    if profile.cells is None:
        raise UnknownSegment('Inflow profile for segment {} is not bound to a domain'.format(profile.segment))
    if not profile.is_on(t):
        return 0.0
    rho = pop.measure.rho + profile.amounts
    pop.measure = GridMeasure(pop.measure.spec, rho, pop.measure.obstacle_mask)
    return float(profile.amounts.sum() * pop.measure.spec.cell_area)


def target_cells(domain, spec):
    faces = spec.face_labels(domain)
    mask = np.zeros(spec.shape, dtype = bool)
    mask[0, :] |= faces['left'] == 'target'
    mask[-1, :] |= faces['right'] == 'target'
    mask[:, 0] |= faces['bottom'] == 'target'
    mask[:, -1] |= faces['top'] == 'target'
    return mask & ~spec.obstacle_mask(domain)


def absorb_at_target(pop, absorbing_cells = None):
    '''
Clear the population's mass from its absorbing cells.

Returns:
    (GridMeasure, absorbed mass); ``pop`` itself is left untouched
    '''
    if absorbing_cells is None or not pop.absorbing:
        return pop.measure, 0.0
    absorbed = float(pop.measure.rho[absorbing_cells].sum() * pop.measure.spec.cell_area)
    rho = pop.measure.rho.copy()
    rho[absorbing_cells] = 0.0
    return GridMeasure(pop.measure.spec, rho, pop.measure.obstacle_mask), absorbed


class MassLedger:

    def __init__(self, initial):
        self.initial = float(initial)
        self.injected = 0.0
        self.absorbed = 0.0
        self.outflow = 0.0

    def balance_error(self, interior):
        scale = max(self.initial + self.injected, 1e-300)
        return abs(interior + self.absorbed + self.outflow - self.injected - self.initial) / scale

    def to_dict(self, interior):
        return dict(interior = interior, injected = self.injected, absorbed = self.absorbed,
            outflow = self.outflow, initial = self.initial)


class MacroSimulation:
    '''
Time loop for one or more interacting populations on a shared grid.

Each call to ``advance`` pushes every population forward from the same
snapshot, then injects inflow scheduled at the step's start time, then
removes mass that reached an absorbing target.

With ``max_substeps`` above 1, a step whose speeds break the CFL bound is
split into equal pieces that each satisfy it, re-evaluating the velocities
before every piece; a step needing more than ``max_substeps`` pieces raises
CflViolation. The default of 1 keeps every step a single push-forward.
    '''
    def __init__(self, domain, spec, populations, dt, log = None, max_substeps = 1):
        assert(isinstance(spec, GridSpec))
        assert(max_substeps >= 1), 'At least one substep per step'
        self.domain = domain
        self.spec = spec
        self.populations = list(populations)
        self.dt = float(dt)
        self.max_substeps = int(max_substeps)
        self.log = Log(verbose = False) if log is None else log
        self.split_steps = 0

        names = [pop.name for pop in self.populations]
        assert(len(set(names)) == len(names)), 'Population names must be unique'

        self.faces = BoundaryFaces.from_domain(domain, spec)
        self.kernels = [GridKernel(spec, pop.cfg) for pop in self.populations]
        self.absorbing_cells = target_cells(domain, spec)
        for pop in self.populations:
            for profile in pop.inflows:
                profile.bind(domain, spec)

        self.ledgers = {pop.name : MassLedger(pop.measure.total_mass()) for pop in self.populations}
        self.speeds = {pop.name : np.zeros(spec.shape) for pop in self.populations}
        self.step_index = 0
        self.t = 0.0

    def _transport_pieces(self):
        h = self.spec.h
        remaining, taken = self.dt, 0
        while remaining > 0:
            fields = velocities(self.populations, faces = self.faces, kernels = self.kernels)
            max_speed = max_speed_of(fields)
            pieces = 1
            if max_speed * remaining > h * (1 + CFL_RTOL):
                pieces = int(np.ceil(max_speed * remaining / h))
            if taken + pieces > self.max_substeps:
                raise CflViolation(max_speed, h / max_speed, self.step_index)
            sub_dt = remaining / pieces
            updated = step(self.populations, sub_dt, faces = self.faces, kernels = self.kernels,
                step_index = self.step_index, fields = fields)
            for pop, (measure, outflow, speed) in zip(self.populations, updated):
                pop.measure = measure
                self.ledgers[pop.name].outflow += outflow
                self.speeds[pop.name] = speed
            remaining = 0.0 if pieces == 1 else remaining - sub_dt
            taken += 1
        return taken

    def advance(self):
        taken = self._transport_pieces()
        if taken > 1:
            self.split_steps += 1
            if self.split_steps == 1:
                self.log.append('Step {} split into {} CFL substeps'.format(self.step_index, taken))

        for pop in self.populations:
            ledger = self.ledgers[pop.name]
            for profile in pop.inflows:
                ledger.injected += inject_boundary(pop, profile, self.t)
            pop.measure, absorbed = absorb_at_target(pop, self.absorbing_cells)
            ledger.absorbed += absorbed

        self.step_index += 1
        self.t = self.step_index * self.dt
        return taken

    def ledger(self):
        return {pop.name : self.ledgers[pop.name].to_dict(pop.measure.total_mass()) for pop in self.populations}

    def balance_error(self):
        return max(self.ledgers[pop.name].balance_error(pop.measure.total_mass()) for pop in self.populations)

    def measures(self):
        return [pop.measure for pop in self.populations]
