'''
Agent-based counterpart of the push-forward: explicit Euler steps of N
agents under ``v = w + nu``, followed by a position projection that keeps every
pair of agents at least one body size apart.
'''

import numpy as np
from scipy.linalg import orthogonal_procrustes
from scipy.spatial import cKDTree
from temsim.core.utils import _config, Log
from temsim.core.field import PotentialField
from temsim.core.kernel import intelligent_velocities_micro
from temsim.core.macro_engine import CflViolation, CFL_RTOL

MAX_SWEEPS = int(_config.get('micro', 'max_sweeps'))
SEPARATION_RTOL = float(_config.get('micro', 'separation_rtol'))
EQUILIBRIUM_TOL = float(_config.get('micro', 'equilibrium_tol'))
EQUILIBRIUM_WINDOW = int(_config.get('micro', 'equilibrium_window'))

class SeparationFailure(Exception):

    def __init__(self, sweeps, min_distance):
        self.sweeps, self.min_distance = sweeps, min_distance
        super().__init__('Separation did not converge after {} sweeps (closest pair {:.3e})'.format(sweeps, min_distance))


class AgentSet:
    '''
Positions of N agents and their sensing headings. Treated as a value: every
operation returns a new AgentSet.
    '''
    def __init__(self, positions, axis = (1.0, 0.0)):
        self.positions = np.array(positions, dtype = float).reshape((-1, 2))
        self.axes = np.array(np.broadcast_to(np.asarray(axis, dtype = float), self.positions.shape))
        self.positions.flags.writeable = False
        self.axes.flags.writeable = False

    @property
    def N(self):
        return len(self.positions)

    def __len__(self):
        return self.N

    def with_positions(self, positions):
        return AgentSet(positions, self.axes)

    def translated(self, shift):
        return self.with_positions(self.positions + np.asarray(shift, dtype = float))

    def permuted(self, order):
        order = np.asarray(order)
        return AgentSet(self.positions[order], self.axes[order])

    def min_distance(self):
        if self.N < 2:
            return np.inf
        dist, _ = cKDTree(self.positions).query(self.positions, k = 2)
        return float(dist[:,1].min())


def external_velocity_at(agents, w):
    '''Sample ``w`` (a fixed vector or a PotentialField) at every agent.'''
    if isinstance(w, PotentialField):
        cells = np.array([w.grid.locate(x) for x in agents.positions], dtype = int).reshape((-1, 2))
        return w.w[cells[:,0], cells[:,1]]
    return np.broadcast_to(np.asarray(w, dtype = float), agents.positions.shape)


def agent_velocities(agents, cfg, w):
    '''``w + nu`` at every agent, read from one frozen configuration'''
    return external_velocity_at(agents, w) + intelligent_velocities_micro(agents, agents.axes, cfg)


def _clip(positions, bounds):
    if bounds is None:
        return positions
    return np.stack([np.clip(positions[...,0], bounds.x0, bounds.x1),
        np.clip(positions[...,1], bounds.y0, bounds.y1)], axis = -1)


def enforce_separation(agents, ell, max_sweeps = None, bounds = None):
    '''
**enforce_separation** (agents, ell, max_sweeps = 100, bounds = None)

Push every pair closer than ``ell`` apart along its connecting line, half the
deficit each, pair by pair in index order. Sweeps repeat until no pair is
closer than ``ell * (1 - 1e-9)``. Coincident agents separate along (1, 0).
With ``bounds``, both agents of a pair are clipped back into the rectangle
after every push, so a pair against a wall opens up away from it over the sweeps.

Returns:
    AgentSet

Raises:
    SeparationFailure if violations remain after ``max_sweeps``
    '''
    assert(ell >= 0), 'Body size must be non-negative'
    max_sweeps = MAX_SWEEPS if max_sweeps is None else max_sweeps
    if ell == 0 or agents.N < 2:
        return agents

    threshold = ell * (1 - SEPARATION_RTOL)
    positions = np.array(agents.positions)
    for _ in range(max_sweeps):
        pairs = cKDTree(positions).query_pairs(threshold, output_type = 'ndarray')
        if len(pairs) == 0:
            return agents.with_positions(positions)
        pairs = pairs[np.lexsort((pairs[:,1], pairs[:,0]))]
        for a, b in pairs:
            offset = positions[b] - positions[a]
            distance = np.hypot(*offset)
            if distance >= threshold:
                continue
            direction = offset / distance if distance > 0 else np.array([1.0, 0.0])
            push = (ell - distance) / 2 * direction
            positions[a] -= push
            positions[b] += push
            if not bounds is None:
                positions[[a, b]] = _clip(positions[[a, b]], bounds)

    remaining = cKDTree(positions).query_pairs(threshold, output_type = 'ndarray')
    if len(remaining) == 0:
        return agents.with_positions(positions)
    raise SeparationFailure(max_sweeps, AgentSet(positions).min_distance())


def step_agents(agents, cfg, w, dt, bounds = None, v = None):
    '''
**step_agents** (agents, cfg, w, dt, bounds = None, v = None)

Synchronous explicit Euler step: every velocity is read from the incoming
configuration, then all agents move, then separation is enforced.

Params:
    agents (AgentSet)
    cfg (SensingConfig)
    w (array-like or PotentialField):
        external velocity; a zero vector works in the co-moving frame
    dt (float)
    bounds (Rectangle):
        when given, positions are clipped into it and separation keeps them inside
    v (array):
        velocities already evaluated on ``agents``; computed when omitted

Returns:
    AgentSet
    '''
    assert(dt > 0), 'Time step must be positive'
    v = agent_velocities(agents, cfg, w) if v is None else v
    positions = _clip(agents.positions + v * dt, bounds)
    return enforce_separation(agents.with_positions(positions), cfg.body_size, bounds = bounds)


def lattice_positions(n, spacing, center = (0.0, 0.0), jitter = 0.0, rng = None):
    '''
First ``n`` points of a square lattice with the given spacing, centered on
``center``, each displaced by a uniform jitter of up to ``jitter * spacing`` per axis.
    '''
    side = int(np.ceil(np.sqrt(n)))
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing = 'ij')
    points = np.stack([ii.ravel(), jj.ravel()], axis = -1)[:n].astype(float) * spacing
    points += np.asarray(center, dtype = float) - points.mean(axis = 0)
    if jitter > 0:
        rng = np.random.default_rng() if rng is None else rng
        points += rng.uniform(-jitter * spacing, jitter * spacing, size = points.shape)
    return points


def rigid_residual(reference, positions):
    '''
Largest per-agent distance between two configurations of the same agents
after the best translation and rotation of ``positions`` onto ``reference``.
    '''
    A = np.asarray(reference, dtype = float) - np.mean(reference, axis = 0)
    B = np.asarray(positions, dtype = float) - np.mean(positions, axis = 0)
    if len(A) < 2:
        return 0.0
    R, _ = orthogonal_procrustes(B, A)
    if np.linalg.det(R) < 0:
        #reflections are not rigid motions
        R = np.eye(2)
    return float(np.hypot(*(B @ R - A).T).max())


class EquilibriumMonitor:
    '''
Flags equilibrium once the mean configuration over one window of ``window``
steps matches the mean over the previous window to within ``tol * ell`` per
agent, after removing translation and rotation of the group.

Agents flicking back and forth across the repulsion radius around fixed mean
positions count as settled. A still group is flagged after two windows.
    '''
    def __init__(self, ell, tol = None, window = None):
        tol = EQUILIBRIUM_TOL if tol is None else tol
        self.threshold = tol * ell if ell > 0 else tol
        self.window = EQUILIBRIUM_WINDOW if window is None else window
        assert(self.window >= 1), 'Equilibrium window must hold at least one step'
        self.window_sum = None
        self.window_steps = 0
        self.previous_mean = None
        self.last_residual = None
        self.reached_at = None

    def update(self, positions, step):
        positions = np.asarray(positions, dtype = float)
        self.window_sum = positions.copy() if self.window_sum is None else self.window_sum + positions
        self.window_steps += 1
        if self.window_steps < self.window:
            return self.reached

        mean = self.window_sum / self.window_steps
        self.window_sum, self.window_steps = None, 0
        if not self.previous_mean is None:
            self.last_residual = rigid_residual(self.previous_mean, mean)
            if self.reached_at is None and self.last_residual < self.threshold:
                self.reached_at = step
        self.previous_mean = mean
        return self.reached

    @property
    def reached(self):
        return not self.reached_at is None


class MicroSimulation:
    '''
Time loop for one agent group.

Every step checks the admissible step ``max|v| * dt <= ell`` on the velocities
it is about to apply. With ``max_substeps`` above 1 a step breaking it is split
into equal pieces that each satisfy it, re-evaluating velocities before every
piece; otherwise, or when more pieces would be needed, CflViolation is raised.
    '''
    def __init__(self, agents, cfg, w, dt, bounds = None, log = None, max_substeps = 1,
            equilibrium_tol = None, equilibrium_window = None):
        assert(max_substeps >= 1), 'At least one substep per step'
        self.agents = agents
        self.cfg = cfg
        self.w = w
        self.dt = float(dt)
        self.bounds = bounds
        self.max_substeps = int(max_substeps)
        self.log = Log(verbose = False) if log is None else log
        self.monitor = EquilibriumMonitor(cfg.body_size, tol = equilibrium_tol, window = equilibrium_window)
        self.split_steps = 0
        self.step_index = 0
        self.t = 0.0

    def _move(self):
        ell = self.cfg.body_size
        agents, remaining, taken = self.agents, self.dt, 0
        while remaining > 0:
            v = agent_velocities(agents, self.cfg, self.w)
            max_speed = float(np.hypot(*v.T).max()) if len(v) else 0.0
            pieces = 1
            if ell > 0 and max_speed * remaining > ell * (1 + CFL_RTOL):
                pieces = int(np.ceil(max_speed * remaining / ell))
            if taken + pieces > self.max_substeps:
                raise CflViolation(max_speed, ell / max_speed, self.step_index)
            sub_dt = remaining / pieces
            agents = step_agents(agents, self.cfg, self.w, sub_dt, bounds = self.bounds, v = v)
            remaining = 0.0 if pieces == 1 else remaining - sub_dt
            taken += 1
        return agents, taken

    def advance(self):
        stepped, taken = self._move()
        if taken > 1:
            self.split_steps += 1
            if self.split_steps == 1:
                self.log.append('Step {} split into {} substeps'.format(self.step_index, taken))
        #displacements are reported in the frame moving with w
        drift = external_velocity_at(self.agents, self.w) * self.dt
        displacement = np.hypot(*(stepped.positions - self.agents.positions - drift).T)
        self.agents = stepped
        self.step_index += 1
        self.t = self.step_index * self.dt
        if self.monitor.update(self.agents.positions, self.step_index) and self.monitor.reached_at == self.step_index:
            self.log.append('Equilibrium reached at step {}'.format(self.step_index))
        return displacement
