'''
External velocity from a harmonic potential.

The potential ``u`` solves Laplace's equation on the cell-centered grid with
``u = 1`` on target faces, ``u = 0`` on wall faces and a mirrored ghost cell
(homogeneous Neumann) on obstacle and inflow faces. The external velocity is
the normalized gradient ``w = grad(u) / |grad(u)|``. The field depends only on
the geometry, so scenarios solve it once and share it.
'''

import numpy as np
from temsim.core.utils import _config, Log
from temsim.core.geometry import InvalidDomain

DIRICHLET_VALUES = dict(target = 1.0, wall = 0.0)

class NonConvergence(Exception):

    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__('Laplace solver stalled at residual {:.3e} after {} iterations'.format(residual, iterations))


class _LaplaceStencil:
    #5-point stencil with boundary data folded into diag and rhs:
    #   sum_{fluid nb} u_nb + rhs = diag * u
    #Dirichlet face: ghost = 2g - u  ->  diag += 2, rhs += 2g
    #Neumann face:   ghost = u       ->  no contribution

    directions = ('east', 'west', 'north', 'south')

    def __init__(self, domain, grid):
        self.grid = grid
        self.fluid = ~grid.obstacle_mask(domain)
        nx, ny = grid.shape
        faces = grid.face_labels(domain)

        padded = np.pad(self.fluid, 1, constant_values = False)
        self.neighbor = dict(
            east = padded[2:, 1:-1] & self.fluid,
            west = padded[:-2, 1:-1] & self.fluid,
            north = padded[1:-1, 2:] & self.fluid,
            south = padded[1:-1, :-2] & self.fluid,
        )

        self.dirichlet = {d : np.zeros(grid.shape, dtype = bool) for d in self.directions}
        self.face_value = {d : np.zeros(grid.shape) for d in self.directions}
        for direction, edge, index in [('east', 'right', (nx - 1, slice(None))), ('west', 'left', (0, slice(None))),
                ('north', 'top', (slice(None), ny - 1)), ('south', 'bottom', (slice(None), 0))]:
            labels = faces[edge]
            is_dirichlet = np.isin(labels, list(DIRICHLET_VALUES.keys()))
            values = np.array([DIRICHLET_VALUES.get(label, 0.0) for label in labels])
            self.dirichlet[direction][index] = is_dirichlet & self.fluid[index]
            self.face_value[direction][index] = values

        self.diag = sum(self.neighbor[d].astype(float) + 2 * self.dirichlet[d] for d in self.directions)
        self.rhs = sum(2 * self.face_value[d] * self.dirichlet[d] for d in self.directions)
        self.active = self.fluid & (self.diag > 0)

        parity = np.add.outer(np.arange(nx), np.arange(ny)) % 2
        self.colors = dict(red = self.active & (parity == 0), black = self.active & (parity == 1))

    def shifted(self, u):
        padded = np.pad(u, 1)
        return dict(east = padded[2:, 1:-1], west = padded[:-2, 1:-1],
            north = padded[1:-1, 2:], south = padded[1:-1, :-2])

    def neighbor_sum(self, u):
        values = self.shifted(u)
        total = self.rhs.copy()
        for d in self.directions:
            total += np.where(self.neighbor[d], values[d], 0.0)
        return total

    def residual(self, u):
        r = self.neighbor_sum(u) - self.diag * u
        return float(np.abs(r[self.active]).max()) if self.active.any() else 0.0


def laplace_residual(domain, grid, u):
    '''
Max-norm of the unscaled 5-point residual (h² times the discrete Laplacian)
of ``u`` under the domain's boundary conditions, computed from scratch.
    '''
    return _LaplaceStencil(domain, grid).residual(np.asarray(u, dtype = float))


class PotentialField:
    '''
Solved potential ``u`` and normalized external velocity ``w`` on a grid.
Arrays are read-only once built.
    '''
    def __init__(self, grid, u, w, fluid, residual = 0.0, iterations = 0):
        self.grid = grid
        self.u = np.array(u, dtype = float)
        self.w = np.array(w, dtype = float)
        self.fluid = np.array(fluid, dtype = bool)
        self.residual = residual
        self.iterations = iterations
        for array in (self.u, self.w, self.fluid):
            array.flags.writeable = False

    def velocity(self, i, j):
        return self.w[i, j].copy()

    def to_csv(self):
        X, Y = self.grid.centers()
        lines = ['i,j,x,y,u,wx,wy']
        for i in range(self.grid.nx):
            for j in range(self.grid.ny):
                lines.append(','.join([str(i), str(j)] + [repr(float(v)) for v in
                    (X[i,j], Y[i,j], self.u[i,j], self.w[i,j,0], self.w[i,j,1])]))
        return '\n'.join(lines) + '\n'

    def write_csv(self, path):
        with open(path, 'w') as f:
            f.write(self.to_csv())


def _gradient(stencil, u, grad_eps):
    h = stencil.grid.h
    values = stencil.shifted(u)
    components = []
    for forward, backward in [('east', 'west'), ('north', 'south')]:
        face_grads, neumann = [], np.zeros(u.shape, dtype = bool)
        for direction, sign in [(forward, 1.0), (backward, -1.0)]:
            interior = stencil.neighbor[direction]
            dirichlet = stencil.dirichlet[direction]
            grad = np.where(interior, sign * (values[direction] - u) / h, 0.0)
            grad = np.where(dirichlet, sign * (stencil.face_value[direction] - u) / (h / 2), grad)
            face_grads.append(grad)
            neumann |= ~(interior | dirichlet)
        #a no-flux face pins the normal component to zero
        components.append(np.where(neumann, 0.0, (face_grads[0] + face_grads[1]) / 2))

    grad = np.stack(components, axis = -1)
    norm = np.hypot(grad[...,0], grad[...,1])
    w = np.zeros_like(grad)
    moving = (norm >= grad_eps) & stencil.active
    w[moving] = grad[moving] / norm[moving][:, np.newaxis]
    return w


def solve_potential(domain, grid, tol = None, max_iters = None, omega = None, sweep_order = ('red', 'black'),
        log = None):
    '''
**solve_potential** (domain, grid, tol = 1e-10, max_iters = 200000, omega = 1.7)

Red-black Gauss-Seidel with successive over-relaxation for Laplace's equation.

Params:
    domain (Domain):
        must carry at least one target segment
    grid (GridSpec):
        must resolve each obstacle side with at least two cells
    tol (float):
        stop once the max-norm residual falls to or below this value
    omega (float):
        relaxation factor in (0, 2)
    sweep_order (tuple):
        color order within one iteration

Returns:
    PotentialField

Raises:
    InvalidDomain if there is no target segment, NonConvergence if ``max_iters`` is exhausted.
    '''
    tol = float(_config.get('field', 'tol')) if tol is None else tol
    max_iters = int(_config.get('field', 'max_iters')) if max_iters is None else max_iters
    omega = float(_config.get('field', 'omega')) if omega is None else omega
    grad_eps = float(_config.get('field', 'grad_eps'))
    log = Log(verbose = False) if log is None else log

    assert(0 < omega < 2), 'SOR relaxation factor must lie in (0, 2)'
    assert(sorted(sweep_order) == ['black', 'red']), 'Sweep order must list red and black once'
    if not domain.has_target():
        raise InvalidDomain('The potential needs at least one target boundary segment')
    for obstacle in domain.obstacles:
        assert(obstacle.width >= 2 * grid.h * (1 - 1e-9) and obstacle.height >= 2 * grid.h * (1 - 1e-9)), \
            'Grid with h = {} does not resolve obstacle {}'.format(grid.h, str(obstacle))

    stencil = _LaplaceStencil(domain, grid)
    u = np.where(stencil.active, 0.5, 0.0)

    residual = stencil.residual(u)
    iterations = 0
    with log.section('Solving potential on {} x {} grid:'.format(grid.nx, grid.ny)):
        while residual > tol:
            if iterations >= max_iters:
                raise NonConvergence(residual, iterations)
            for color in sweep_order:
                mask = stencil.colors[color]
                update = stencil.neighbor_sum(u)[mask] / stencil.diag[mask]
                u[mask] = (1 - omega) * u[mask] + omega * update
            iterations += 1
            if iterations % 10 == 0 or iterations == max_iters:
                residual = stencil.residual(u)
        log.append('Converged to residual {:.2e} in {} iterations'.format(residual, iterations))

    #rounding can leave values a hair outside the data range
    u = np.clip(u, 0.0, 1.0)
    w = _gradient(stencil, u, grad_eps)
    return PotentialField(grid, u, w, stencil.fluid, residual = stencil.residual(u), iterations = iterations)


def external_velocity(field, cell):
    i, j = cell
    return field.velocity(i, j)
