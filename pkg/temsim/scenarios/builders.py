'''
Scenario construction from INI documents.

Every built-in experiment is an annotated INI file under ``builtin/``. A
scenario is loaded from a built-in name or a file path, overridden with
``section.option=value`` strings, and built into engine objects with a seeded
random generator that drives every stochastic choice (lattice jitter, bump
placement, inflow modulation phase).
'''

import configparser
import glob
import os
import re
import numpy as np

from temsim.core.utils import _config as _engine_config, Log
from temsim.core.geometry import Rectangle, BoundarySegment, Domain, GridSpec, FULL_TURN, InvalidDomain
from temsim.core.field import solve_potential
from temsim.core.kernel import SensingConfig
from temsim.core.macro_engine import GridMeasure, Population, InflowProfile, CflViolation, UnknownSegment, CFL_RTOL
from temsim.core.micro_engine import AgentSet, lattice_positions

BUILTIN_PATH = os.path.join(os.path.dirname(__file__), 'builtin')

class UnknownScenario(KeyError):
    pass

class ScenarioConfigError(ValueError):
    pass


MACRO_METRICS = ('total_mass', 'ledger_balance', 'absorbed_fraction', 'lane_alternation', 'density_components',
    'region_density', 'mean_speed')
MICRO_METRICS = ('crystal_score', 'collinearity', 'min_distance', 'angle_distribution')

SENSING_KEYS = ('alpha_c', 'alpha_r', 'R_r', 'R_c_max', 'p', 'F_c', 'F_r', 'body_size')

SCHEMA = {
    'scenario' : ('name', 'scale', 'description', 'max_speed', 'speed_map'),
    'domain' : ('x0', 'y0', 'x1', 'y1', 'default_label'),
    'obstacle' : ('x0', 'y0', 'x1', 'y1'),
    'segment' : ('name', 'edge', 'start', 'end', 'label'),
    'grid' : ('h',),
    'schedule' : ('dt', 'n_steps', 'stride', 'stop_at_equilibrium', 'max_substeps', 'equilibrium_tol', 'equilibrium_window'),
    'population' : ('name', 'external', 'w_x', 'w_y', 'axis_x', 'axis_y', 'repulsion_source', 'absorbing',
        'p_mass_fraction', 'initial', 'initial_rho', 'initial_params') + SENSING_KEYS,
    'initial' : ('n_agents', 'layout', 'spacing', 'jitter', 'center_x', 'center_y'),
    'inflow' : ('population', 'segment', 'rho_in', 'period', 'duty', 'phase', 'modulation', 'waves'),
    'metrics' : ('names', 'every', 'lane_columns', 'region', 'k_neighbors', 'bin_width'),
}

_ANGLE = re.compile(r'^\s*([0-9.]*)\s*\*?\s*pi\s*(?:/\s*([0-9.]+))?\s*$')

def parse_angle(value):
    '''Angles accept plain floats or multiples of pi: ``pi``, ``2pi``, ``2*pi``, ``pi/4``'''
    match = _ANGLE.match(str(value))
    if match is None:
        return float(value)
    factor = float(match.group(1)) if match.group(1) else 1.0
    divisor = float(match.group(2)) if match.group(2) else 1.0
    return factor * np.pi / divisor


def parse_floats(value):
    return [float(field) for field in str(value).split()]


def section_kind(section):
    return section.split('.')[0]


def numbered_sections(config, kind):
    sections = [s for s in config.sections() if section_kind(s) == kind]
    return sorted(sections, key = lambda s : int(s.split('.')[1]) if '.' in s else 0)


def list_scenarios():
    return sorted(os.path.splitext(os.path.basename(path))[0] for path in glob.glob(os.path.join(BUILTIN_PATH, '*.ini')))


def builtin_path(name):
    path = os.path.join(BUILTIN_PATH, name + '.ini')
    if not os.path.isfile(path):
        raise UnknownScenario('No built-in scenario named {}. Choose from: {}'.format(name, ', '.join(list_scenarios())))
    return path


def validate_config(config):
    for section in config.sections():
        kind = section_kind(section)
        if not kind in SCHEMA:
            raise ScenarioConfigError('Unknown section [{}]'.format(section))
        for option in config.options(section):
            if not option in SCHEMA[kind]:
                raise ScenarioConfigError('Unknown option {} in section [{}]'.format(option, section))
    for required in ('scenario', 'domain', 'schedule', 'population.1'):
        if not config.has_section(required):
            raise ScenarioConfigError('Missing section [{}]'.format(required))


def _new_parser():
    config = configparser.ConfigParser(interpolation = None)
    #keep option case: R_r and R_c_max are case sensitive
    config.optionxform = str
    return config


def read_config(source):
    '''
Parse a scenario from a built-in name or an INI file path.

Raises:
    UnknownScenario, ScenarioConfigError
    '''
    path = source if os.path.isfile(source) else builtin_path(source)
    config = _new_parser()
    try:
        with open(path, 'r') as f:
            config.read_file(f)
    except configparser.Error as err:
        raise ScenarioConfigError('Malformed scenario file {}: {}'.format(path, str(err)))
    validate_config(config)
    return config


def apply_overrides(config, overrides):
    '''
Apply ``section.option=value`` overrides in order. The last dot separates
section from option, so ``population.1.F_r=-2`` sets ``F_r`` in ``[population.1]``.
    '''
    for override in overrides:
        if not '=' in override:
            raise ScenarioConfigError('Override {} is not of the form section.option=value'.format(override))
        key, value = override.split('=', 1)
        if not '.' in key:
            raise ScenarioConfigError('Override key {} names no section'.format(key))
        section, option = key.strip().rsplit('.', 1)
        if not config.has_section(section):
            raise ScenarioConfigError('Override targets unknown section [{}]'.format(section))
        if not option in SCHEMA[section_kind(section)]:
            raise ScenarioConfigError('Override targets unknown option {} in [{}]'.format(option, section))
        config.set(section, option, value.strip())
    return config


def config_to_string(config):
    lines = []
    for section in config.sections():
        lines.append('[{}]'.format(section))
        lines.extend('{} = {}'.format(option, value) for option, value in config.items(section))
        lines.append('')
    return '\n'.join(lines)


def dump(config, path):
    with open(path, 'w') as f:
        f.write(config_to_string(config))


def config_to_dict(config):
    return {section : dict(config.items(section)) for section in config.sections()}


class Schedule:
    '''
Time stepping of a scenario. ``max_substeps`` caps how many CFL-admissible
pieces one step may be split into; 1 makes any inadmissible step an error.
``equilibrium_tol`` and ``equilibrium_window`` override the engine defaults of
the micro equilibrium check.
    '''
    def __init__(self, dt, n_steps, stride = 1, stop_at_equilibrium = False, max_substeps = 1,
            equilibrium_tol = None, equilibrium_window = None):
        assert(dt > 0), 'Time step must be positive'
        assert(n_steps >= 0), 'Step count must be non-negative'
        assert(stride >= 1), 'Frame stride must be at least 1'
        assert(max_substeps >= 1), 'At least one substep per step'
        assert(equilibrium_tol is None or equilibrium_tol > 0), 'Equilibrium tolerance must be positive'
        assert(equilibrium_window is None or equilibrium_window >= 1), 'Equilibrium window must hold at least one step'
        self.dt, self.n_steps, self.stride = float(dt), int(n_steps), int(stride)
        self.stop_at_equilibrium = stop_at_equilibrium
        self.max_substeps = int(max_substeps)
        self.equilibrium_tol, self.equilibrium_window = equilibrium_tol, equilibrium_window

    def to_dict(self):
        return dict(dt = self.dt, n_steps = self.n_steps, stride = self.stride, stop_at_equilibrium = self.stop_at_equilibrium,
            max_substeps = self.max_substeps, equilibrium_tol = self.equilibrium_tol, equilibrium_window = self.equilibrium_window)


class Scenario:
    '''
A fully resolved experiment: geometry, populations or agents with their
sensing parameters, time schedule and the metrics to record.

Macro scenarios carry ``grid`` and a list of ``populations``; micro scenarios
carry ``agents``, ``cfg`` and the external velocity ``w``.
    '''
    def __init__(self, name, scale, domain, schedule, metrics, config, seed, max_speed,
            grid = None, populations = None, field = None, agents = None, cfg = None, w = None,
            metric_options = None, speed_map = False):
        self.name = name
        self.scale = scale
        self.domain = domain
        self.schedule = schedule
        self.metrics = list(metrics)
        self.metric_options = dict() if metric_options is None else metric_options
        self.config = config
        self.seed = seed
        self.max_speed = max_speed
        self.grid = grid
        self.populations = populations
        self.field = field
        self.agents = agents
        self.cfg = cfg
        self.w = w
        self.speed_map = speed_map

    @property
    def is_macro(self):
        return self.scale == 'macro'

    def parameters(self):
        params = dict(scale = self.scale, max_speed = self.max_speed, schedule = self.schedule.to_dict(),
            config = config_to_dict(self.config))
        if self.is_macro:
            params['h'] = self.grid.h
            params['populations'] = {pop.name : dict(cfg = pop.cfg.to_dict(), repulsion_source = pop.repulsion_source,
                absorbing = pop.absorbing, initial_mass = pop.measure.total_mass()) for pop in self.populations}
        else:
            params['n_agents'] = self.agents.N
            params['cfg'] = self.cfg.to_dict()
            params['w'] = [float(v) for v in np.asarray(self.w)]
        return params


def _get(config, section, option, default = None, cast = float):
    if not config.has_option(section, option):
        if default is None:
            raise ScenarioConfigError('Missing option {} in [{}]'.format(option, section))
        return default
    value = config.get(section, option)
    try:
        return cast(value)
    except ValueError:
        raise ScenarioConfigError('Option {} in [{}] has invalid value {}'.format(option, section, value))


def _get_bool(config, section, option, default = False):
    if not config.has_option(section, option):
        return default
    try:
        return config.getboolean(section, option)
    except ValueError:
        raise ScenarioConfigError('Option {} in [{}] must be yes or no'.format(option, section))


def build_domain(config):
    bounds = Rectangle(*[_get(config, 'domain', key) for key in ('x0', 'y0', 'x1', 'y1')])
    obstacles = [Rectangle(*[_get(config, section, key) for key in ('x0', 'y0', 'x1', 'y1')])
        for section in numbered_sections(config, 'obstacle')]
    segments = [BoundarySegment(_get(config, s, 'name', cast = str), _get(config, s, 'edge', cast = str),
            _get(config, s, 'start'), _get(config, s, 'end'), _get(config, s, 'label', cast = str))
        for s in numbered_sections(config, 'segment')]
    return Domain(bounds, obstacles, segments, default_label = _get(config, 'domain', 'default_label', 'wall', str))


def build_sensing(config, section, p = None):
    values = dict(
        alpha_c = _get(config, section, 'alpha_c', FULL_TURN, parse_angle),
        alpha_r = _get(config, section, 'alpha_r', np.pi, parse_angle),
        R_r = _get(config, section, 'R_r'),
        R_c_max = _get(config, section, 'R_c_max'),
        p = _get(config, section, 'p', np.inf) if p is None else p,
        F_c = _get(config, section, 'F_c', 0.0),
        F_r = _get(config, section, 'F_r', 0.0),
        body_size = _get(config, section, 'body_size', 0.0),
    )
    return SensingConfig(**values)


def initial_density(config, section, grid, domain, rng):
    '''
Initial macro density of one population. ``initial`` selects the shape:

* ``empty``
* ``block``: ``initial_params = x0 y0 x1 y1``
* ``discs``: ``initial_params = cx cy r [cx cy r ...]``
* ``bumps``: ``initial_params = count x0 y0 x1 y1 width``, Gaussian bumps of peak ``initial_rho`` at random centers in the box
    '''
    shape = _get(config, section, 'initial', 'empty', str)
    rho0 = _get(config, section, 'initial_rho', 0.0)
    params = parse_floats(config.get(section, 'initial_params', fallback = ''))
    X, Y = grid.centers()
    rho = np.zeros(grid.shape)

    if shape == 'block':
        assert(len(params) == 4), 'Block initial condition needs x0 y0 x1 y1'
        rho[Rectangle(*params).contains_points(np.stack([X, Y], axis = -1))] = rho0
    elif shape == 'discs':
        assert(len(params) % 3 == 0 and len(params) > 0), 'Disc initial condition needs cx cy r triples'
        for cx, cy, r in np.reshape(params, (-1, 3)):
            rho[np.hypot(X - cx, Y - cy) <= r] = rho0
    elif shape == 'bumps':
        assert(len(params) == 6), 'Bump initial condition needs count x0 y0 x1 y1 width'
        count, x0, y0, x1, y1, width = params
        centers = np.stack([rng.uniform(x0, x1, int(count)), rng.uniform(y0, y1, int(count))], axis = -1)
        for cx, cy in centers:
            rho += rho0 * np.exp(-((X - cx)**2 + (Y - cy)**2) / (2 * width**2))
    elif shape != 'empty':
        raise ScenarioConfigError('Unknown initial shape {} in [{}]'.format(shape, section))

    rho[grid.obstacle_mask(domain)] = 0.0
    return rho


def _build_macro(config, domain, seed, rng, log):
    if not config.has_section('grid'):
        raise ScenarioConfigError('Macro scenarios need a [grid] section')
    grid = GridSpec.covering(domain.bounds, _get(config, 'grid', 'h'))
    obstacles = grid.obstacle_mask(domain)
    sections = numbered_sections(config, 'population')

    densities = [initial_density(config, section, grid, domain, rng) for section in sections]
    total_mass = float(sum(rho.sum() for rho in densities) * grid.cell_area)

    field = None
    if any(_get(config, s, 'external', 'fixed', str) == 'potential' for s in sections):
        with log.section('Building external velocity field:'):
            field = solve_potential(domain, grid, log = log)

    populations = []
    for section, rho in zip(sections, densities):
        fraction = _get(config, section, 'p_mass_fraction', -1.0)
        cfg = build_sensing(config, section, p = fraction * total_mass if fraction >= 0 else None)
        external = _get(config, section, 'external', 'fixed', str)
        if external == 'potential':
            kwargs = dict(field = field)
        elif external == 'fixed':
            kwargs = dict(w = (_get(config, section, 'w_x', 0.0), _get(config, section, 'w_y', 0.0)))
        else:
            raise ScenarioConfigError('External velocity of [{}] must be potential or fixed'.format(section))
        populations.append(Population(_get(config, section, 'name', section, str), GridMeasure(grid, rho, obstacles), cfg,
            repulsion_source = _get(config, section, 'repulsion_source', 'self', str),
            absorbing = _get_bool(config, section, 'absorbing'), **kwargs))

    by_name = {pop.name : pop for pop in populations}
    for pop in populations:
        if not pop.repulsion_source in ('self', 'other') and not pop.repulsion_source in by_name:
            raise ScenarioConfigError('Population {} senses unknown population {}'.format(pop.name, pop.repulsion_source))

    for section in numbered_sections(config, 'inflow'):
        target = _get(config, section, 'population', cast = str)
        if not target in by_name:
            raise ScenarioConfigError('Inflow [{}] feeds unknown population {}'.format(section, target))
        period = config.get(section, 'period', fallback = 'none').strip().lower()
        modulation = _get(config, section, 'modulation', 0.0)
        profile = InflowProfile(_get(config, section, 'segment', cast = str), _get(config, section, 'rho_in'),
            period = None if period in ('', 'none') else float(period),
            duty = _get(config, section, 'duty', 1.0), phase = _get(config, section, 'phase', 0.0),
            modulation = modulation, waves = _get(config, section, 'waves', 1.0),
            modulation_phase = rng.uniform(0, 2 * np.pi) if modulation > 0 else 0.0)
        try:
            by_name[target].inflows.append(profile.bind(domain, grid))
        except UnknownSegment as err:
            raise ScenarioConfigError('Inflow [{}]: {}'.format(section, err.args[0]))

    return dict(grid = grid, populations = populations, field = field)


def _build_micro(config, domain, seed, rng, log):
    if not config.has_section('initial'):
        raise ScenarioConfigError('Micro scenarios need an [initial] section')
    sections = numbered_sections(config, 'population')
    if len(sections) != 1:
        raise ScenarioConfigError('Micro scenarios hold exactly one population')
    section = sections[0]

    n_agents = _get(config, 'initial', 'n_agents', cast = int)
    layout = _get(config, 'initial', 'layout', 'jittered', str)
    if not layout in ('jittered', 'square'):
        raise ScenarioConfigError('Agent layout must be jittered or square')
    center = (_get(config, 'initial', 'center_x', (domain.bounds.x0 + domain.bounds.x1) / 2),
        _get(config, 'initial', 'center_y', (domain.bounds.y0 + domain.bounds.y1) / 2))
    positions = lattice_positions(n_agents, _get(config, 'initial', 'spacing'), center = center,
        jitter = _get(config, 'initial', 'jitter', 0.1) if layout == 'jittered' else 0.0, rng = rng)

    p = config.get(section, 'p', fallback = 'inf').strip()
    cfg = build_sensing(config, section, p = float(n_agents) if p.upper() == 'N' else None)
    axis = (_get(config, section, 'axis_x', 1.0), _get(config, section, 'axis_y', 0.0))
    w = np.array([_get(config, section, 'w_x', 0.0), _get(config, section, 'w_y', 0.0)])
    return dict(agents = AgentSet(positions, axis), cfg = cfg, w = w)


def build_scenario(config, seed = 0, log = None):
    '''
**build_scenario** (config, seed = 0, log = None)

Turn a parsed scenario document into engine objects.

Returns:
    Scenario

Raises:
    ScenarioConfigError on malformed content, CflViolation when ``max_substeps`` steps of ``dt``
    are not enough to stay admissible at the declared ``max_speed``
    '''
    log = Log(verbose = False) if log is None else log
    validate_config(config)
    rng = np.random.default_rng(seed)

    name = _get(config, 'scenario', 'name', cast = str)
    scale = _get(config, 'scenario', 'scale', cast = str)
    if not scale in ('macro', 'micro'):
        raise ScenarioConfigError('Scenario scale must be macro or micro, got {}'.format(scale))

    try:
        domain = build_domain(config)
    except InvalidDomain as err:
        raise ScenarioConfigError('Invalid domain: {}'.format(str(err)))

    schedule = Schedule(_get(config, 'schedule', 'dt'), _get(config, 'schedule', 'n_steps', cast = int),
        _get(config, 'schedule', 'stride', 1, int), _get_bool(config, 'schedule', 'stop_at_equilibrium'),
        max_substeps = _get(config, 'schedule', 'max_substeps', 1, int),
        equilibrium_tol = _get(config, 'schedule', 'equilibrium_tol') if config.has_option('schedule', 'equilibrium_tol') else None,
        equilibrium_window = _get(config, 'schedule', 'equilibrium_window', cast = int)
            if config.has_option('schedule', 'equilibrium_window') else None)
    max_speed = _get(config, 'scenario', 'max_speed')

    metrics = [m.strip() for m in config.get('metrics', 'names', fallback = '').split(',') if m.strip()]
    known = MACRO_METRICS if scale == 'macro' else MICRO_METRICS
    unknown = [m for m in metrics if not m in known]
    if len(unknown) > 0:
        raise ScenarioConfigError('Unknown {} metrics: {}'.format(scale, ', '.join(unknown)))
    metric_options = dict(
        every = _get(config, 'metrics', 'every', 1, int),
        lane_columns = tuple(int(v) for v in parse_floats(config.get('metrics', 'lane_columns', fallback = ''))) or None,
        region = tuple(parse_floats(config.get('metrics', 'region', fallback = ''))) or None,
        k_neighbors = _get(config, 'metrics', 'k_neighbors', int(_engine_config.get('metrics', 'k_neighbors')), int),
        bin_width = _get(config, 'metrics', 'bin_width', float(_engine_config.get('metrics', 'bin_width'))),
    )

    with log.section('Building scenario {} (seed {}):'.format(name, seed)):
        if scale == 'macro':
            parts = _build_macro(config, domain, seed, rng, log)
            length_scale, kind = parts['grid'].h, 'grid cell'
        else:
            parts = _build_micro(config, domain, seed, rng, log)
            length_scale, kind = parts['cfg'].body_size, 'body size'

        reach = length_scale * schedule.max_substeps
        if length_scale > 0 and schedule.dt * max_speed > reach * (1 + CFL_RTOL):
            raise CflViolation(max_speed, reach / max_speed, 0)
        log.append('dt = {} admissible for max speed {} at {} {} in up to {} substeps'.format(
            schedule.dt, max_speed, kind, length_scale, schedule.max_substeps))

    return Scenario(name, scale, domain, schedule, metrics, config, seed, max_speed,
        metric_options = metric_options, speed_map = _get_bool(config, 'scenario', 'speed_map'), **parts)


def load(source, seed = 0, overrides = (), log = None):
    '''
Read a built-in name or INI path, apply overrides, and build.
    '''
    config = apply_overrides(read_config(source), overrides)
    return build_scenario(config, seed = seed, log = log)


def build(name, seed = 0, log = None):
    if os.path.sep in name or name.endswith('.ini'):
        raise UnknownScenario('{} is a path, not a built-in scenario name'.format(name))
    return load(name, seed = seed, log = log)
