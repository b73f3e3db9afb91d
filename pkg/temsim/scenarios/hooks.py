'''
Metric hooks evaluated by the runner every ``[metrics] every`` steps. Each
hook takes the running simulation and its scenario and returns
``(metric_name, value)`` rows. Per-population values are suffixed with the
population name when a scenario holds more than one population.
'''

import numpy as np
from temsim.core import metrics
from temsim.core.geometry import Rectangle


def _named(name, pop, populations):
    return name if len(populations) == 1 else '{}.{}'.format(name, pop.name)


def total_mass(sim, scenario):
    return [(_named('total_mass', pop, sim.populations), pop.measure.total_mass()) for pop in sim.populations]


def ledger_balance(sim, scenario):
    return [('ledger_balance', sim.balance_error())]


def absorbed_fraction(sim, scenario):
    rows = []
    for pop in sim.populations:
        ledger = sim.ledgers[pop.name]
        supplied = ledger.initial + ledger.injected
        rows.append((_named('absorbed_fraction', pop, sim.populations), ledger.absorbed / supplied if supplied > 0 else 0.0))
    return rows


def lane_alternation(sim, scenario):
    assert(len(sim.populations) >= 2), 'Lane alternation needs two populations'
    _, count = metrics.lane_profile(sim.populations[0].measure, sim.populations[1].measure,
        columns = scenario.metric_options.get('lane_columns'))
    return [('lane_alternation', count)]


def density_components(sim, scenario):
    return [(_named('density_components', pop, sim.populations), metrics.density_components(pop.measure))
        for pop in sim.populations]


def region_density(sim, scenario):
    region = scenario.metric_options.get('region')
    assert(not region is None and len(region) == 4), 'region_density needs [metrics] region = x0 y0 x1 y1'
    region = Rectangle(*region)
    return [(_named('region_density', pop, sim.populations), metrics.region_density(pop.measure, region))
        for pop in sim.populations]


def mean_speed(sim, scenario):
    return [(_named('mean_speed', pop, sim.populations), metrics.mean_speed(pop.measure, sim.speeds[pop.name]))
        for pop in sim.populations]


def crystal_score(sim, scenario):
    try:
        fraction, cv = metrics.crystal_score(sim.agents)
    except metrics.DegenerateHull:
        fraction, cv = np.nan, np.nan
    return [('crystal_fraction', fraction), ('nn_distance_cv', cv)]


def collinearity(sim, scenario):
    ratio, bearing = metrics.collinearity(sim.agents)
    axis = sim.agents.axes[0]
    deviation = metrics.axis_deviation(bearing, np.degrees(np.arctan2(axis[1], axis[0])))
    return [('collinearity', ratio), ('line_bearing', bearing), ('axis_deviation', deviation)]


def min_distance(sim, scenario):
    return [('min_distance', sim.agents.min_distance())]


def angle_histogram(sim, scenario):
    options = scenario.metric_options
    axis = sim.agents.axes[0]
    return metrics.angle_distribution(sim.agents, k_neighbors = options.get('k_neighbors'),
        bin_width = options.get('bin_width'), axis = axis)


def angle_distribution(sim, scenario):
    histogram = angle_histogram(sim, scenario)
    return [('angle_pairs', histogram.total), ('hexagonal_alignment', histogram.fraction_near(np.arange(0, 360, 60), 10))]


HOOKS = {
    'total_mass' : total_mass,
    'ledger_balance' : ledger_balance,
    'absorbed_fraction' : absorbed_fraction,
    'lane_alternation' : lane_alternation,
    'density_components' : density_components,
    'region_density' : region_density,
    'mean_speed' : mean_speed,
    'crystal_score' : crystal_score,
    'collinearity' : collinearity,
    'min_distance' : min_distance,
    'angle_distribution' : angle_distribution,
}


def evaluate(sim, scenario):
    rows = []
    for name in scenario.metrics:
        rows.extend(HOOKS[name](sim, scenario))
    return rows
