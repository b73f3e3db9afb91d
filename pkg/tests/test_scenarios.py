import unittest
import os
import tempfile
from temsim import scenarios
from temsim.scenarios import builders
from temsim.core.macro_engine import CflViolation
from temsim.core import metrics
import numpy as np

#coarse grid and short schedule so that potential solves stay quick
COARSE = ['grid.h=0.03125', 'schedule.n_steps=5']

MINIMAL_MACRO = '''
[scenario]
name = room
scale = macro
max_speed = 2.0

[domain]
x0 = 0.0
y0 = 0.0
x1 = 1.0
y1 = 1.0

[segment.1]
name = exit
edge = right
start = 0.0
end = 1.0
label = target

[grid]
h = 0.125

[schedule]
dt = 0.05
n_steps = 10

[population.1]
name = crowd
external = potential
R_r = 0.2
R_c_max = 0.2
F_r = -1.0
initial = block
initial_rho = 1.0
initial_params = 0.1 0.1 0.4 0.4
'''

def write_scenario(directory, text, name = 'scenario.ini'):
    path = os.path.join(directory, name)
    with open(path, 'w') as f:
        f.write(text)
    return path


class TestParsing(unittest.TestCase):

    def test_angles(self):
        self.assertAlmostEqual(builders.parse_angle('pi'), np.pi)
        self.assertAlmostEqual(builders.parse_angle('2*pi'), 2 * np.pi)
        self.assertAlmostEqual(builders.parse_angle('2pi'), 2 * np.pi)
        self.assertAlmostEqual(builders.parse_angle('pi/4'), np.pi / 4)
        self.assertAlmostEqual(builders.parse_angle('0.5pi'), np.pi / 2)
        self.assertAlmostEqual(builders.parse_angle('1.25'), 1.25)

    def test_bad_angle(self):
        with self.assertRaises(ValueError):
            builders.parse_angle('tau')

    def test_numbered_sections(self):
        config = builders._new_parser()
        for section in ('population.10', 'population.2', 'population.1', 'metrics'):
            config.add_section(section)
        self.assertEqual(builders.numbered_sections(config, 'population'), ['population.1', 'population.2', 'population.10'])


class TestBuiltins(unittest.TestCase):

    def test_list(self):
        names = scenarios.list_scenarios()
        for name in ('crossing_lanes', 'crowd_expansion', 'cohesion_merge', 'bottleneck', 'globular_metric',
                'crystal_topological', 'micro_expansion', 'line_formation'):
            self.assertTrue(name in names)

    def test_every_builtin_validates(self):
        for name in scenarios.list_scenarios():
            config = builders.read_config(name)
            self.assertEqual(config.get('scenario', 'name'), name)

    def test_crossing_lanes(self):
        scenario = scenarios.build('crossing_lanes')
        self.assertTrue(scenario.is_macro)
        cfg = scenario.populations[0].cfg
        self.assertAlmostEqual(cfg.alpha_r, np.pi)
        self.assertEqual((cfg.R_r, cfg.F_r, cfg.F_c), (0.1, -1.0, 0.0))
        eastbound, westbound = scenario.populations
        self.assertEqual(eastbound.repulsion_source, 'westbound')
        self.assertEqual(westbound.repulsion_source, 'eastbound')
        self.assertTrue(np.array_equal(eastbound.w, [1, 0]))
        self.assertTrue(np.array_equal(westbound.w, [-1, 0]))
        self.assertEqual(len(eastbound.inflows), 1)
        self.assertEqual(scenario.metric_options['lane_columns'], (32, 96))

    def test_crystal_topological(self):
        scenario = scenarios.build('crystal_topological')
        self.assertFalse(scenario.is_macro)
        self.assertEqual(scenario.agents.N, 100)
        cfg = scenario.cfg
        self.assertAlmostEqual(cfg.alpha_c, 2 * np.pi)
        self.assertAlmostEqual(cfg.alpha_r, 2 * np.pi)
        self.assertEqual(cfg.p, 7)
        self.assertEqual(cfg.F_c, -cfg.F_r)

    def test_globular_differs_only_in_p(self):
        crystal = scenarios.build('crystal_topological', seed = 4)
        globular = scenarios.build('globular_metric', seed = 4)
        self.assertEqual(globular.cfg.p, 100)
        self.assertEqual(globular.cfg.replace(p = 7), crystal.cfg)
        self.assertTrue(np.array_equal(globular.agents.positions, crystal.agents.positions))
        self.assertTrue(np.array_equal(globular.w, crystal.w))

    def test_line_formation(self):
        cfg = scenarios.build('line_formation').cfg
        self.assertAlmostEqual(cfg.alpha_c, np.pi)
        self.assertAlmostEqual(cfg.alpha_r, np.pi / 4)
        self.assertEqual(cfg.p, 7)
        self.assertTrue(cfg.F_c > abs(cfg.F_r))

    def test_micro_expansion(self):
        scenario = scenarios.build('micro_expansion')
        self.assertEqual(scenario.cfg.F_c, 0)
        self.assertEqual(scenario.cfg.F_r, -0.05)
        self.assertAlmostEqual(scenario.cfg.alpha_r, np.pi)

    def test_cohesion_merge_capacity(self):
        scenario = scenarios.build('cohesion_merge')
        pop = scenario.populations[0]
        self.assertAlmostEqual(pop.cfg.p, 2 / 3 * pop.measure.total_mass())
        self.assertAlmostEqual(pop.cfg.F_c / abs(pop.cfg.F_r), 100)
        self.assertAlmostEqual(pop.cfg.alpha_c, 2 * np.pi)

    def test_merge_control_geometry(self):
        scenario = scenarios.build('cohesion_merge_metric_small')
        pop = scenario.populations[0]
        self.assertEqual(metrics.density_components(pop.measure), 3)
        centers = np.reshape(builders.parse_floats(scenario.config.get('population.1', 'initial_params')), (-1, 3))[:, :2]
        self.assertTrue(np.hypot(*(centers[1] - centers[0])) < pop.cfg.R_c_max)
        self.assertTrue(np.hypot(*(centers[2] - centers[1])) > pop.cfg.R_c_max)
        for name in ('cohesion_merge', 'cohesion_merge_metric_large'):
            other = scenarios.build(name).populations[0].measure
            self.assertTrue(np.array_equal(other.rho, pop.measure.rho))

    def test_bottleneck_region_starts_sparse(self):
        scenario = scenarios.load('bottleneck', overrides = COARSE)
        density = scenario.populations[0].measure
        region = builders.Rectangle(*scenario.metric_options['region'])
        self.assertTrue(metrics.region_density(density, region) < 0.1 * density.rho.max())

    def test_bottleneck(self):
        scenario = scenarios.load('bottleneck', overrides = COARSE)
        self.assertEqual(len(scenario.domain.obstacles), 2)
        self.assertEqual(scenario.populations[0].cfg.F_r, -10)
        self.assertTrue(scenario.populations[0].absorbing)
        self.assertTrue(scenario.speed_map)
        self.assertFalse(scenario.field is None)

    def test_crowd_expansion(self):
        scenario = scenarios.load('crowd_expansion', overrides = COARSE)
        pop = scenario.populations[0]
        self.assertAlmostEqual(pop.measure.rho.max(), 3.0)
        self.assertTrue(pop.absorbing)
        self.assertTrue(pop.field is scenario.field)

    def test_unknown_name(self):
        with self.assertRaises(scenarios.UnknownScenario):
            scenarios.build('stampede')

    def test_path_is_not_a_name(self):
        with self.assertRaises(scenarios.UnknownScenario):
            scenarios.build(builders.builtin_path('crossing_lanes'))


class TestDeterminism(unittest.TestCase):

    def test_same_seed(self):
        a = scenarios.build('crystal_topological', seed = 9)
        b = scenarios.build('crystal_topological', seed = 9)
        self.assertTrue(np.array_equal(a.agents.positions, b.agents.positions))

    def test_different_seed(self):
        a = scenarios.build('crystal_topological', seed = 1)
        b = scenarios.build('crystal_topological', seed = 2)
        self.assertFalse(np.array_equal(a.agents.positions, b.agents.positions))

    def test_bumps_and_modulation(self):
        a = scenarios.load('bottleneck', seed = 5, overrides = COARSE).populations[0].measure.rho
        b = scenarios.load('bottleneck', seed = 5, overrides = COARSE).populations[0].measure.rho
        self.assertTrue(np.array_equal(a, b))
        phases = [scenarios.build('crossing_lanes', seed = seed).populations[0].inflows[0].modulation_phase for seed in (1, 1, 2)]
        self.assertEqual(phases[0], phases[1])
        self.assertNotEqual(phases[0], phases[2])


class TestOverrides(unittest.TestCase):

    def test_numbered_section(self):
        scenario = scenarios.load('crossing_lanes', overrides = ['population.1.F_r=-2'])
        self.assertEqual(scenario.populations[0].cfg.F_r, -2)
        self.assertEqual(scenario.populations[1].cfg.F_r, -1)
        self.assertEqual(scenario.config.get('population.1', 'F_r'), '-2')

    def test_applied_in_order(self):
        scenario = scenarios.load('crystal_topological', overrides = ['schedule.n_steps=10', 'schedule.n_steps=20'])
        self.assertEqual(scenario.schedule.n_steps, 20)

    def test_micro_p_all_agents(self):
        scenario = scenarios.load('crystal_topological', overrides = ['population.1.p=N', 'initial.n_agents=30'])
        self.assertEqual(scenario.cfg.p, 30)
        self.assertEqual(scenario.agents.N, 30)

    def test_unknown_option(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('crossing_lanes', overrides = ['schedule.timestep=0.01'])

    def test_case_sensitive(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('crossing_lanes', overrides = ['population.1.f_r=-2'])

    def test_unknown_section(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('crossing_lanes', overrides = ['population.7.F_r=-2'])

    def test_malformed(self):
        for override in ('schedule.dt', 'dt=0.01'):
            with self.assertRaises(scenarios.ScenarioConfigError):
                scenarios.load('crossing_lanes', overrides = [override])

    def test_bad_value(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('crossing_lanes', overrides = ['schedule.n_steps=many'])


class TestValidation(unittest.TestCase):

    def test_macro_cfl(self):
        with self.assertRaises(CflViolation) as context:
            scenarios.load('crossing_lanes', overrides = ['schedule.dt=0.04'])
        self.assertAlmostEqual(context.exception.admissible_dt, 4 * 0.0078125 / 4)
        with self.assertRaises(CflViolation) as context:
            scenarios.load('crossing_lanes', overrides = ['schedule.dt=0.01', 'schedule.max_substeps=1'])
        self.assertAlmostEqual(context.exception.admissible_dt, 0.0078125 / 4)

    def test_substeps_widen_admissible_dt(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_scenario(tmp, MINIMAL_MACRO)
            with self.assertRaises(CflViolation):
                scenarios.load(path, overrides = ['schedule.dt=0.2'])
            scenario = scenarios.load(path, overrides = ['schedule.dt=0.2', 'schedule.max_substeps=4'])
        self.assertEqual(scenario.schedule.max_substeps, 4)
        self.assertEqual(scenario.parameters()['schedule']['max_substeps'], 4)

    def test_substeps_default(self):
        with tempfile.TemporaryDirectory() as tmp:
            scenario = scenarios.load(write_scenario(tmp, MINIMAL_MACRO))
        self.assertEqual(scenario.schedule.max_substeps, 1)
        self.assertTrue(scenario.schedule.equilibrium_tol is None)

    def test_bad_substeps(self):
        with self.assertRaises(AssertionError):
            scenarios.load('crystal_topological', overrides = ['schedule.max_substeps=0'])
        with self.assertRaises(AssertionError):
            scenarios.load('crystal_topological', overrides = ['schedule.equilibrium_tol=-1'])

    def test_builtin_defaults_admissible(self):
        for name in scenarios.list_scenarios():
            config = builders.read_config(name)
            if config.get('scenario', 'scale') == 'macro':
                length = config.getfloat('grid', 'h')
            else:
                length = config.getfloat('population.1', 'body_size')
            reach = length * config.getint('schedule', 'max_substeps', fallback = 1)
            self.assertTrue(config.getfloat('schedule', 'dt') * config.getfloat('scenario', 'max_speed') <= reach * (1 + 1e-12), name)

    def test_micro_cfl(self):
        with self.assertRaises(CflViolation):
            scenarios.load('crystal_topological', overrides = ['schedule.dt=0.02'])

    def test_unknown_metric(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('crossing_lanes', overrides = ['metrics.names=total_mass, crystal_score'])

    def test_inflow_on_wall(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('crossing_lanes', overrides = ['segment.1.label=wall'])

    def test_unknown_repulsion_source(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('crossing_lanes', overrides = ['population.1.repulsion_source=northbound'])

    def test_bad_scale(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('crossing_lanes', overrides = ['scenario.scale=meso'])

    def test_invalid_domain(self):
        with self.assertRaises(scenarios.ScenarioConfigError):
            scenarios.load('bottleneck', overrides = COARSE + ['obstacle.2.y0=0.4'])

    def test_custom_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            scenario = scenarios.load(write_scenario(tmp, MINIMAL_MACRO))
        self.assertEqual(scenario.name, 'room')
        self.assertEqual(scenario.grid.shape, (8, 8))
        self.assertAlmostEqual(scenario.populations[0].measure.total_mass(), 4 * scenario.grid.cell_area)
        self.assertEqual(scenario.metrics, [])

    def test_unknown_section_in_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_scenario(tmp, MINIMAL_MACRO + '\n[weather]\nrain = yes\n')
            with self.assertRaises(scenarios.ScenarioConfigError):
                builders.read_config(path)

    def test_missing_section(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_scenario(tmp, MINIMAL_MACRO.replace('[schedule]\ndt = 0.05\nn_steps = 10\n', ''))
            with self.assertRaises(scenarios.ScenarioConfigError):
                builders.read_config(path)

    def test_two_micro_populations(self):
        config = builders.read_config('crystal_topological')
        config.add_section('population.2')
        config.set('population.2', 'R_r', '0.2')
        with self.assertRaises(scenarios.ScenarioConfigError):
            builders.build_scenario(config)


class TestDump(unittest.TestCase):

    def test_round_trip(self):
        original = builders.read_config('cohesion_merge')
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'copy.ini')
            builders.dump(original, path)
            copy = builders.read_config(path)
        self.assertEqual(builders.config_to_dict(copy), builders.config_to_dict(original))

    def test_dump_keeps_overrides(self):
        config = builders.apply_overrides(builders.read_config('crossing_lanes'), ['population.2.F_r=-3'])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'copy.ini')
            builders.dump(config, path)
            scenario = scenarios.load(path)
        self.assertEqual(scenario.populations[1].cfg.F_r, -3)

    def test_parameters_record_resolved_values(self):
        params = scenarios.build('cohesion_merge').parameters()
        self.assertEqual(params['scale'], 'macro')
        self.assertEqual(params['h'], 0.03125)
        self.assertTrue(np.isfinite(params['populations']['walkers']['cfg']['p']))
        self.assertEqual(params['config']['population.1']['F_c'], '100.0')


if __name__ == '__main__':
    unittest.main()
