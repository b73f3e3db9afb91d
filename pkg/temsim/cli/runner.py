'''
Run and batch drivers behind the ``temsim`` command.

A run writes, under its output directory::

    manifest.json
    metrics.csv
    angle_histogram.csv      (micro scenarios recording angle_distribution)
    frames/frame_000000.csv
    frames.h5                (with the archive option)

A batch runs one seed per ``seed_NNNN`` subdirectory and folds the per-seed
metrics and angle histograms, in seed order, into ``aggregate_metrics.csv``
and ``aggregate_angle_histogram.csv``.
'''

import configparser
import os
from multiprocessing import Pool
import numpy as np

from temsim.core.utils import Log, LoadingBar, ResultsTable
from temsim.core.io import RunManifest, FrameArchive, frame_filename, format_macro_frame, format_micro_frame, write_text
from temsim.core.field import NonConvergence
from temsim.core.macro_engine import MacroSimulation, CflViolation, UnknownSegment
from temsim.core.micro_engine import MicroSimulation, SeparationFailure
from temsim.core.metrics import AngleHistogram
from temsim.scenarios import builders, hooks

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CFL = 3
EXIT_NONCONVERGENCE = 4
EXIT_SEPARATION = 5

MANIFEST_FILE = 'manifest.json'
METRICS_FILE = 'metrics.csv'
HISTOGRAM_FILE = 'angle_histogram.csv'
ARCHIVE_FILE = 'frames.h5'
FRAMES_DIR = 'frames'
AGGREGATE_METRICS_FILE = 'aggregate_metrics.csv'
AGGREGATE_HISTOGRAM_FILE = 'aggregate_angle_histogram.csv'

CONFIG_ERRORS = (builders.ScenarioConfigError, builders.UnknownScenario, UnknownSegment, configparser.Error)

def exit_code(err, building = False):
    if isinstance(err, CflViolation):
        return EXIT_CFL
    if isinstance(err, NonConvergence):
        return EXIT_NONCONVERGENCE
    if isinstance(err, SeparationFailure):
        return EXIT_SEPARATION
    if isinstance(err, CONFIG_ERRORS) or (building and isinstance(err, (AssertionError, ValueError))):
        return EXIT_CONFIG
    return EXIT_FAILURE


def parse_seeds(text):
    '''
Seeds ``A..B`` (inclusive) or a single seed ``A``.

Raises:
    ScenarioConfigError for malformed or empty ranges
    '''
    try:
        if '..' in text:
            start, end = [int(field) for field in text.split('..')]
        else:
            start = end = int(text)
    except ValueError:
        raise builders.ScenarioConfigError('Seeds must be given as A..B, got {}'.format(text))
    if end < start:
        raise builders.ScenarioConfigError('Seed range {} is empty'.format(text))
    return list(range(start, end + 1))


def seed_dirname(seed):
    return 'seed_{:04d}'.format(seed)


def histogram_table(histogram):
    edges = histogram.bin_edges
    return ResultsTable.fromdict(bin_start = list(edges[:-1]), bin_end = list(edges[1:]), count = list(histogram.counts))


def read_histogram(path):
    table = ResultsTable.read_csv(path, types = [float, float, int])
    starts = table.get_column('bin_start')
    bin_width = starts[1] - starts[0] if len(starts) > 1 else 360.0
    return AngleHistogram(bin_width, table.get_column('count'))


class _Recorder:
    '''Collects frames and metric rows of one run as the time loop advances.'''

    def __init__(self, out_dir, scenario, manifest, stride, archive = None):
        self.out_dir = out_dir
        self.scenario = scenario
        self.manifest = manifest
        self.stride = stride
        self.every = scenario.metric_options.get('every', 1)
        self.archive = archive
        self.table = ResultsTable(['step', 'metric', 'value'])
        self.last_frame = None
        self.last_metrics = None

    def frame(self, sim):
        step = sim.step_index
        if step == self.last_frame:
            return
        filename = os.path.join(FRAMES_DIR, frame_filename(step))
        if self.scenario.is_macro:
            measures = sim.measures()
            speeds = [sim.speeds[pop.name] for pop in sim.populations] if self.scenario.speed_map else None
            write_text(os.path.join(self.out_dir, filename), format_macro_frame(measures, speeds))
            data, ledger = np.stack([measure.rho for measure in measures]), sim.ledger()
        else:
            write_text(os.path.join(self.out_dir, filename), format_micro_frame(sim.agents))
            data, ledger = sim.agents.positions, None
        if not self.archive is None:
            self.archive.add_frame(step, sim.t, data)
        self.manifest.add_frame(step, sim.t, filename, ledger)
        self.last_frame = step

    def metrics(self, sim):
        step = sim.step_index
        if step == self.last_metrics:
            return
        for name, value in hooks.evaluate(sim, self.scenario):
            self.table.add_row([step, name, value])
        self.last_metrics = step

    def record(self, sim, final = False):
        if final or sim.step_index % self.stride == 0:
            self.frame(sim)
        if final or sim.step_index % self.every == 0:
            self.metrics(sim)

    def close(self, sim):
        write_text(os.path.join(self.out_dir, METRICS_FILE), self.table.to_csv())
        self.manifest.metrics_file = METRICS_FILE
        if not self.scenario.is_macro and 'angle_distribution' in self.scenario.metrics:
            histogram = hooks.angle_histogram(sim, self.scenario)
            write_text(os.path.join(self.out_dir, HISTOGRAM_FILE), histogram_table(histogram).to_csv())


def _simulation(scenario, log):
    schedule = scenario.schedule
    if scenario.is_macro:
        return MacroSimulation(scenario.domain, scenario.grid, scenario.populations, schedule.dt, log = log,
            max_substeps = schedule.max_substeps)
    return MicroSimulation(scenario.agents, scenario.cfg, scenario.w, schedule.dt, bounds = scenario.domain.bounds,
        log = log, max_substeps = schedule.max_substeps, equilibrium_tol = schedule.equilibrium_tol,
        equilibrium_window = schedule.equilibrium_window)


def simulate(scenario, out_dir, manifest, stride = None, archive = False, log = None):
    '''
**simulate** (scenario, out_dir, manifest, stride = None, archive = False, log = None)

Advance a built scenario through its schedule, writing frames every ``stride``
steps (the scenario's own stride when omitted) and metrics every
``[metrics] every`` steps. The initial and final states are always recorded.
Micro runs with ``stop_at_equilibrium`` end at the step equilibrium is reached.
    '''
    log = Log(verbose = False) if log is None else log
    schedule = scenario.schedule
    stride = schedule.stride if stride is None else stride
    assert(stride >= 1), 'Frame stride must be at least 1'

    os.makedirs(os.path.join(out_dir, FRAMES_DIR), exist_ok = True)
    recorder = _Recorder(out_dir, scenario, manifest, stride,
        archive = FrameArchive(os.path.join(out_dir, ARCHIVE_FILE)) if archive else None)

    sim = _simulation(scenario, log)
    recorder.record(sim)
    failed = True
    try:
        with log.section('Simulating {} steps:'.format(schedule.n_steps)):
            bar = LoadingBar('Progress', schedule.n_steps, cold_start = True)
            for _ in range(schedule.n_steps):
                sim.advance()
                log.append(bar, update_line = True)
                recorder.record(sim)
                if not scenario.is_macro and schedule.stop_at_equilibrium and sim.monitor.reached:
                    log.append('')
                    log.append('Stopping at equilibrium, step {}'.format(sim.step_index))
                    break
            if sim.split_steps > 0:
                log.append('')
                log.append('{} of {} steps were split into substeps'.format(sim.split_steps, sim.step_index))
        failed = False
    finally:
        #the last state reached is kept even when a step fails
        try:
            recorder.record(sim, final = True)
            recorder.close(sim)
        except Exception:
            if not failed:
                raise
        if not scenario.is_macro:
            manifest.equilibrium_step = sim.monitor.reached_at
    return sim


def run(config, out_dir, seed = 0, overrides = (), stride = None, archive = False, log = None):
    '''
**run** (config, out_dir, seed = 0, overrides = (), stride = None, archive = False, log = None)

Build and execute one scenario.

Params:
    config (str):
        built-in scenario name or path to a scenario INI file
    out_dir (str):
        output directory, created if missing
    seed (int)
    overrides (list of str):
        ``section.option=value`` strings
    stride (int):
        frame stride overriding the scenario's
    archive (bool):
        also write every frame to ``frames.h5``

Returns:
    exit status: 0 on success, 2 config error, 3 CFL violation,
    4 potential solver non-convergence, 5 separation failure, 1 otherwise
    '''
    log = Log(verbose = False) if log is None else log
    os.makedirs(out_dir, exist_ok = True)
    manifest = RunManifest(config, seed, {}, overrides)

    building = True
    try:
        scenario = builders.load(config, seed = seed, overrides = overrides, log = log)
        manifest.scenario = scenario.name
        manifest.parameters = scenario.parameters()
        building = False
        simulate(scenario, out_dir, manifest, stride = stride, archive = archive, log = log)
        manifest.status = 'completed'
        code = EXIT_OK
    except Exception as err:
        code = exit_code(err, building = building)
        manifest.set_error(code, err)
        log.append('ERROR: ' + str(err))
    finally:
        manifest.write(os.path.join(out_dir, MANIFEST_FILE))
    return code


def _run_seed(job):
    config, out_dir, seed, overrides, stride, archive, verbose = job
    return seed, run(config, os.path.join(out_dir, seed_dirname(seed)), seed = seed, overrides = overrides,
        stride = stride, archive = archive, log = Log(verbose = verbose))


def aggregate(out_dir, seeds):
    '''
Fold per-seed outputs in seed order. Seeds without a metrics file (runs that
failed before simulating) are skipped.
    '''
    combined = ResultsTable(['seed', 'step', 'metric', 'value'])
    histogram = None
    for seed in seeds:
        seed_dir = os.path.join(out_dir, seed_dirname(seed))
        metrics_path = os.path.join(seed_dir, METRICS_FILE)
        if os.path.isfile(metrics_path):
            for step, metric, value in ResultsTable.read_csv(metrics_path, types = [int, str, float]).rows:
                combined.add_row([seed, step, metric, value])
        histogram_path = os.path.join(seed_dir, HISTOGRAM_FILE)
        if os.path.isfile(histogram_path):
            seed_histogram = read_histogram(histogram_path)
            histogram = seed_histogram if histogram is None else histogram + seed_histogram

    write_text(os.path.join(out_dir, AGGREGATE_METRICS_FILE), combined.to_csv())
    if not histogram is None:
        write_text(os.path.join(out_dir, AGGREGATE_HISTOGRAM_FILE), histogram_table(histogram).to_csv())
    return combined, histogram


def batch(config, out_dir, seeds, overrides = (), stride = None, workers = 1, archive = False, log = None):
    '''
**batch** (config, out_dir, seeds, overrides = (), stride = None, workers = 1, archive = False, log = None)

One run per seed, in parallel over ``workers`` processes when more than one,
followed by the aggregation fold.

Params:
    seeds (str or list of int):
        ``A..B`` range or explicit seed list

Returns:
    exit status of the first failing seed in seed order, or 0
    '''
    log = Log(verbose = False) if log is None else log
    try:
        seeds = parse_seeds(seeds) if isinstance(seeds, str) else list(seeds)
        if len(seeds) == 0:
            raise builders.ScenarioConfigError('No seeds to run')
        assert(workers >= 1), 'Worker count must be at least 1'
    except (builders.ScenarioConfigError, AssertionError) as err:
        log.append('ERROR: ' + str(err))
        return EXIT_CONFIG

    os.makedirs(out_dir, exist_ok = True)
    with log.section('Running {} seeds of {}:'.format(len(seeds), config)):
        if workers > 1:
            #worker logs would interleave on stderr
            jobs = [(config, out_dir, seed, list(overrides), stride, archive, False) for seed in seeds]
            with Pool(min(workers, len(seeds))) as pool:
                results = dict(pool.map(_run_seed, jobs))
        else:
            results = {}
            for seed in seeds:
                with log.section('Seed {}:'.format(seed)):
                    results[seed] = run(config, os.path.join(out_dir, seed_dirname(seed)), seed = seed,
                        overrides = overrides, stride = stride, archive = archive, log = log)

        for seed in seeds:
            if results[seed] != EXIT_OK:
                log.append('Seed {} failed with exit status {}'.format(seed, results[seed]))

        aggregate(out_dir, seeds)

    failures = [results[seed] for seed in seeds if results[seed] != EXIT_OK]
    return failures[0] if len(failures) > 0 else EXIT_OK
