
from temsim.core.utils import Log
from temsim.scenarios import builders
from temsim.cli import runner
from temsim._version import __version__
import argparse
import os
import sys

#____COMMAND LINE INTERFACE________

def positive_int(arg):
    value = int(arg)
    if value < 1:
        raise argparse.ArgumentTypeError('ERROR: {} must be a positive integer'.format(str(arg)))
    return value

def confirm_config(arg):
    if os.path.isfile(arg) or arg in builders.list_scenarios():
        return arg
    else:
        raise argparse.ArgumentTypeError('ERROR: {} is neither a scenario file nor a built-in scenario. Choose from: {}'\
            .format(str(arg), ', '.join(builders.list_scenarios())))

def print_scenarios():
    for name in builders.list_scenarios():
        config = builders.read_config(name)
        print('{:<32}{:<8}{}'.format(name, config.get('scenario', 'scale'), config.get('scenario', 'description', fallback = '')))

def temsim_run(args):
    log = Log(target = sys.stderr, verbose = args.verbose)
    code = runner.run(args.config, args.out, seed = args.seed, overrides = args.overrides, stride = args.stride,
        archive = args.h5, log = log)
    print('{}: exit status {}, outputs in {}'.format(args.config, code, args.out), file = sys.stderr)
    return code

def temsim_batch(args):
    log = Log(target = sys.stderr, verbose = args.verbose)
    code = runner.batch(args.config, args.out, args.seeds, overrides = args.overrides, stride = args.stride,
        workers = args.workers, archive = args.h5, log = log)
    print('{}: batch exit status {}, outputs in {}'.format(args.config, code, args.out), file = sys.stderr)
    return code

def temsim_dump(args):
    builders.dump(builders.read_config(args.name), args.path)
    return runner.EXIT_OK

def temsim_list(args):
    print_scenarios()
    return runner.EXIT_OK

def build_common_args(parser):
    parser.add_argument('-c', '--config', required = True, type = confirm_config,
        help = 'Scenario INI file, or the name of a built-in scenario (see "temsim list").')
    parser.add_argument('-o', '--out', required = True, type = str, help = 'Output directory. Created if missing.')
    parser.add_argument('--set', dest = 'overrides', action = 'append', default = [], metavar = 'SECTION.OPTION=VALUE',
        help = 'Override one scenario option, e.g. --set population.1.F_r=-2. Repeatable.')
    parser.add_argument('--stride', type = positive_int, default = None,
        help = 'Write a frame every STRIDE steps. Defaults to the scenario\'s [schedule] stride.')
    parser.add_argument('--h5', action = 'store_true', default = False,
        help = 'Also store every frame in one gzip-compressed frames.h5 archive.')
    parser.add_argument('-v', '--verbose', type = int, default = 2)


class RstFormatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawTextHelpFormatter):
    pass

parser = argparse.ArgumentParser(
        formatter_class=RstFormatter,
        description =
"""
temsim: time-evolving measures for crowds and swarms of intelligent particles.
Macroscopic densities and microscopic agents driven by an external velocity field
plus anisotropic, topological cohesion and metric repulsion.
""")
parser.add_argument('--version', action = 'version', version = __version__)
parser.add_argument('--list-scenarios', action = 'store_true', default = False, help = 'List built-in scenarios and exit.')
subparsers = parser.add_subparsers(help = 'commands')

#__ run command __
run_parser = subparsers.add_parser('run', formatter_class=RstFormatter, description = '''
temsim run
----------

Run one scenario with one seed. Writes manifest.json, metrics.csv and one CSV
per written frame under frames/. The exit status is 0 on success, 2 for a
configuration error, 3 for a time step violating the CFL bound, 4 when the
potential solver does not converge and 5 when agent separation fails.

Example::

    $ temsim run --config crossing_lanes --out runs/lanes --seed 1 --set schedule.n_steps=500
''')
build_common_args(run_parser)
run_parser.add_argument('--seed', type = int, default = 0, help = 'Seed for every stochastic choice of the run.')
run_parser.set_defaults(func = temsim_run)

#__ batch command __
batch_parser = subparsers.add_parser('batch', formatter_class=RstFormatter, description = '''
temsim batch
------------

Run one scenario once per seed, each in its own seed_NNNN directory, then fold
metrics and angle histograms across seeds into aggregate_metrics.csv and
aggregate_angle_histogram.csv. Exits with the status of the first failing seed.

Example::

    $ temsim batch --config line_formation --out runs/lines --seeds 1..100 --workers 8
''')
build_common_args(batch_parser)
batch_parser.add_argument('--seeds', required = True, type = str, help = 'Inclusive seed range A..B.')
batch_parser.add_argument('--workers', type = positive_int, default = 1, help = 'Number of seeds run in parallel.')
batch_parser.set_defaults(func = temsim_batch)

#__ dump command __
dump_parser = subparsers.add_parser('dump', formatter_class=RstFormatter, description = '''
temsim dump
-----------

Write a built-in scenario to an INI file, as a starting point for a custom one.

Example::

    $ temsim dump bottleneck ./my_bottleneck.ini
''')
dump_parser.add_argument('name', type = str, choices = builders.list_scenarios(), help = 'Built-in scenario name.')
dump_parser.add_argument('path', type = str, help = 'Destination INI file.')
dump_parser.set_defaults(func = temsim_dump)

#__ list command __
list_parser = subparsers.add_parser('list', description = 'List built-in scenarios.')
list_parser.set_defaults(func = temsim_list)

def main(argv = None):
    #____ Execute commands ___
    args = parser.parse_args(argv)

    if args.list_scenarios:
        print_scenarios()
        sys.exit(runner.EXIT_OK)

    try:
        args.func #empty when the user types only "temsim": show help instead of failing
    except AttributeError:
        parser.print_help(file = sys.stderr)
        sys.exit(runner.EXIT_CONFIG)
    else:
        try:
            code = args.func(args)
        except (builders.ScenarioConfigError, builders.UnknownScenario, AssertionError, OSError) as err:
            print('ERROR: ' + str(err), file = sys.stderr)
            sys.exit(runner.EXIT_CONFIG)
        sys.exit(code)
