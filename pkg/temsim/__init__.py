'''
***************************************************
temsim: time-evolving measures of crowds and swarms
***************************************************

temsim simulates groups of intelligent particles, walkers or animals that choose
their own velocity, at two scales. A macroscopic density on a regular grid and a
microscopic set of agents are both pushed forward in time by the same velocity:
an external field toward a target plus an intelligent term made of topological
cohesion and metric repulsion, each sensed in a sector oriented along the motion.

Every experiment ships as a built-in scenario that runs from the command line
or from Python:

.. code:: python

    from temsim import load, MacroSimulation

    scenario = load('crowd_expansion', seed = 1)
    sim = MacroSimulation(scenario.domain, scenario.grid, scenario.populations, scenario.schedule.dt)
    for _ in range(100):
        sim.advance()

.. contents:: Interfaces

'''

from .core.geometry import Rectangle, BoundarySegment, Domain, GridSpec, Sector
from .core.field import solve_potential, PotentialField
from .core.kernel import SensingConfig, intelligent_velocity_micro, intelligent_velocity_macro
from .core.macro_engine import GridMeasure, Population, InflowProfile, MacroSimulation
from .core.micro_engine import AgentSet, MicroSimulation, step_agents, enforce_separation
from .scenarios import build, load, list_scenarios
from ._version import __version__
