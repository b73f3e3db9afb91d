'''
Built-in experiments and the INI scenario format. See ``builders`` for
loading and ``hooks`` for the metrics a scenario can record.
'''

from .builders import build, load, list_scenarios, read_config, apply_overrides, build_scenario, dump, \
    Scenario, Schedule, UnknownScenario, ScenarioConfigError
