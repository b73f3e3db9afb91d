'''
***********
temsim CLI
***********

Installing temsim adds the "temsim" command to your path. Its functionality is divided into subcommands:

* `temsim run`_ : one scenario, one seed
* `temsim batch`_ : one scenario over a range of seeds, with aggregated metrics
* `temsim dump`_ : write a built-in scenario to an editable INI file
* `temsim list`_ : the built-in scenarios

Scenario files are described in `the scenario format <../docs/scenario_format.md>`_.

'''
