from sys import stderr
from contextlib import contextmanager
import configparser
import os
import numpy as np

CONFIG_PATH = os.path.join(os.path.dirname(__file__), 'config.ini')

_config = configparser.ConfigParser()
_config.read(CONFIG_PATH)

class LoadingBar:

    def __init__(self, label, increments, length = 25, cold_start = False):
        self.increments = increments
        self.length = length
        self.label = label
        self.progress = 0
        self.cold_start = cold_start

    def __str__(self):
        if self.cold_start:
            self.cold_start = False
        else:
            self.increment()
        completed_steps = int(self.progress / max(self.increments, 1) * self.length)
        if completed_steps >= self.length:
            return '{}: [{}]'.format(self.label, "="*completed_steps) + '\n' if self.is_finished() else ''
        else:
            return '{}: [{}>{}]'.format(self.label, "="*completed_steps, " "*(self.length - completed_steps - 1))

    def increment(self):
        if not self.is_finished():
            self.progress += 1

    def is_finished(self):
        return self.progress >= self.increments


class Log:

    def __init__(self, target = stderr, verbose = True):
        self.target = target
        self.indents = 0
        assert( isinstance(verbose, (int, bool))), 'Verbosity must be set to integer or boolean value.'
        self.verbose = verbose

    @contextmanager
    def section(self, header):
        try:
            self.start_section(header)
            yield self
        finally:
            self.end_section()

    def start_section(self, section_header):
        self.append(section_header)
        self.indents += 1

    def end_section(self):
        self.indents -= 1

    def is_active(self):
        return (isinstance(self.verbose, bool) and self.verbose == True) or \
            (not isinstance(self.verbose, bool) and self.indents < self.verbose)

    def append(self, text, end = '\n', update_line = False):
        linestart = '\r' if update_line else ''
        if self.is_active():
            print(linestart + '\t'*self.indents + str(text),
                end = '' if update_line else end,
                file = self.target)


class ResultsTable:
    '''
Column-indexed table of simulation observables. Runs append one row per
(step, metric) sample; batch aggregation reads columns back and folds them.

Example ::

    >>> table = ResultsTable(['step', 'metric', 'value'])
    >>> table.add_row([0, 'mass', 1.0])
    >>> print(table.to_csv())

    '''
    @classmethod
    def fromdict(cls, **kwargs):
        table = cls(list(kwargs.keys()))
        for row in zip(*kwargs.values()):
            table.add_row(list(row))
        return table

    @classmethod
    def read_csv(cls, path, types = None):
        with open(path, 'r') as f:
            lines = [line.rstrip('\n') for line in f if len(line.strip()) > 0]

        assert(len(lines) > 0), 'Empty table file: {}'.format(path)
        table = cls(lines[0].split(','))
        for line in lines[1:]:
            fields = line.split(',')
            assert(len(fields) == len(table.headers)), 'Malformed row in {}: {}'.format(path, line)
            if not types is None:
                fields = [_type(field) for _type, field in zip(types, fields)]
            table.add_row(fields)
        return table

    def __init__(self, headers):
        self.headers = list(headers)
        self.rows = []

    def add_row(self, row):
        assert(len(row) == len(self.headers)), 'Row must have {} fields'.format(len(self.headers))
        self.rows.append(list(row))

    def __len__(self):
        return len(self.rows)

    def get_colnum(self, colname):
        try:
            return self.headers.index(colname)
        except ValueError:
            raise IndexError('Column {} not in results table'.format(str(colname)))

    def get_column(self, colname):
        colnum = self.get_colnum(colname)
        return [row[colnum] for row in self.rows]

    def filter_rows(self, filter_func, colname):
        colnum = self.get_colnum(colname)
        subset = ResultsTable(self.headers)
        for row in self.rows:
            if filter_func(row[colnum]):
                subset.add_row(row)
        return subset

    def to_dict(self):
        return {header : self.get_column(header) for header in self.headers}

    @staticmethod
    def _format(value):
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        return str(value)

    def to_csv(self):
        return '\n'.join([
            ','.join([self._format(value) for value in line])
            for line in [self.headers, *self.rows]
        ]) + '\n'
