import unittest
import os
import io
import tempfile
from temsim.core.utils import ResultsTable, Log, LoadingBar
from temsim.core import io as temsim_io
from temsim.core.io import RunManifest, FrameArchive
from temsim.core.macro_engine import GridMeasure
from temsim.core.micro_engine import AgentSet
from temsim.core.geometry import GridSpec
import numpy as np


class TestResultsTable(unittest.TestCase):

    def setUp(self):
        self.table = ResultsTable(['step', 'metric', 'value'])
        self.table.add_row([0, 'total_mass', 1.0])
        self.table.add_row([1, 'total_mass', 0.75])
        self.table.add_row([1, 'ledger_balance', 1e-17])

    def test_columns(self):
        self.assertEqual(len(self.table), 3)
        self.assertEqual(self.table.get_column('step'), [0, 1, 1])
        with self.assertRaises(IndexError):
            self.table.get_column('seed')

    def test_row_length(self):
        with self.assertRaises(AssertionError):
            self.table.add_row([2, 'total_mass'])

    def test_filter(self):
        subset = self.table.filter_rows(lambda name: name == 'total_mass', 'metric')
        self.assertEqual(subset.get_column('value'), [1.0, 0.75])

    def test_csv_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'metrics.csv')
            temsim_io.write_text(path, self.table.to_csv())
            table = ResultsTable.read_csv(path, types = [int, str, float])
        self.assertEqual(table.headers, self.table.headers)
        self.assertEqual(table.rows, self.table.rows)

    def test_floats_keep_precision(self):
        table = ResultsTable.fromdict(value = [0.1 + 0.2])
        self.assertEqual(table.to_csv(), 'value\n{}\n'.format(repr(0.1 + 0.2)))


class TestLog(unittest.TestCase):

    def test_sections_indent(self):
        target = io.StringIO()
        log = Log(target = target)
        with log.section('Run:'):
            log.append('step 1')
        log.append('done')
        self.assertEqual(target.getvalue(), 'Run:\n\tstep 1\ndone\n')

    def test_verbosity_depth(self):
        target = io.StringIO()
        log = Log(target = target, verbose = 1)
        with log.section('Run:'):
            log.append('hidden')
        self.assertEqual(target.getvalue(), 'Run:\n')

    def test_silent(self):
        target = io.StringIO()
        log = Log(target = target, verbose = False)
        log.append('hidden')
        self.assertEqual(target.getvalue(), '')

    def test_loading_bar(self):
        bar = LoadingBar('Progress', 4, length = 4, cold_start = True)
        self.assertEqual(str(bar), 'Progress: [>   ]')
        self.assertEqual(str(bar), 'Progress: [=>  ]')
        for _ in range(3):
            last = str(bar)
        self.assertTrue(bar.is_finished())
        self.assertEqual(last, 'Progress: [====]\n')


class TestFrames(unittest.TestCase):

    def test_macro_frame(self):
        spec = GridSpec(2, 3, 0.5)
        rho = np.arange(6, dtype = float).reshape(2, 3)
        text = temsim_io.format_macro_frame([GridMeasure(spec, rho), GridMeasure(spec, 2 * rho)])
        lines = text.strip().split('\n')
        self.assertEqual(lines[0], 'i,j,x,y,rho,rho2')
        self.assertEqual(lines[1], '0,0,0.25,0.25,0.0,0.0')
        self.assertEqual(len(lines), 7)

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, temsim_io.frame_filename(12))
            temsim_io.write_text(path, text)
            columns = temsim_io.read_macro_frame(path, spec)
        self.assertTrue(np.array_equal(columns['rho'], rho))
        self.assertTrue(np.array_equal(columns['rho2'], 2 * rho))

    def test_macro_frame_speeds(self):
        spec = GridSpec(2, 2, 1.0)
        text = temsim_io.format_macro_frame([GridMeasure.zeros(spec)], speeds = [np.ones(spec.shape)])
        self.assertEqual(text.split('\n')[0], 'i,j,x,y,rho,speed')

    def test_micro_frame(self):
        agents = AgentSet([(0.5, 1.0), (2.0, -1.5)])
        text = temsim_io.format_micro_frame(agents)
        self.assertEqual(text, 'agent_id,x,y\n0,0.5,1.0\n1,2.0,-1.5\n')
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'frame.csv')
            temsim_io.write_text(path, text)
            self.assertTrue(np.array_equal(temsim_io.read_micro_frame(path), agents.positions))

    def test_frame_filename(self):
        self.assertEqual(temsim_io.frame_filename(42), 'frame_000042.csv')


class TestManifest(unittest.TestCase):

    def test_write_read(self):
        manifest = RunManifest('bottleneck', 3, dict(dt = 0.001, h = np.float64(0.03125)), ['grid.h=0.03125'])
        manifest.add_frame(0, 0.0, 'frames/frame_000000.csv', ledger = dict(crowd = dict(mass = 1.0)))
        manifest.add_frame(10, 0.01, 'frames/frame_000010.csv')
        manifest.status = 'completed'
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'manifest.json')
            manifest.write(path)
            restored = RunManifest.read(path)
        self.assertEqual(restored.to_dict(), dict(manifest.to_dict(), parameters = dict(dt = 0.001, h = 0.03125)))
        self.assertEqual(restored.mass_ledger, [dict(step = 0, crowd = dict(mass = 1.0))])

    def test_error(self):
        manifest = RunManifest('crossing_lanes', 0, {})
        manifest.set_error(3, ValueError('too fast'))
        self.assertEqual(manifest.status, 'failed')
        self.assertEqual(manifest.error, dict(code = 3, type = 'ValueError', message = 'too fast'))


class TestFrameArchive(unittest.TestCase):

    def test_frames(self):
        with tempfile.TemporaryDirectory() as tmp:
            archive = FrameArchive(os.path.join(tmp, 'frames.h5'))
            self.assertEqual(archive.steps(), [])
            archive.add_frame(5, 0.5, np.ones((3, 2)))
            archive.add_frame(0, 0.0, np.zeros((3, 2)), population = 'crowd')
            archive.add_frame(5, 0.5, 2 * np.ones((3, 2)))
            self.assertEqual(archive.steps(), [0, 5])
            data, attributes = archive.read_frame(5)
            self.assertTrue(np.all(data == 2))
            self.assertAlmostEqual(attributes['time'], 0.5)
            self.assertEqual(archive.read_frame(0)[1]['population'], 'crowd')


if __name__ == '__main__':
    unittest.main()
