'''
Run artifacts: per-frame CSV snapshots, the JSON run manifest, and the
optional HDF5 frame archive.
'''

import json
import os
import h5py as h5
import numpy as np

COMPRESSION = 'gzip'

def _fmt(value):
    return repr(float(value))


def frame_filename(step):
    return 'frame_{:06d}.csv'.format(step)


def density_columns(n_populations, prefix = 'rho'):
    return [prefix if k == 0 else '{}{}'.format(prefix, k + 1) for k in range(n_populations)]


def format_macro_frame(measures, speeds = None):
    '''
CSV text of one macro snapshot, one row per cell in (i, j) order with header
``i,j,x,y,rho[,rho2...]`` and, when ``speeds`` is given, ``speed[,speed2...]``.
    '''
    spec = measures[0].spec
    X, Y = spec.centers()
    headers = ['i', 'j', 'x', 'y'] + density_columns(len(measures))
    columns = [measure.rho for measure in measures]
    if not speeds is None:
        headers += density_columns(len(speeds), prefix = 'speed')
        columns += list(speeds)

    lines = [','.join(headers)]
    for i in range(spec.nx):
        for j in range(spec.ny):
            lines.append(','.join([str(i), str(j), _fmt(X[i,j]), _fmt(Y[i,j])] + [_fmt(column[i,j]) for column in columns]))
    return '\n'.join(lines) + '\n'


def format_micro_frame(agents):
    lines = ['agent_id,x,y'] + ['{},{},{}'.format(k, _fmt(x), _fmt(y)) for k, (x, y) in enumerate(agents.positions)]
    return '\n'.join(lines) + '\n'


def write_text(path, text):
    with open(path, 'w') as f:
        f.write(text)


def read_macro_frame(path, spec):
    '''Densities (and speeds, if present) of a macro frame CSV as (nx, ny) arrays keyed by column name'''
    with open(path, 'r') as f:
        headers = f.readline().strip().split(',')
        data = np.loadtxt(f, delimiter = ',', ndmin = 2)
    i, j = data[:,0].astype(int), data[:,1].astype(int)
    result = {}
    for col, name in enumerate(headers[4:], start = 4):
        field = np.zeros(spec.shape)
        field[i, j] = data[:, col]
        result[name] = field
    return result


def read_micro_frame(path):
    with open(path, 'r') as f:
        f.readline()
        data = np.loadtxt(f, delimiter = ',', ndmin = 2)
    return data[:, 1:3]


class RunManifest:
    '''
Machine-readable record of one run: the scenario, seed and resolved
parameters, every written frame with its mass ledger, and the exit status.
    '''
    def __init__(self, scenario, seed, parameters, overrides = ()):
        self.scenario = scenario
        self.seed = seed
        self.parameters = parameters
        self.overrides = list(overrides)
        self.frames = []
        self.mass_ledger = []
        self.metrics_file = None
        self.status = 'running'
        self.error = None
        self.equilibrium_step = None

    def add_frame(self, step, time, filename, ledger = None):
        self.frames.append(dict(step = step, time = time, file = filename))
        if not ledger is None:
            self.mass_ledger.append(dict(step = step, **ledger))

    def set_error(self, code, err):
        self.status = 'failed'
        self.error = dict(code = code, type = type(err).__name__, message = str(err))

    def to_dict(self):
        return dict(scenario = self.scenario, seed = self.seed, status = self.status,
            parameters = self.parameters, overrides = self.overrides, frames = self.frames,
            mass_ledger = self.mass_ledger, metrics_file = self.metrics_file,
            equilibrium_step = self.equilibrium_step, error = self.error)

    def write(self, path):
        with open(path, 'w') as f:
            f.write(json.dumps(self.to_dict(), indent = 4, default = _json_default))

    @classmethod
    def read(cls, path):
        with open(path, 'r') as f:
            data = json.load(f)
        manifest = cls(data['scenario'], data['seed'], data['parameters'], data.get('overrides', ()))
        for key in ('frames', 'mass_ledger', 'metrics_file', 'status', 'error', 'equilibrium_step'):
            setattr(manifest, key, data.get(key))
        return manifest


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('Cannot serialize {}'.format(type(value).__name__))


class FrameArchive:
    '''
All frames of a run in one gzip-compressed HDF5 file, one dataset per frame
under ``frames/``, with ``step`` and ``time`` attributes.
    '''
    def __init__(self, path):
        self.path = path
        h5.File(self.path, 'w').close()

    def add_frame(self, step, time, data, **attributes):
        with h5.File(self.path, 'a') as archive:
            frame_path = 'frames/' + os.path.splitext(frame_filename(step))[0]
            if frame_path in archive:
                del archive[frame_path]
            dataset = archive.create_dataset(frame_path, data = np.asarray(data), compression = COMPRESSION)
            dataset.attrs['step'] = step
            dataset.attrs['time'] = time
            for key, value in attributes.items():
                dataset.attrs[key] = value

    def read_frame(self, step):
        with h5.File(self.path, 'r') as archive:
            dataset = archive['frames/' + os.path.splitext(frame_filename(step))[0]]
            return np.array(dataset), dict(dataset.attrs)

    def steps(self):
        with h5.File(self.path, 'r') as archive:
            if not 'frames' in archive:
                return []
            return sorted(int(archive['frames'][name].attrs['step']) for name in archive['frames'])
