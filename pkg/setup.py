
from setuptools import setup, find_packages

setup(
    name = 'temsim',
    description = "temsim: time-evolving measures of crowds and swarms of intelligent particles, at macroscopic and microscopic scale",
    version = '1.0.0',
    packages = find_packages(exclude = ['tests']),
    zip_safe = False,
    scripts = ['bin/temsim'],
    install_requires = [
        'numpy>=1.19',
        'scipy>=1.5',
        'h5py>=2.10.0',
        'scikit-learn>=0.23.2',
    ],
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    include_package_data=True,
    package_data = {
        'temsim.core' : ['config.ini'],
        'temsim.scenarios' : ['builtin/*.ini'],
    },
    python_requires='>=3.7,<4',
    long_description_content_type='text/markdown',
    long_description = '''
# About

temsim simulates groups of intelligent particles, pedestrians or animals that decide their own velocity.
The same model runs at two scales: a density pushed forward on a regular grid, and a set of agents moved by
explicit Euler steps. Velocities combine an external field toward a target, computed from a harmonic potential,
with an intelligent term of topological cohesion and metric repulsion sensed in sectors oriented along the motion.

Built-in scenarios cover crossing flows and lane formation, crowd expansion, cluster merging under cohesion,
obstruction in front of a bottleneck, and the crystal and line structures agents settle into.

# Installation

    $ python3 -m venv .venvs/temsim_env
    $ source .venvs/temsim_env/bin/activate
    (temsim_env) $ pip install .

### Dependencies

* numpy
* scipy
* h5py
* scikit-learn

    ''',
)
