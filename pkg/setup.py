#!/usr/bin/env python
# -*- coding: utf-8 -*-

import io
import os

from setuptools import find_packages, setup

# Package meta-data.
NAME = 'lsmcport'
DESCRIPTION = (
    'Least squares Monte Carlo solver and CLI for multiperiod portfolio '
    'allocation with trading costs'
)
AUTHOR = 'The lsmcport developers'

REQUIRED = [
    'numpy>=1.22',
    'scipy>=1.8',
    'scikit-learn>=1.0',
    'pandas>=1.4',
    'tomli>=1.1; python_version < "3.11"',
]

here = os.path.abspath(os.path.dirname(__file__))

# Import the README and use it as the long-description.
with io.open(os.path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = '\n' + f.read()

# Load the package's __version__.py module as a dictionary.
about = {}
with open(os.path.join(here, NAME, '__version__.py')) as f:
    exec(f.read(), about)


setup(
    name=NAME,
    version=about['__version__'],
    description=DESCRIPTION,
    long_description=long_description,
    long_description_content_type='text/markdown',
    author=AUTHOR,
    packages=find_packages(exclude=('tests', 'tests.*')),
    entry_points={
        'console_scripts': ['lsmcport=lsmcport.cli:main'],
    },
    install_requires=REQUIRED,
    python_requires='>=3.9',
    package_data={'lsmcport': ['data/*.json', 'data/*.toml']},
    include_package_data=True,
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Intended Audience :: Financial and Insurance Industry',
        'Operating System :: POSIX',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Programming Language :: Python :: Implementation :: CPython',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Office/Business :: Financial :: Investment',
    ],
)
