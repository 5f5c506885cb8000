#!/usr/bin/env python3
"""
Setup script for SuspicionToolbox.
"""

import os
from setuptools import setup, find_packages

with open(os.path.join('SuspicionToolbox', '__init__.py'), 'r') as f:
    for line in f:
        if line.startswith('__version__'):
            version = line.split('=')[1].strip().strip("'\"")
            break
with open('README.md', 'r', encoding='utf-8') as f:
    long_description = f.read()

setup(
    name="SuspicionToolbox",
    version=version,
    description="Turn detected suspicious actions into continuous, per-frame suspicion scores.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=['SuspicionToolbox', 'SuspicionToolbox.*']),
    package_data={'SuspicionToolbox': ['data/*.json']},
    classifiers=[
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
        "Programming Language :: Python :: 3.14",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.26",
        "packaging>=25.0",
        "tqdm>=4.67.1"
    ],
    extras_require={
        'test': ['pytest>=8.3.5', 'pytest-cov>=6.1.1'],
    },
    entry_points={
        'console_scripts': [
            'suspiciontoolbox=SuspicionToolbox.__main__:main',
        ],
    },
    include_package_data=True,
)
