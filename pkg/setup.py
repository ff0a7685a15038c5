import os
from setuptools import setup, find_packages


def get_readme():
    try:
        return open(os.path.join(os.path.dirname(__file__), 'README.md')).read()
    except IOError:
        return ''

setup(
    name='infolqg',
    version='1.0.0',
    packages=find_packages(exclude=['tests']),
    install_requires=[
        'numpy>=1.22',
        'scipy>=1.8',
        'pycryptodome>=3.19.1',
    ],
    package_data={
        'infolqg': ['data/*.json'],
    },
    entry_points={
        'console_scripts': ['infolqg = infolqg.cli:run'],
    },

    description=('Joint sensor and controller synthesis for finite-horizon LQG '
        'problems with an information cost on the measurements.'),
    long_description=get_readme(),
    long_description_content_type='text/markdown',
    license='MIT',
    keywords=['control', 'lqg', 'kalman', 'rate-distortion', 'sensor design'],
    classifiers=[
        'Development Status :: 4 - Beta',
        'License :: OSI Approved :: MIT License',
        'Intended Audience :: Science/Research',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Mathematics',
        ],
)
