import io
import os
from setuptools import setup

HERE = os.path.abspath(os.path.dirname(__file__))


def long_description(*names):
    '''Concatenated reStructuredText files next to this script.'''
    parts = []
    for name in names:
        with io.open(os.path.join(HERE, name), encoding='utf-8') as f:
            parts.append(f.read().strip())
    return '\n\n'.join(parts) + '\n'


setup(
    name='tmd-chaos',
    version='0.1.0.dev0',
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.20',
        'scipy>=1.6',
        'pyyaml>=5.1',
    ],
    long_description=long_description('README.rst', 'CHANGES.rst'),
    description='Exact diagonalization of the two-mode Dicke model: '
                'FOTOC growth, thermalization and mean-field stability.',
    packages=['tmd_chaos'],
    test_suite='test',
    include_package_data=True,
    entry_points={
        'console_scripts': [
            'tmd-chaos = tmd_chaos._cli:main',
        ],
    },
    classifiers=[
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'Operating System :: OS Independent',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Topic :: Scientific/Engineering :: Physics',
    ],
)
