"""A setuptools based setup module.
See:
https://packaging.python.org/en/latest/distributing.html
https://github.com/pypa/sampleproject
"""

# Always prefer setuptools over distutils
from setuptools import setup
# To use a consistent encoding
from codecs import open
from os import path

here = path.abspath(path.dirname(__file__))

with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='pycarleman',

    # Versions should comply with PEP440.
    version='0.1.0',

    description="""
        Carleman estimate and inverse source lab

        Discrete Stokes/Oseen solver on staggered grids, singular Carleman
        weights and numerical checks of the estimates behind the stability
        of the inverse source problem.
    """,
    long_description=long_description,
    long_description_content_type='text/markdown',

    license='private',

    # See https://pypi.python.org/pypi?%3Aaction=list_classifiers
    classifiers=[
        'Development Status :: 3 - Alpha',

        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Mathematics',

        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
    ],

    keywords='carleman stokes oseen inverse-problems finite-differences',

    packages=['pycarleman'],

    # List run-time dependencies here.  These will be installed by pip when
    # your project is installed.
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.12',
        'sympy>=1.12',
        'matplotlib>=3.7',
    ],

    entry_points={
        'console_scripts': [
            'pycarleman=pycarleman.cli:main',
        ],
    },
)
