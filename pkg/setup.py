#!/usr/bin/env python
from setuptools import setup
from setuptools import find_packages

setup(
    name="vdreg",
    version="0.1.0",
    description="Bayesian partition regression for covariate vectors of varying dimension",
    author="Stitch",
    classifiers=["Programming Language :: Python :: 3 :: Only"],
    python_requires='>=3.8',
    install_requires=[
        "numpy>=1.22",
        # to_csv lineterminator
        "pandas>=1.5",
        # geninvgauss, cumulative_trapezoid and trapezoid
        "scipy>=1.6",
        "singer-python==6.0.1",
        "simplejson",
    ],
    extras_require={
        'dev': [
            'pylint==3.0.3',
            'ipdb',
            'pytest',
        ]
    },
    entry_points="""
    [console_scripts]
    vdreg=vdreg:main
    """,
    packages=find_packages(exclude=["tests", "tests.*"]),
)
