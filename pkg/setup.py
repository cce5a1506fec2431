#!/usr/bin/env python
import os
from setuptools import setup, find_packages

__version__ = "0.3.1"


def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()


setup(
    name="py-kdlab",
    version=__version__,
    description="Annealed and adversarial knowledge distillation with a shared adversarial test bench",
    long_description=read("README.rst"),
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={"kdlab": ["fixtures/*.tsv", "fixtures/*.txt", "fixtures/*.json"]},
    zip_safe=False,
    include_package_data=True,
    license="MIT",
    platforms="any",
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.6",
        "scikit-learn>=1.0",
        "pandas>=1.3",
        "tabulate>=0.8",
        "tqdm>=4.50",
    ],
    entry_points={
        "console_scripts": ["kdlab = kdlab.cli:main"],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ]
)
