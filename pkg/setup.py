#!/usr/bin/env python3
"""
Setup script for gprf-lvm
Gaussian process random fields for latent-location GP models
"""

from setuptools import setup, find_packages
import os

PROJECT_DIR = "gprf-lvm"


# Read the README file
def read_readme():
    with open(os.path.join(PROJECT_DIR, "README.md"), "r", encoding="utf-8") as fh:
        return fh.read()


# Read requirements
def read_requirements():
    with open(os.path.join(PROJECT_DIR, "requirements.txt"), "r", encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip() and not line.startswith("#")]


def read_version():
    with open(os.path.join(PROJECT_DIR, "gprf", "__init__.py"), "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("__version__"):
                return line.split("=")[1].strip().strip("\"'")
    return "0.0.0"


setup(
    name="gprf-lvm",
    version=read_version(),
    description="Gaussian process random fields: scalable GP likelihoods for latent-location models",
    long_description=read_readme(),
    long_description_content_type="text/markdown",
    package_dir={"": PROJECT_DIR},
    packages=find_packages(PROJECT_DIR, include=["gprf", "gprf.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[r for r in read_requirements() if not r.startswith("pytest")],
    extras_require={"test": ["pytest>=7.0.0"]},
    entry_points={
        "console_scripts": [
            "gprf=gprf.cli:main",
        ],
    },
    include_package_data=True,
    zip_safe=False,
    keywords="gaussian process, GP-LVM, Markov random field, Bayesian committee machine, L-BFGS",
)
