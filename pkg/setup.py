#!/usr/bin/env python3
"""
Installer script for rsslab.
"""

from setuptools import setup

import re

VERSIONFILE = "_version.py"
verstrline = open(VERSIONFILE, "rt").read()
VSRE = r"^__version__ = ['\"]([^'\"]*)['\"]"
mo = re.search(VSRE, verstrline, re.M)
if mo:
    verstr = mo.group(1)
else:
    raise RuntimeError("Unable to find version string in %s." % (VERSIONFILE,))

setup(
    name="rsslab",
    description="Ranked set sampling estimators of a population mean under measurement error and non-response.",
    version=verstr,
    py_modules=["_version", "rsslab"],
    packages=["models", "services"],
    python_requires=">=3.10",
    install_requires=[
        "numpy>=2.0",
        "scipy>=1.13",
        "pandas>=2.2",
        "tabulate>=0.9",
        "pydantic>=2.7",
    ],
    entry_points={"console_scripts": ["rsslab = rsslab:main"]},
)
