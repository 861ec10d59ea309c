"""Setup shim for mogeo; metadata lives in pyproject.toml."""

from setuptools import setup

setup()
