"""
cirlab - off-policy actor-critic with a constrained initial representation
"""

from importlib.metadata import PackageNotFoundError, version


try:
    __version__ = version("cirlab")
except PackageNotFoundError:
    __version__ = "0.0.0"
