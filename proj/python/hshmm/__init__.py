"""Hierarchical subspace HMM toolkit for acoustic unit discovery."""

from hshmm._hshmm import *  # noqa: F401,F403
from hshmm._hshmm import __all__  # noqa: F401
