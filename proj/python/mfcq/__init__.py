"""Continuous-time q-learning for mean-field control with common noise."""

from ._mfcq import *  # noqa: F401,F403
from ._mfcq import __doc__  # noqa: F401
