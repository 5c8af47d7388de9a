"""Adversarial generation and scenario-conditioned simulation of tabular
financial transitions.

The compiled extension carries the full pipeline; this package re-exports it
and works both from an installed wheel (extension inside the package) and
from a plain CMake build tree (extension on PYTHONPATH).
"""

try:
    from ._scengen import *  # noqa: F401,F403
    from ._scengen import __version__  # noqa: F401
except ImportError:
    from _scengen import *  # noqa: F401,F403
    from _scengen import __version__  # noqa: F401
