"""Multiple-instance learning with sparse attention pooling.

The heavy lifting lives in the `_minnsa` extension module; this package
re-exports its public surface.
"""

try:
    from ._minnsa import *  # noqa: F401,F403
    from ._minnsa import __version__  # noqa: F401
except ImportError:  # pragma: no cover - in-tree builds put _minnsa on sys.path
    from _minnsa import *  # noqa: F401,F403
    from _minnsa import __version__  # noqa: F401
