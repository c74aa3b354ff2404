"""Numba acceleration toggle.

Hot kernels (Monte Carlo slots, queue simulation, line-process quadrature)
are compiled with numba when available.  Setting the environment variable
``GRIDAGG_NUMBA=0`` before import selects the pure-numpy fallback paths
instead, which is useful for debugging and for the kernel benchmark.
"""

import os


def _env_flag(name, default=True):
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = _env_flag("GRIDAGG_NUMBA", True)

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        """Decorator stand-in that leaves the function uncompiled."""
        if args and callable(args[0]) and len(args) == 1 and not kwargs:
            return args[0]

        def wrapper(func):
            return func

        return wrapper
