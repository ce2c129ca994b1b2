"""Selects the transportation kernel at import time.

The compiled ``_ot_core`` extension is used when it was built; otherwise, or
when ``MMFLOW_PURE_PYTHON=1`` is set, the pure-Python solver is used.
"""

import os

from . import _ot_py

solve_transport_py = _ot_py.solve_transport

try:
    from ._ot_core import solve_transport as solve_transport_ext
except ImportError:  # extension not built
    solve_transport_ext = None

if solve_transport_ext is not None and os.environ.get("MMFLOW_PURE_PYTHON") != "1":
    solve_transport = solve_transport_ext
    BACKEND = "cython"
else:
    solve_transport = solve_transport_py
    BACKEND = "python"
