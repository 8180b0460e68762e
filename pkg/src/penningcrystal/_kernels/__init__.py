"""Hot loops: Coulomb forces, RK4 stepping and Metropolis scans.

The compiled extension is used when it was built; otherwise the numpy
implementation is selected. Set ``PENNINGCRYSTAL_PURE_PYTHON=1`` to force the
fallback.
"""

import os

from . import _pykernels as python

if os.environ.get("PENNINGCRYSTAL_PURE_PYTHON", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else python
BACKEND = active.BACKEND

min_separation_sq = active.min_separation_sq
coulomb_energy = active.coulomb_energy
potential_energy = active.potential_energy
accelerations = active.accelerations
rk4 = active.rk4
mh_scans = active.mh_scans

__all__ = [
    "BACKEND",
    "accelerations",
    "compiled",
    "coulomb_energy",
    "mh_scans",
    "min_separation_sq",
    "potential_energy",
    "python",
    "rk4",
]
