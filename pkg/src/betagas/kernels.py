"""Backend selection for the sampler kernels.

The compiled extension is used when importable; set ``BETAGAS_PURE_PYTHON=1``
to force the NumPy fallback.  ``BACKEND`` names the active choice.
"""
import os

import numpy as np

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("BETAGAS_PURE_PYTHON"):
    _active = _compiled
    BACKEND = "cython"
else:
    _active = _pykernels
    BACKEND = "python"


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name=None):
    """Kernel module by name; ``None`` returns the active one."""
    if name is None:
        return _active
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


class KernelModel:
    """Flattened ensemble parameters bound to one kernel backend."""

    def __init__(self, spec, backend=None):
        self.backend = get_backend(backend)
        self.backend_name = "cython" if self.backend is _compiled else "python"
        self.N = spec.N
        self.nscale = float(spec.N)
        self.beta = float(spec.beta)
        poly, bamp, bwid, tx0, tdx, tv, td = spec.Q.kernel_params()
        ha, hb = spec.h.kernel_params()
        self._args = (self.nscale, self.beta, np.ascontiguousarray(poly, dtype=float), float(bamp),
                      float(bwid), float(tx0), float(tdx), np.ascontiguousarray(tv, dtype=float),
                      np.ascontiguousarray(td, dtype=float), np.ascontiguousarray(ha, dtype=float),
                      np.ascontiguousarray(hb, dtype=float))

    def energy(self, x):
        return self.backend.energy(np.ascontiguousarray(x, dtype=float), *self._args)

    def gradient(self, x):
        return self.backend.gradient(np.ascontiguousarray(x, dtype=float), *self._args)

    def metropolis_block(self, x, sites, increments, log_u):
        """Run ``len(sites)`` single-site moves in place; returns the accept count."""
        return int(self.backend.metropolis_block(x, *self._args,
                                                 np.ascontiguousarray(sites, dtype=np.int64),
                                                 np.ascontiguousarray(increments, dtype=float),
                                                 np.ascontiguousarray(log_u, dtype=float)))
