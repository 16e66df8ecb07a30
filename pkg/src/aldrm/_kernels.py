"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
``ALDRM_KERNELS`` environment variable is ``python``, the numpy versions are
used. Both backends consume the same random variates, so a seeded run is
reproducible on either (agreement is to rounding, not bit-exact).
"""

import contextlib
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_FUNCS = ("latent_weights", "segment_aug_loglik", "segment_gauss_loglik", "segment_gram", "linear_predictor")

BACKEND = None


def available_backends():
    return ["python"] + (["cython"] if _ckernels is not None else [])


def use_backend(name):
    """Switch the active backend (``"cython"`` or ``"python"``)."""
    global BACKEND
    if name == "cython" and _ckernels is None:
        raise ImportError("compiled kernels are not built; reinstall with Cython available")
    if name not in ("cython", "python"):
        raise ValueError(f"unknown kernel backend '{name}'")
    BACKEND = name
    mod = _ckernels if name == "cython" else _pykernels
    g = globals()
    for f in _FUNCS:
        g[f] = getattr(mod, f)


@contextlib.contextmanager
def backend(name):
    previous = BACKEND
    use_backend(name)
    try:
        yield
    finally:
        use_backend(previous)


use_backend("python" if os.environ.get("ALDRM_KERNELS", "").lower() == "python" or _ckernels is None else "cython")
