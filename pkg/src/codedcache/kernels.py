"""Backend selection for the simulator's hot loop.

The compiled extension is used when it was built; otherwise, or when the
``CODEDCACHE_PURE_PYTHON`` environment variable is set to a non-empty value,
the numpy implementation is loaded instead. Both expose
``sir_layers_batch(d2, fading, offsets, alpha, K)``.
"""
import os

from . import _sic_py

if os.environ.get("CODEDCACHE_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _sic as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    sir_layers_batch = _compiled.sir_layers_batch
    BACKEND = "cython"
else:
    sir_layers_batch = _sic_py.sir_layers_batch
    BACKEND = "python"

python_sir_layers_batch = _sic_py.sir_layers_batch
compiled_sir_layers_batch = None if _compiled is None else _compiled.sir_layers_batch
