"""Hot-loop kernels: compiled core with a pure-Python fallback.

The bootstrap run spends nearly all of its time inside one small unit of
work repeated ~B*(I+1) times: resample every cell, refit both surfaces
through a precomputed least-squares projector, and minimize the squared
loss over the box.  Both backends implement the identical algorithm:

* resample: per cell i (in order), per slot j, draw ``d`` from the
  SplitMix64 stream of the unit key and pick replicate ``d % n_i``;
* fit: two-pass mean/variance per cell, variance clamped to the floor
  before the log, coefficients via ``projector @ responses``;
* minimize: stage 1 scans a full grid (``GRID_POINTS`` per axis, last
  axis fastest, axis value ``lower + i*step`` clamped to ``upper``)
  keeping the ``N_STARTS`` best points (ties keep the earlier grid
  index); stage 2 polishes each kept point by projected gradient descent
  with backtracking Armijo line search; the winner is the lowest polished
  objective, ties within ``TIE_TOL`` resolved to the lexicographically
  smallest coordinate vector.

Backend selection happens at import: the compiled extension when it is
available, otherwise the NumPy fallback.  ``RSBOOT_BACKEND`` overrides
(``compiled`` | ``python`` | ``auto``).  Numeric results of the two
backends agree to floating-point reordering error; results within one
backend are bit-reproducible.
"""

from __future__ import annotations

import os

from ..errors import ConfigError

# Search-scheme constants shared by both backends.
GRID_POINTS = 101
N_STARTS = 5
MAX_ITER = 10_000
GRAD_TOL = 1e-9
STEP_TOL = 1e-12
ARMIJO_C = 1e-4
BACKTRACK = 0.5
TIE_TOL = 1e-12
VLOG_MAX = 700.0  # exp overflow guard on the fitted log-variance

# Unit status codes.
STATUS_OK = 0
STATUS_PATHOLOGICAL = 1

# Flag bits reported by replicate_optimum.
FLAG_VARIANCE_FLOORED = 1
FLAG_ITERATION_CAPPED = 2

from . import _pyfallback  # noqa: E402

try:
    from . import _core  # type: ignore[attr-defined]
    _HAVE_COMPILED = True
except ImportError:
    _core = None  # type: ignore[assignment]
    _HAVE_COMPILED = False

_BACKENDS = {"python": _pyfallback}
if _HAVE_COMPILED:
    _BACKENDS["compiled"] = _core


def get_backend(name: str | None = None):
    """Resolve a kernel backend module.

    ``None`` follows the import-time selection (env override included).
    """
    if name is None:
        name = os.environ.get("RSBOOT_BACKEND", "auto")
    if name == "auto":
        return _core if _HAVE_COMPILED else _pyfallback
    try:
        return _BACKENDS[name]
    except KeyError:
        if name == "compiled":
            raise ConfigError(
                "compiled kernel requested via RSBOOT_BACKEND but the "
                "extension is not built") from None
        raise ConfigError(f"unknown backend {name!r}") from None


def backend_name(backend=None) -> str:
    """Human-readable name of a backend module (default: the active one)."""
    mod = backend if backend is not None else get_backend()
    return "compiled" if mod is _core and _HAVE_COMPILED else "python"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))
