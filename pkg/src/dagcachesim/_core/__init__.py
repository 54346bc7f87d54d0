"""Policy-core backend selection.

The hot bookkeeping (victim scans, rc/erc maintenance, recency list) has two
interchangeable implementations: a Cython extension built at install time and
a pure-Python fallback. The compiled one is picked automatically when
present; set ``DAGCACHESIM_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import pure

try:
    from . import _speedups  # type: ignore[attr-defined]

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on the build environment
    _speedups = None
    HAVE_COMPILED = False

_MASK64 = (1 << 64) - 1


def get_core(backend: str | None = None):
    """Return the backend module for ``backend`` in {None/'auto', 'pure', 'compiled'}."""
    if backend in (None, "auto"):
        if os.environ.get("DAGCACHESIM_PURE"):
            return pure
        return _speedups if HAVE_COMPILED else pure
    if backend == "pure":
        return pure
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled core requested but the extension is not built")
        return _speedups
    raise ValueError(f"unknown backend {backend!r}")


def available_backends():
    return ("pure", "compiled") if HAVE_COMPILED else ("pure",)


def derive_seed(base: int, stream: int) -> int:
    """Deterministic per-stream seed (worker ids, experiment plan cells)."""
    return pure.mix64((base ^ (0x9E3779B97F4A7C15 * (stream + 1))) & _MASK64)
