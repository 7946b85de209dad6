"""Simulation backend selection.

The compiled kernel is used when it imported cleanly; otherwise the pure-Python
reference loop runs. Set ``VOIPQOS_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from .netmodel import PacketLog, SimInput, simulate_reference

try:
    from . import _fastsim
except ImportError:  # extension not built
    _fastsim = None

AVAILABLE = ("cython", "python") if _fastsim is not None else ("python",)
DEFAULT = "python" if os.environ.get("VOIPQOS_BACKEND") == "python" else AVAILABLE[0]


def simulate(inp: SimInput, backend: str | None = None) -> PacketLog:
    backend = backend or DEFAULT
    if backend == "python":
        return simulate_reference(inp)
    if backend != "cython":
        raise ValueError(f"unknown backend {backend!r}")
    if _fastsim is None:
        raise RuntimeError("compiled backend is not available; reinstall with a C compiler and Cython")
    source, created, fate, fate_time, n_events = _fastsim.simulate(inp)
    return PacketLog(source, created, fate, fate_time, n_events, backend="cython")
