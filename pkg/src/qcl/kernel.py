"""Backend selection for the protection kernel.

The compiled extension is preferred; ``QCL_PURE=1`` forces the
pure-Python implementation, which is also used when the extension is
missing.
"""

from __future__ import annotations

import os

from . import _core_py

if os.environ.get("QCL_PURE"):
    _impl = _core_py
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _core_py

Protector = _impl.Protector
run_stream = _impl.run_stream
BACKEND: str = _impl.BACKEND


def backends() -> dict:
    """Every importable backend keyed by name (for side-by-side comparison)."""
    out = {"pure": _core_py}
    try:
        from . import _core

        out["compiled"] = _core
    except ImportError:
        pass
    return out


def make_protector(suite, hp_alg, keys, backend=None):
    """Build a Protector from registry objects and a PacketKeys triple."""
    mod = _impl if backend is None else backends()[backend]
    return mod.Protector(suite.code, hp_alg.code, keys.key, keys.iv, keys.hp)
