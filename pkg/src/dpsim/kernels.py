"""Hot per-packet kernels, compiled when available.

Set ``DPSIM_PURE_PYTHON=1`` to force the pure-Python fallback.
"""
from __future__ import annotations

import os

from . import _purepy

if os.environ.get("DPSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _purepy
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _purepy

BACKEND = "compiled" if _impl is not _purepy else "python"

pack_fields = _impl.pack_fields
unpack_fields = _impl.unpack_fields
internet_checksum = _impl.internet_checksum
five_tuple_crc = _impl.five_tuple_crc
