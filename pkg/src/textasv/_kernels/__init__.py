"""Kernel backend selection.

The compiled Cython core is preferred when it imported cleanly; the
pure-numpy module is the fallback. ``TEXTASV_BACKEND=pure`` or
``TEXTASV_BACKEND=compiled`` forces a choice (the latter raises if the
extension is missing). Both backends expose the same functions with
identical semantics; see ``pure.py`` for the reference definitions.
"""

import os

from . import pure

try:
    from . import _core
except ImportError:
    _core = None

_requested = os.environ.get("TEXTASV_BACKEND", "auto")
if _requested == "pure":
    active = pure
elif _requested == "compiled":
    if _core is None:
        raise ImportError("TEXTASV_BACKEND=compiled but textasv._kernels._core "
                          "is not built; reinstall with a C compiler available")
    active = _core
else:
    active = _core if _core is not None else pure

BACKEND = active.BACKEND
encoder_forward = active.encoder_forward
encoder_backward = active.encoder_backward
aam_loss_grad = active.aam_loss_grad


def available_backends():
    out = {"pure": pure}
    if _core is not None:
        out["compiled"] = _core
    return out
