"""Convolution kernel backends.

Two interchangeable implementations of the hot conv2d kernels live here:
``_convkern`` (compiled Cython extension) and ``conv_numpy`` (pure numpy).
The active one is picked at import time: the HMODE_BACKEND environment
variable ("cython" | "python" | "auto") wins, otherwise "auto" prefers the
compiled module when it imported cleanly and falls back to numpy.

``use_backend`` swaps the active implementation at runtime (tests and the
benchmark use it). Both backends are deterministic for a fixed dtype but
do not agree bit-for-bit with each other, since their accumulation orders
differ.
"""

import os

from . import conv_numpy

try:
    from . import _convkern
except ImportError:
    _convkern = None

_IMPLS = {"python": conv_numpy}
if _convkern is not None:
    _IMPLS["cython"] = _convkern


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_IMPLS))


def _select(name: str):
    if name == "auto":
        name = "cython" if "cython" in _IMPLS else "python"
    if name not in _IMPLS:
        raise ValueError(
            f"conv backend {name!r} not available (have {available_backends()})"
        )
    return name


_active = _select(os.environ.get("HMODE_BACKEND", "auto"))


def use_backend(name: str) -> str:
    """Switch the active backend; returns the previously active name."""
    global _active
    previous = _active
    _active = _select(name)
    return previous


def backend_name() -> str:
    return _active


def conv_forward(xp, k):
    return _IMPLS[_active].conv_forward(xp, k)


def conv_grad_kernel(xp, g):
    return _IMPLS[_active].conv_grad_kernel(xp, g)


def conv_grad_input(g, k):
    return _IMPLS[_active].conv_grad_input(g, k)
