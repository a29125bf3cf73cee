"""Selection between numba-compiled kernels and their pure-numpy twins.

Every hot loop is written once in the subset of numpy that numba accepts.
``kernel`` wraps such a function so that calls are routed either to the
``@njit`` build or to the interpreter, depending on the active backend.

The backend defaults to ``"numba"`` when numba imports cleanly and
``DPPKIT_DISABLE_JIT`` is unset (or ``0``); otherwise ``"numpy"``.
"""

import contextlib
import os

try:
    import numba
    from numba.extending import overload, register_jitable

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

    def register_jitable(fn):
        return fn

    def overload(fn, **kwargs):
        return lambda typer: typer


BACKENDS = ("numba", "numpy")


def _initial_backend():
    flag = os.environ.get("DPPKIT_DISABLE_JIT", "").strip().lower()
    if not HAVE_NUMBA or flag not in ("", "0", "false", "no"):
        return "numpy"
    return "numba"


_active = _initial_backend()


def get_backend():
    return _active


def set_backend(name):
    """Switch the process-wide backend; returns the previous one."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _active = _active, name
    return previous


@contextlib.contextmanager
def use_backend(name):
    previous = set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


class Kernel:
    """A function with a lazily compiled numba build and a Python fallback."""

    def __init__(self, fn):
        self.py_func = fn
        self.__name__ = fn.__name__
        self.__doc__ = fn.__doc__
        self._jitted = None

    @property
    def jitted(self):
        if self._jitted is None:
            self._jitted = numba.njit(cache=True, nogil=True)(self.py_func)
        return self._jitted

    def __call__(self, *args):
        if _active == "numba":
            return self.jitted(*args)
        return self.py_func(*args)

    def __repr__(self):
        return f"<Kernel {self.__name__}>"


def kernel(fn):
    return Kernel(fn)


__all__ = [
    "BACKENDS",
    "HAVE_NUMBA",
    "Kernel",
    "get_backend",
    "overload",
    "kernel",
    "register_jitable",
    "set_backend",
    "use_backend",
]
