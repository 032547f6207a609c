"""Scoped flush-to-zero for dense solves whose Green's functions underflow.

Exponentially decaying resolvents pass through the subnormal range, where
x86 arithmetic is 10-100x slower.  Entries that small are far below the
rounding level of anything computed from them, so flushing them to zero
changes no reported digit.  Linux/x86-64 only; elsewhere a no-op.
"""
from __future__ import annotations

import ctypes
import ctypes.util
import platform
import sys
from contextlib import contextmanager

_FTZ_DAZ = 0x8040


class _FEnv(ctypes.Structure):
    # glibc x86-64 fenv_t: 28 bytes of x87 state followed by MXCSR
    _fields_ = [("x87", ctypes.c_ushort * 14), ("mxcsr", ctypes.c_uint)]


def _load():
    if not sys.platform.startswith("linux") or platform.machine() not in ("x86_64", "AMD64"):
        return None
    try:
        lib = ctypes.CDLL(ctypes.util.find_library("m") or "libm.so.6")
        lib.fegetenv.argtypes = [ctypes.POINTER(_FEnv)]
        lib.fesetenv.argtypes = [ctypes.POINTER(_FEnv)]
        return lib
    except (OSError, AttributeError):
        return None


_LIBM = _load()


@contextmanager
def flush_subnormals():
    if _LIBM is None:
        yield
        return
    env = _FEnv()
    if _LIBM.fegetenv(ctypes.byref(env)) != 0:
        yield
        return
    saved = env.mxcsr
    env.mxcsr = saved | _FTZ_DAZ
    _LIBM.fesetenv(ctypes.byref(env))
    try:
        yield
    finally:
        env.mxcsr = saved
        _LIBM.fesetenv(ctypes.byref(env))
