"""Effective in-plane potentials of a Coulomb charge averaged over the layer.

Two averages of ``1/sqrt(rho**2 + z**2)`` against the squared lowest
transverse mode are provided:

``en``
    nucleus at the mid-plane, electron spread over the layer;
``ee``
    two electrons, both spread over the layer.

Both behave like ``1/rho`` far away, like ``-c/a * ln(rho)`` near the axis,
and obey ``V^a(rho) = V^1(rho/a) / a``.  ``W(r) = 1 - r V^1(r)`` measures the
deviation from the bare Coulomb tail.

Two independent evaluation routes exist.  The scalar functions ``v_en`` /
``v_ee`` use adaptive Gauss-Kronrod quadrature in physical variables with
the logarithmic part integrated analytically; the ``*_array`` functions use
a fixed Gauss-Legendre rule after the substitution ``s = rho sinh(t)``,
which removes the singularity, and are meant for tabulating on solver grids.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import InvalidGrid, QuadratureFailure

PI = math.pi

W_EN_INTEGRAL = 0.25 - 1.0 / PI**2
W_EE_INTEGRAL = 1.0 / 3.0 - 5.0 / (4.0 * PI**2)
# W(r) ~ TAIL / r**2 as r -> infinity (half the second moment of the
# transverse density, resp. of the difference of two such coordinates)
W_EN_TAIL = 1.0 / 24.0 - 1.0 / (4.0 * PI**2)
W_EE_TAIL = 1.0 / 12.0 - 1.0 / (2.0 * PI**2)

KINDS = ("en", "ee", "coulomb2d")

_EPSREL = 1e-13
_LIMIT = 400
_W_RMAX = 1e4


def _check_kind(kind, allowed=KINDS):
    if kind not in allowed:
        raise ValueError(f"unknown potential kind {kind!r}, expected one of {allowed}")


def ee_overlap(u):
    """Autocorrelation of ``cos(pi s)**2`` on the unit layer.

    ``ee_overlap(u) = int cos^2(pi s) cos^2(pi (s - u)) ds`` over the overlap
    of ``[-1/2, 1/2]`` with its shift by ``u``; valid for ``0 <= u <= 1``.
    """
    u = np.asarray(u, dtype=float)
    tw = 2.0 * PI * u
    return 0.25 * ((1.0 - u) * (1.0 + 0.5 * np.cos(tw)) + 0.75 * np.sin(tw) / PI)


_G0 = 3.0 / 8.0


def _sin_minus_x(x):
    if abs(x) < 0.1:
        x2 = x * x
        return -x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0))))
    return math.sin(x) - x


def _ee_overlap_deviation(u):
    """``ee_overlap(u) - 3/8`` without cancellation for small ``u``."""
    return -0.25 * (1.0 - u) * math.sin(PI * u) ** 2 + 3.0 / (16.0 * PI) * _sin_minus_x(2.0 * PI * u)


def _quad(f, lo, hi, epsabs=0.0):
    kw = dict(epsabs=epsabs, epsrel=_EPSREL, limit=_LIMIT, full_output=1)
    out = integrate.quad(f, lo, hi, **kw)
    val, err = out[0], out[1]
    if len(out) > 3 and out[2].get("last", 0) >= _LIMIT:
        raise QuadratureFailure(f"subdivision limit reached on [{lo}, {hi}] (err {err:.3g})")
    return val, err


def _quad_graded(f, hi, pivot):
    """Integrate over ``(0, hi)`` in pieces growing geometrically from ``pivot``."""
    edges = [0.0]
    x = min(pivot, hi)
    while x < hi:
        edges.append(x)
        x *= 16.0
    edges.append(hi)
    total = err = 0.0
    for lo, up in zip(edges[:-1], edges[1:]):
        v, e = _quad(f, lo, up, epsabs=1e-18)
        total += v
        err += e
    return total, err


def _finish(value, err):
    if err > 1e-10 * max(1.0, abs(value)):
        raise QuadratureFailure(f"error estimate {err:.3g} exceeds tolerance for value {value:.17g}")
    return value


def _check_point(a, rho):
    if not a > 0:
        raise ValueError(f"width must be positive, got {a!r}")
    if not rho > 0:
        raise ValueError(f"radius must be positive, got {rho!r}")


def v_en(a: float, rho: float) -> float:
    """Electron-nucleus effective potential ``V_en^a(rho)``."""
    _check_point(a, rho)
    h = 0.5 * a
    k = PI / a
    if rho < a:
        # cos^2 = 1 - sin^2; the "1" part integrates to asinh
        f = lambda s: math.sin(k * s) ** 2 / math.hypot(rho, s)
        val, err = _quad_graded(f, h, rho)
        return _finish(4.0 / a * (math.asinh(h / rho) - val), 4.0 / a * err)
    f = lambda s: math.cos(k * s) ** 2 * s * s / (math.hypot(rho, s) * (math.hypot(rho, s) + rho))
    val, err = _quad(f, 0.0, h)
    return _finish((1.0 - 4.0 / a * val) / rho, 4.0 / a * err / rho)


def v_ee(a: float, rho: float) -> float:
    """Electron-electron effective potential ``V_ee^a(rho)``."""
    _check_point(a, rho)
    if rho < a:
        f = lambda w: _ee_overlap_deviation(w / a) / math.hypot(rho, w)
        val, err = _quad_graded(f, a, rho)
        return _finish(8.0 / a * (_G0 * math.asinh(a / rho) + val), 8.0 / a * err)
    f = lambda w: float(ee_overlap(w / a)) * w * w / (math.hypot(rho, w) * (math.hypot(rho, w) + rho))
    val, err = _quad(f, 0.0, a)
    return _finish((1.0 - 8.0 / a * val) / rho, 8.0 / a * err / rho)


def w_en(r: float) -> float:
    """``W_en(r) = 1 - r V_en^1(r)`` computed without cancellation."""
    if r >= 1.0:
        f = lambda s: math.cos(PI * s) ** 2 * s * s / (math.hypot(r, s) * (math.hypot(r, s) + r))
        return 4.0 * _quad(f, 0.0, 0.5)[0]
    return 1.0 - r * v_en(1.0, r)


def w_ee(r: float) -> float:
    if r >= 1.0:
        f = lambda u: float(ee_overlap(u)) * u * u / (math.hypot(r, u) * (math.hypot(r, u) + r))
        return 8.0 * _quad(f, 0.0, 1.0)[0]
    return 1.0 - r * v_ee(1.0, r)


# ---------------------------------------------------------------------------
# vectorised route


@lru_cache(maxsize=None)
def _gauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _en_profile(s):
    return np.cos(PI * s) ** 2


def _sinh_core(r, weight, top, scale, panel=1.0, order=24):
    """``scale * int_0^top weight(u) / sqrt(r^2 + u^2) du`` with ``u = r sinh t``."""
    x, wq = _gauss(order)
    T = np.arcsinh(top / r)
    npan = max(1, int(math.ceil(T.max() / panel)))
    out = np.zeros_like(r)
    for i in range(npan):
        lo = T * (i / npan)
        hi = T * ((i + 1) / npan)
        half = 0.5 * (hi - lo)
        t = half[:, None] * x[None, :] + (0.5 * (hi + lo))[:, None]
        u = r[:, None] * np.sinh(t)
        out += half * (weight(u) @ wq)
    return scale * out


def _w_far(r, weight, top, scale, order=48):
    """``scale * int_0^top weight(u) u^2 / (q (q + r)) du``, ``q = sqrt(r^2+u^2)``."""
    x, wq = _gauss(order)
    u = 0.5 * top * (x + 1.0)
    q = np.hypot(r[:, None], u[None, :])
    vals = weight(u)[None, :] * u * u / (q * (q + r[:, None]))
    return scale * 0.5 * top * (vals @ wq)


def _unit_arrays(kind, r):
    """Return ``(V^1(r), W(r))`` on an array of reduced radii."""
    if kind == "en":
        weight, top, scale = _en_profile, 0.5, 4.0
    else:
        weight, top, scale = ee_overlap, 1.0, 8.0
    v = np.empty_like(r)
    w = np.empty_like(r)
    near = r < 1.0
    if near.any():
        v[near] = _sinh_core(r[near], weight, top, scale)
        w[near] = 1.0 - r[near] * v[near]
    far = ~near
    if far.any():
        w[far] = _w_far(r[far], weight, top, scale)
        v[far] = (1.0 - w[far]) / r[far]
    return v, w


def _as_radii(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise ValueError("radii must be positive")
    return rho


def v_en_array(a: float, rho) -> np.ndarray:
    rho = _as_radii(rho)
    v, _ = _unit_arrays("en", np.atleast_1d(rho / a))
    return (v / a).reshape(rho.shape)


def v_ee_array(a: float, rho) -> np.ndarray:
    rho = _as_radii(rho)
    v, _ = _unit_arrays("ee", np.atleast_1d(rho / a))
    return (v / a).reshape(rho.shape)


def potential_array(kind: str, a: float, rho) -> np.ndarray:
    _check_kind(kind)
    if kind == "coulomb2d":
        return 1.0 / _as_radii(rho)
    return v_en_array(a, rho) if kind == "en" else v_ee_array(a, rho)


def w_array(kind: str, r) -> np.ndarray:
    _check_kind(kind, ("en", "ee"))
    r = _as_radii(r)
    _, w = _unit_arrays(kind, np.atleast_1d(r))
    return w.reshape(r.shape)


def w_tail_coefficient(kind: str) -> float:
    _check_kind(kind, ("en", "ee"))
    return W_EN_TAIL if kind == "en" else W_EE_TAIL


def w_integral_closed_form(kind: str) -> float:
    _check_kind(kind, ("en", "ee"))
    return W_EN_INTEGRAL if kind == "en" else W_EE_INTEGRAL


def w_integral(kind: str, rho_max: float = _W_RMAX) -> float:
    """Integral of ``W`` over the half-line.

    Adaptive quadrature over ``(0, rho_max)`` split at decades, plus the
    analytic ``TAIL / rho`` contribution of the ``TAIL / rho**2`` far field.
    """
    _check_kind(kind, ("en", "ee"))
    w = w_en if kind == "en" else w_ee
    edges = [0.0, 0.25, 1.0]
    while edges[-1] < rho_max:
        edges.append(min(edges[-1] * 10.0, rho_max))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = _quad(w, lo, hi)
        if err > 1e-11:
            raise QuadratureFailure(f"W integral on [{lo}, {hi}] error {err:.3g}")
        total += val
    return total + w_tail_coefficient(kind) / rho_max


# ---------------------------------------------------------------------------
# tabulated objects


def _check_nodes(nodes) -> np.ndarray:
    nodes = np.array(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size == 0:
        raise InvalidGrid("nodes must be a non-empty 1-d sequence")
    if np.any(~np.isfinite(nodes)) or np.any(nodes <= 0):
        raise InvalidGrid("nodes must be finite and positive")
    if np.any(np.diff(nodes) <= 0):
        raise InvalidGrid("nodes must be strictly increasing")
    return nodes


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabulatedPotential:
    """A central potential sampled on positive radii.

    ``values`` are the (positive) potential magnitudes; solvers multiply by
    a charge to obtain the potential energy.
    """

    kind: str
    a: float
    nodes: np.ndarray
    values: np.ndarray
    tail_coeff: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        _check_kind(self.kind)
        nodes = _check_nodes(self.nodes)
        values = np.array(self.values, dtype=float)
        if values.shape != nodes.shape:
            raise InvalidGrid("values and nodes differ in length")
        if np.any(values < 0):
            raise ValueError("potential values must be nonnegative")
        if np.any(values > 1.0 / nodes):
            raise ValueError("potential exceeds the Coulomb bound 1/rho")
        if values.size > 1 and np.any(np.diff(values) >= 0):
            raise ValueError("potential values must be strictly decreasing")
        object.__setattr__(self, "nodes", _frozen(nodes))
        object.__setattr__(self, "values", _frozen(values))

    def matches(self, nodes) -> bool:
        nodes = np.asarray(nodes, dtype=float)
        return nodes.shape == self.nodes.shape and np.array_equal(nodes, self.nodes)

    def resample(self, nodes) -> "TabulatedPotential":
        return tabulate(self.kind, self.a, nodes)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rho", "value"])
            for r, v in zip(self.nodes, self.values):
                writer.writerow([format(r, ".17g"), format(v, ".17g")])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "a": self.a,
            "tail_coeff": self.tail_coeff,
            "rho": self.nodes.tolist(),
            "value": self.values.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "TabulatedPotential":
        return cls(
            kind=data["kind"],
            a=float(data["a"]),
            nodes=np.asarray(data["rho"], dtype=float),
            values=np.asarray(data["value"], dtype=float),
            tail_coeff=float(data.get("tail_coeff", 1.0)),
        )

    @classmethod
    def from_json(cls, path) -> "TabulatedPotential":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def tabulate(kind: str, a: float, nodes: Sequence[float]) -> TabulatedPotential:
    _check_kind(kind)
    if not a > 0:
        raise ValueError(f"width must be positive, got {a!r}")
    nodes = _check_nodes(nodes)
    return TabulatedPotential(kind=kind, a=float(a), nodes=nodes, values=potential_array(kind, a, nodes))


@dataclass(frozen=True)
class WProfile:
    kind: str
    rho: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        _check_kind(self.kind, ("en", "ee"))
        rho = _check_nodes(self.rho)
        w = np.array(self.w, dtype=float)
        if w.shape != rho.shape:
            raise InvalidGrid("samples differ in length")
        if np.any(w < 0) or np.any(w > 1):
            raise ValueError("W must lie in [0, 1]")
        if np.any(np.diff(w) > 0):
            raise ValueError("W must be non-increasing")
        object.__setattr__(self, "rho", _frozen(rho))
        object.__setattr__(self, "w", _frozen(w))

    def trapezoid_integral(self) -> float:
        """Trapezoid rule over the samples, ``W ~ 1`` below the first node
        and the analytic ``r**-2`` tail beyond the last."""
        head = self.rho[0] * 0.5 * (1.0 + self.w[0])
        body = float(np.trapezoid(self.w, self.rho))
        tail = w_tail_coefficient(self.kind) / self.rho[-1]
        return head + body + tail


def w_profile(kind: str, rho) -> WProfile:
    rho = _check_nodes(rho)
    return WProfile(kind=kind, rho=rho, w=w_array(kind, rho))
