"""Closed-form constants, resolvent bounds and width thresholds.

Every quantity here is an explicit formula in the charge ``Z`` and the
electron count ``N``; the only non-elementary ingredient is Gamma(1/4).
Energies use the convention ``-Laplacian - Z/rho`` (no factor 1/2), so the
planar hydrogen ground level is ``-Z**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import InvalidConfig, InvalidWidth, NoRootInRange
from .potentials import W_EE_INTEGRAL, W_EN_INTEGRAL

E_INV = math.exp(-1.0)
GAMMA_QUARTER = math.gamma(0.25)
# Gamma(1/4)**4, used in nearly every bound below
G4 = GAMMA_QUARTER**4
KATO = G4 / (4.0 * math.pi**2)

_XLNX_FLOOR = 1e-300

BOUND_KINDS = ("eff_vs_2d", "full_vs_eff", "full_vs_2d", "gen_dif")


@dataclass(frozen=True)
class LayerConfig:
    """Physical inputs: layer width ``a``, nuclear charge ``Z``, electrons ``N``."""

    a: float
    Z: float
    N: int = 1

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise InvalidConfig(f"layer width must be positive, got {self.a!r}")
        if not (self.Z > 0 and math.isfinite(self.Z)):
            raise InvalidConfig(f"nuclear charge must be positive, got {self.Z!r}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidConfig(f"electron count must be an integer >= 1, got {self.N!r}")

    @property
    def pairs(self) -> int:
        return self.N * (self.N - 1) // 2

    @property
    def transverse_energy(self) -> float:
        """``N * E_1`` with ``E_1 = (pi/a)**2``."""
        return self.N * (math.pi / self.a) ** 2


@dataclass(frozen=True)
class ConstantSet:
    kato: float
    c1: float
    c2: float
    c3: float
    mu: float
    e_low: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("kato", "c1", "c2", "c3", "mu", "e_low")}


@dataclass(frozen=True)
class ThresholdSet:
    a0: float
    a1: float
    a2: float
    a3: float
    d: float
    candidates: tuple = field(default=(), compare=False)

    def as_dict(self) -> dict:
        return {
            "a0": self.a0,
            "a1": self.a1,
            "a2": self.a2,
            "a3": self.a3,
            "d": self.d,
            "candidates": list(self.candidates),
        }


@dataclass(frozen=True)
class LocalizationWindow:
    K: float
    proj_bound: float
    valid: bool
    in_regime: bool
    a_min: float
    denominator: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def alog(a: float) -> float:
    """``a * |ln a|``."""
    return a * abs(math.log(a))


def _kato_energy(N: int, Z: float) -> float:
    # Gamma(1/4)^4 sqrt(N) Z / (8 pi^2)
    return G4 * math.sqrt(N) * Z / (8.0 * math.pi**2)


def mu_value(N: int, Z: float) -> float:
    return -N * (G4 * Z / (8.0 * math.pi**2)) ** 2 - 1.0


def e_low(N: int, Z: float) -> float:
    """Lower bound on the numerical range of the planar atomic Hamiltonian."""
    return -_kato_energy(N, Z) ** 2


def c1_value(N: int, Z: float) -> float:
    g8 = G4 * G4
    return (G4 * Z * math.sqrt(N) + math.sqrt(g8 * Z * Z * N + 64.0 * math.pi**4)) / (
        8.0 * math.pi**2
    )


def c2_value(N: int, Z: float) -> float:
    pairs = N * (N - 1) // 2
    return (2.0 * math.sqrt(3.0) + 4.0 * math.sqrt(2.0)) * (
        Z * N * W_EN_INTEGRAL + pairs * W_EE_INTEGRAL
    )


def _w_coefficient(N: int, Z: float, mu: float) -> float:
    # Gamma(1/4)^4 N^{3/2} / (6 pi^3 sqrt(-mu)) (Z^2 + (N-1)^2/sqrt 2)
    return (
        G4
        * N**1.5
        / (6.0 * math.pi**3 * math.sqrt(-mu))
        * (Z * Z + (N - 1) ** 2 / math.sqrt(2.0))
    )


def c3_value(N: int, Z: float) -> float:
    return 2.0 * c1_value(N, Z) ** 2 * _w_coefficient(N, Z, mu_value(N, Z))


def constant_set(cfg: LayerConfig) -> ConstantSet:
    N, Z = cfg.N, cfg.Z
    return ConstantSet(
        kato=KATO,
        c1=c1_value(N, Z),
        c2=c2_value(N, Z),
        c3=c3_value(N, Z),
        mu=mu_value(N, Z),
        e_low=e_low(N, Z),
    )


def solve_xlnx(c: float, rhs: float) -> float:
    """Solve ``c * x * |ln x| = rhs`` for ``x`` in ``(0, 1/e]``.

    ``x |ln x|`` is strictly increasing on that interval, so bisection in
    ``ln x`` always converges; it is run until the bracket stops shrinking.
    """
    if not c > 0:
        raise ValueError(f"coefficient must be positive, got {c!r}")
    if not rhs > 0:
        raise ValueError(f"target must be positive, got {rhs!r}")
    top = c * E_INV
    if rhs > top:
        raise NoRootInRange(f"c*x|ln x| <= {top:.17g} on (0, 1/e], target {rhs:.17g}")
    if rhs == top:
        return E_INV
    lo, hi = math.log(_XLNX_FLOOR), -1.0
    if c * _XLNX_FLOOR * -lo > rhs:
        raise NoRootInRange(f"target {rhs:g} below representable range")

    def f(t):
        return c * math.exp(t) * -t - rhs

    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    # pick the endpoint with the smaller residual
    x_lo, x_hi = math.exp(lo), math.exp(hi)
    if abs(f(lo)) <= abs(f(hi)):
        return x_lo
    return x_hi


def _max1(mu: float, d: float, factor: float = 1.0) -> float:
    return max(1.0, -factor * mu / d)


def thresholds(cfg: LayerConfig, d: float, d_eff: Optional[float] = None) -> ThresholdSet:
    """Width thresholds for a spectral distance ``d`` (all capped at 1/e).

    ``d_eff`` defaults to ``d/2``, the worst case allowed for the distance
    to the effective spectrum once the effective operator is resolvent-close
    to the planar one.
    """
    if not d > 0:
        raise ValueError(f"spectral distance must be positive, got {d!r}")
    N, Z = cfg.N, cfg.Z
    mu = mu_value(N, Z)
    c1 = c1_value(N, Z)
    c2 = c2_value(N, Z)
    c3 = c3_value(N, Z)
    if d_eff is None:
        d_eff = d / 2.0

    coef0 = _max1(mu, d) * c1 * c1 * c2
    try:
        tilde_a0 = solve_xlnx(coef0, 0.5)
    except NoRootInRange:
        # alpha^2 <= 1/2 already holds on the whole of (0, 1/e]
        tilde_a0 = E_INV
    a0 = min(E_INV, tilde_a0)
    a1 = min(E_INV, 1.0 / (c3 * _max1(mu, d_eff)))
    a2 = min(E_INV, 1.0 / (c3 * _max1(mu, d, 2.0)))
    geometric = math.sqrt(3.0) * math.pi / (2.0 * N * (N - 1 + 2.0 * Z))
    candidates = (E_INV, geometric, tilde_a0, a2)
    return ThresholdSet(a0=a0, a1=a1, a2=a2, a3=min(candidates), d=d, candidates=candidates)


def _check_width(a: float) -> None:
    if not (0.0 < a <= E_INV):
        raise InvalidWidth(f"width must lie in (0, 1/e], got {a!r}")


def resolvent_bound(
    kind: str,
    cfg: LayerConfig,
    a: float,
    d: float = 1.0,
    *,
    w_kind: str = "en",
    w_int: Optional[float] = None,
) -> float:
    """Right-hand side of one of the resolvent-difference estimates.

    Parameters
    ----------
    kind : {"eff_vs_2d", "full_vs_eff", "full_vs_2d", "gen_dif"}
        ``eff_vs_2d``: effective vs planar atom, ``d`` is the distance to the
        planar spectrum.  ``full_vs_eff``: layer vs effective operator, ``d``
        is the distance to the effective spectrum.  ``full_vs_2d``: layer vs
        planar atom, ``d`` is the distance to the planar spectrum.
        ``gen_dif``: the sandwiched potential-difference estimate for a single
        profile ``W``; ``cfg`` and ``d`` are ignored.
    w_kind, w_int
        Profile used by ``gen_dif``; ``w_int`` overrides the closed-form
        integral selected by ``w_kind``.
    """
    _check_width(a)
    return _bound(kind, cfg, a, d, w_kind=w_kind, w_int=w_int)


def _bound(kind, cfg, a, d, *, w_kind="en", w_int=None):
    if kind == "gen_dif":
        if w_int is None:
            w_int = {"en": W_EN_INTEGRAL, "ee": W_EE_INTEGRAL}[w_kind]
        if w_int < 0:
            raise ValueError("W integral must be nonnegative")
        return 2.0 * math.sqrt(3.0) * alog(a) * w_int + 4.0 * math.sqrt(2.0) * a * math.sqrt(w_int)
    if kind not in BOUND_KINDS:
        raise ValueError(f"unknown bound kind {kind!r}")
    if not d > 0:
        raise ValueError(f"spectral distance must be positive, got {d!r}")

    N, Z = cfg.N, cfg.Z
    mu = mu_value(N, Z)
    c1 = c1_value(N, Z)
    geometric = 8.0 * N / (math.sqrt(3.0) * math.pi) * (N - 1 + 2.0 * Z)
    quad_tail = 2.0 * a * a / (3.0 * math.pi**2)

    if kind == "eff_vs_2d":
        return 2.0 / d * _max1(mu, d) * c1 * c1 * c2_value(N, Z) * alog(a)
    if kind == "full_vs_eff":
        c3 = c3_value(N, Z)
        return (geometric + c3 * _max1(mu, d)) * a / d + quad_tail
    # full_vs_2d
    c3 = c3_value(N, Z)
    log_part = 2.0 / d * _max1(mu, d) * c1 * c1 * c2_value(N, Z) * alog(a)
    lin_part = 2.0 / d * (geometric + c3 * _max1(mu, d, 2.0)) * a
    return log_part + lin_part + quad_tail


def localization_window(d: float, a: float, cfg: LayerConfig) -> LocalizationWindow:
    """Projection-difference estimate on a circle of radius ``d``.

    Never raises for widths outside the certified regime; ``valid`` and
    ``in_regime`` report it instead.
    """
    if not d > 0:
        raise ValueError(f"half-gap must be positive, got {d!r}")
    if not 0.0 < a < 1.0:
        raise InvalidWidth(f"width must lie in (0, 1), got {a!r}")
    a_min = thresholds(cfg, d).a3
    in_regime = a < a_min
    # K(d) is the rate coefficient in units of a|ln a|
    K = _bound("full_vs_2d", cfg, a, d) / alog(a)
    x = d * K * alog(a)
    denominator = 1.0 - 6.0 * x
    proj = 9.0 * x / denominator if denominator > 0 else math.inf
    valid = bool(in_regime and denominator > 0 and proj < 1.0)
    return LocalizationWindow(
        K=K, proj_bound=proj, valid=valid, in_regime=in_regime, a_min=a_min, denominator=denominator
    )
